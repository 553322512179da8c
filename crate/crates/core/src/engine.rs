//! Discrete-event engine.
//!
//! Exogenous processes (gate edges, photon arrivals, dark carriers) are
//! merged lazily; controller timers live in a priority queue; trapped
//! carriers are drained from the trap store as their release times come up.
//! At equal timestamps controller events run before avalanche candidates,
//! and candidates run in the order photon, dark, afterpulse.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::detector::{dark_rate, detection_probability, fill_traps, sample_jitter, DetectorParams, TrapState};
use crate::error::SimError;
use crate::fsm::{
    transition, Action, Actions, FsmEvent, FsmEventKind, FsmState, GateSchedule, Mode, Phase, QuenchConfig,
    QuenchTiming,
};
use crate::merge::{merge_streams, Timestamped};
use crate::rng::{avalanche_rng, substream, AvalancheKey, Stream};
use crate::source::{PhotonStream, PoissonArrivals, SimClock};
use crate::time::{Picos, PS_PER_SEC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Photon,
    Dark,
    Afterpulse,
}

impl Cause {
    pub const ALL: [Cause; 3] = [Cause::Photon, Cause::Dark, Cause::Afterpulse];

    pub fn name(self) -> &'static str {
        match self {
            Cause::Photon => "photon",
            Cause::Dark => "dark",
            Cause::Afterpulse => "afterpulse",
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionRecord {
    /// Avalanche onset.
    pub t_physical: Picos,
    /// Onset plus timing jitter.
    pub t_recorded: Picos,
    pub cause: Cause,
    /// Start of the armed interval the avalanche occurred in.
    pub armed_since: Picos,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CauseCounts {
    pub photon: u64,
    pub dark: u64,
    pub afterpulse: u64,
}

impl CauseCounts {
    pub fn get(&self, cause: Cause) -> u64 {
        match cause {
            Cause::Photon => self.photon,
            Cause::Dark => self.dark,
            Cause::Afterpulse => self.afterpulse,
        }
    }

    fn bump(&mut self, cause: Cause) {
        match cause {
            Cause::Photon => self.photon += 1,
            Cause::Dark => self.dark += 1,
            Cause::Afterpulse => self.afterpulse += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.photon + self.dark + self.afterpulse
    }

    pub fn tally(records: &[DetectionRecord]) -> CauseCounts {
        let mut c = CauseCounts::default();
        for r in records {
            c.bump(r.cause);
        }
        c
    }
}

/// Bookkeeping of every candidate the engine saw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tallies {
    pub photons_generated: u64,
    pub photons_lost_unarmed: u64,
    pub photons_lost_conversion: u64,
    pub dark_generated: u64,
    pub dark_lost_unarmed: u64,
    pub traps_filled: u64,
    pub traps_released: u64,
    pub traps_remaining: u64,
    pub releases_while_armed: u64,
    pub armed_intervals: u64,
    pub armed_time: Picos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub seed: u64,
    pub duration: Picos,
    pub config_digest: String,
    pub counts: CauseCounts,
    pub tallies: Tallies,
    pub mode: Mode,
    pub dead_time: Picos,
}

/// One consumed controller input.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: Picos,
    pub from: Phase,
    pub to: Phase,
    /// `None` for the power-on row.
    pub event: Option<FsmEventKind>,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone)]
pub struct EventLog {
    pub records: Vec<DetectionRecord>,
    pub meta: RunMeta,
    pub trace: Option<Vec<TraceRow>>,
}

impl EventLog {
    pub fn duration_secs(&self) -> f64 {
        self.meta.duration.as_secs()
    }

    /// Observed count rate over the whole run, counts/s.
    pub fn rate(&self) -> f64 {
        let d = self.duration_secs();
        if d > 0.0 {
            self.records.len() as f64 / d
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: bool,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    source: &'a PhotonStream,
    detector: &'a DetectorParams,
    quench: &'a QuenchConfig,
}

/// Stable hex digest of a run configuration.
pub fn config_digest(source: &PhotonStream, det: &DetectorParams, quench: &QuenchConfig) -> String {
    digest_json(&DigestInput {
        source,
        detector: det,
        quench,
    })
}

/// First 16 hex digits of the SHA-256 of `value`'s canonical JSON.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn run(
    source: &PhotonStream,
    det: &DetectorParams,
    quench: &QuenchConfig,
    clock: &SimClock,
) -> Result<EventLog, SimError> {
    run_with(source, det, quench, clock, RunOptions::default())
}

/// One independent simulation.
#[derive(Debug, Clone)]
pub struct RunJob {
    pub source: PhotonStream,
    pub detector: DetectorParams,
    pub quench: QuenchConfig,
    pub clock: SimClock,
}

/// Runs independent jobs in parallel; results keep the input order.
pub fn run_batch(jobs: &[RunJob]) -> Vec<Result<EventLog, SimError>> {
    jobs.par_iter()
        .map(|j| run(&j.source, &j.detector, &j.quench, &j.clock))
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Payload {
    Gate(FsmEventKind),
    Photon { index: u64, draw: f64 },
    Dark { index: u64 },
}

const RANK_PHOTON: u8 = 6;
const RANK_DARK: u8 = 7;
const RANK_AFTERPULSE: u8 = 8;

#[derive(Debug, Clone, Copy)]
struct Exo {
    t: Picos,
    rank: u8,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Exo {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Exo {}
impl PartialOrd for Exo {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Exo {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.t, self.rank, self.seq).cmp(&(other.t, other.rank, other.seq))
    }
}
impl Timestamped for Exo {
    fn timestamp(&self) -> Picos {
        self.t
    }
}

enum Next {
    Exo,
    Timer,
    Trap,
}

struct Engine<'a> {
    det: &'a DetectorParams,
    timing: QuenchTiming,
    seed: u64,
    end: Picos,
    state: FsmState,
    timers: BinaryHeap<Reverse<FsmEvent>>,
    traps: TrapState,
    records: Vec<DetectionRecord>,
    tallies: Tallies,
    trace: Option<Vec<TraceRow>>,
}

impl Engine<'_> {
    fn apply(&mut self, event: FsmEvent) -> Result<Actions, SimError> {
        let before = self.state;
        let (after, actions) = transition(before, event, &self.timing)?;
        if before.phase == Phase::Armed && after.phase != Phase::Armed {
            self.tallies.armed_time += event.t - before.phase_entered_at;
        }
        if after.phase == Phase::Armed && before.phase != Phase::Armed {
            self.tallies.armed_intervals += 1;
        }
        self.state = after;
        for a in &actions {
            if let Action::Schedule(e) = a {
                self.timers.push(Reverse(*e));
            }
        }
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRow {
                t: event.t,
                from: before.phase,
                to: after.phase,
                event: Some(event.kind),
                actions: actions.to_vec(),
            });
        }
        Ok(actions)
    }

    fn avalanche(&mut self, t: Picos, cause: Cause, key: AvalancheKey) -> Result<(), SimError> {
        let armed_since = self.state.phase_entered_at;
        let actions = self.apply(FsmEvent::new(FsmEventKind::AvalancheSensed, t))?;
        if !actions.contains(&Action::EmitDetection) {
            return Ok(());
        }
        let mut rng = avalanche_rng(self.seed, key);
        let jitter = sample_jitter(self.det, &mut rng);
        fill_traps(self.timing.quench_latency, &mut self.traps, self.det, t, key, &mut rng);
        let shifted = t.0 as f64 + (jitter * PS_PER_SEC as f64).round();
        let t_recorded = Picos(shifted.clamp(0.0, (self.end.0 - 1) as f64) as u64);
        self.records.push(DetectionRecord {
            t_physical: t,
            t_recorded,
            cause,
            armed_since,
        });
        Ok(())
    }
}

pub fn run_with(
    source: &PhotonStream,
    det: &DetectorParams,
    quench: &QuenchConfig,
    clock: &SimClock,
    options: RunOptions,
) -> Result<EventLog, SimError> {
    source.validate()?;
    det.validate()?;
    let timing = quench.timing(det)?;
    let eta = detection_probability(quench.v_on, det);
    let dark = dark_rate(quench.v_on, det.temperature, det);
    let end = clock.duration;

    let gates: Box<dyn Iterator<Item = Exo>> = match timing.mode {
        Mode::Gated => Box::new(GateSchedule::new(timing.period, timing.gate_width, end).map(|e| Exo {
            t: e.t,
            rank: e.kind as u8,
            seq: 0,
            payload: Payload::Gate(e.kind),
        })),
        Mode::FreeRunning => Box::new(std::iter::empty()),
    };
    let photons: Box<dyn Iterator<Item = Exo>> = Box::new(source.arrivals(clock).map(|p| Exo {
        t: p.t,
        rank: RANK_PHOTON,
        seq: p.index,
        payload: Payload::Photon {
            index: p.index,
            draw: p.conversion_draw,
        },
    }));
    let darks: Box<dyn Iterator<Item = Exo>> = Box::new(
        PoissonArrivals::new(dark, end, substream(clock.seed, Stream::DarkArrivals))
            .zip(0u64..)
            .map(|(t, index)| Exo {
                t,
                rank: RANK_DARK,
                seq: index,
                payload: Payload::Dark { index },
            }),
    );
    let mut exo = merge_streams(vec![gates, photons, darks]);

    let (state, init_actions) = FsmState::initial(&timing);
    let mut engine = Engine {
        det,
        timing,
        seed: clock.seed,
        end,
        state,
        timers: BinaryHeap::new(),
        traps: TrapState::new(),
        records: Vec::new(),
        tallies: Tallies::default(),
        trace: options.trace.then(|| {
            vec![TraceRow {
                t: Picos::ZERO,
                from: state.phase,
                to: state.phase,
                event: None,
                actions: init_actions.to_vec(),
            }]
        }),
    };
    if state.phase == Phase::Armed {
        engine.tallies.armed_intervals += 1;
    }

    loop {
        let mut best: Option<((Picos, u8), Next)> = exo.peek().map(|e| ((e.t, e.rank), Next::Exo));
        if let Some(Reverse(e)) = engine.timers.peek() {
            let k = (e.t, e.kind as u8);
            if best.as_ref().is_none_or(|(b, _)| k < *b) {
                best = Some((k, Next::Timer));
            }
        }
        if let Some(trap) = engine.traps.peek() {
            let k = (trap.release, RANK_AFTERPULSE);
            if best.as_ref().is_none_or(|(b, _)| k < *b) {
                best = Some((k, Next::Trap));
            }
        }
        let Some(((t, _), which)) = best else { break };
        if t >= end {
            break;
        }
        match which {
            Next::Timer => {
                let Reverse(e) = engine.timers.pop().expect("peeked");
                engine.apply(e)?;
            }
            Next::Trap => {
                let trap = engine.traps.pop().expect("peeked");
                if engine.state.phase == Phase::Armed {
                    engine.tallies.releases_while_armed += 1;
                    if trap.trigger_draw < det.p_trigger {
                        engine.avalanche(trap.release, Cause::Afterpulse, trap.key)?;
                    }
                }
            }
            Next::Exo => {
                let item = exo.next().expect("peeked")?;
                match item.payload {
                    Payload::Gate(kind) => {
                        engine.apply(FsmEvent::new(kind, item.t))?;
                    }
                    Payload::Photon { index, draw } => {
                        engine.tallies.photons_generated += 1;
                        if engine.state.phase != Phase::Armed {
                            engine.tallies.photons_lost_unarmed += 1;
                        } else if draw < eta {
                            engine.avalanche(item.t, Cause::Photon, AvalancheKey::photon(index))?;
                        } else {
                            engine.tallies.photons_lost_conversion += 1;
                        }
                    }
                    Payload::Dark { index } => {
                        engine.tallies.dark_generated += 1;
                        if engine.state.phase == Phase::Armed {
                            engine.avalanche(item.t, Cause::Dark, AvalancheKey::dark(index))?;
                        } else {
                            engine.tallies.dark_lost_unarmed += 1;
                        }
                    }
                }
            }
        }
    }
    if engine.state.phase == Phase::Armed {
        engine.tallies.armed_time += end.saturating_sub(engine.state.phase_entered_at);
    }
    engine.tallies.traps_filled = engine.traps.total_filled();
    engine.tallies.traps_released = engine.traps.total_released();
    engine.tallies.traps_remaining = engine.traps.len() as u64;

    let mut records = engine.records;
    records.sort_by_key(|r| (r.t_recorded, r.t_physical, r.cause));
    let counts = CauseCounts::tally(&records);
    Ok(EventLog {
        records,
        meta: RunMeta {
            seed: clock.seed,
            duration: end,
            config_digest: config_digest(source, det, quench),
            counts,
            tallies: engine.tallies,
            mode: timing.mode,
            dead_time: timing.dead_time,
        },
        trace: engine.trace,
    })
}
