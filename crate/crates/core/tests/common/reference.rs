//! Brute-force reference: the same device advanced on a 1 ns time grid.
//!
//! The reference replays the engine's random tape (arrival streams and the
//! keyed per-avalanche draws) but keeps its own controller state, decided
//! once per nanosecond. Controller timers land on the grid, so the two
//! simulations can only disagree about candidates within a nanosecond of a
//! phase boundary.

use apd_sim::detector::{dark_rate, detection_probability, fill_traps, sample_jitter, TrapState};
use apd_sim::rng::{avalanche_rng, substream, AvalancheKey, Stream};
use apd_sim::source::PoissonArrivals;
use apd_sim::time::PS_PER_NS;
use apd_sim::{Cause, DetectorParams, Mode, PhotonStream, Picos, QuenchConfig, SimClock};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RefCounts {
    pub photon: u64,
    pub dark: u64,
    pub afterpulse: u64,
}

impl RefCounts {
    pub fn get(&self, cause: Cause) -> u64 {
        match cause {
            Cause::Photon => self.photon,
            Cause::Dark => self.dark,
            Cause::Afterpulse => self.afterpulse,
        }
    }
}

enum Candidate {
    Photon { index: u64, draw: f64 },
    Dark { index: u64 },
}

pub fn simulate(source: &PhotonStream, det: &DetectorParams, quench: &QuenchConfig, clock: &SimClock) -> RefCounts {
    let timing = quench.timing(det).expect("valid config");
    let eta = detection_probability(quench.v_on, det);
    let end = clock.duration;

    let mut candidates: Vec<(Picos, u8, Candidate)> = source
        .arrivals(clock)
        .map(|p| {
            (
                p.t,
                0,
                Candidate::Photon {
                    index: p.index,
                    draw: p.conversion_draw,
                },
            )
        })
        .collect();
    let dark = dark_rate(quench.v_on, det.temperature, det);
    candidates.extend(
        PoissonArrivals::new(dark, end, substream(clock.seed, Stream::DarkArrivals))
            .zip(0u64..)
            .map(|(t, index)| (t, 1, Candidate::Dark { index })),
    );
    candidates.sort_by_key(|c| (c.0, c.1));

    let ns = |p: Picos| p.0 / PS_PER_NS;
    let steps = end.0.div_ceil(PS_PER_NS);
    let latency = ns(timing.quench_latency);
    let dead = ns(timing.dead_time);
    let period = ns(timing.period);
    let gate = ns(timing.gate_width);

    let mut counts = RefCounts::default();
    let mut traps = TrapState::new();
    let mut next_trap = Picos::MAX;
    let mut blocked_until = 0u64;
    let mut next = 0usize;
    let mut phase_in_period = 0u64;

    for k in 0..steps {
        let bin_end = Picos((k + 1) * PS_PER_NS);
        let gate_on = match timing.mode {
            Mode::FreeRunning => true,
            Mode::Gated => phase_in_period < gate,
        };
        let mut armed = gate_on && k >= blocked_until;
        loop {
            let tc = candidates.get(next).map_or(Picos::MAX, |c| c.0);
            let t = tc.min(next_trap);
            if t >= bin_end || t >= end {
                break;
            }
            let hit = if tc <= next_trap {
                let (t, _, cand) = &candidates[next];
                next += 1;
                match *cand {
                    Candidate::Photon { index, draw } => {
                        (armed && draw < eta).then_some((*t, Cause::Photon, AvalancheKey::photon(index)))
                    }
                    Candidate::Dark { index } => armed.then_some((*t, Cause::Dark, AvalancheKey::dark(index))),
                }
            } else {
                let trap = traps.pop().expect("trap pending");
                next_trap = traps.peek().map_or(Picos::MAX, |t| t.release);
                (armed && trap.trigger_draw < det.p_trigger).then_some((trap.release, Cause::Afterpulse, trap.key))
            };
            if let Some((t, cause, key)) = hit {
                match cause {
                    Cause::Photon => counts.photon += 1,
                    Cause::Dark => counts.dark += 1,
                    Cause::Afterpulse => counts.afterpulse += 1,
                }
                let mut rng = avalanche_rng(clock.seed, key);
                sample_jitter(det, &mut rng);
                fill_traps(timing.quench_latency, &mut traps, det, t, key, &mut rng);
                next_trap = traps.peek().map_or(Picos::MAX, |t| t.release);
                armed = false;
                blocked_until = match timing.mode {
                    Mode::FreeRunning => k + latency + dead,
                    Mode::Gated => (k / period + 2) * period,
                };
            }
        }
        if timing.mode == Mode::Gated {
            phase_in_period += 1;
            if phase_in_period == period {
                phase_in_period = 0;
            }
        }
    }
    counts
}
