//! Active-quenching controller.
//!
//! The controller holds the cathode at `V_REF` (just below breakdown) or
//! `V_ON` (above breakdown). In gated mode each trigger raises the bias for
//! one gate; in free-running mode the diode stays armed until an avalanche.
//! An avalanche is quenched after a fixed feedback latency, then the diode is
//! held dead: for a fixed dead-time in free-running mode, or through one
//! reset gate in gated mode so that the next arming gate is two trigger
//! periods after the detecting one.

use std::fmt;

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};

use crate::detector::{BiasLevel, DetectorParams};
use crate::error::{ConfigError, EngineFault};
use crate::time::Picos;

pub const DEFAULT_QUENCH_LATENCY: f64 = 5e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gated,
    FreeRunning,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Gated => "gated",
            Mode::FreeRunning => "free_running",
        })
    }
}

fn default_latency() -> f64 {
    DEFAULT_QUENCH_LATENCY
}

/// Controller configuration as written in config files, in seconds and volts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_trig: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_width: Option<f64>,
    /// Externally set dead-time (free-running). Derived as `2 / f_trig` in
    /// gated mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_time: Option<f64>,
    #[serde(default = "default_latency")]
    pub quench_latency: f64,
    pub v_on: f64,
    pub v_ref: f64,
}

impl QuenchConfig {
    pub fn gated(f_trig: f64, gate_width: f64, v_on: f64, v_ref: f64) -> Self {
        QuenchConfig {
            mode: Mode::Gated,
            f_trig: Some(f_trig),
            gate_width: Some(gate_width),
            dead_time: None,
            quench_latency: DEFAULT_QUENCH_LATENCY,
            v_on,
            v_ref,
        }
    }

    pub fn free_running(dead_time: f64, v_on: f64, v_ref: f64) -> Self {
        QuenchConfig {
            mode: Mode::FreeRunning,
            f_trig: None,
            gate_width: None,
            dead_time: Some(dead_time),
            quench_latency: DEFAULT_QUENCH_LATENCY,
            v_on,
            v_ref,
        }
    }

    /// Dead-time in seconds, as used by the efficiency estimators.
    pub fn dead_time_secs(&self) -> Option<f64> {
        match self.mode {
            Mode::Gated => self.f_trig.map(|f| 2.0 / f),
            Mode::FreeRunning => self.dead_time,
        }
    }

    /// Fraction of wall time the diode would be armed with no detections.
    pub fn duty_cycle(&self) -> f64 {
        match self.mode {
            Mode::Gated => self.f_trig.unwrap_or(0.0) * self.gate_width.unwrap_or(0.0),
            Mode::FreeRunning => 1.0,
        }
    }

    /// Same controller with the dead-time set to `tau_d`; in gated mode the
    /// trigger rate becomes `2 / tau_d`.
    pub fn with_dead_time(&self, tau_d: f64) -> Self {
        let mut q = self.clone();
        match q.mode {
            Mode::Gated => {
                q.f_trig = Some(2.0 / tau_d);
                q.dead_time = None;
            }
            Mode::FreeRunning => q.dead_time = Some(tau_d),
        }
        q
    }

    pub fn with_v_on(&self, v_on: f64) -> Self {
        QuenchConfig { v_on, ..self.clone() }
    }

    /// Validates against the diode and converts to the picosecond grid.
    pub fn timing(&self, det: &DetectorParams) -> Result<QuenchTiming, ConfigError> {
        if !(self.v_ref < det.v_breakdown && det.v_breakdown < self.v_on) {
            return Err(ConfigError::BiasOrdering {
                v_ref: self.v_ref,
                v_breakdown: det.v_breakdown,
                v_on: self.v_on,
            });
        }
        if !(self.quench_latency > 0.0) || !self.quench_latency.is_finite() {
            return Err(ConfigError::InvalidParameter {
                name: "quench_latency",
                value: self.quench_latency,
                reason: "must be positive",
            });
        }
        let quench_latency = Picos::from_secs(self.quench_latency);
        if quench_latency == Picos::ZERO {
            return Err(ConfigError::InvalidParameter {
                name: "quench_latency",
                value: self.quench_latency,
                reason: "below the 1 ps time resolution",
            });
        }
        let (period, gate_width, dead_time) = match self.mode {
            Mode::Gated => {
                let f = self.f_trig.ok_or(ConfigError::MissingParameter("f_trig"))?;
                if !(f > 0.0) || !f.is_finite() {
                    return Err(ConfigError::InvalidParameter {
                        name: "f_trig",
                        value: f,
                        reason: "must be positive",
                    });
                }
                let w = self.gate_width.ok_or(ConfigError::MissingParameter("gate_width"))?;
                if !(w > 0.0) {
                    return Err(ConfigError::InvalidParameter {
                        name: "gate_width",
                        value: w,
                        reason: "must be positive",
                    });
                }
                let period = Picos::from_secs(1.0 / f);
                let gate = Picos::from_secs(w);
                if gate >= period || gate == Picos::ZERO {
                    return Err(ConfigError::GateTooWide {
                        gate_width: w,
                        period: 1.0 / f,
                    });
                }
                if let Some(d) = self.dead_time {
                    if (d * f - 2.0).abs() > 1e-9 {
                        return Err(ConfigError::InvalidParameter {
                            name: "dead_time",
                            value: d,
                            reason: "gated dead-time is fixed at 2 / f_trig",
                        });
                    }
                }
                (period, gate, Picos(2 * period.0))
            }
            Mode::FreeRunning => {
                let d = self.dead_time.ok_or(ConfigError::MissingParameter("dead_time"))?;
                if !(d > 0.0) || !d.is_finite() {
                    return Err(ConfigError::InvalidParameter {
                        name: "dead_time",
                        value: d,
                        reason: "must be positive",
                    });
                }
                (Picos::ZERO, Picos::ZERO, Picos::from_secs(d))
            }
        };
        if quench_latency >= dead_time {
            return Err(ConfigError::InvalidParameter {
                name: "quench_latency",
                value: self.quench_latency,
                reason: "must be shorter than the dead-time",
            });
        }
        Ok(QuenchTiming {
            mode: self.mode,
            period,
            gate_width,
            dead_time,
            quench_latency,
            v_excess: self.v_on - det.v_breakdown,
        })
    }
}

/// Validated controller timing on the picosecond grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuenchTiming {
    pub mode: Mode,
    /// Trigger period (gated only).
    pub period: Picos,
    pub gate_width: Picos,
    pub dead_time: Picos,
    pub quench_latency: Picos,
    pub v_excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    IdleRef,
    Armed,
    Avalanching,
    Dead,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::IdleRef => "idle_ref",
            Phase::Armed => "armed",
            Phase::Avalanching => "avalanching",
            Phase::Dead => "dead",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmState {
    pub phase: Phase,
    pub phase_entered_at: Picos,
    pub sw0_closed: bool,
    pub sw1_pulse_pending: bool,
    /// Physical time of the most recent avalanche.
    pub last_detection: Option<Picos>,
}

/// Controller inputs. Variant order is the tie-break order for events that
/// share a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FsmEventKind {
    QuenchComplete,
    DeadTimeElapsed,
    Rearm,
    GateFall,
    GateRise,
    AvalancheSensed,
}

impl FsmEventKind {
    pub fn name(self) -> &'static str {
        match self {
            FsmEventKind::QuenchComplete => "quench_complete",
            FsmEventKind::DeadTimeElapsed => "dead_time_elapsed",
            FsmEventKind::Rearm => "rearm",
            FsmEventKind::GateFall => "gate_fall",
            FsmEventKind::GateRise => "gate_rise",
            FsmEventKind::AvalancheSensed => "avalanche_sensed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FsmEvent {
    pub t: Picos,
    pub kind: FsmEventKind,
}

impl FsmEvent {
    pub fn new(kind: FsmEventKind, t: Picos) -> Self {
        FsmEvent { t, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    EmitDetection,
    Schedule(FsmEvent),
    SetBias(BiasLevel),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::EmitDetection => f.write_str("emit_detection"),
            Action::Schedule(e) => write!(f, "schedule({}@{})", e.kind.name(), e.t),
            Action::SetBias(BiasLevel::VRef) => f.write_str("set_bias(v_ref)"),
            Action::SetBias(BiasLevel::VOn { .. }) => f.write_str("set_bias(v_on)"),
        }
    }
}

pub type Actions = ArrayVec<Action, 3>;

impl FsmState {
    /// Power-on state at t = 0 and the actions it implies.
    pub fn initial(timing: &QuenchTiming) -> (FsmState, Actions) {
        let mut actions = Actions::new();
        let state = match timing.mode {
            Mode::FreeRunning => {
                actions.push(Action::SetBias(BiasLevel::VOn {
                    v_excess: timing.v_excess,
                }));
                FsmState {
                    phase: Phase::Armed,
                    phase_entered_at: Picos::ZERO,
                    sw0_closed: false,
                    sw1_pulse_pending: false,
                    last_detection: None,
                }
            }
            Mode::Gated => {
                actions.push(Action::SetBias(BiasLevel::VRef));
                FsmState {
                    phase: Phase::IdleRef,
                    phase_entered_at: Picos::ZERO,
                    sw0_closed: true,
                    sw1_pulse_pending: true,
                    last_detection: None,
                }
            }
        };
        (state, actions)
    }

    fn enter(self, phase: Phase, t: Picos) -> FsmState {
        FsmState {
            phase,
            phase_entered_at: t,
            sw0_closed: matches!(phase, Phase::IdleRef | Phase::Dead),
            sw1_pulse_pending: phase == Phase::IdleRef,
            ..self
        }
    }
}

/// The controller's transition function. Inputs that do not apply to the
/// current phase leave the state unchanged and produce no actions.
pub fn transition(state: FsmState, event: FsmEvent, timing: &QuenchTiming) -> Result<(FsmState, Actions), EngineFault> {
    if event.t < state.phase_entered_at {
        return Err(EngineFault::OutOfOrder {
            now: state.phase_entered_at,
            event: event.t,
        });
    }
    let t = event.t;
    let mut actions = Actions::new();
    let v_on = BiasLevel::VOn {
        v_excess: timing.v_excess,
    };
    let next = match (state.phase, event.kind, timing.mode) {
        (Phase::Armed, FsmEventKind::AvalancheSensed, _) => {
            actions.push(Action::Schedule(FsmEvent::new(
                FsmEventKind::QuenchComplete,
                t + timing.quench_latency,
            )));
            actions.push(Action::EmitDetection);
            FsmState {
                last_detection: Some(t),
                ..state.enter(Phase::Avalanching, t)
            }
        }
        (Phase::Avalanching, FsmEventKind::QuenchComplete, mode) => {
            let dead = state.enter(Phase::Dead, t);
            actions.push(Action::SetBias(BiasLevel::VRef));
            let wake = match mode {
                Mode::FreeRunning => free_running_rearm(&dead, timing)?,
                Mode::Gated => {
                    let detected = state.last_detection.unwrap_or(state.phase_entered_at);
                    let gate = detected.0 / timing.period.0;
                    FsmEvent::new(FsmEventKind::DeadTimeElapsed, Picos((gate + 2) * timing.period.0))
                }
            };
            actions.push(Action::Schedule(wake));
            dead
        }
        (Phase::Dead, FsmEventKind::Rearm, Mode::FreeRunning) => {
            actions.push(Action::SetBias(v_on));
            state.enter(Phase::Armed, t)
        }
        (Phase::Dead, FsmEventKind::DeadTimeElapsed, Mode::Gated) => state.enter(Phase::IdleRef, t),
        (Phase::IdleRef, FsmEventKind::GateRise, Mode::Gated) => {
            actions.push(Action::SetBias(v_on));
            state.enter(Phase::Armed, t)
        }
        (Phase::Armed, FsmEventKind::GateFall, Mode::Gated) => {
            actions.push(Action::SetBias(BiasLevel::VRef));
            state.enter(Phase::IdleRef, t)
        }
        _ => state,
    };
    Ok((next, actions))
}

/// The re-arm event for a free-running controller that is dead.
pub fn free_running_rearm(state: &FsmState, timing: &QuenchTiming) -> Result<FsmEvent, EngineFault> {
    if state.phase != Phase::Dead {
        return Err(EngineFault::RearmOutsideDead(state.phase.name()));
    }
    Ok(FsmEvent::new(
        FsmEventKind::Rearm,
        state.phase_entered_at + timing.dead_time,
    ))
}

/// Lazy gate-edge train: a rise at every `k * period` and a fall `width`
/// later, for all edges before `end`.
#[derive(Debug, Clone)]
pub struct GateSchedule {
    period: Picos,
    width: Picos,
    end: Picos,
    next: Picos,
    rising: bool,
}

impl GateSchedule {
    pub fn new(period: Picos, width: Picos, end: Picos) -> Self {
        GateSchedule {
            period,
            width,
            end,
            next: Picos::ZERO,
            rising: true,
        }
    }
}

impl Iterator for GateSchedule {
    type Item = FsmEvent;

    fn next(&mut self) -> Option<FsmEvent> {
        if self.period == Picos::ZERO || self.next >= self.end {
            return None;
        }
        let event = if self.rising {
            FsmEvent::new(FsmEventKind::GateRise, self.next)
        } else {
            FsmEvent::new(FsmEventKind::GateFall, self.next)
        };
        if self.rising {
            self.next += self.width;
        } else {
            self.next += self.period - self.width;
        }
        self.rising = !self.rising;
        Some(event)
    }
}

/// All gate edges of a run at trigger rate `f_trig`.
pub fn gated_schedule(f_trig: f64, gate_width: f64, duration: f64) -> Result<Vec<FsmEvent>, ConfigError> {
    if !(f_trig > 0.0) {
        return Err(ConfigError::InvalidParameter {
            name: "f_trig",
            value: f_trig,
            reason: "must be positive",
        });
    }
    let period = Picos::from_secs(1.0 / f_trig);
    let width = Picos::from_secs(gate_width);
    if width >= period {
        return Err(ConfigError::GateTooWide {
            gate_width,
            period: 1.0 / f_trig,
        });
    }
    Ok(GateSchedule::new(period, width, Picos::from_secs(duration)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det() -> DetectorParams {
        DetectorParams::calibrated()
    }

    fn free(tau: f64) -> QuenchTiming {
        QuenchConfig::free_running(tau, 57.5, 54.0).timing(&det()).unwrap()
    }

    fn gated(f: f64) -> QuenchTiming {
        QuenchConfig::gated(f, 100e-9, 57.5, 54.0).timing(&det()).unwrap()
    }

    #[test]
    fn armed_avalanche_schedules_quench_and_emits() {
        let timing = free(24e-6);
        let (s0, _) = FsmState::initial(&timing);
        let t = Picos(1_000_000);
        let (s1, actions) = transition(s0, FsmEvent::new(FsmEventKind::AvalancheSensed, t), &timing).unwrap();
        assert_eq!(s1.phase, Phase::Avalanching);
        assert_eq!(
            actions.as_slice(),
            &[
                Action::Schedule(FsmEvent::new(FsmEventKind::QuenchComplete, t + Picos::from_nanos(5))),
                Action::EmitDetection,
            ]
        );
    }

    #[test]
    fn avalanche_below_breakdown_is_a_no_op() {
        let timing = gated(1e4);
        let (s0, _) = FsmState::initial(&timing);
        assert_eq!(s0.phase, Phase::IdleRef);
        let (s1, actions) = transition(s0, FsmEvent::new(FsmEventKind::AvalancheSensed, Picos(5)), &timing).unwrap();
        assert_eq!(s1, s0);
        assert!(actions.is_empty());
    }

    #[test]
    fn out_of_order_event_is_a_fault() {
        let timing = free(24e-6);
        let (s0, _) = FsmState::initial(&timing);
        let (s1, _) = transition(s0, FsmEvent::new(FsmEventKind::AvalancheSensed, Picos(100)), &timing).unwrap();
        let err = transition(s1, FsmEvent::new(FsmEventKind::QuenchComplete, Picos(50)), &timing).unwrap_err();
        assert!(matches!(err, EngineFault::OutOfOrder { .. }));
    }

    #[test]
    fn gate_rise_while_dead_is_ignored() {
        let timing = gated(1e4);
        let (s, _) = FsmState::initial(&timing);
        let (s, _) = transition(s, FsmEvent::new(FsmEventKind::GateRise, Picos(0)), &timing).unwrap();
        let (s, _) = transition(s, FsmEvent::new(FsmEventKind::AvalancheSensed, Picos(0)), &timing).unwrap();
        let (s, _) = transition(
            s,
            FsmEvent::new(FsmEventKind::QuenchComplete, Picos::from_nanos(5)),
            &timing,
        )
        .unwrap();
        assert_eq!(s.phase, Phase::Dead);
        let rise = FsmEvent::new(FsmEventKind::GateRise, timing.period);
        let (s2, actions) = transition(s, rise, &timing).unwrap();
        assert_eq!(s2, s);
        assert!(actions.is_empty());
    }

    #[test]
    fn gate_fall_does_not_abort_quench() {
        let timing = gated(1e4);
        let (s, _) = FsmState::initial(&timing);
        let (s, _) = transition(s, FsmEvent::new(FsmEventKind::GateRise, Picos(0)), &timing).unwrap();
        let late = timing.gate_width - Picos(1000);
        let (s, _) = transition(s, FsmEvent::new(FsmEventKind::AvalancheSensed, late), &timing).unwrap();
        let (s2, actions) = transition(s, FsmEvent::new(FsmEventKind::GateFall, timing.gate_width), &timing).unwrap();
        assert_eq!(s2.phase, Phase::Avalanching);
        assert!(actions.is_empty());
    }

    /// Walks one full gated cycle by hand: detection on the rise of gate 0,
    /// reset gate 1 ignored, re-arm on the rise of gate 2.
    #[test]
    fn gated_cycle_rearms_two_periods_after_detection() {
        let timing = gated(1e4);
        assert_eq!(timing.dead_time, Picos::from_secs(200e-6));
        let mut events: Vec<FsmEvent> =
            GateSchedule::new(timing.period, timing.gate_width, Picos::from_secs(1e-3)).collect();
        events.push(FsmEvent::new(FsmEventKind::AvalancheSensed, Picos(0)));
        events.sort();
        let (mut state, _) = FsmState::initial(&timing);
        let mut pending: Vec<FsmEvent> = Vec::new();
        let mut detections = Vec::new();
        let mut arms = Vec::new();
        let mut queue = events;
        loop {
            queue.append(&mut pending);
            if queue.is_empty() {
                break;
            }
            queue.sort();
            let e = queue.remove(0);
            let (next, actions) = transition(state, e, &timing).unwrap();
            for a in actions {
                match a {
                    Action::EmitDetection => detections.push(e.t),
                    Action::Schedule(s) => pending.push(s),
                    Action::SetBias(BiasLevel::VOn { .. }) => arms.push(e.t),
                    Action::SetBias(BiasLevel::VRef) => {}
                }
            }
            state = next;
        }
        assert_eq!(detections, vec![Picos(0)]);
        let rearm = arms.iter().find(|t| **t > Picos(0)).copied().unwrap();
        assert_eq!(rearm - detections[0], Picos::from_secs(200e-6));
    }

    #[test]
    fn gated_schedule_counts() {
        let edges = gated_schedule(1e4, 100e-9, 1e-3).unwrap();
        assert_eq!(edges.iter().filter(|e| e.kind == FsmEventKind::GateRise).count(), 10);
        assert_eq!(edges.iter().filter(|e| e.kind == FsmEventKind::GateFall).count(), 10);
        assert!(gated_schedule(1e4, 100e-9, 0.0).unwrap().is_empty());
        assert!(matches!(
            gated_schedule(1e4, 1e-4, 1.0),
            Err(ConfigError::GateTooWide { .. })
        ));
        let cfg = QuenchConfig::gated(1e5, 100e-9, 57.5, 54.0);
        assert_eq!(cfg.dead_time_secs(), Some(20e-6));
        assert_eq!(cfg.timing(&det()).unwrap().dead_time, Picos::from_secs(20e-6));
    }

    #[test]
    fn free_running_rearm_arithmetic() {
        let timing = free(24e-6);
        let dead = FsmState {
            phase: Phase::Dead,
            phase_entered_at: Picos::from_secs(1.0),
            sw0_closed: true,
            sw1_pulse_pending: false,
            last_detection: None,
        };
        let e = free_running_rearm(&dead, &timing).unwrap();
        assert_eq!(e.kind, FsmEventKind::Rearm);
        assert_eq!(e.t.to_string(), "1.000024000000");
        let e32 = free_running_rearm(&dead, &free(32e-6)).unwrap();
        assert_eq!(e32.t, Picos::from_secs(1.0) + Picos::from_secs(32e-6));
        let armed = FsmState {
            phase: Phase::Armed,
            ..dead
        };
        assert!(free_running_rearm(&armed, &timing).is_err());
    }

    #[test]
    fn invalid_controller_configs() {
        let d = det();
        assert!(matches!(
            QuenchConfig::free_running(0.0, 57.5, 54.0).timing(&d),
            Err(ConfigError::InvalidParameter { name: "dead_time", .. })
        ));
        let mut g = QuenchConfig::gated(1e4, 100e-9, 57.5, 54.0);
        g.f_trig = None;
        assert!(matches!(g.timing(&d), Err(ConfigError::MissingParameter("f_trig"))));
        assert!(matches!(
            QuenchConfig::free_running(24e-6, 54.5, 54.0).timing(&d),
            Err(ConfigError::BiasOrdering { .. })
        ));
        assert!(matches!(
            QuenchConfig::gated(1e7, 100e-9, 57.5, 54.0).timing(&d),
            Err(ConfigError::GateTooWide { .. })
        ));
        let mut q = QuenchConfig::free_running(24e-6, 57.5, 54.0);
        q.quench_latency = 0.0;
        assert!(q.timing(&d).is_err());
    }

    #[test]
    fn with_dead_time_maps_to_trigger_rate_in_gated_mode() {
        let g = QuenchConfig::gated(1e4, 100e-9, 57.5, 54.0).with_dead_time(10e-6);
        assert!((g.f_trig.unwrap() - 2e5).abs() < 1e-6);
        assert_eq!(g.timing(&det()).unwrap().dead_time, Picos::from_secs(10e-6));
        let f = QuenchConfig::free_running(24e-6, 57.5, 54.0).with_dead_time(32e-6);
        assert_eq!(f.dead_time, Some(32e-6));
    }
}
