//! Stochastic model of the InGaAs/InP diode.
//!
//! Detection probability saturates exponentially in excess bias, dark counts
//! grow exponentially in excess bias with an Arrhenius temperature factor, and
//! afterpulsing comes from a single trap species that is filled in
//! proportion to the avalanche duration and empties exponentially.

use std::collections::BTreeMap;
use std::ops::Bound;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rng::{AvalancheKey, SimRng};
use crate::source::FWHM_PER_SIGMA;
use crate::time::{Picos, PS_PER_NS, PS_PER_SEC};

/// Temperature at which `dark_n0` and `tau_ref` are quoted.
pub const REFERENCE_TEMPERATURE: f64 = 223.0;

/// Recorded timestamps are clipped to this many jitter standard deviations.
pub const JITTER_CLIP_SIGMAS: f64 = 6.0;

/// The bundled parameter file.
pub const CALIBRATED_TOML: &str = include_str!("../presets/calibrated_detector.toml");

/// Physical parameters of the diode. Field names double as the keys of the
/// flat parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Breakdown voltage, V.
    pub v_breakdown: f64,
    /// Saturation value of the single-photon detection probability.
    pub eta_max: f64,
    /// Rate at which detection probability approaches `eta_max`, 1/V.
    pub eta_slope: f64,
    /// Dark-count rate at breakdown and the reference temperature, counts/s.
    pub dark_n0: f64,
    /// Exponential growth of dark counts with excess bias, 1/V.
    pub dark_slope: f64,
    /// Arrhenius activation of dark counts, K.
    pub dark_activation: f64,
    /// Operating temperature, K.
    pub temperature: f64,
    /// Expected carriers trapped per nanosecond of avalanche.
    pub trap_fill_per_ns: f64,
    /// Detrapping time constant at the reference temperature, s.
    pub tau_ref: f64,
    /// Arrhenius activation of the detrapping time, K.
    pub trap_activation: f64,
    /// Probability that a carrier released onto an armed diode triggers.
    pub p_trigger: f64,
    /// Timing jitter FWHM, s.
    pub jitter_fwhm: f64,
}

impl DetectorParams {
    /// The shipped parameter set fitted to the headline operating point.
    pub fn calibrated() -> Self {
        Self::from_toml_str(CALIBRATED_TOML).expect("bundled detector parameters are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let params: DetectorParams = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat struct serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ConfigError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::InvalidParameter { name, value, reason })
            }
        }
        check(
            "v_breakdown",
            self.v_breakdown,
            self.v_breakdown > 0.0,
            "must be positive",
        )?;
        check(
            "eta_max",
            self.eta_max,
            (0.0..=1.0).contains(&self.eta_max),
            "must lie in [0, 1]",
        )?;
        check("eta_slope", self.eta_slope, self.eta_slope > 0.0, "must be positive")?;
        check("dark_n0", self.dark_n0, self.dark_n0 >= 0.0, "must be non-negative")?;
        check(
            "dark_slope",
            self.dark_slope,
            self.dark_slope >= 0.0,
            "must be non-negative",
        )?;
        check(
            "dark_activation",
            self.dark_activation,
            self.dark_activation >= 0.0,
            "must be non-negative",
        )?;
        check(
            "temperature",
            self.temperature,
            self.temperature > 0.0,
            "must be positive",
        )?;
        check(
            "trap_fill_per_ns",
            self.trap_fill_per_ns,
            self.trap_fill_per_ns >= 0.0,
            "must be non-negative",
        )?;
        check("tau_ref", self.tau_ref, self.tau_ref > 0.0, "must be positive")?;
        check(
            "trap_activation",
            self.trap_activation,
            self.trap_activation >= 0.0,
            "must be non-negative so that cooling lengthens detrapping",
        )?;
        check(
            "p_trigger",
            self.p_trigger,
            (0.0..=1.0).contains(&self.p_trigger),
            "must lie in [0, 1]",
        )?;
        check(
            "jitter_fwhm",
            self.jitter_fwhm,
            self.jitter_fwhm >= 0.0,
            "must be non-negative",
        )?;
        Ok(())
    }

    /// Detrapping time constant at temperature `t`.
    pub fn tau_trap(&self, temperature: f64) -> f64 {
        self.tau_ref * (self.trap_activation * (1.0 / temperature - 1.0 / REFERENCE_TEMPERATURE)).exp()
    }

    pub fn jitter_sigma(&self) -> f64 {
        self.jitter_fwhm / FWHM_PER_SIGMA
    }

    /// Same parameters with afterpulsing switched off.
    pub fn without_traps(&self) -> Self {
        DetectorParams {
            trap_fill_per_ns: 0.0,
            ..self.clone()
        }
    }

    pub fn traps_enabled(&self) -> bool {
        self.trap_fill_per_ns > 0.0 && self.p_trigger > 0.0
    }
}

/// Cathode bias level set by the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasLevel {
    /// Just below breakdown; no avalanche can develop.
    VRef,
    VOn {
        v_excess: f64,
    },
}

pub fn detection_probability(v_bias: f64, params: &DetectorParams) -> f64 {
    let excess = v_bias - params.v_breakdown;
    if excess <= 0.0 {
        return 0.0;
    }
    params.eta_max * -(-params.eta_slope * excess).exp_m1()
}

pub fn dark_rate(v_bias: f64, temperature: f64, params: &DetectorParams) -> f64 {
    let excess = v_bias - params.v_breakdown;
    params.dark_n0
        * (params.dark_slope * excess).exp()
        * (-params.dark_activation * (1.0 / temperature - 1.0 / REFERENCE_TEMPERATURE)).exp()
}

/// A carrier sitting in a trap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trap {
    pub release: Picos,
    /// Uniform draw in [0, 1); the release triggers iff this is below
    /// `p_trigger` and the diode is armed.
    pub trigger_draw: f64,
    /// Key of the afterpulse this carrier would cause.
    pub key: AvalancheKey,
}

/// Occupied traps, ordered by release time.
#[derive(Debug, Clone, Default)]
pub struct TrapState {
    occupied: BTreeMap<(Picos, u64), Trap>,
    seq: u64,
    filled: u64,
    released: u64,
}

impl TrapState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn insert(&mut self, trap: Trap) {
        self.occupied.insert((trap.release, self.seq), trap);
        self.seq += 1;
        self.filled += 1;
    }

    pub fn release_times(&self) -> impl Iterator<Item = Picos> + '_ {
        self.occupied.keys().map(|(t, _)| *t)
    }

    pub fn peek(&self) -> Option<&Trap> {
        self.occupied.values().next()
    }

    /// Removes and returns the earliest trap.
    pub fn pop(&mut self) -> Option<Trap> {
        let (_, trap) = self.occupied.pop_first()?;
        self.released += 1;
        Some(trap)
    }

    pub fn total_filled(&self) -> u64 {
        self.filled
    }

    pub fn total_released(&self) -> u64 {
        self.released
    }
}

/// Traps `K ~ Poisson(trap_fill_per_ns * duration_ns)` carriers during an
/// avalanche starting at `now`, each with an exponential release delay.
/// Returns `K`.
pub fn fill_traps(
    avalanche_duration: Picos,
    trap_state: &mut TrapState,
    params: &DetectorParams,
    now: Picos,
    parent: AvalancheKey,
    rng: &mut SimRng,
) -> u64 {
    let mean = params.trap_fill_per_ns * avalanche_duration.0 as f64 / PS_PER_NS as f64;
    if mean <= 0.0 {
        return 0;
    }
    let k = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
    let delay = Exp::new(1.0 / params.tau_trap(params.temperature)).expect("positive time constant");
    for j in 0..k {
        let dt = (delay.sample(rng) * PS_PER_SEC as f64).round().max(1.0);
        trap_state.insert(Trap {
            release: Picos(now.0.saturating_add(dt as u64)),
            trigger_draw: rng.random(),
            key: parent.child(j),
        });
    }
    k
}

/// Earliest release strictly after `after`.
pub fn next_trap_release(trap_state: &TrapState, after: Picos) -> Option<Picos> {
    trap_state
        .occupied
        .range((Bound::Excluded((after, u64::MAX)), Bound::Unbounded))
        .next()
        .map(|((t, _), _)| *t)
}

/// Signed timing error in seconds, Gaussian with the configured FWHM and
/// clipped at six standard deviations. Always consumes one draw.
pub fn sample_jitter(params: &DetectorParams, rng: &mut SimRng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z.clamp(-JITTER_CLIP_SIGMAS, JITTER_CLIP_SIGMAS) * params.jitter_sigma()
}
