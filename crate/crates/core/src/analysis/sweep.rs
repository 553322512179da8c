//! Measurement procedures: shutter-paired efficiency measurements and the
//! dead-time and bias sweeps built from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimators::{
    afterpulse_fraction, dead_time_corrected, effective_efficiency, quantum_efficiency, quantum_efficiency_sigma,
};
use super::report::{EfficiencyReport, SweepAxis, SweepPoint, SweepResult};
use crate::detector::{dark_rate, DetectorParams};
use crate::engine::{run, EventLog};
use crate::error::{ConfigError, EstimatorError, SimError};
use crate::fsm::QuenchConfig;
use crate::rng::derive_seed;
use crate::source::{set_shutter, PhotonStream, SimClock};

/// Fixed conditions of a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub detector: DetectorParams,
    pub quench: QuenchConfig,
    pub source: PhotonStream,
    /// Simulated seconds per run.
    pub duration: f64,
    pub seed: u64,
    /// When set, noise runs are lengthened until this many dark counts are
    /// expected. Gated points at long dead-times see very few counts per
    /// second, so a fixed duration gives them much larger error bars.
    #[serde(default)]
    pub min_noise_counts: Option<f64>,
}

/// Shutter-closed result at one operating point.
#[derive(Debug, Clone)]
pub struct NoiseMeasurement {
    pub log: EventLog,
    pub rate: f64,
    pub corrected: f64,
    pub sigma: f64,
    pub floor: f64,
}

impl Conditions {
    pub fn tau_d(&self) -> f64 {
        self.quench.dead_time_secs().unwrap_or(0.0)
    }

    pub fn dark_floor(&self) -> f64 {
        dark_rate(self.quench.v_on, self.detector.temperature, &self.detector)
    }

    fn noise_duration(&self) -> f64 {
        match self.min_noise_counts {
            Some(counts) => {
                let expected_rate = self.dark_floor() * self.quench.duty_cycle();
                if expected_rate > 0.0 {
                    self.duration.max(counts / expected_rate)
                } else {
                    self.duration
                }
            }
            None => self.duration,
        }
    }

    pub fn with_dead_time(&self, tau_d: f64) -> Self {
        Conditions {
            quench: self.quench.with_dead_time(tau_d),
            ..self.clone()
        }
    }

    pub fn with_bias(&self, v_on: f64) -> Self {
        Conditions {
            quench: self.quench.with_v_on(v_on),
            ..self.clone()
        }
    }
}

/// Runs the shutter-closed half of a measurement.
pub fn measure_noise(cond: &Conditions) -> Result<NoiseMeasurement, SimError> {
    let clock = SimClock::new(cond.noise_duration(), derive_seed(cond.seed, 1))?;
    let dark = set_shutter(cond.source.clone(), false);
    let log = run(&dark, &cond.detector, &cond.quench, &clock)?;
    let t = log.duration_secs();
    let tau = cond.tau_d();
    let duty = cond.quench.duty_cycle();
    let counts = log.records.len() as f64;
    let rate = counts / t;
    let corrected = dead_time_corrected(rate, tau)? / duty;
    let sigma = counts.sqrt() / t / (1.0 - rate * tau).powi(2) / duty;
    Ok(NoiseMeasurement {
        log,
        rate,
        corrected,
        sigma,
        floor: cond.dark_floor(),
    })
}

/// Noise-only report (no photons involved).
pub fn noise_report(cond: &Conditions) -> Result<EfficiencyReport, SimError> {
    let noise = measure_noise(cond)?;
    let ap = afterpulse_fraction(&noise.log).unwrap_or(0.0);
    Ok(EfficiencyReport {
        eta_q: None,
        eta_eff: None,
        signal_rate: None,
        noise_rate: noise.rate,
        noise_corrected: noise.corrected,
        noise_sigma: noise.sigma,
        noise_floor: noise.floor,
        n: cond.source.nominal_rate(),
        tau_d: cond.tau_d(),
        afterpulse_fraction: ap,
        stat_uncertainty: None,
        signal_counts: None,
        noise_counts: noise.log.records.len() as u64,
    })
}

/// Paired shutter-open / shutter-closed measurement. The two runs use
/// independent seeds, as two separate acquisitions would.
pub fn measure_efficiency(cond: &Conditions) -> Result<EfficiencyReport, SimError> {
    let n = cond.source.nominal_rate();
    if !(n > 0.0) {
        return Err(EstimatorError::NonPositivePhotonRate(n).into());
    }
    let clock = SimClock::new(cond.duration, cond.seed)?;
    let open = set_shutter(cond.source.clone(), true);
    let (signal_log, noise) = rayon::join(
        || run(&open, &cond.detector, &cond.quench, &clock),
        || measure_noise(cond),
    );
    let signal_log = signal_log?;
    let noise = noise?;
    let tau = cond.tau_d();
    let ts = signal_log.duration_secs();
    let s = signal_log.records.len() as f64 / ts;
    let eta_q = quantum_efficiency(s, noise.rate, tau, n)?;
    let eta_eff = effective_efficiency(s, noise.rate, n)?.value;
    let sigma = quantum_efficiency_sigma(
        signal_log.records.len() as u64,
        ts,
        noise.log.records.len() as u64,
        noise.log.duration_secs(),
        tau,
        n,
    )?;
    let ap = afterpulse_fraction(&signal_log).unwrap_or(0.0);
    Ok(EfficiencyReport {
        eta_q: Some(eta_q),
        eta_eff: Some(eta_eff),
        signal_rate: Some(s),
        noise_rate: noise.rate,
        noise_corrected: noise.corrected,
        noise_sigma: noise.sigma,
        noise_floor: noise.floor,
        n,
        tau_d: tau,
        afterpulse_fraction: ap,
        stat_uncertainty: Some(sigma),
        signal_counts: Some(signal_log.records.len() as u64),
        noise_counts: noise.log.records.len() as u64,
    })
}

fn check_increasing(xs: &[f64]) -> Result<(), ConfigError> {
    if xs.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(ConfigError::SweepNotIncreasing)
    }
}

/// Shutter-closed noise at each dead-time. Gated points run at
/// `f_trig = 2 / tau_d`.
pub fn sweep_dead_time(cond: &Conditions, tau_list: &[f64]) -> Result<SweepResult, SimError> {
    check_increasing(tau_list)?;
    let points: Vec<Conditions> = tau_list.iter().map(|&tau| cond.with_dead_time(tau)).collect();
    for p in &points {
        p.quench.timing(&p.detector)?;
    }
    let reports: Result<Vec<EfficiencyReport>, SimError> = points.par_iter().map(noise_report).collect();
    Ok(SweepResult {
        axis: SweepAxis::DeadTime,
        mode: cond.quench.mode,
        temperature: cond.detector.temperature,
        points: tau_list
            .iter()
            .zip(reports?)
            .map(|(&x, report)| SweepPoint { x, report })
            .collect(),
    })
}

/// Paired efficiency and noise measurement at each bias.
pub fn sweep_bias(cond: &Conditions, v_list: &[f64]) -> Result<SweepResult, SimError> {
    check_increasing(v_list)?;
    if let Some(&v) = v_list.iter().find(|&&v| v <= cond.detector.v_breakdown) {
        return Err(ConfigError::BiasBelowBreakdown(v).into());
    }
    let points: Vec<Conditions> = v_list.iter().map(|&v| cond.with_bias(v)).collect();
    for p in &points {
        p.quench.timing(&p.detector)?;
    }
    let reports: Result<Vec<EfficiencyReport>, SimError> = points.par_iter().map(measure_efficiency).collect();
    Ok(SweepResult {
        axis: SweepAxis::BiasVoltage,
        mode: cond.quench.mode,
        temperature: cond.detector.temperature,
        points: v_list
            .iter()
            .zip(reports?)
            .map(|(&x, report)| SweepPoint { x, report })
            .collect(),
    })
}
