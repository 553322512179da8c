use std::io::{self, Write};

use serde::Serialize;

use crate::fsm::Mode;

/// Estimator outputs for one operating point.
///
/// Efficiency fields are `None` for noise-only measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub eta_q: Option<f64>,
    pub eta_eff: Option<f64>,
    /// Raw signal count rate S, counts/s.
    pub signal_rate: Option<f64>,
    /// Raw noise count rate N, counts/s.
    pub noise_rate: f64,
    /// Noise per second of live (armed-capable) time, dead-time corrected.
    pub noise_corrected: f64,
    /// One standard error on `noise_corrected`.
    pub noise_sigma: f64,
    /// Dark-count rate of the model at this operating point.
    pub noise_floor: f64,
    /// Incident photons per second.
    pub n: f64,
    pub tau_d: f64,
    /// Ground-truth afterpulse fraction of the signal run (or of the noise
    /// run for noise-only points).
    pub afterpulse_fraction: f64,
    /// One standard error on `eta_q`.
    pub stat_uncertainty: Option<f64>,
    pub signal_counts: Option<u64>,
    pub noise_counts: u64,
}

impl EfficiencyReport {
    /// `(noise_corrected - floor) / floor`.
    pub fn excess_noise(&self) -> f64 {
        (self.noise_corrected - self.noise_floor) / self.noise_floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    DeadTime,
    BiasVoltage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub x: f64,
    pub report: EfficiencyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub mode: Mode,
    pub temperature: f64,
    pub points: Vec<SweepPoint>,
}

pub const SWEEP_HEADER: &str = "x,eta_q,eta_eff,S,N,afterpulse_fraction,sigma_eta_q";
pub const NOISE_HEADER: &str = "x,N_raw,N_corrected,N_floor,excess_fraction,sigma_N_corrected";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{SWEEP_HEADER}")?;
        for p in &self.points {
            let r = &p.report;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p.x,
                opt(r.eta_q),
                opt(r.eta_eff),
                opt(r.signal_rate),
                r.noise_rate,
                r.afterpulse_fraction,
                opt(r.stat_uncertainty)
            )?;
        }
        Ok(())
    }

    /// Companion table with the raw and corrected noise of every point.
    pub fn write_noise_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{NOISE_HEADER}")?;
        for p in &self.points {
            let r = &p.report;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.x,
                r.noise_rate,
                r.noise_corrected,
                r.noise_floor,
                r.excess_noise(),
                r.noise_sigma
            )?;
        }
        Ok(())
    }
}
