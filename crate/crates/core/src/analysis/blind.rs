//! Afterpulse estimate from a noise-versus-dead-time curve alone.

use super::report::{SweepAxis, SweepResult};
use crate::error::EstimatorError;

/// One point of a noise curve: dead-time, noise rate, and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePoint {
    pub tau_d: f64,
    pub noise: f64,
    pub sigma: f64,
}

/// Number of trailing points forming the plateau: the largest `k >= 2` such
/// that the last `k` points agree pairwise within two combined standard
/// errors.
pub fn plateau_len(curve: &[NoisePoint]) -> Option<usize> {
    (2..=curve.len()).rev().find(|&k| {
        let tail = &curve[curve.len() - k..];
        tail.iter().enumerate().all(|(i, a)| {
            tail[i + 1..]
                .iter()
                .all(|b| (a.noise - b.noise).abs() <= 2.0 * a.sigma.hypot(b.sigma))
        })
    })
}

/// Excess-noise fraction `(N - N_inf) / N` at every point, where `N_inf` is
/// the mean over the plateau at the long dead-time end.
pub fn afterpulse_fraction_blind_curve(curve: &[NoisePoint]) -> Result<Vec<f64>, EstimatorError> {
    if curve.len() < 3 {
        return Err(EstimatorError::TooFewPoints(curve.len()));
    }
    let k = plateau_len(curve).ok_or(EstimatorError::NoPlateau)?;
    let tail = &curve[curve.len() - k..];
    let floor = tail.iter().map(|p| p.noise).sum::<f64>() / k as f64;
    Ok(curve.iter().map(|p| (p.noise - floor) / p.noise).collect())
}

/// Blind estimate on a dead-time sweep, using the dead-time corrected noise.
pub fn afterpulse_fraction_blind(sweep: &SweepResult) -> Result<Vec<f64>, EstimatorError> {
    if sweep.axis != SweepAxis::DeadTime {
        return Err(EstimatorError::WrongAxis);
    }
    let curve: Vec<NoisePoint> = sweep
        .points
        .iter()
        .map(|p| NoisePoint {
            tau_d: p.x,
            noise: p.report.noise_corrected,
            sigma: p.report.noise_sigma,
        })
        .collect();
    afterpulse_fraction_blind_curve(&curve)
}
