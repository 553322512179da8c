use crate::engine::{Cause, EventLog};
use crate::error::EstimatorError;

/// Rate a non-paralyzable counter would have seen without dead-time:
/// `rate / (1 - rate * tau_d)`.
pub fn dead_time_corrected(rate: f64, tau_d: f64) -> Result<f64, EstimatorError> {
    let product = rate * tau_d;
    if !(product < 1.0) {
        return Err(EstimatorError::Saturated {
            rate,
            dead_time: tau_d,
            product,
        });
    }
    Ok(rate / (1.0 - product))
}

/// Dead-time-corrected detection efficiency:
/// `[S/(1 - S tau_d) - N/(1 - N tau_d)] / n`.
pub fn quantum_efficiency(signal: f64, noise: f64, tau_d: f64, n: f64) -> Result<f64, EstimatorError> {
    if !(n > 0.0) {
        return Err(EstimatorError::NonPositivePhotonRate(n));
    }
    let s = dead_time_corrected(signal, tau_d)?;
    let b = dead_time_corrected(noise, tau_d)?;
    Ok((s - b) / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveEfficiency {
    pub value: f64,
    /// Set when the signal came out below the noise; the value is negative
    /// and returned unchanged.
    pub below_noise: bool,
}

/// Uncorrected efficiency `(S - N) / n`.
pub fn effective_efficiency(signal: f64, noise: f64, n: f64) -> Result<EffectiveEfficiency, EstimatorError> {
    if !(n > 0.0) {
        return Err(EstimatorError::NonPositivePhotonRate(n));
    }
    let value = (signal - noise) / n;
    Ok(EffectiveEfficiency {
        value,
        below_noise: value < 0.0,
    })
}

/// First-order (delta method) standard error of [`quantum_efficiency`],
/// treating both raw counts as Poisson.
pub fn quantum_efficiency_sigma(
    signal_counts: u64,
    signal_duration: f64,
    noise_counts: u64,
    noise_duration: f64,
    tau_d: f64,
    n: f64,
) -> Result<f64, EstimatorError> {
    let s = signal_counts as f64 / signal_duration;
    let b = noise_counts as f64 / noise_duration;
    let var_s = signal_counts as f64 / (signal_duration * signal_duration);
    let var_b = noise_counts as f64 / (noise_duration * noise_duration);
    let ds = 1.0 - s * tau_d;
    let db = 1.0 - b * tau_d;
    if !(ds > 0.0) || !(db > 0.0) {
        let (rate, product) = if ds <= 0.0 { (s, s * tau_d) } else { (b, b * tau_d) };
        return Err(EstimatorError::Saturated {
            rate,
            dead_time: tau_d,
            product,
        });
    }
    Ok((var_s / ds.powi(4) + var_b / db.powi(4)).sqrt() / n)
}

/// Ground-truth afterpulse fraction: afterpulse-caused records over all records.
pub fn afterpulse_fraction(log: &EventLog) -> Result<f64, EstimatorError> {
    let total = log.records.len();
    if total == 0 {
        return Err(EstimatorError::EmptyLog);
    }
    let ap = log.records.iter().filter(|r| r.cause == Cause::Afterpulse).count();
    Ok(ap as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_signal_and_noise_gives_zero() {
        assert_eq!(quantum_efficiency(100.0, 100.0, 24e-6, 1e4).unwrap(), 0.0);
        assert_eq!(effective_efficiency(100.0, 100.0, 1e4).unwrap().value, 0.0);
    }

    #[test]
    fn hand_evaluated_case() {
        // 1000/0.976 - 100/0.9976 = 1024.5902 - 100.2406 = 924.3496
        let expected = (1000.0 / 0.976 - 100.0 / 0.9976) / 1e4;
        let got = quantum_efficiency(1000.0, 100.0, 24e-6, 1e4).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.092_434_9).abs() < 1e-7);
    }

    #[test]
    fn zero_dead_time_matches_effective() {
        let q = quantum_efficiency(1100.0, 100.0, 0.0, 1e4).unwrap();
        let e = effective_efficiency(1100.0, 100.0, 1e4).unwrap();
        assert_eq!(q, e.value);
        assert!((e.value - 0.10).abs() < 1e-15);
        assert!(!e.below_noise);
    }

    #[test]
    fn saturation_is_an_error() {
        let err = quantum_efficiency(50_000.0, 100.0, 24e-6, 1e4).unwrap_err();
        assert!(matches!(err, EstimatorError::Saturated { .. }), "{err}");
        assert!(quantum_efficiency(100.0, 100.0, 24e-6, 0.0).is_err());
    }

    #[test]
    fn negative_effective_efficiency_is_flagged() {
        let e = effective_efficiency(90.0, 100.0, 1e4).unwrap();
        assert!(e.below_noise);
        assert!(e.value < 0.0);
    }

    /// The delta-method error against a central finite difference of the
    /// estimator itself.
    #[test]
    fn sigma_matches_finite_difference_propagation() {
        let (cs, ts, cn, tn, tau, n) = (250_000u64, 100.0, 150_000u64, 100.0, 24e-6, 1e4);
        let s = cs as f64 / ts;
        let b = cn as f64 / tn;
        let h = 1e-3;
        let d_ds =
            (quantum_efficiency(s + h, b, tau, n).unwrap() - quantum_efficiency(s - h, b, tau, n).unwrap()) / (2.0 * h);
        let d_db =
            (quantum_efficiency(s, b + h, tau, n).unwrap() - quantum_efficiency(s, b - h, tau, n).unwrap()) / (2.0 * h);
        let fd = ((d_ds * (cs as f64).sqrt() / ts).powi(2) + (d_db * (cn as f64).sqrt() / tn).powi(2)).sqrt();
        let sigma = quantum_efficiency_sigma(cs, ts, cn, tn, tau, n).unwrap();
        assert!((sigma / fd - 1.0).abs() < 1e-6);
    }
}
