#![allow(dead_code)]

pub mod reference;

use apd_sim::source::{make_cw_source, make_dark_source};
use apd_sim::{DetectorParams, PhotonStream, QuenchConfig};

pub const V_REF: f64 = 54.0;
pub const V_ON: f64 = 57.5;

/// Detector with bias-independent efficiency `eta` and dark rate `dark`, no
/// traps. The steep slope puts the efficiency curve on its plateau at `V_ON`.
pub fn flat_detector(eta: f64, dark: f64) -> DetectorParams {
    DetectorParams {
        eta_max: eta,
        eta_slope: 50.0,
        dark_n0: dark,
        dark_slope: 0.0,
        ..DetectorParams::calibrated().without_traps()
    }
}

pub fn free_running(tau_d: f64) -> QuenchConfig {
    QuenchConfig::free_running(tau_d, V_ON, V_REF)
}

pub fn gated(f_trig: f64) -> QuenchConfig {
    QuenchConfig::gated(f_trig, 100e-9, V_ON, V_REF)
}

pub fn cw(rate: f64) -> PhotonStream {
    make_cw_source(rate).unwrap()
}

pub fn dark() -> PhotonStream {
    make_dark_source()
}

/// One-sample Kolmogorov-Smirnov statistic against Exp(rate).
pub fn ks_exponential(samples: &mut [f64], rate: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-rate * x).exp();
            let lo = cdf - i as f64 / n;
            let hi = (i + 1) as f64 / n - cdf;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
