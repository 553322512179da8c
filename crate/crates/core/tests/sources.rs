mod common;

use apd_sim::rng::{substream, Stream};
use apd_sim::source::{make_cw_source, make_pulsed_source, set_shutter, PoissonArrivals, SourceKind, FWHM_PER_SIGMA};
use apd_sim::time::PS_PER_SEC;
use apd_sim::{dark_rate, DetectorParams, Picos, SimClock};
use common::{ks_critical_001, ks_exponential};

fn gaps(times: &[Picos]) -> Vec<f64> {
    times.windows(2).map(|w| (w[1] - w[0]).as_secs()).collect()
}

#[test]
fn cw_inter_arrivals_are_exponential() {
    let rate = 1e4;
    let clock = SimClock::new(10.5, 1234).unwrap();
    let t: Vec<Picos> = make_cw_source(rate).unwrap().arrivals(&clock).map(|p| p.t).collect();
    let mut g = gaps(&t);
    g.truncate(100_000);
    assert_eq!(g.len(), 100_000);
    let d = ks_exponential(&mut g, rate);
    assert!(d < ks_critical_001(g.len()), "D = {d}");
}

#[test]
fn ks_statistic_detects_the_wrong_rate() {
    let clock = SimClock::new(11.0, 1234).unwrap();
    let t: Vec<Picos> = make_cw_source(1e4).unwrap().arrivals(&clock).map(|p| p.t).collect();
    let mut g = gaps(&t);
    g.truncate(100_000);
    assert!(ks_exponential(&mut g, 1.05e4) > ks_critical_001(g.len()));
}

#[test]
fn dark_inter_arrivals_are_exponential_at_dark_rate() {
    let det = DetectorParams::calibrated();
    let rate = dark_rate(common::V_ON, det.temperature, &det);
    let end = Picos::from_secs(110_000.0 / rate);
    let t: Vec<Picos> = PoissonArrivals::new(rate, end, substream(77, Stream::DarkArrivals)).collect();
    let mut g = gaps(&t);
    g.truncate(100_000);
    assert_eq!(g.len(), 100_000);
    let d = ks_exponential(&mut g, rate);
    assert!(d < ks_critical_001(g.len()), "D = {d}");
}

#[test]
fn cw_mean_count_over_many_seeds() {
    let source = make_cw_source(1e6).unwrap();
    let counts: Vec<f64> = (0..1000u64)
        .map(|seed| source.arrivals(&SimClock::new(1.0, seed).unwrap()).count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    assert!((mean - 1e6).abs() < 4e3, "{mean}");
    // The mean of 1000 Poisson(1e6) counts has a standard error of ~32.
    assert!((mean - 1e6).abs() < 4.0 * 1e3 / (1000f64).sqrt(), "{mean}");
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
    assert!((var / 1e6 - 1.0).abs() < 0.2, "variance {var}");
}

#[test]
fn pulsed_total_photons() {
    let source = make_pulsed_source(1e4, 1.0).unwrap();
    let clock = SimClock::new(100.0, 8).unwrap();
    let mut n = 0u64;
    let period = Picos::from_secs(1e-4);
    for p in source.arrivals(&clock) {
        assert_eq!(p.t.0 % period.0, 0, "delta envelope puts photons on pulse epochs");
        n += 1;
    }
    assert!((n as f64 - 1e6).abs() < 4e3, "{n}");
}

#[test]
fn pulsed_counts_per_pulse_are_poisson() {
    let source = make_pulsed_source(1e4, 1.0).unwrap();
    let clock = SimClock::new(20.0, 9).unwrap();
    let mut per_pulse = vec![0u32; 200_000];
    for p in source.arrivals(&clock) {
        per_pulse[(p.t.0 / 100_000_000) as usize] += 1;
    }
    let empty = per_pulse.iter().filter(|&&c| c == 0).count() as f64 / per_pulse.len() as f64;
    let single = per_pulse.iter().filter(|&&c| c == 1).count() as f64 / per_pulse.len() as f64;
    let e = (-1.0f64).exp();
    let sigma = (e * (1.0 - e) / per_pulse.len() as f64).sqrt();
    assert!((empty - e).abs() < 4.0 * sigma, "{empty}");
    assert!((single - e).abs() < 4.0 * sigma, "{single}");
}

#[test]
fn gaussian_envelope_width() {
    let mut source = make_pulsed_source(1e4, 1.0).unwrap();
    source.pulse_fwhm = 2e-9;
    let clock = SimClock::new(50.0, 10).unwrap();
    let period = 100_000_000i64;
    let offsets: Vec<f64> = source
        .arrivals(&clock)
        .filter(|p| p.t.0 > period as u64)
        .map(|p| {
            let t = p.t.0 as i64;
            let k = (t + period / 2) / period;
            (t - k * period) as f64 / PS_PER_SEC as f64
        })
        .collect();
    let n = offsets.len() as f64;
    let mean = offsets.iter().sum::<f64>() / n;
    let sd = (offsets.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let expected = 2e-9 / FWHM_PER_SIGMA;
    assert!(mean.abs() < 5.0 * expected / n.sqrt());
    assert!((sd / expected - 1.0).abs() < 0.01, "{sd}");
}

#[test]
fn zero_rates_never_emit() {
    let clock = SimClock::new(10.0, 1).unwrap();
    assert_eq!(make_cw_source(0.0).unwrap().arrivals(&clock).count(), 0);
    assert_eq!(make_pulsed_source(1e4, 0.0).unwrap().arrivals(&clock).count(), 0);
    assert_eq!(
        set_shutter(make_cw_source(1e4).unwrap(), false)
            .arrivals(&clock)
            .count(),
        0
    );
    assert_eq!(set_shutter(make_cw_source(1e4).unwrap(), false).effective_rate(), 0.0);
    assert_eq!(apd_sim::source::make_dark_source().kind, SourceKind::Dark);
}

#[test]
fn invalid_sources_are_rejected() {
    assert!(make_cw_source(-1.0).is_err());
    assert!(make_cw_source(f64::NAN).is_err());
    assert!(make_pulsed_source(0.0, 1.0).is_err());
    assert!(make_pulsed_source(1e4, -0.5).is_err());
}

#[test]
fn arrivals_lie_in_the_run_window() {
    let clock = SimClock::new(0.25, 3).unwrap();
    let mut source = make_pulsed_source(1e6, 3.0).unwrap();
    source.pulse_fwhm = 100e-9;
    let t: Vec<Picos> = source.arrivals(&clock).map(|p| p.t).collect();
    assert!(t.windows(2).all(|w| w[0] <= w[1]));
    assert!(t.iter().all(|&x| x < clock.duration));
}
