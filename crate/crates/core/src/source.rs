//! Optical inputs: CW laser, pulsed laser, and the shutter that blanks them.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::rng::{substream, SimRng, Stream};
use crate::time::Picos;

/// FWHM of a Gaussian is this many standard deviations.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Cw,
    Pulsed,
    Dark,
}

/// Description of the light sent to the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonStream {
    pub kind: SourceKind,
    /// Photons per second (CW).
    #[serde(default)]
    pub rate_n: f64,
    /// Pulse repetition rate in Hz (pulsed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_trig: Option<f64>,
    /// Mean photon number per pulse (pulsed).
    #[serde(default)]
    pub mean_photons_per_pulse: f64,
    #[serde(default = "default_true")]
    pub shutter_open: bool,
    /// Pulse envelope FWHM in seconds; zero is a delta at the pulse epoch.
    #[serde(default)]
    pub pulse_fwhm: f64,
}

fn default_true() -> bool {
    true
}

pub fn make_cw_source(rate_n: f64) -> Result<PhotonStream, ConfigError> {
    let stream = PhotonStream {
        kind: SourceKind::Cw,
        rate_n,
        f_trig: None,
        mean_photons_per_pulse: 0.0,
        shutter_open: true,
        pulse_fwhm: 0.0,
    };
    stream.validate()?;
    Ok(stream)
}

pub fn make_pulsed_source(f_trig: f64, mean_photons_per_pulse: f64) -> Result<PhotonStream, ConfigError> {
    let stream = PhotonStream {
        kind: SourceKind::Pulsed,
        rate_n: 0.0,
        f_trig: Some(f_trig),
        mean_photons_per_pulse,
        shutter_open: true,
        pulse_fwhm: 0.0,
    };
    stream.validate()?;
    Ok(stream)
}

pub fn make_dark_source() -> PhotonStream {
    PhotonStream {
        kind: SourceKind::Dark,
        rate_n: 0.0,
        f_trig: None,
        mean_photons_per_pulse: 0.0,
        shutter_open: true,
        pulse_fwhm: 0.0,
    }
}

pub fn set_shutter(stream: PhotonStream, open: bool) -> PhotonStream {
    PhotonStream {
        shutter_open: open,
        ..stream
    }
}

impl PhotonStream {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.rate_n >= 0.0) || !self.rate_n.is_finite() {
            return Err(ConfigError::InvalidParameter {
                name: "rate_n",
                value: self.rate_n,
                reason: "must be a finite non-negative rate",
            });
        }
        if !(self.mean_photons_per_pulse >= 0.0) || !self.mean_photons_per_pulse.is_finite() {
            return Err(ConfigError::InvalidParameter {
                name: "mean_photons_per_pulse",
                value: self.mean_photons_per_pulse,
                reason: "must be finite and non-negative",
            });
        }
        if !(self.pulse_fwhm >= 0.0) {
            return Err(ConfigError::InvalidParameter {
                name: "pulse_fwhm",
                value: self.pulse_fwhm,
                reason: "must be non-negative",
            });
        }
        if self.kind == SourceKind::Pulsed {
            let f = self.f_trig.ok_or(ConfigError::MissingParameter("f_trig"))?;
            if !(f > 0.0) || !f.is_finite() {
                return Err(ConfigError::InvalidParameter {
                    name: "f_trig",
                    value: f,
                    reason: "pulse rate must be positive",
                });
            }
            if Picos::from_secs(1.0 / f) == Picos::ZERO {
                return Err(ConfigError::InvalidParameter {
                    name: "f_trig",
                    value: f,
                    reason: "pulse period is below 1 ps",
                });
            }
        }
        Ok(())
    }

    /// Photons per second while the shutter is open, i.e. the `n` of the
    /// efficiency estimators.
    pub fn nominal_rate(&self) -> f64 {
        match self.kind {
            SourceKind::Cw => self.rate_n,
            SourceKind::Pulsed => self.f_trig.unwrap_or(0.0) * self.mean_photons_per_pulse,
            SourceKind::Dark => 0.0,
        }
    }

    /// Photons per second actually reaching the diode.
    pub fn effective_rate(&self) -> f64 {
        if self.shutter_open {
            self.nominal_rate()
        } else {
            0.0
        }
    }

    /// Lazily generates this stream's photon arrivals over `[0, duration)`.
    pub fn arrivals(&self, clock: &SimClock) -> PhotonArrivals {
        PhotonArrivals::new(self, clock)
    }
}

/// Run length and root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    pub duration: Picos,
    pub seed: u64,
}

impl SimClock {
    pub fn new(duration_secs: f64, seed: u64) -> Result<Self, ConfigError> {
        if !(duration_secs >= 0.0) || !duration_secs.is_finite() || duration_secs > 1.0e6 {
            return Err(ConfigError::InvalidParameter {
                name: "duration",
                value: duration_secs,
                reason: "must be in [0, 1e6] s",
            });
        }
        Ok(SimClock {
            duration: Picos::from_secs(duration_secs),
            seed,
        })
    }
}

/// Arrivals of a homogeneous Poisson process on the picosecond grid.
#[derive(Debug, Clone)]
pub struct PoissonArrivals {
    rng: SimRng,
    gap: Option<Exp<f64>>,
    t: Picos,
    end: Picos,
}

impl PoissonArrivals {
    pub fn new(rate: f64, end: Picos, rng: SimRng) -> Self {
        let gap = if rate > 0.0 {
            Some(Exp::new(rate).expect("positive rate"))
        } else {
            None
        };
        PoissonArrivals {
            rng,
            gap,
            t: Picos::ZERO,
            end,
        }
    }
}

impl Iterator for PoissonArrivals {
    type Item = Picos;

    fn next(&mut self) -> Option<Picos> {
        let gap = self.gap.as_ref()?;
        let dt = gap.sample(&mut self.rng);
        let t = self.t.0 as f64 + dt * crate::time::PS_PER_SEC as f64;
        if t >= self.end.0 as f64 {
            self.gap = None;
            return None;
        }
        self.t = Picos(t.round() as u64);
        if self.t >= self.end {
            self.gap = None;
            return None;
        }
        Some(self.t)
    }
}

/// One incident photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonArrival {
    pub t: Picos,
    /// Sequence number within the run; keys the avalanche it may cause.
    pub index: u64,
    /// Uniform draw in [0, 1); the photon converts iff this is below the
    /// detection probability at the time it lands on an armed diode.
    pub conversion_draw: f64,
}

// One per run; boxing the pulse train buys nothing.
#[allow(clippy::large_enum_variant)]
enum ArrivalProcess {
    None,
    Cw(PoissonArrivals),
    Pulsed(PulseTrain),
}

struct PulseTrain {
    period: Picos,
    next_pulse: u64,
    count: Poisson<f64>,
    envelope: Option<Normal<f64>>,
    count_rng: SimRng,
    envelope_rng: SimRng,
    pending: std::collections::VecDeque<Picos>,
}

impl PulseTrain {
    fn refill(&mut self, end: Picos) -> bool {
        while self.pending.is_empty() {
            let epoch = Picos(self.next_pulse * self.period.0);
            if epoch >= end {
                return false;
            }
            self.next_pulse += 1;
            let n = self.count.sample(&mut self.count_rng) as usize;
            if n == 0 {
                continue;
            }
            match &self.envelope {
                None => self.pending.extend(std::iter::repeat_n(epoch, n)),
                Some(normal) => {
                    let half = (self.period.0 / 2) as f64;
                    let mut offsets: Vec<f64> = (0..n)
                        .map(|_| normal.sample(&mut self.envelope_rng).clamp(-half, half - 1.0))
                        .collect();
                    offsets.sort_by(f64::total_cmp);
                    for off in offsets {
                        let t = epoch.0 as f64 + off.round();
                        if t >= 0.0 && (t as u64) < end.0 {
                            self.pending.push_back(Picos(t as u64));
                        }
                    }
                }
            }
        }
        true
    }
}

/// Iterator over photon arrivals, in non-decreasing time order.
pub struct PhotonArrivals {
    process: ArrivalProcess,
    conversion_rng: SimRng,
    next_index: u64,
    end: Picos,
}

impl PhotonArrivals {
    fn new(stream: &PhotonStream, clock: &SimClock) -> Self {
        let process = if !stream.shutter_open {
            ArrivalProcess::None
        } else {
            match stream.kind {
                SourceKind::Dark => ArrivalProcess::None,
                SourceKind::Cw if stream.rate_n > 0.0 => ArrivalProcess::Cw(PoissonArrivals::new(
                    stream.rate_n,
                    clock.duration,
                    substream(clock.seed, Stream::PhotonArrivals),
                )),
                SourceKind::Cw => ArrivalProcess::None,
                SourceKind::Pulsed if stream.mean_photons_per_pulse > 0.0 => {
                    let f = stream.f_trig.expect("validated pulsed source");
                    let sigma_ps = stream.pulse_fwhm / FWHM_PER_SIGMA * crate::time::PS_PER_SEC as f64;
                    ArrivalProcess::Pulsed(PulseTrain {
                        period: Picos::from_secs(1.0 / f),
                        next_pulse: 0,
                        count: Poisson::new(stream.mean_photons_per_pulse).expect("positive mean"),
                        envelope: (sigma_ps > 0.0).then(|| Normal::new(0.0, sigma_ps).expect("finite sigma")),
                        count_rng: substream(clock.seed, Stream::PhotonArrivals),
                        envelope_rng: substream(clock.seed, Stream::PulseEnvelope),
                        pending: Default::default(),
                    })
                }
                SourceKind::Pulsed => ArrivalProcess::None,
            }
        };
        PhotonArrivals {
            process,
            conversion_rng: substream(clock.seed, Stream::PhotonConversion),
            next_index: 0,
            end: clock.duration,
        }
    }
}

impl Iterator for PhotonArrivals {
    type Item = PhotonArrival;

    fn next(&mut self) -> Option<PhotonArrival> {
        let t = match &mut self.process {
            ArrivalProcess::None => None,
            ArrivalProcess::Cw(p) => p.next(),
            ArrivalProcess::Pulsed(train) => {
                if train.refill(self.end) {
                    train.pending.pop_front()
                } else {
                    None
                }
            }
        }?;
        let index = self.next_index;
        self.next_index += 1;
        Some(PhotonArrival {
            t,
            index,
            conversion_draw: self.conversion_rng.random(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clock(secs: f64, seed: u64) -> SimClock {
        SimClock::new(secs, seed).unwrap()
    }

    #[test]
    fn negative_rate_is_rejected() {
        assert!(matches!(
            make_cw_source(-1.0),
            Err(ConfigError::InvalidParameter { name: "rate_n", .. })
        ));
    }

    #[test]
    fn non_positive_trigger_is_rejected() {
        assert!(make_pulsed_source(0.0, 1.0).is_err());
        assert!(make_pulsed_source(-5.0, 1.0).is_err());
        assert!(make_pulsed_source(1e4, -1.0).is_err());
    }

    #[test]
    fn nominal_gated_condition_builds() {
        let s = make_pulsed_source(1e4, 1.0).unwrap();
        assert_eq!(s.nominal_rate(), 1e4);
        let cw = make_cw_source(1e4).unwrap();
        assert_eq!(cw.nominal_rate(), 1e4);
    }

    #[test]
    fn zero_rate_never_emits() {
        let s = make_cw_source(0.0).unwrap();
        assert_eq!(s.arrivals(&clock(10.0, 1)).count(), 0);
        let p = make_pulsed_source(1e4, 0.0).unwrap();
        assert_eq!(p.arrivals(&clock(1.0, 1)).count(), 0);
        assert_eq!(make_dark_source().arrivals(&clock(1.0, 1)).count(), 0);
    }

    #[test]
    fn shutter_closed_blanks_and_open_is_identity() {
        let s = make_cw_source(1e4).unwrap();
        let closed = set_shutter(s.clone(), false);
        assert_eq!(closed.arrivals(&clock(1.0, 3)).count(), 0);
        assert_eq!(closed.effective_rate(), 0.0);
        assert_eq!(closed.nominal_rate(), 1e4);
        let reopened = set_shutter(s.clone(), true);
        assert_eq!(reopened, s);
    }

    #[test]
    fn delta_pulses_land_on_epochs() {
        let s = make_pulsed_source(1e4, 2.0).unwrap();
        let period = Picos::from_secs(1e-4).0;
        for a in s.arrivals(&clock(0.01, 9)) {
            assert_eq!(a.t.0 % period, 0);
        }
    }

    #[test]
    fn gaussian_envelope_stays_sorted_and_in_range() {
        let mut s = make_pulsed_source(1e6, 3.0).unwrap();
        s.pulse_fwhm = 200e-9;
        let c = clock(0.001, 4);
        let ts: Vec<Picos> = s.arrivals(&c).map(|a| a.t).collect();
        assert!(!ts.is_empty());
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        assert!(ts.iter().all(|t| *t < c.duration));
    }

    #[test]
    fn indices_are_sequential() {
        let s = make_cw_source(1e5).unwrap();
        for (i, a) in s.arrivals(&clock(0.01, 2)).enumerate() {
            assert_eq!(a.index, i as u64);
            assert!((0.0..1.0).contains(&a.conversion_draw));
        }
    }
}
