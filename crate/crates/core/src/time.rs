//! Integer picosecond timestamps.
//!
//! All scheduling inside the engine happens on a 64-bit picosecond grid so that
//! event ordering is exact and runs are bit-for-bit reproducible. Seconds as
//! `f64` only appear at the edges (configuration and exported files).

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const PS_PER_SEC: u64 = 1_000_000_000_000;
pub const PS_PER_NS: u64 = 1_000;

/// A point in (or span of) simulated time, in picoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Picos(pub u64);

impl Picos {
    pub const ZERO: Picos = Picos(0);
    pub const MAX: Picos = Picos(u64::MAX);

    /// Rounds a duration in seconds to the nearest picosecond.
    ///
    /// Negative and NaN inputs saturate to zero; callers validate before
    /// converting.
    pub fn from_secs(secs: f64) -> Picos {
        Picos((secs * PS_PER_SEC as f64).round() as u64)
    }

    pub fn from_nanos(ns: u64) -> Picos {
        Picos(ns * PS_PER_NS)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / PS_PER_SEC as f64
    }

    pub fn saturating_sub(self, rhs: Picos) -> Picos {
        Picos(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Picos {
    type Output = Picos;
    fn add(self, rhs: Picos) -> Picos {
        Picos(self.0 + rhs.0)
    }
}

impl AddAssign for Picos {
    fn add_assign(&mut self, rhs: Picos) {
        self.0 += rhs.0;
    }
}

impl Sub for Picos {
    type Output = Picos;
    fn sub(self, rhs: Picos) -> Picos {
        Picos(self.0 - rhs.0)
    }
}

/// Exact decimal seconds with twelve fractional digits, e.g. `0.000024000005`.
impl fmt::Display for Picos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:012}", self.0 / PS_PER_SEC, self.0 % PS_PER_SEC)
    }
}
