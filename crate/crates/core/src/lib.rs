//! Monte Carlo model of an InGaAs/InP avalanche photodiode under an
//! active-quenching controller, in gated or free-running mode.
//!
//! - [`source`]: CW and pulsed optical inputs and the shutter.
//! - [`detector`]: detection probability, dark counts, trap filling and
//!   release, timing jitter.
//! - [`fsm`]: the quenching controller as a pure transition function.
//! - [`engine`]: the deterministic event loop producing an [`EventLog`].
//! - [`analysis`]: dead-time-corrected and effective efficiency estimators,
//!   afterpulse estimators, dead-time and bias sweeps.
//!
//! ```
//! use apd_sim::{engine, DetectorParams, QuenchConfig, SimClock};
//! use apd_sim::source::make_cw_source;
//!
//! let det = DetectorParams::calibrated();
//! let quench = QuenchConfig::free_running(24e-6, 57.5, 54.0);
//! let log = engine::run(&make_cw_source(1e4).unwrap(), &det, &quench, &SimClock::new(0.1, 7).unwrap()).unwrap();
//! assert_eq!(log.meta.counts.total() as usize, log.records.len());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod detector;
pub mod engine;
pub mod error;
pub mod export;
pub mod fsm;
pub mod merge;
pub mod rng;
pub mod source;
pub mod time;

pub use detector::{dark_rate, detection_probability, DetectorParams, TrapState};
pub use engine::{run, run_batch, Cause, DetectionRecord, EventLog, RunJob, RunOptions};
pub use error::{ConfigError, EngineFault, EstimatorError, SimError};
pub use fsm::{Mode, QuenchConfig};
pub use merge::merge_streams;
pub use source::{PhotonStream, SimClock};
pub use time::Picos;
