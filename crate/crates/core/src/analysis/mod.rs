//! Efficiency estimators and characterization sweeps.

mod blind;
mod estimators;
mod report;
mod sweep;

pub use blind::{afterpulse_fraction_blind, afterpulse_fraction_blind_curve, plateau_len, NoisePoint};
pub use estimators::{
    afterpulse_fraction, dead_time_corrected, effective_efficiency, quantum_efficiency, quantum_efficiency_sigma,
    EffectiveEfficiency,
};
pub use report::{EfficiencyReport, SweepAxis, SweepPoint, SweepResult, NOISE_HEADER, SWEEP_HEADER};
pub use sweep::{
    measure_efficiency, measure_noise, noise_report, sweep_bias, sweep_dead_time, Conditions, NoiseMeasurement,
};
