//! Experiment configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! experiment = "sweep_dead_time"   # single_run | sweep_dead_time | sweep_bias
//! duration = 100.0                 # simulated seconds per run
//! seed = 1
//! sweep_points = [16e-6, 24e-6]    # dead-times (s) or biases (V)
//! # detector_file = "calibrated_detector.toml"
//!
//! [quench]
//! mode = "free_running"
//! dead_time = 24e-6
//! v_on = 57.5
//! v_ref = 54.0
//!
//! [source]
//! kind = "cw"
//! rate_n = 1e4
//!
//! [outputs]
//! dir = "results"
//! ```
//!
//! The detector comes from an inline `[detector]` table, from
//! `detector_file` (resolved against the config's directory), or, when both
//! are absent, from the bundled calibrated parameter set. Unknown keys are
//! rejected everywhere.

use std::path::{Path, PathBuf};

use apd_sim::analysis::Conditions;
use apd_sim::engine::digest_json;
use apd_sim::{ConfigError, DetectorParams, PhotonStream, QuenchConfig, SimClock};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SingleRun,
    SweepDeadTime,
    SweepBias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { dir: default_dir() }
    }
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: ExperimentKind,
    pub duration: f64,
    pub seed: u64,
    #[serde(default)]
    pub sweep_points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_noise_counts: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorParams>,
    pub quench: QuenchConfig,
    pub source: PhotonStream,
    #[serde(default)]
    pub outputs: Outputs,
}

/// A validated config with the detector resolved to concrete parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub duration: f64,
    pub seed: u64,
    pub sweep_points: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_noise_counts: Option<f64>,
    pub detector: DetectorParams,
    pub quench: QuenchConfig,
    pub source: PhotonStream,
    pub outputs: Outputs,
}

#[derive(Serialize)]
struct DigestView<'a> {
    experiment: ExperimentKind,
    duration: f64,
    seed: u64,
    sweep_points: &'a [f64],
    min_noise_counts: Option<f64>,
    detector: &'a DetectorParams,
    quench: &'a QuenchConfig,
    source: &'a PhotonStream,
}

impl ExperimentConfig {
    /// Parses and validates a config. `base_dir` anchors a relative
    /// `detector_file`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        // Syntax first, so that malformed files and schema violations get
        // different exit codes.
        let _: toml::Table = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        let raw: RawConfig = toml::from_str(text).map_err(classify)?;
        let detector = match (raw.detector, &raw.detector_file) {
            (Some(_), Some(_)) => {
                return Err(CliError::Validation(
                    "set either [detector] or detector_file, not both".into(),
                ))
            }
            (Some(d), None) => d,
            (None, Some(path)) => {
                let path = base_dir.join(path);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Validation(format!("detector_file {}: {e}", path.display())))?;
                let _: toml::Table =
                    toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| match classify(e) {
                    CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
                    CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
                    other => other,
                })?
            }
            (None, None) => DetectorParams::calibrated(),
        };
        let cfg = ExperimentConfig {
            experiment: raw.experiment,
            duration: raw.duration,
            seed: raw.seed,
            sweep_points: raw.sweep_points,
            min_noise_counts: raw.min_noise_counts,
            detector,
            quench: raw.quench,
            source: raw.source,
            outputs: raw.outputs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.detector.validate()?;
        self.source.validate()?;
        SimClock::new(self.duration, self.seed)?;
        if let Some(c) = self.min_noise_counts {
            if !(c > 0.0) || !c.is_finite() {
                return Err(ConfigError::InvalidParameter {
                    name: "min_noise_counts",
                    value: c,
                    reason: "must be positive",
                }
                .into());
            }
        }
        self.quench.timing(&self.detector)?;
        let pts = &self.sweep_points;
        if !pts.windows(2).all(|w| w[0] < w[1]) {
            return Err(ConfigError::SweepNotIncreasing.into());
        }
        match self.experiment {
            ExperimentKind::SingleRun => {
                if !pts.is_empty() {
                    return Err(CliError::Validation(
                        "sweep_points is only used by sweep experiments".into(),
                    ));
                }
            }
            ExperimentKind::SweepDeadTime => {
                if pts.is_empty() {
                    return Err(ConfigError::MissingParameter("sweep_points").into());
                }
                for &tau in pts {
                    self.quench.with_dead_time(tau).timing(&self.detector)?;
                }
            }
            ExperimentKind::SweepBias => {
                if pts.is_empty() {
                    return Err(ConfigError::MissingParameter("sweep_points").into());
                }
                for &v in pts {
                    if v <= self.detector.v_breakdown {
                        return Err(ConfigError::BiasBelowBreakdown(v).into());
                    }
                    self.quench.with_v_on(v).timing(&self.detector)?;
                }
            }
        }
        Ok(())
    }

    /// Hex digest of everything that determines the results. The output
    /// location is excluded, so moving results elsewhere keeps their names.
    pub fn digest(&self) -> String {
        digest_json(&DigestView {
            experiment: self.experiment,
            duration: self.duration,
            seed: self.seed,
            sweep_points: &self.sweep_points,
            min_noise_counts: self.min_noise_counts,
            detector: &self.detector,
            quench: &self.quench,
            source: &self.source,
        })
    }

    /// Config as a standalone TOML file with the detector inlined.
    pub fn to_toml_string(&self) -> String {
        let raw = RawConfig {
            experiment: self.experiment,
            duration: self.duration,
            seed: self.seed,
            sweep_points: self.sweep_points.clone(),
            min_noise_counts: self.min_noise_counts,
            detector_file: None,
            detector: Some(self.detector.clone()),
            quench: self.quench.clone(),
            source: self.source.clone(),
            outputs: self.outputs.clone(),
        };
        toml::to_string(&raw).expect("config serializes")
    }

    pub fn conditions(&self) -> Conditions {
        Conditions {
            detector: self.detector.clone(),
            quench: self.quench.clone(),
            source: self.source.clone(),
            duration: self.duration,
            seed: self.seed,
            min_noise_counts: self.min_noise_counts,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Schema violations (unknown or missing keys) are validation failures;
/// anything else the deserializer rejects is a parse failure.
fn classify(e: toml::de::Error) -> CliError {
    let msg = e.to_string();
    if msg.contains("unknown field") || msg.contains("missing field") {
        CliError::Validation(msg)
    } else {
        CliError::Parse(msg)
    }
}
