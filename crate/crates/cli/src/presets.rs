//! Configs and target sets shipped with the binary.

use std::path::Path;

use crate::calibrate::TargetsFile;
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("headline", include_str!("../presets/headline.toml")),
    ("fig2_free_running", include_str!("../presets/fig2_free_running.toml")),
    ("fig2_gated", include_str!("../presets/fig2_gated.toml")),
    ("fig3_free_running", include_str!("../presets/fig3_free_running.toml")),
    ("fig3_gated", include_str!("../presets/fig3_gated.toml")),
    ("headline_targets", include_str!("../presets/headline_targets.toml")),
    ("calibrated_detector", apd_sim::detector::CALIBRATED_TOML),
];

pub fn preset(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Reads `arg` as a file if it exists, else as a bundled preset name.
/// Returns the text, the directory relative paths resolve against, and a
/// description of where it came from.
pub fn resolve(arg: &str) -> Result<(String, std::path::PathBuf, String), CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{arg}: {e}")))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok((text, base, arg.to_string()));
    }
    match preset(arg) {
        Some(text) => Ok((text.to_string(), std::path::PathBuf::from("."), format!("preset:{arg}"))),
        None => Err(CliError::Io(format!(
            "{arg}: no such file or bundled preset (see `apd-sim presets`)"
        ))),
    }
}

pub fn load_config(arg: &str) -> Result<(ExperimentConfig, String), CliError> {
    let (text, base, origin) = resolve(arg)?;
    Ok((ExperimentConfig::from_toml_str(&text, &base)?, origin))
}

pub fn load_targets(arg: &str) -> Result<TargetsFile, CliError> {
    let (text, _, _) = resolve(arg)?;
    TargetsFile::from_toml_str(&text)
}
