use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use apd_sim::analysis::{sweep_bias, sweep_dead_time, SweepResult};
use apd_sim::engine::{run_with, RunOptions};
use apd_sim::export::{write_events_csv, write_meta, write_trace_csv};
use apd_sim::{EventLog, SimClock};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    /// Overrides `outputs.dir`.
    pub out_dir: Option<PathBuf>,
    pub trace_fsm: bool,
    /// Where the config came from, recorded in the manifest.
    pub config_origin: Option<String>,
}

#[derive(Debug)]
pub enum Outcome {
    Run(EventLog),
    Sweep(SweepResult),
}

#[derive(Debug)]
pub struct RunSummary {
    pub digest: String,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub outcome: Outcome,
}

/// Runs the experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig, trace: bool) -> Result<Outcome, CliError> {
    match cfg.experiment {
        ExperimentKind::SingleRun => {
            let clock = SimClock::new(cfg.duration, cfg.seed)?;
            let log = run_with(&cfg.source, &cfg.detector, &cfg.quench, &clock, RunOptions { trace })?;
            Ok(Outcome::Run(log))
        }
        ExperimentKind::SweepDeadTime => Ok(Outcome::Sweep(sweep_dead_time(&cfg.conditions(), &cfg.sweep_points)?)),
        ExperimentKind::SweepBias => Ok(Outcome::Sweep(sweep_bias(&cfg.conditions(), &cfg.sweep_points)?)),
    }
}

fn write_file(path: &Path, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Runs the experiment and writes its outputs, named by the config digest,
/// plus the resolved config and a manifest.
pub fn run_experiment(cfg: &ExperimentConfig, req: &RunRequest) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let digest = cfg.digest();
    let out_dir = req.out_dir.clone().unwrap_or_else(|| cfg.outputs.dir.clone());
    let trace = req.trace_fsm && cfg.experiment == ExperimentKind::SingleRun;
    if req.trace_fsm && !trace {
        eprintln!("note: --trace-fsm applies to single_run experiments only");
    }
    let outcome = execute(cfg, trace)?;

    fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut files = Vec::new();
    let name = |suffix: &str| out_dir.join(format!("{digest}_{suffix}"));
    match &outcome {
        Outcome::Run(log) => {
            let mut buf = Vec::new();
            write_events_csv(log, &mut buf)?;
            write_file(&name("events.csv"), &buf, &mut files)?;
            let mut buf = Vec::new();
            write_meta(log, &mut buf)?;
            buf.extend_from_slice(format!("experiment_digest = {digest}\n").as_bytes());
            write_file(&name("events.meta"), &buf, &mut files)?;
            if let Some(rows) = &log.trace {
                let mut buf = Vec::new();
                write_trace_csv(rows, &mut buf)?;
                write_file(&name("trace.csv"), &buf, &mut files)?;
            }
        }
        Outcome::Sweep(sweep) => {
            let mut buf = Vec::new();
            sweep.write_csv(&mut buf)?;
            write_file(&name("sweep.csv"), &buf, &mut files)?;
            let mut buf = Vec::new();
            sweep.write_noise_csv(&mut buf)?;
            write_file(&name("noise.csv"), &buf, &mut files)?;
        }
    }
    let config_path = name("config.toml");
    write_file(&config_path, cfg.to_toml_string().as_bytes(), &mut files)?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "config_digest = {digest}");
    let _ = writeln!(manifest, "experiment = {:?}", cfg.experiment);
    let _ = writeln!(manifest, "seed = {}", cfg.seed);
    let _ = writeln!(manifest, "duration_s = {}", cfg.duration);
    if let Some(origin) = &req.config_origin {
        let _ = writeln!(manifest, "config_origin = {origin}");
    }
    let _ = writeln!(manifest, "resolved_config = {}", file_name(&config_path));
    for f in &files {
        if *f != config_path {
            let _ = writeln!(manifest, "output = {}", file_name(f));
        }
    }
    let _ = writeln!(manifest, "wall_time_s = {:.3}", started.elapsed().as_secs_f64());
    let _ = writeln!(manifest, "apd_sim_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        manifest,
        "rerun = apd-sim run {}{}",
        file_name(&config_path),
        if trace { " --trace-fsm" } else { "" }
    );
    write_file(&name("manifest.txt"), manifest.as_bytes(), &mut files)?;

    Ok(RunSummary {
        digest,
        out_dir,
        files,
        outcome,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Short human-readable result table.
pub fn describe(outcome: &Outcome) -> String {
    let mut s = String::new();
    match outcome {
        Outcome::Run(log) => {
            let c = &log.meta.counts;
            let _ = writeln!(
                s,
                "{} detections in {} s ({:.1}/s): photon {}, dark {}, afterpulse {}",
                c.total(),
                log.meta.duration,
                log.rate(),
                c.get(apd_sim::Cause::Photon),
                c.get(apd_sim::Cause::Dark),
                c.get(apd_sim::Cause::Afterpulse),
            );
        }
        Outcome::Sweep(sweep) => {
            let _ = writeln!(
                s,
                "{:>12} {:>9} {:>9} {:>12} {:>9} {:>9}",
                "x", "eta_q", "eta_eff", "N_corr", "excess", "ap"
            );
            for p in &sweep.points {
                let r = &p.report;
                let _ = writeln!(
                    s,
                    "{:>12.4e} {:>9} {:>9} {:>12.1} {:>9.4} {:>9.4}",
                    p.x,
                    r.eta_q.map_or("-".into(), |v| format!("{v:.4}")),
                    r.eta_eff.map_or("-".into(), |v| format!("{v:.4}")),
                    r.noise_corrected,
                    r.excess_noise(),
                    r.afterpulse_fraction
                );
            }
        }
    }
    s
}
