use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use apd_sim_cli::calibrate::{calibrate, SearchOptions};
use apd_sim_cli::presets::{self, load_config, load_targets};
use apd_sim_cli::runner::{describe, run_experiment, RunRequest};
use apd_sim_cli::CliError;
use clap::{Parser, Subcommand};

/// Monte Carlo simulator of a gated or free-running InGaAs/InP APD.
#[derive(Parser)]
#[command(name = "apd-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file or bundled preset.
    Run {
        config: String,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's outputs.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved config and its digest, then exit.
        #[arg(long)]
        dry_run: bool,
        /// Also write the controller's state trace (single_run only).
        #[arg(long)]
        trace_fsm: bool,
    },
    /// Fit detector parameters so the base config reproduces the targets.
    Calibrate {
        targets: String,
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = SearchOptions::default().max_evals)]
        max_evals: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List bundled presets, or print one.
    Presets { name: Option<String> },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            dry_run,
            trace_fsm,
        } => {
            let (mut cfg, origin) = load_config(&config)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            if let Some(dir) = &out {
                cfg.outputs.dir = dir.clone();
            }
            if dry_run {
                println!("# config_digest = {}", cfg.digest());
                print!("{}", cfg.to_toml_string());
                return Ok(());
            }
            let summary = run_experiment(
                &cfg,
                &RunRequest {
                    out_dir: out,
                    trace_fsm,
                    config_origin: Some(origin),
                },
            )?;
            print!("{}", describe(&summary.outcome));
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Calibrate {
            targets,
            config,
            out,
            max_evals,
            seed,
        } => {
            let targets = load_targets(&targets)?;
            let (mut cfg, _) = load_config(&config)?;
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let opts = SearchOptions {
                max_evals,
                ..SearchOptions::default()
            };
            let result = calibrate(&cfg.conditions(), &targets.targets, opts)?;
            let dir = out.unwrap_or_else(|| cfg.outputs.dir.clone());
            fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            let report = result.report();
            let params_path = dir.join("calibrated_detector.toml");
            let report_path = dir.join("calibration_report.txt");
            fs::write(&params_path, result.params.to_toml_string())
                .map_err(|e| CliError::Io(format!("{}: {e}", params_path.display())))?;
            fs::write(&report_path, &report).map_err(|e| CliError::Io(format!("{}: {e}", report_path.display())))?;
            print!("{report}");
            println!("wrote {}", params_path.display());
            println!("wrote {}", report_path.display());
            if result.converged() {
                Ok(())
            } else {
                let missed = result.residuals.iter().filter(|r| !r.met()).count();
                Err(CliError::Calibration(format!(
                    "{missed} target(s) not met after {} evaluations; best parameters written",
                    result.evaluations
                )))
            }
        }
        Command::Presets { name: None } => {
            for (name, _) in presets::PRESETS {
                println!("{name}");
            }
            Ok(())
        }
        Command::Presets { name: Some(name) } => match presets::preset(&name) {
            Some(text) => {
                print!("{text}");
                Ok(())
            }
            None => Err(CliError::Validation(format!("unknown preset {name}"))),
        },
    }
}
