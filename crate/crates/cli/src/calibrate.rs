//! Fits detector parameters to scalar targets by simulation in the loop.
//!
//! Targets file:
//!
//! ```toml
//! [[target]]
//! observable = "eta_q"
//! value = 0.10
//! tolerance = 0.004
//!
//! [[target]]
//! observable = "afterpulse_fraction"
//! relation = "lt"          # eq (default) | lt | gt
//! value = 0.01
//! tolerance = 0.0005       # required margin for lt / gt
//! dead_time = 32e-6        # optional overrides of the base config
//! ```
//!
//! An `eq` target is met when `|achieved - value| <= tolerance`; `lt` when
//! `achieved <= value - tolerance`; `gt` when `achieved >= value + tolerance`.
//! The objective is the sum of squared relative misses beyond those bounds,
//! so it reaches exactly zero once every target is met.
//!
//! Every evaluation reuses the base seed, so the objective is a
//! deterministic function of the parameters.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use apd_sim::analysis::{measure_efficiency, noise_report, Conditions, EfficiencyReport};
use apd_sim::{dark_rate, detection_probability, DetectorParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    EtaQ,
    EtaEff,
    NoiseCorrected,
    ExcessNoise,
    AfterpulseFraction,
    DetectionProbability,
    DarkRate,
}

impl Observable {
    fn needs_signal(self) -> bool {
        matches!(
            self,
            Observable::EtaQ | Observable::EtaEff | Observable::AfterpulseFraction
        )
    }

    fn needs_run(self) -> bool {
        !matches!(self, Observable::DetectionProbability | Observable::DarkRate)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Observable::EtaQ => "eta_q",
            Observable::EtaEff => "eta_eff",
            Observable::NoiseCorrected => "noise_corrected",
            Observable::ExcessNoise => "excess_noise",
            Observable::AfterpulseFraction => "afterpulse_fraction",
            Observable::DetectionProbability => "detection_probability",
            Observable::DarkRate => "dark_rate",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    #[default]
    Eq,
    Lt,
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub observable: Observable,
    pub value: f64,
    pub tolerance: f64,
    #[serde(default)]
    pub relation: Relation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_on: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_n: Option<f64>,
}

impl Target {
    /// Relative miss beyond the tolerance band; zero when met.
    pub fn miss(&self, achieved: f64) -> f64 {
        let scale = self.value.abs().max(f64::MIN_POSITIVE);
        let excess = match self.relation {
            Relation::Eq => (achieved - self.value).abs() - self.tolerance,
            Relation::Lt => achieved - (self.value - self.tolerance),
            Relation::Gt => (self.value + self.tolerance) - achieved,
        };
        if excess.is_nan() {
            f64::INFINITY
        } else {
            excess.max(0.0) / scale
        }
    }

    fn conditions(&self, base: &Conditions, det: &DetectorParams) -> Conditions {
        let mut c = Conditions {
            detector: det.clone(),
            ..base.clone()
        };
        if let Some(tau) = self.dead_time {
            c = c.with_dead_time(tau);
        }
        if let Some(v) = self.v_on {
            c = c.with_bias(v);
        }
        if let Some(n) = self.rate_n {
            c.source.rate_n = n;
        }
        c
    }

    fn describe_conditions(&self) -> String {
        let mut parts = Vec::new();
        if let Some(t) = self.dead_time {
            parts.push(format!("dead_time={t}"));
        }
        if let Some(v) = self.v_on {
            parts.push(format!("v_on={v}"));
        }
        if let Some(n) = self.rate_n {
            parts.push(format!("rate_n={n}"));
        }
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join(",")
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsFile {
    #[serde(default, rename = "target")]
    pub targets: Vec<Target>,
}

impl TargetsFile {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let _: toml::Table = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        let file: TargetsFile = toml::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("unknown field") || msg.contains("missing field") || msg.contains("unknown variant") {
                CliError::Validation(msg)
            } else {
                CliError::Parse(msg)
            }
        })?;
        for t in &file.targets {
            if !t.value.is_finite() || !(t.tolerance >= 0.0) {
                return Err(CliError::Validation(format!(
                    "target {}: value must be finite and tolerance non-negative",
                    t.observable
                )));
            }
        }
        Ok(file)
    }
}

/// The parameters the search may move, in the order it visits them.
pub const FREE_PARAMETERS: [&str; 6] = [
    "eta_slope",
    "dark_n0",
    "dark_slope",
    "trap_fill_per_ns",
    "tau_ref",
    "p_trigger",
];

fn param_mut<'a>(d: &'a mut DetectorParams, name: &str) -> &'a mut f64 {
    match name {
        "eta_slope" => &mut d.eta_slope,
        "dark_n0" => &mut d.dark_n0,
        "dark_slope" => &mut d.dark_slope,
        "trap_fill_per_ns" => &mut d.trap_fill_per_ns,
        "tau_ref" => &mut d.tau_ref,
        "p_trigger" => &mut d.p_trigger,
        _ => unreachable!("unknown free parameter {name}"),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub max_evals: usize,
    /// Initial multiplicative step, in natural-log units.
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_evals: 300,
            initial_step: 0.4,
            min_step: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub target: Target,
    pub achieved: f64,
    pub miss: f64,
}

impl Residual {
    pub fn met(&self) -> bool {
        self.miss == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub params: DetectorParams,
    pub residuals: Vec<Residual>,
    pub loss: f64,
    pub evaluations: usize,
}

impl Calibration {
    pub fn converged(&self) -> bool {
        self.residuals.iter().all(Residual::met)
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "evaluations = {}", self.evaluations);
        let _ = writeln!(s, "loss = {:e}", self.loss);
        let _ = writeln!(
            s,
            "{:<22} {:<24} {:>4} {:>12} {:>10} {:>14} {:>10}  status",
            "observable", "conditions", "rel", "target", "tolerance", "achieved", "miss"
        );
        for r in &self.residuals {
            let t = &r.target;
            let _ = writeln!(
                s,
                "{:<22} {:<24} {:>4} {:>12} {:>10} {:>14.6} {:>10.3e}  {}",
                t.observable.to_string(),
                t.describe_conditions(),
                format!("{:?}", t.relation).to_lowercase(),
                t.value,
                t.tolerance,
                r.achieved,
                r.miss,
                if r.met() { "met" } else { "MISSED" }
            );
        }
        let _ = writeln!(s, "parameters:");
        for name in FREE_PARAMETERS {
            let mut p = self.params.clone();
            let _ = writeln!(s, "  {name} = {}", *param_mut(&mut p, name));
        }
        s
    }
}

/// Evaluates every target under `det`. Targets sharing conditions share runs.
pub fn evaluate(base: &Conditions, det: &DetectorParams, targets: &[Target]) -> Result<Vec<Residual>, CliError> {
    #[derive(Default)]
    struct Need {
        signal: bool,
        members: Vec<usize>,
    }
    let mut groups: BTreeMap<String, Need> = BTreeMap::new();
    for (i, t) in targets.iter().enumerate() {
        if t.observable.needs_run() {
            let g = groups.entry(t.describe_conditions()).or_default();
            g.signal |= t.observable.needs_signal();
            g.members.push(i);
        }
    }
    let jobs: Vec<(bool, Conditions, Vec<usize>)> = groups
        .into_values()
        .map(|g| {
            let cond = targets[g.members[0]].conditions(base, det);
            (g.signal, cond, g.members)
        })
        .collect();
    let reports: Vec<Result<(Vec<usize>, EfficiencyReport), CliError>> = jobs
        .into_par_iter()
        .map(|(signal, cond, members)| {
            let r = if signal {
                measure_efficiency(&cond)
            } else {
                noise_report(&cond)
            };
            Ok((members, r?))
        })
        .collect();
    let mut by_target: Vec<Option<EfficiencyReport>> = vec![None; targets.len()];
    for r in reports {
        let (members, report) = r?;
        for i in members {
            by_target[i] = Some(report.clone());
        }
    }
    Ok(targets
        .iter()
        .zip(by_target)
        .map(|(t, report)| {
            let cond = t.conditions(base, det);
            let achieved = match (t.observable, report) {
                (Observable::DetectionProbability, _) => detection_probability(cond.quench.v_on, det),
                (Observable::DarkRate, _) => dark_rate(cond.quench.v_on, det.temperature, det),
                (Observable::EtaQ, Some(r)) => r.eta_q.unwrap_or(f64::NAN),
                (Observable::EtaEff, Some(r)) => r.eta_eff.unwrap_or(f64::NAN),
                (Observable::NoiseCorrected, Some(r)) => r.noise_corrected,
                (Observable::ExcessNoise, Some(r)) => r.excess_noise(),
                (Observable::AfterpulseFraction, Some(r)) => r.afterpulse_fraction,
                (_, None) => f64::NAN,
            };
            Residual {
                target: t.clone(),
                achieved,
                miss: t.miss(achieved),
            }
        })
        .collect())
}

fn loss(residuals: &[Residual]) -> f64 {
    residuals.iter().map(|r| r.miss * r.miss).sum()
}

struct Search<'a> {
    base: &'a Conditions,
    targets: &'a [Target],
    /// Indices into [`FREE_PARAMETERS`] that are non-zero and may move.
    free: Vec<usize>,
    evals: usize,
    max_evals: usize,
}

struct Point {
    det: DetectorParams,
    loss: f64,
    residuals: Vec<Residual>,
}

impl Search<'_> {
    fn log_params(&self, det: &DetectorParams) -> Vec<f64> {
        let mut d = det.clone();
        self.free
            .iter()
            .map(|&i| param_mut(&mut d, FREE_PARAMETERS[i]).ln())
            .collect()
    }

    fn with_log_params(&self, det: &DetectorParams, u: &[f64]) -> DetectorParams {
        let mut d = det.clone();
        for (&i, &ui) in self.free.iter().zip(u) {
            let p = param_mut(&mut d, FREE_PARAMETERS[i]);
            *p = ui.exp();
            if FREE_PARAMETERS[i] == "p_trigger" {
                *p = p.min(1.0);
            }
        }
        d
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.max_evals
    }

    fn eval(&mut self, det: DetectorParams) -> Result<Option<Point>, CliError> {
        if det.validate().is_err() || self.exhausted() {
            return Ok(None);
        }
        self.evals += 1;
        match evaluate(self.base, &det, self.targets) {
            Ok(residuals) => Ok(Some(Point {
                loss: loss(&residuals),
                det,
                residuals,
            })),
            // Parameters that saturate the estimators are just bad points.
            Err(CliError::Runtime(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// One step up and down each free coordinate, keeping every improvement.
    fn explore(&mut self, mut best: Point, step: f64) -> Result<Point, CliError> {
        for k in 0..self.free.len() {
            if best.loss == 0.0 {
                break;
            }
            for dir in [1.0, -1.0] {
                let mut u = self.log_params(&best.det);
                u[k] += dir * step;
                let cand = self.with_log_params(&best.det, &u);
                if cand == best.det {
                    continue;
                }
                match self.eval(cand)? {
                    Some(p) if p.loss < best.loss => {
                        best = p;
                        break;
                    }
                    _ => {}
                }
            }
        }
        Ok(best)
    }
}

/// Hooke-Jeeves pattern search in log-parameter space, starting from
/// `base.detector`. Parameters that start at zero stay there. Returns the
/// best point found whether or not it meets every target; see
/// [`Calibration::converged`].
pub fn calibrate(base: &Conditions, targets: &[Target], opts: SearchOptions) -> Result<Calibration, CliError> {
    let mut start = base.detector.clone();
    let free = (0..FREE_PARAMETERS.len())
        .filter(|&i| *param_mut(&mut start, FREE_PARAMETERS[i]) > 0.0)
        .collect();
    let mut search = Search {
        base,
        targets,
        free,
        evals: 0,
        max_evals: opts.max_evals.max(1),
    };
    let mut best = search
        .eval(start)?
        .ok_or_else(|| CliError::Runtime("starting parameters cannot be evaluated".into()))?;
    let mut step = opts.initial_step;

    while best.loss > 0.0 && step >= opts.min_step && !search.exhausted() {
        let prev = best.det.clone();
        let explored = search.explore(
            Point {
                det: best.det.clone(),
                loss: best.loss,
                residuals: best.residuals.clone(),
            },
            step,
        )?;
        if explored.loss >= best.loss {
            step /= 2.0;
            continue;
        }
        best = explored;
        // Keep extrapolating along the last successful direction.
        let mut anchor = prev;
        while best.loss > 0.0 && !search.exhausted() {
            let u0 = search.log_params(&anchor);
            let u1 = search.log_params(&best.det);
            let up: Vec<f64> = u1.iter().zip(&u0).map(|(a, b)| 2.0 * a - b).collect();
            let jumped = search.with_log_params(&best.det, &up);
            let Some(probe) = search.eval(jumped)? else { break };
            let next = search.explore(probe, step)?;
            if next.loss < best.loss {
                anchor = std::mem::replace(&mut best, next).det;
            } else {
                break;
            }
        }
    }
    Ok(Calibration {
        params: best.det,
        residuals: best.residuals,
        loss: best.loss,
        evaluations: search.evals,
    })
}
