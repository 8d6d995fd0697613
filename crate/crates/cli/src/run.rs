//! Executes one experiment and persists its trace and summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ifista::analysis::{rate_fit, schedule_feasibility, Feasibility};
use ifista::problems::CompositeProblem;
use ifista::solvers::{run_inexact_fista, run_proximal_gradient, run_stochastic_fista, SolverTrace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SolverSpec};
use crate::error::CliError;
use crate::trace::{self, CsvRow};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";
pub const REPLICATION_DIR: &str = "replications";

/// Schedule exponents and the resulting verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub alpha: f64,
    /// Decay exponent of the error schedules; absent for error-free runs.
    pub p: Option<f64>,
    pub q: f64,
    pub r: f64,
    /// The condition that applies to the configured mode.
    pub feasible: bool,
    pub detail: Feasibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub mode: String,
    pub problem: String,
    pub dimension: usize,
    pub lipschitz: f64,
    pub iterations: usize,
    pub final_f_gap: Option<f64>,
    pub fitted_slope: Option<f64>,
    pub fit_window: Option<[usize; 2]>,
    /// Fit points whose gap fell below the floor and was clipped.
    pub fit_clipped: Option<usize>,
    /// Largest `F_gap - bound_rhs`, clipped at 0.
    pub max_bound_violation: Option<f64>,
    pub wall_clock_secs: f64,
    pub feasibility: FeasibilityVerdict,
}

pub fn feasibility(spec: &SolverSpec) -> FeasibilityVerdict {
    let min_exp = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    };
    let (alpha, p, q, r, weak) = match spec {
        SolverSpec::Deterministic(c) | SolverSpec::Baseline(c) => {
            let alpha = match spec {
                SolverSpec::Baseline(_) => 0.0,
                _ => c.params.growth_exponent(),
            };
            let p = min_exp(c.delta.exponent(), c.b.magnitude.exponent());
            (alpha, p, 0.0, 0.0, c.weak_inexactness)
        }
        SolverSpec::Stochastic(c) => (
            c.params.growth_exponent(),
            c.delta.exponent(),
            c.q,
            c.r,
            c.weak_inexactness,
        ),
    };
    let detail = schedule_feasibility(alpha, p.unwrap_or(f64::INFINITY), q, r);
    let feasible = match spec {
        SolverSpec::Stochastic(_) => detail.iterate_convergence_guaranteed,
        _ if weak => detail.weak_prox_condition,
        _ => detail.deterministic_condition,
    };
    FeasibilityVerdict {
        alpha,
        p,
        q,
        r,
        feasible,
        detail,
    }
}

/// Fit window `[K/100, K-1]` over `K` rows, as `[10^2, 10^4]` for `10^4 + 1` rows.
pub fn fit_window(rows: usize) -> Option<[usize; 2]> {
    let hi = rows.checked_sub(1)?;
    let lo = (rows / 100).max(1);
    (hi > lo).then_some([lo, hi])
}

fn slope(gaps: &[f64]) -> Option<(f64, [usize; 2], usize)> {
    let w = fit_window(gaps.len())?;
    let fit = rate_fit(gaps, w[0], w[1]).ok()?;
    Some((fit.slope, w, fit.clipped))
}

pub fn build_problem(config: &ExperimentConfig) -> Result<CompositeProblem, CliError> {
    config
        .problem
        .build()
        .and_then(|p| p.with_reference(config.reference_tol))
        .map_err(|e| CliError::Config(format!("problem: {e}")))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("record serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn rows_of(trace: &SolverTrace) -> Vec<CsvRow> {
    trace.rows.iter().map(CsvRow::from).collect()
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>, n: usize) -> Option<f64> {
    values.sum::<Option<f64>>().map(|s| s / n as f64)
}

/// Replication means per iteration; `bound_rhs` comes from the aggregate.
fn aggregate_rows(traces: &[SolverTrace], bound: Option<&[Option<f64>]>) -> Vec<CsvRow> {
    let n = traces.len();
    let len = traces[0].rows.len();
    (0..len)
        .map(|k| {
            let at = |t: &SolverTrace| t.rows[k].clone();
            let first = at(&traces[0]);
            CsvRow {
                k,
                t_k: first.t_k,
                gamma_k: first.gamma_k,
                delta_k: first.delta_k,
                b_norm: mean(traces.iter().map(|t| t.rows[k].b_norm), n),
                f_gap: mean_opt(traces.iter().map(|t| t.rows[k].f_gap), n),
                energy: mean_opt(traces.iter().map(|t| t.rows[k].energy), n),
                bound_rhs: bound.and_then(|b| b[k]),
                cert_excess: mean(traces.iter().map(|t| t.rows[k].cert_excess), n),
                x_dist_to_ref: mean_opt(traces.iter().map(|t| t.rows[k].x_dist_to_ref), n),
            }
        })
        .collect()
}

fn violation(rows: &[CsvRow]) -> Option<f64> {
    let mut any = false;
    let worst = rows
        .iter()
        .filter_map(|r| Some(r.f_gap? - r.bound_rhs?))
        .inspect(|_| any = true)
        .fold(0.0, f64::max);
    any.then_some(worst)
}

/// Runs the configured solver, writing `trace.csv`, `config.json` and
/// `summary.json` into `out`. Stochastic runs write the replication means to
/// `trace.csv` and each replication under `replications/`.
pub fn execute(config: &ExperimentConfig, out: &Path) -> Result<RunSummary, CliError> {
    let problem = build_problem(config)?;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), config)?;
    let start = Instant::now();
    let rows = match &config.solver {
        SolverSpec::Deterministic(c) => rows_of(&run_inexact_fista(&problem, c)?),
        SolverSpec::Baseline(c) => rows_of(&run_proximal_gradient(&problem, c)?),
        SolverSpec::Stochastic(c) => {
            let run = run_stochastic_fista(&problem, c)?;
            let rep_dir = out.join(REPLICATION_DIR);
            create_dir(&rep_dir)?;
            run.traces
                .par_iter()
                .enumerate()
                .map(|(i, t)| trace::write(&rep_dir.join(format!("rep_{i:04}.csv")), &rows_of(t)))
                .collect::<Result<(), CliError>>()?;
            let bound = run.aggregate.as_ref().map(|a| a.bound_rhs.as_slice());
            aggregate_rows(&run.traces, bound)
        }
    };
    let wall_clock_secs = start.elapsed().as_secs_f64();
    trace::write(&out.join(TRACE_FILE), &rows)?;

    let gaps: Option<Vec<f64>> = rows.iter().map(|r| r.f_gap).collect();
    let fit = gaps.as_deref().and_then(slope);
    let summary = RunSummary {
        run_id: config.run_id(),
        config_hash: config.config_hash(),
        seed: config.solver.seed(),
        mode: config.solver.mode().to_string(),
        problem: problem.name.clone(),
        dimension: problem.dim(),
        lipschitz: problem.lipschitz(),
        iterations: rows.len(),
        final_f_gap: rows.last().and_then(|r| r.f_gap),
        fitted_slope: fit.map(|f| f.0),
        fit_window: fit.map(|f| f.1),
        fit_clipped: fit.map(|f| f.2),
        max_bound_violation: violation(&rows),
        wall_clock_secs,
        feasibility: feasibility(&config.solver),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(config.run_id()))
}
