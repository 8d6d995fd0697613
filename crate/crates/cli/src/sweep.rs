//! Parameter sweeps over a base experiment.

use std::path::Path;

use ifista::inexact::Magnitude;
use ifista::params::ParamFamily;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{apply_overrides, from_tree, has_seed, read_tree, ExperimentConfig, Overrides, SolverSpec};
use crate::error::{CliError, EXIT_OK};
use crate::run::{self, FeasibilityVerdict, RunSummary};

pub const SWEEP_FILE: &str = "sweep.csv";

/// Value lists per swept quantity; an omitted list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub grid: Grid,
}

/// One grid point; `None` leaves the base value in place.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GridPoint {
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub sigma: Option<f64>,
}

impl Grid {
    /// Cartesian product in the order alpha, p, q, r, sigma (sigma fastest).
    /// Empty when no list is given or any given list is empty.
    pub fn points(&self) -> Vec<GridPoint> {
        let lists = [&self.alpha, &self.p, &self.q, &self.r, &self.sigma];
        if lists.iter().all(|l| l.is_none()) {
            return Vec::new();
        }
        let mut points = vec![GridPoint::default()];
        for (axis, list) in lists.iter().enumerate() {
            let Some(values) = list else { continue };
            points = points
                .into_iter()
                .flat_map(|pt| {
                    values.iter().map(move |&v| {
                        let mut pt = pt;
                        match axis {
                            0 => pt.alpha = Some(v),
                            1 => pt.p = Some(v),
                            2 => pt.q = Some(v),
                            3 => pt.r = Some(v),
                            _ => pt.sigma = Some(v),
                        }
                        pt
                    })
                })
                .collect();
        }
        points
    }
}

fn with_exponent(m: &mut Magnitude, p: f64) {
    if let Magnitude::Power { p: old, .. } = m {
        *old = p;
    }
}

/// Applies a grid point to a copy of the base config. `p` replaces the decay
/// exponent of every power-law error schedule; `q`, `r`, `sigma` need
/// stochastic mode.
pub fn instantiate(base: &ExperimentConfig, pt: &GridPoint) -> Result<ExperimentConfig, CliError> {
    let mut config = base.clone();
    let params = pt
        .alpha
        .map(|a| ParamFamily::with_growth(a).map_err(|e| CliError::Config(format!("alpha = {a}: {e}"))))
        .transpose()?;
    match &mut config.solver {
        SolverSpec::Deterministic(c) | SolverSpec::Baseline(c) => {
            if pt.q.is_some() || pt.r.is_some() || pt.sigma.is_some() {
                return Err(CliError::Config(
                    "q, r and sigma can only be swept in stochastic mode".into(),
                ));
            }
            if let Some(f) = params {
                c.params = f;
            }
            if let Some(p) = pt.p {
                with_exponent(&mut c.delta, p);
                with_exponent(&mut c.b.magnitude, p);
            }
        }
        SolverSpec::Stochastic(c) => {
            if let Some(f) = params {
                c.params = f;
            }
            if let Some(p) = pt.p {
                with_exponent(&mut c.delta, p);
            }
            c.q = pt.q.unwrap_or(c.q);
            c.r = pt.r.unwrap_or(c.r);
            if let Some(s) = pt.sigma {
                c.noise.sigma = s;
            }
        }
    }
    Ok(config)
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub sigma: Option<f64>,
    pub status: &'static str,
    pub exit_code: u8,
    pub error: String,
    pub run_id: String,
    pub final_f_gap: Option<f64>,
    pub fitted_slope: Option<f64>,
    pub max_bound_violation: Option<f64>,
    pub wall_clock_secs: Option<f64>,
    pub feasible: Option<bool>,
    pub deterministic_condition: Option<bool>,
    pub weak_prox_condition: Option<bool>,
    pub iterate_convergence_guaranteed: Option<bool>,
    pub predicted_rate_exponent: Option<f64>,
}

fn row(index: usize, pt: &GridPoint, outcome: Result<RunSummary, (CliError, Option<FeasibilityVerdict>)>) -> SweepRow {
    let (summary, error, verdict) = match outcome {
        Ok(s) => {
            let v = s.feasibility.clone();
            (Some(s), None, Some(v))
        }
        Err((e, v)) => (None, Some(e), v),
    };
    let d = verdict.as_ref().map(|v| &v.detail);
    SweepRow {
        point: index,
        alpha: pt.alpha,
        p: pt.p,
        q: pt.q,
        r: pt.r,
        sigma: pt.sigma,
        status: if error.is_none() { "ok" } else { "failed" },
        exit_code: error.as_ref().map_or(EXIT_OK, CliError::exit_code),
        error: error.map(|e| e.to_string()).unwrap_or_default(),
        run_id: summary.as_ref().map(|s| s.run_id.clone()).unwrap_or_default(),
        final_f_gap: summary.as_ref().and_then(|s| s.final_f_gap),
        fitted_slope: summary.as_ref().and_then(|s| s.fitted_slope),
        max_bound_violation: summary.as_ref().and_then(|s| s.max_bound_violation),
        wall_clock_secs: summary.as_ref().map(|s| s.wall_clock_secs),
        feasible: verdict.as_ref().map(|v| v.feasible),
        deterministic_condition: d.map(|d| d.deterministic_condition),
        weak_prox_condition: d.map(|d| d.weak_prox_condition),
        iterate_convergence_guaranteed: d.map(|d| d.iterate_convergence_guaranteed),
        predicted_rate_exponent: d.map(|d| d.predicted_rate_exponent),
    }
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<SweepConfig, CliError> {
    let tree = read_tree(path)?;
    let seeded = tree.get("base").is_some_and(|b| has_seed(b, "solver"));
    let mut config: SweepConfig = from_tree(tree, path)?;
    let base_overrides = Overrides {
        out: None,
        ..overrides.clone()
    };
    apply_overrides(&mut config.base, seeded, &base_overrides)?;
    Ok(config)
}

fn run_point(
    base: &ExperimentConfig,
    pt: &GridPoint,
    dir: &Path,
) -> Result<RunSummary, (CliError, Option<FeasibilityVerdict>)> {
    let mut config = instantiate(base, pt).map_err(|e| (e, None))?;
    config.out_dir = Some(dir.to_path_buf());
    run::execute(&config, dir).map_err(|e| (e, Some(run::feasibility(&config.solver))))
}

/// Runs every grid point into `out/point_NNN` and writes `out/sweep.csv`.
/// A failing point is recorded in its row; the other points still run.
pub fn execute(config: &SweepConfig, out: &Path) -> Result<Vec<SweepRow>, CliError> {
    let points = config.grid.points();
    if points.is_empty() {
        return Err(CliError::Config("grid: sweep grid is empty".into()));
    }
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| row(i, pt, run_point(&config.base, pt, &out.join(format!("point_{i:03}")))))
        .collect();
    let path = out.join(SWEEP_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(CliError::io(&path))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ifista::problems::ProblemSpec;
    use ifista::solvers::DeterministicConfig;

    fn base() -> ExperimentConfig {
        let problem = ProblemSpec::Quadratic {
            n: 2,
            center: vec![1.0, 2.0],
            scales: None,
        };
        let mut solver = DeterministicConfig::exact(&problem.build().unwrap(), 10);
        solver.delta = Magnitude::Power { c: 0.1, p: 3.0 };
        ExperimentConfig {
            problem,
            solver: SolverSpec::Deterministic(solver),
            out_dir: None,
            reference_tol: 1e-12,
        }
    }

    #[test]
    fn grid_is_the_cartesian_product() {
        let grid = Grid {
            alpha: Some(vec![0.5, 1.0]),
            p: Some(vec![1.5, 2.5, 3.5]),
            ..Grid::default()
        };
        let points = grid.points();
        assert_eq!(points.len(), 6);
        assert_eq!(points[1].alpha, Some(0.5));
        assert_eq!(points[1].p, Some(2.5));
        assert_eq!(points[3].alpha, Some(1.0));
        assert!(points.iter().all(|p| p.q.is_none() && p.sigma.is_none()));
        assert!(Grid::default().points().is_empty());
        let empty = Grid {
            sigma: Some(vec![]),
            ..grid
        };
        assert!(empty.points().is_empty());
    }

    #[test]
    fn point_overrides_growth_and_exponent() {
        let pt = GridPoint {
            alpha: Some(0.5),
            p: Some(1.2),
            ..GridPoint::default()
        };
        let c = instantiate(&base(), &pt).unwrap();
        let SolverSpec::Deterministic(s) = &c.solver else {
            panic!()
        };
        assert_eq!(s.params.growth_exponent(), 0.5);
        assert_eq!(s.delta, Magnitude::Power { c: 0.1, p: 1.2 });
        let stochastic_only = GridPoint {
            sigma: Some(0.1),
            ..GridPoint::default()
        };
        assert!(instantiate(&base(), &stochastic_only).is_err());
    }
}
