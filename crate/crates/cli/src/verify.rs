//! Verification of stored traces and the seeded oracle suites.

use std::path::Path;

use ifista::analysis::{bihari_oracle_suite, cesaro_round_trip_suite, recurrence_oracle_suite, OracleCheck};
use ifista::solvers::{theorem_bound_deterministic, theorem_bound_deterministic_weak};
use ndarray::arr1;
use serde::{Deserialize, Serialize};

use crate::battery::prox_certificate_battery;
use crate::error::CliError;
use crate::trace::{self, CsvRow};

pub const BOUND_SLACK: f64 = 1e-10;
const REPLAY_MATCH: f64 = 1e-9;
pub const LEMMA_INSTANCES: usize = 1000;
pub const CESARO_INSTANCES: usize = 500;
pub const CESARO_TOL: f64 = 1e-10;
pub const PROX_CALLS: usize = 1000;

/// Oracle checks that fail by construction; reported, not counted, unless strict.
pub const DOCUMENTED_FAILURES: &[&str] = &["recurrence_ten_ninths"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    /// Recomputed from the trace columns with `delta1 = delta2 = delta`.
    ReplayedDeterministic,
    /// Recomputed with `delta1 = delta`, `delta2 = 0`.
    ReplayedWeak,
    /// The stored `bound_rhs` column.
    Stored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub f_gap: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub rows_checked: usize,
    pub source: BoundSource,
    /// Largest `F_gap - bound`.
    pub worst_excess: f64,
    pub violations: Vec<Violation>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn replay(rows: &[CsvRow], weak: bool) -> Option<Vec<Option<f64>>> {
    let gamma = rows.first()?.gamma_k;
    if rows.iter().any(|r| r.gamma_k != gamma) {
        return None;
    }
    let x0 = arr1(&[rows[0].x_dist_to_ref?]);
    let origin = arr1(&[0.0]);
    let t: Vec<f64> = rows.iter().map(|r| r.t_k).collect();
    let delta: Vec<f64> = rows.iter().map(|r| r.delta_k).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.b_norm).collect();
    let bound = |k: usize| {
        if weak {
            theorem_bound_deterministic_weak(k, &x0, &origin, gamma, &t, &delta, &b)
        } else {
            theorem_bound_deterministic(k, &x0, &origin, gamma, &t, &delta, &delta, &b)
        }
    };
    Some(
        (0..rows.len())
            .map(|k| if k == 0 { None } else { bound(k).ok() })
            .collect(),
    )
}

fn matches_stored(rows: &[CsvRow], replayed: &[Option<f64>]) -> bool {
    rows.iter().zip(replayed).all(|(r, rep)| match (r.bound_rhs, rep) {
        (Some(s), Some(b)) => (s - b).abs() <= REPLAY_MATCH * s.abs().max(b.abs()).max(f64::MIN_POSITIVE),
        (None, _) => true,
        (Some(_), None) => false,
    })
}

/// Checks `F_gap <= bound` on every row with both values. The bound is
/// recomputed from the trace when the step size is constant and the stored
/// column agrees with one of the deterministic forms; otherwise the stored
/// column is used.
pub fn check_bounds(rows: &[CsvRow]) -> Result<BoundsReport, CliError> {
    let mut bounds: Option<(BoundSource, Vec<Option<f64>>)> = None;
    for (weak, source) in [
        (false, BoundSource::ReplayedDeterministic),
        (true, BoundSource::ReplayedWeak),
    ] {
        if let Some(rep) = replay(rows, weak) {
            if matches_stored(rows, &rep) {
                bounds = Some((source, rep));
                break;
            }
        }
    }
    let (source, bound) = bounds.unwrap_or_else(|| (BoundSource::Stored, rows.iter().map(|r| r.bound_rhs).collect()));

    let mut report = BoundsReport {
        rows_checked: 0,
        source,
        worst_excess: f64::NEG_INFINITY,
        violations: Vec::new(),
    };
    for (r, b) in rows.iter().zip(&bound) {
        let (Some(gap), Some(b)) = (r.f_gap, *b) else { continue };
        report.rows_checked += 1;
        report.worst_excess = report.worst_excess.max(gap - b);
        if gap > b + BOUND_SLACK * b.abs().max(1.0) {
            report.violations.push(Violation {
                k: r.k,
                f_gap: gap,
                bound: b,
            });
        }
    }
    if report.rows_checked == 0 {
        return Err(CliError::Config(
            "trace has no rows with both F_gap and a bound; was the problem run without a reference?".into(),
        ));
    }
    Ok(report)
}

pub fn verify_bounds(path: &Path) -> Result<BoundsReport, CliError> {
    check_bounds(&trace::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<OracleCheck>,
    /// Failing checks that are expected to fail.
    pub documented_failures: Vec<String>,
    pub passed: bool,
}

fn suite_report(seed: u64, checks: Vec<OracleCheck>, strict: bool) -> SuiteReport {
    let documented_failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed() && DOCUMENTED_FAILURES.contains(&c.name.as_str()))
        .map(|c| c.name.clone())
        .collect();
    let passed = checks
        .iter()
        .all(|c| c.passed() || (!strict && documented_failures.contains(&c.name)));
    SuiteReport {
        seed,
        checks,
        documented_failures,
        passed,
    }
}

/// Bihari, recurrence and Cesaro suites; the Cesaro round trip enters as a
/// check named `cesaro_round_trip` with its worst relative error.
pub fn verify_lemmas(seed: u64, strict: bool) -> SuiteReport {
    let mut checks = bihari_oracle_suite(seed, LEMMA_INSTANCES);
    checks.extend(recurrence_oracle_suite(seed, LEMMA_INSTANCES));
    let worst = cesaro_round_trip_suite(seed, CESARO_INSTANCES);
    checks.push(OracleCheck {
        name: "cesaro_round_trip".into(),
        instances: CESARO_INSTANCES,
        violations: usize::from(!(worst <= CESARO_TOL)),
        worst_excess: worst - CESARO_TOL,
    });
    suite_report(seed, checks, strict)
}

pub fn verify_prox_certs(seed: u64) -> SuiteReport {
    suite_report(seed, prox_certificate_battery(seed, PROX_CALLS), true)
}
