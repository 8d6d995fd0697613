//! Seeded soundness battery for the inexact prox routines.

use ifista::analysis::OracleCheck;
use ifista::inexact::{
    inexact_prox_dual, inexact_prox_perturb, inexact_prox_subgradient, prox_objective, PerturbDirection,
    ProxCertificate, INNER_CAP,
};
use ifista::problems::{make_box_qp, make_lasso, make_tv1d, tv1d_prox_direct, CompositeProblem, Point};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OBJECTIVE_TOL: f64 = 1e-12;
pub const DISTANCE_TOL: f64 = 1e-10;
const DUAL_MIN_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Route {
    Perturbation,
    Subgradient,
    Dual,
}

impl Route {
    fn name(self) -> &'static str {
        match self {
            Route::Perturbation => "perturbation",
            Route::Subgradient => "subgradient",
            Route::Dual => "dual_gap",
        }
    }
}

fn check(name: String) -> OracleCheck {
    OracleCheck {
        name,
        instances: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
    }
}

fn record(c: &mut OracleCheck, excess: f64) {
    c.instances += 1;
    c.worst_excess = c.worst_excess.max(excess);
    if excess > 0.0 {
        c.violations += 1;
    }
}

/// Checks per route: `objective` (excess over the exact prox value minus
/// `delta^2 / 2`), `distance` (`|z - prox| - delta`) and `certificate`
/// (reported excess and `delta1^2 + delta2^2` against `delta^2`).
struct Tally {
    checks: Vec<OracleCheck>,
}

impl Tally {
    fn new() -> Self {
        let mut checks = Vec::new();
        for route in [Route::Perturbation, Route::Subgradient, Route::Dual] {
            for what in ["objective", "distance", "certificate"] {
                checks.push(check(format!("{}.{what}", route.name())));
            }
        }
        Tally { checks }
    }

    #[allow(clippy::too_many_arguments)]
    fn observe(
        &mut self,
        route: Route,
        p: &CompositeProblem,
        y: &Point,
        z: &Point,
        exact: &Point,
        gamma: f64,
        delta: f64,
        cert: &ProxCertificate,
    ) {
        let base = match route {
            Route::Perturbation => 0,
            Route::Subgradient => 3,
            Route::Dual => 6,
        };
        let half = 0.5 * delta * delta;
        let excess = prox_objective(p, z, y, gamma) - prox_objective(p, exact, y, gamma);
        record(&mut self.checks[base], excess - half - OBJECTIVE_TOL);
        let d = z - exact;
        record(&mut self.checks[base + 1], d.dot(&d).sqrt() - delta - DISTANCE_TOL);
        let (d1, d2) = cert.split();
        let split = d1 * d1 + d2 * d2 - delta * delta;
        let reported = cert.objective_excess_bound - half;
        record(&mut self.checks[base + 2], split.max(reported) - OBJECTIVE_TOL);
    }
}

fn point(rng: &mut ChaCha8Rng, n: usize) -> Point {
    Array1::from_shape_fn(n, |_| rng.gen_range(-2.0..2.0))
}

/// `calls` inexact prox evaluations with random `gamma`, `delta`, inputs and
/// problems: perturbation and subgradient routes on the l1 norm and a box,
/// the dual-gap route on 1-D total variation against the direct solver.
pub fn prox_certificate_battery(seed: u64, calls: usize) -> Vec<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new();
    let n = 12;
    let boxed = make_box_qp(n, &vec![0.0; n], &vec![-0.5; n], &vec![1.0; n], None).expect("valid box");
    for i in 0..calls {
        let gamma = rng.gen_range(0.05..2.0);
        let delta = 10f64.powf(rng.gen_range(-6.0..0.0));
        match i % 3 {
            0 | 1 => {
                let route = if i % 3 == 0 {
                    Route::Perturbation
                } else {
                    Route::Subgradient
                };
                let lasso;
                let p = if rng.gen_bool(0.5) {
                    &boxed
                } else {
                    lasso = make_lasso(5, n, 3, rng.gen_range(0.05..1.0)).expect("valid lasso");
                    &lasso
                };
                let y = point(&mut rng, n);
                let exact = p.nonsmooth.prox(&y, gamma).expect("closed-form prox");
                let (z, cert) = match route {
                    Route::Perturbation => {
                        inexact_prox_perturb(p, &y, gamma, delta, PerturbDirection::Seeded, &mut rng)
                    }
                    _ => inexact_prox_subgradient(p, &y, gamma, delta, &mut rng),
                }
                .expect("closed-form prox");
                tally.observe(route, p, &y, &z, &exact, gamma, delta, &cert);
            }
            _ => {
                let m = rng.gen_range(2..40);
                let lambda = rng.gen_range(0.05..1.0);
                let p = make_tv1d(4, m, 0, lambda).expect("valid tv");
                let y = point(&mut rng, m);
                let delta = delta.max(DUAL_MIN_DELTA);
                let out = inexact_prox_dual(&p, &y, gamma, delta, None, INNER_CAP).expect("dual prox converges");
                let exact = Array1::from(tv1d_prox_direct(y.as_slice().expect("contiguous"), gamma * lambda));
                tally.observe(Route::Dual, &p, &y, &out.z, &exact, gamma, delta, &out.certificate);
            }
        }
    }
    tally.checks
}
