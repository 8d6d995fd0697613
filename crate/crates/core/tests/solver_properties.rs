mod common;

use common::{box_qp_20, lasso_50};
use ifista::analysis::{summable_drift_converges, tail_spread};
use ifista::inexact::{
    ErrorDirection, GradientErrorSchedule, Magnitude, NoiseFamily, NoiseSpec, PerturbDirection, ProxError,
};
use ifista::params::ParamFamily;
use ifista::problems::{make_box_qp, make_tv1d, CompositeProblem};
use ifista::solvers::{
    run_inexact_fista, run_proximal_gradient, run_stochastic_fista, DeterministicConfig, SolverError, StochasticConfig,
};
use proptest::prelude::*;

fn schedule(c: f64, p: f64) -> GradientErrorSchedule {
    GradientErrorSchedule {
        magnitude: Magnitude::Power { c, p },
        direction: ErrorDirection::Seeded,
    }
}

fn inexact_config(p: &CompositeProblem, iters: usize) -> DeterministicConfig {
    let mut cfg = DeterministicConfig::exact(p, iters);
    cfg.delta = Magnitude::Power { c: 1e-2, p: 2.5 };
    cfg.b = schedule(1e-2, 2.5);
    cfg.seed = 5;
    cfg
}

fn stochastic_config(p: &CompositeProblem, iters: usize, reps: usize, sigma: f64) -> StochasticConfig {
    StochasticConfig {
        gamma: 1.0 / p.lipschitz(),
        q: 1.5,
        r: 0.5,
        params: ParamFamily::Critical,
        delta: Magnitude::zero(),
        noise: NoiseSpec {
            family: NoiseFamily::Sphere,
            sigma,
        },
        weak_inexactness: false,
        perturb_direction: PerturbDirection::Seeded,
        max_iters: iters,
        replications: reps,
        seed: 17,
        x0: None,
        store_points: false,
        inner_cap: ifista::inexact::INNER_CAP,
    }
}

#[test]
fn identity_chain_holds_along_inexact_run() {
    let p = lasso_50();
    let mut cfg = inexact_config(&p, 3000);
    cfg.store_points = true;
    let trace = run_inexact_fista(&p, &cfg).unwrap();
    let pts = trace.points.as_ref().unwrap();
    for k in 0..pts.x.len() - 1 {
        let t = trace.rows[k].t_k;
        let y = &pts.x[k] * (1.0 - 1.0 / t) + &pts.v[k] / t;
        let x_next = &pts.x[k] * (1.0 - 1.0 / t) + &pts.v[k + 1] / t;
        let v_next = &pts.x[k + 1] * t - &pts.x[k] * (t - 1.0);
        for (a, b) in [(&y, &pts.y[k]), (&x_next, &pts.x[k + 1]), (&v_next, &pts.v[k + 1])] {
            let err = (a - b).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(err <= 1e-10, "k = {k}: {err}");
        }
    }
}

#[test]
fn exact_energy_is_nonincreasing() {
    let p = box_qp_20();
    let trace = run_inexact_fista(&p, &DeterministicConfig::exact(&p, 5000)).unwrap();
    let e: Vec<f64> = trace.rows.iter().map(|r| r.energy.unwrap()).collect();
    let x_star = &p.reference.as_ref().unwrap().x_star;
    assert_eq!(e[0], x_star.dot(x_star));
    for k in 0..e.len() - 1 {
        assert!(e[k + 1] <= e[k] + 1e-10, "k = {k}: {} > {}", e[k + 1], e[k]);
    }
}

#[test]
fn gaps_stay_above_reference_tolerance() {
    let p = lasso_50();
    let trace = run_inexact_fista(&p, &inexact_config(&p, 3000)).unwrap();
    let tol = p.reference.as_ref().unwrap().tolerance();
    assert!(trace
        .rows
        .iter()
        .all(|r| r.f_gap.unwrap() >= -tol && r.energy.unwrap() >= 0.0));
}

#[test]
fn inexact_run_respects_bound_and_is_reproducible() {
    let p = lasso_50();
    let cfg = inexact_config(&p, 3000);
    let a = run_inexact_fista(&p, &cfg).unwrap();
    let b = run_inexact_fista(&p, &cfg).unwrap();
    assert_eq!(a, b);
    let slack = 1e-10 * p.reference.as_ref().unwrap().f_star.abs().max(1.0);
    assert!(a.max_bound_violation() <= slack);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(run_inexact_fista(&p, &other).unwrap().x_final, a.x_final);
}

#[test]
fn y_and_x_coconverge() {
    let p = lasso_50();
    let mut cfg = inexact_config(&p, 4001);
    cfg.store_points = true;
    let trace = run_inexact_fista(&p, &cfg).unwrap();
    let pts = trace.points.unwrap();
    let gap = |k: usize| {
        let d = &pts.y[k] - &pts.x[k];
        d.dot(&d).sqrt()
    };
    assert!(gap(4000) < 1e-8);
    assert!(gap(4000) < gap(100));
}

#[test]
fn iterate_tail_spread_shrinks() {
    let p = lasso_50();
    let mut cfg = inexact_config(&p, 4001);
    cfg.store_points = true;
    let pts = run_inexact_fista(&p, &cfg).unwrap().points.unwrap().x;
    let spreads: Vec<f64> = [1000, 2000, 4000].iter().map(|&k| tail_spread(&pts, k)).collect();
    assert!(spreads.windows(2).all(|w| w[1] < w[0]), "{spreads:?}");
}

#[test]
fn energy_trace_is_a_summable_drift_instance() {
    let p = lasso_50();
    let cfg = inexact_config(&p, 3000);
    let trace = run_inexact_fista(&p, &cfg).unwrap();
    let energies: Vec<f64> = trace.rows.iter().map(|r| r.energy.unwrap()).collect();
    // lambda_k = 2 t_k (delta_k + gamma |b_k|), xi_k = t_k^2 delta_k^2, with the
    // bound on sup sqrt(E_k) from the recursion.
    let lambdas: Vec<f64> = trace
        .rows
        .iter()
        .map(|r| 2.0 * r.t_k * (r.delta_k + cfg.gamma * r.b_norm))
        .collect();
    let xis: Vec<f64> = trace.rows.iter().map(|r| (r.t_k * r.delta_k).powi(2)).collect();
    let m = lambdas.iter().sum::<f64>() + (energies[0] + xis.iter().sum::<f64>()).sqrt();
    let eps: Vec<f64> = lambdas.iter().zip(&xis).map(|(l, x)| l * m + x).collect();
    let report = summable_drift_converges(&energies, &eps).unwrap();
    assert!(report.is_quasi_monotone);
    assert!(report.tail_oscillation < 1e-6);
}

#[test]
fn noiseless_stochastic_run_equals_deterministic_run() {
    let p = box_qp_20();
    let mut det = DeterministicConfig::exact(&p, 500);
    det.delta = Magnitude::Power { c: 1e-2, p: 2.5 };
    det.seed = 17;
    det.store_points = true;
    let a = run_inexact_fista(&p, &det).unwrap();
    let mut sto = stochastic_config(&p, 500, 1, 0.0);
    sto.q = 0.0;
    sto.r = 0.0;
    sto.delta = det.delta.clone();
    sto.store_points = true;
    let b = run_stochastic_fista(&p, &sto).unwrap();
    let b = &b.traces[0];
    assert_eq!(a.x_final, b.x_final);
    assert_eq!(a.points, b.points);
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.f_gap, rb.f_gap);
        assert_eq!(ra.energy, rb.energy);
    }
}

#[test]
fn constant_one_parameters_reproduce_proximal_gradient() {
    let p = lasso_50();
    let mut cfg = inexact_config(&p, 800);
    cfg.params = ParamFamily::ConstantOne;
    cfg.store_points = true;
    let a = run_inexact_fista(&p, &cfg).unwrap();
    let b = run_proximal_gradient(&p, &cfg).unwrap();
    assert_eq!(a.x_final, b.x_final);
    assert_eq!(a.points.unwrap().x, b.points.unwrap().x);
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.f_gap, rb.f_gap);
        assert_eq!(ra.cert_excess, rb.cert_excess);
    }
}

#[test]
fn stochastic_mean_respects_bound() {
    let p = box_qp_20();
    let run = run_stochastic_fista(&p, &stochastic_config(&p, 300, 64, 0.1)).unwrap();
    let agg = run.aggregate.unwrap();
    for k in 1..300 {
        assert!(agg.mean_gap[k] <= agg.bound_rhs[k].unwrap() + 3.0 * agg.se_gap[k]);
    }
    assert!(agg.max_energy.is_finite());
    let again = run_stochastic_fista(&p, &stochastic_config(&p, 300, 64, 0.1)).unwrap();
    assert_eq!(again.aggregate.unwrap(), agg);
}

#[test]
fn stochastic_growth_column_tracks_hypothesis_quantity() {
    let p = box_qp_20();
    let run = run_stochastic_fista(&p, &stochastic_config(&p, 2000, 1, 0.1)).unwrap();
    let rows = &run.traces[0].rows;
    assert_eq!(rows[0].growth, 0.0);
    // gamma_k t_{k-1}^2 ~ k^{1/2} / sqrt(log k) grows without bound
    assert!(rows[1999].growth > 4.0 * rows[20].growth);
    assert!(run.gammas.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn weak_mode_run_respects_weak_bound() {
    let p = lasso_50();
    let mut cfg = DeterministicConfig::exact(&p, 2000);
    cfg.weak_inexactness = true;
    cfg.delta = Magnitude::Power { c: 1.0, p: 1.6 };
    let trace = run_inexact_fista(&p, &cfg).unwrap();
    assert!(trace.max_bound_violation() <= 1e-10);
    assert!(trace.rows.iter().any(|r| r.cert_excess > 0.0));
}

#[test]
fn tv_problem_runs_in_dual_mode() {
    let p = make_tv1d(30, 40, 2, 0.05).unwrap().with_reference(1e-10).unwrap();
    let mut cfg = DeterministicConfig::exact(&p, 300);
    cfg.delta = Magnitude::Power { c: 1e-2, p: 2.5 };
    let trace = run_inexact_fista(&p, &cfg).unwrap();
    assert!(trace.max_bound_violation() <= 1e-9);
    assert!(trace
        .rows
        .iter()
        .all(|r| r.cert_excess <= 0.5 * r.delta_k * r.delta_k + 1e-15));
}

#[test]
fn inner_cap_is_reported() {
    let mut p = make_tv1d(30, 40, 2, 0.05).unwrap();
    p.reference = None;
    let mut cfg = DeterministicConfig::exact(&p, 20);
    cfg.delta = Magnitude::Power { c: 1e-12, p: 0.0 };
    cfg.inner_cap = 5;
    let err = run_inexact_fista(&p, &cfg).unwrap_err();
    assert!(
        matches!(
            err,
            SolverError::Prox {
                source: ProxError::InnerCap { iterations: 5, .. },
                ..
            }
        ),
        "{err:?}"
    );
}

#[test]
fn bad_configs_are_rejected() {
    let p = box_qp_20();
    let mut cfg = DeterministicConfig::exact(&p, 5);
    cfg.x0 = Some(vec![0.0; 3]);
    assert!(matches!(run_inexact_fista(&p, &cfg), Err(SolverError::Config(_))));
    let mut cfg = DeterministicConfig::exact(&p, 5);
    cfg.delta = Magnitude::Power { c: -1.0, p: 2.0 };
    assert!(matches!(run_inexact_fista(&p, &cfg), Err(SolverError::Config(_))));
    let mut sto = stochastic_config(&p, 5, 0, 0.1);
    assert!(matches!(run_stochastic_fista(&p, &sto), Err(SolverError::Config(_))));
    sto.replications = 1;
    sto.q = -1.0;
    assert!(run_stochastic_fista(&p, &sto).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bound_holds_for_random_summable_schedules(
        c_delta in 0.0..0.2f64,
        c_b in 0.0..0.2f64,
        p_exp in 2.05..3.0f64,
        alpha in prop_oneof![Just(1.0), 0.3..1.0f64],
        seed in 0u64..1000,
    ) {
        let n = 8;
        let center: Vec<f64> = (0..n).map(|i| 1.5 * ((i + 1) as f64 * 0.9).cos()).collect();
        let scales: Vec<f64> = (0..n).map(|i| 0.1 + 0.12 * i as f64).collect();
        let p = make_box_qp(n, &center, &vec![-1.0; n], &vec![1.0; n], Some(&scales)).unwrap();
        let mut cfg = DeterministicConfig::exact(&p, 400);
        cfg.params = ParamFamily::with_growth(alpha).unwrap();
        cfg.delta = Magnitude::Power { c: c_delta, p: p_exp };
        cfg.b = schedule(c_b, p_exp);
        cfg.seed = seed;
        let trace = run_inexact_fista(&p, &cfg).unwrap();
        prop_assert!(trace.max_bound_violation() <= 1e-10);
    }
}
