mod common;

use common::condat_tv;
use ifista::inexact::{inexact_prox_dual, prox_objective, ProxMode, INNER_CAP};
use ifista::problems::make_tv1d;
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut level = 0.0;
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                level = rng.gen_range(-2.0..2.0);
            }
            level + 0.3 * rng.gen_range(-1.0..1.0)
        })
        .collect()
}

/// Dual certificate for the exact solution: `y - x = D^T u`, `|u| <= lambda`,
/// `u_i = lambda sign((Dx)_i)` on jumps.
fn assert_tv_optimal(y: &[f64], x: &[f64], lambda: f64) {
    let n = y.len();
    let mut u = Vec::with_capacity(n - 1);
    let mut acc = 0.0;
    for j in 0..n - 1 {
        acc -= y[j] - x[j];
        u.push(acc);
    }
    let closing = u[n - 2] - (y[n - 1] - x[n - 1]);
    assert!(closing.abs() < 1e-9, "residuals do not sum to zero: {closing}");
    for (i, ui) in u.iter().enumerate() {
        assert!(ui.abs() <= lambda + 1e-9, "u[{i}] = {ui}");
        let jump = x[i + 1] - x[i];
        if jump.abs() > 1e-9 {
            assert!((ui - lambda * jump.signum()).abs() < 1e-9, "u[{i}] = {ui}, jump {jump}");
        }
    }
}

#[test]
fn condat_solution_satisfies_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let n = rng.gen_range(2..80);
        let y = random_signal(&mut rng, n);
        let lambda = 10f64.powf(rng.gen_range(-2.0..0.5));
        assert_tv_optimal(&y, &condat_tv(&y, lambda), lambda);
    }
}

#[test]
fn condat_small_cases() {
    assert_eq!(condat_tv(&[1.0], 5.0), vec![1.0]);
    let x = condat_tv(&[0.0, 3.0], 0.5);
    assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 2.5).abs() < 1e-15);
    let x = condat_tv(&[0.0, 3.0], 2.0);
    assert!(x.iter().all(|v| (v - 1.5).abs() < 1e-15));
}

#[test]
fn dual_prox_is_certified_against_exact_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let n = rng.gen_range(2..60);
        let lambda = 10f64.powf(rng.gen_range(-2.0..0.0));
        let gamma = rng.gen_range(0.1..2.0);
        let p = make_tv1d(4, n, 0, lambda).unwrap();
        let y = Array1::from(random_signal(&mut rng, n));
        let delta = 10f64.powf(rng.gen_range(-4.0..-1.0));
        let out = inexact_prox_dual(&p, &y, gamma, delta, None, INNER_CAP).unwrap();
        assert_eq!(out.certificate.mode, ProxMode::DualGap);
        let exact = Array1::from(condat_tv(y.as_slice().unwrap(), gamma * lambda));
        let excess = prox_objective(&p, &out.z, &y, gamma) - prox_objective(&p, &exact, &y, gamma);
        assert!(excess <= 0.5 * delta * delta + 1e-12, "excess {excess}");
        assert!(excess <= out.certificate.objective_excess_bound + 1e-12);
        let d = &out.z - &exact;
        assert!(d.dot(&d).sqrt() <= delta + 1e-10);
    }
}

#[test]
fn tight_dual_prox_matches_exact_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = random_signal(&mut rng, 40);
    let p = make_tv1d(4, 40, 0, 0.2).unwrap();
    let out = inexact_prox_dual(&p, &Array1::from(y.clone()), 1.0, 1e-6, None, INNER_CAP).unwrap();
    let exact = condat_tv(&y, 0.2);
    let err = out.z.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn warm_start_reduces_inner_iterations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = Array1::from(random_signal(&mut rng, 50));
    let p = make_tv1d(4, 50, 0, 0.3).unwrap();
    let cold = inexact_prox_dual(&p, &y, 1.0, 1e-4, None, INNER_CAP).unwrap();
    let y2 = &y + 1e-3;
    let warm = inexact_prox_dual(&p, &y2, 1.0, 1e-4, Some(&cold.dual), INNER_CAP).unwrap();
    let cold2 = inexact_prox_dual(&p, &y2, 1.0, 1e-4, None, INNER_CAP).unwrap();
    assert!(warm.iterations < cold2.iterations);
}
