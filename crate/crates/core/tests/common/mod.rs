#![allow(dead_code)]

#[allow(unused_imports)]
pub use ifista::problems::tv1d_prox_direct as condat_tv;
use ifista::problems::{make_box_qp, make_lasso, make_quadratic, CompositeProblem, REFERENCE_TOL};

/// Box-QP with `n = 20`: unit curvature, center partly outside `[-1, 1]^n`.
pub fn box_qp_20() -> CompositeProblem {
    let n = 20;
    let center: Vec<f64> = (0..n).map(|i| 2.0 * (1.7 * i as f64).sin()).collect();
    make_box_qp(n, &center, &vec![-1.0; n], &vec![1.0; n], None).unwrap()
}

/// Lasso with 40 Gaussian measurements of a 50-dimensional sparse signal.
pub fn lasso_50() -> CompositeProblem {
    make_lasso(40, 50, 7, 0.1)
        .unwrap()
        .with_reference(REFERENCE_TOL)
        .unwrap()
}

/// Unconstrained quadratic whose curvatures `10^{-9 i / (n-1)}` span nine
/// decades, with equal weight per decade.
pub fn wide_spectrum_quadratic() -> CompositeProblem {
    let n = 40;
    let scales: Vec<f64> = (0..n).map(|i| 10f64.powf(-4.5 * i as f64 / (n - 1) as f64)).collect();
    let center: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    make_quadratic(n, &center, Some(&scales)).unwrap()
}
