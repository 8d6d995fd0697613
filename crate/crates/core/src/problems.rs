//! Composite problems `F = f + g` with their oracles and reference optima.
//!
//! The smooth part exposes value, gradient and a Lipschitz constant of the
//! gradient. The nonsmooth part exposes its (extended-real) value and either
//! a closed-form proximity operator or a dual solver that certifies its
//! output through a primal-dual gap. New instances plug in by implementing
//! [`SmoothPart`] and [`NonsmoothPart`].

use std::fmt::Debug;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Array1<f64>;

/// Power-iteration settings for Lipschitz constants.
pub const POWER_ITER_TOL: f64 = 1e-10;
pub const POWER_ITER_CAP: usize = 10_000;

/// Reference runs: default tolerance and iteration cap.
pub const REFERENCE_TOL: f64 = 1e-12;
pub const REFERENCE_CAP: usize = 1_000_000;
const REFERENCE_FISTA_ITERS: usize = 5_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension must be >= {min}, got {got}")]
    Dimension { min: usize, got: usize },
    #[error("{what} has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("curvature entry {index} is {value}, must be > 0")]
    Curvature { index: usize, value: f64 },
    #[error("empty box at coordinate {index}: lower {lower} > upper {upper}")]
    EmptyBox { index: usize, lower: f64, upper: f64 },
    #[error("regularization weight must be > 0, got {0}")]
    Regularization(f64),
    #[error("design matrix generated from seed {0} is zero")]
    DegenerateMatrix(u64),
    #[error("problem has neither a closed-form prox nor a dual prox solver")]
    NoProx,
    #[error("reference run did not converge in {iterations} iterations (last relative change {last_change:e})")]
    ReferenceNonConvergence { iterations: usize, last_change: f64 },
}

/// Smooth convex part with `L`-Lipschitz gradient.
pub trait SmoothPart: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Point;
    fn lipschitz(&self) -> f64;
}

/// Proper convex lower semicontinuous part. `value` returns `f64::INFINITY`
/// outside the domain.
pub trait NonsmoothPart: Debug + Send + Sync {
    fn value(&self, x: &Point) -> f64;

    /// `prox_{gamma g}(y)` when available in closed form.
    fn prox(&self, _y: &Point, _gamma: f64) -> Option<Point> {
        None
    }

    /// Dual solver for `prox_{gamma g}` when no closed form exists.
    fn dual_prox(&self) -> Option<&dyn DualProx> {
        None
    }

    /// Fenchel conjugate `g*(w)` (may be `+inf`), when available.
    fn conjugate(&self, _w: &Point) -> Option<f64> {
        None
    }

    /// Projection onto the domain of `g*`.
    fn project_conjugate_domain(&self, w: &Point) -> Point {
        w.clone()
    }
}

/// Dual formulation of `min_z gamma g(z) + 1/2 |z - y|^2` for
/// `g = lambda |D .|_1`: maximize over `|u|_inf <= gamma lambda`, recover
/// `z = y - D^T u`.
pub trait DualProx: Debug + Send + Sync {
    fn dual_dim(&self, n: usize) -> usize;
    /// One projected ascent step on the dual objective.
    fn ascent_step(&self, u: &mut Point, y: &Point, gamma: f64);
    /// Primal point associated with a dual iterate.
    fn primal(&self, u: &Point, y: &Point) -> Point;
    /// Primal-dual gap at `(primal(u), u)`; nonnegative for feasible `u`.
    fn gap(&self, u: &Point, y: &Point, gamma: f64) -> f64;
}

#[derive(Debug, Clone)]
pub struct DiagonalQuadratic {
    scales: Point,
    center: Point,
}

impl SmoothPart for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &Point) -> f64 {
        0.5 * ndarray::Zip::from(&self.scales)
            .and(x)
            .and(&self.center)
            .fold(0.0, |acc, &a, &xi, &ci| {
                let r = a * (xi - ci);
                acc + r * r
            })
    }

    fn gradient(&self, x: &Point) -> Point {
        ndarray::Zip::from(&self.scales)
            .and(x)
            .and(&self.center)
            .map_collect(|&a, &xi, &ci| a * a * (xi - ci))
    }

    fn lipschitz(&self) -> f64 {
        self.scales.iter().fold(0.0_f64, |m, &a| m.max(a * a))
    }
}

/// `f(x) = 1/2 |Ax - b|^2`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: Array2<f64>,
    b: Point,
    lipschitz: f64,
}

impl LeastSquares {
    pub fn new(a: Array2<f64>, b: Point) -> Self {
        let lipschitz = largest_eigenvalue_ata(&a);
        LeastSquares { a, b, lipschitz }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }
}

impl SmoothPart for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Point) -> f64 {
        let r = self.a.dot(x) - &self.b;
        0.5 * r.dot(&r)
    }

    fn gradient(&self, x: &Point) -> Point {
        let r = self.a.dot(x) - &self.b;
        self.a.t().dot(&r)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Largest eigenvalue of `A^T A` by power iteration (relative tolerance
/// [`POWER_ITER_TOL`], at most [`POWER_ITER_CAP`] iterations).
pub fn largest_eigenvalue_ata(a: &Array2<f64>) -> f64 {
    let n = a.ncols();
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64) / (n as f64));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..POWER_ITER_CAP {
        let w = a.t().dot(&a.dot(&v));
        let next = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        let done = (next - estimate).abs() <= POWER_ITER_TOL * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient at the final vector
    let w = a.dot(&v);
    w.dot(&w).max(estimate)
}

#[derive(Debug, Clone, Copy)]
pub struct Zero;

impl NonsmoothPart for Zero {
    fn value(&self, _x: &Point) -> f64 {
        0.0
    }

    fn prox(&self, y: &Point, _gamma: f64) -> Option<Point> {
        Some(y.clone())
    }

    fn conjugate(&self, w: &Point) -> Option<f64> {
        Some(if w.iter().all(|&v| v == 0.0) {
            0.0
        } else {
            f64::INFINITY
        })
    }

    fn project_conjugate_domain(&self, w: &Point) -> Point {
        Array1::zeros(w.len())
    }
}

/// `lambda |x|_1`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub lambda: f64,
}

/// Scalar shrinkage `sign(v) max(|v| - tau, 0)`.
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

impl NonsmoothPart for L1Norm {
    fn value(&self, x: &Point) -> f64 {
        self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox(&self, y: &Point, gamma: f64) -> Option<Point> {
        let tau = gamma * self.lambda;
        Some(y.mapv(|v| soft_threshold(v, tau)))
    }

    fn conjugate(&self, w: &Point) -> Option<f64> {
        let inside = w.iter().all(|v| v.abs() <= self.lambda);
        Some(if inside { 0.0 } else { f64::INFINITY })
    }

    fn project_conjugate_domain(&self, w: &Point) -> Point {
        w.mapv(|v| v.clamp(-self.lambda, self.lambda))
    }
}

/// Indicator of `{lower <= x <= upper}`.
#[derive(Debug, Clone)]
pub struct BoxIndicator {
    lower: Point,
    upper: Point,
}

impl BoxIndicator {
    pub fn project(&self, y: &Point) -> Point {
        ndarray::Zip::from(y)
            .and(&self.lower)
            .and(&self.upper)
            .map_collect(|&v, &lo, &hi| v.clamp(lo, hi))
    }
}

impl NonsmoothPart for BoxIndicator {
    fn value(&self, x: &Point) -> f64 {
        let inside = ndarray::Zip::from(x)
            .and(&self.lower)
            .and(&self.upper)
            .all(|&v, &lo, &hi| v >= lo && v <= hi);
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, y: &Point, _gamma: f64) -> Option<Point> {
        Some(self.project(y))
    }

    fn conjugate(&self, w: &Point) -> Option<f64> {
        // support function of the box
        Some(
            ndarray::Zip::from(w)
                .and(&self.lower)
                .and(&self.upper)
                .fold(0.0, |acc, &v, &lo, &hi| acc + (lo * v).max(hi * v)),
        )
    }
}

/// `lambda |Dx|_1` with `(Dx)_i = x_{i+1} - x_i`. No closed-form prox; the
/// dual solver is projected gradient ascent with step `1/4 <= 1/|D|^2`.
#[derive(Debug, Clone, Copy)]
pub struct TotalVariation1d {
    pub lambda: f64,
}

/// `Dx` for the forward-difference operator.
pub fn forward_difference(x: &Point) -> Point {
    Array1::from_shape_fn(x.len().saturating_sub(1), |i| x[i + 1] - x[i])
}

/// `D^T u`.
pub fn forward_difference_adjoint(u: &Point) -> Point {
    let n = u.len() + 1;
    Array1::from_shape_fn(n, |j| {
        let left = if j > 0 { u[j - 1] } else { 0.0 };
        let right = if j < n - 1 { u[j] } else { 0.0 };
        left - right
    })
}

const TV_DUAL_STEP: f64 = 0.25;

/// Exact `argmin_x 1/2 |x - y|^2 + lambda sum |x_{i+1} - x_i|` by Condat's
/// direct scan, without the dual route.
pub fn tv1d_prox_direct(y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    let mut x = vec![0.0; n];
    if n == 0 {
        return x;
    }
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let two_lambda = 2.0 * lambda;
    let neg_lambda = -lambda;
    let mut vmin = y[0] - lambda;
    let mut vmax = y[0] + lambda;
    let mut umin = lambda;
    let mut umax = neg_lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    x[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = y[k];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    x[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = y[k];
                umax = neg_lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    x[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return x;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < neg_lambda {
            loop {
                x[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = y[k];
            vmax = vmin + two_lambda;
            umin = lambda;
            umax = neg_lambda;
        } else {
            umax += y[k + 1] - vmax;
            if umax > lambda {
                loop {
                    x[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                kplus = k0;
                vmax = y[k];
                vmin = vmax - two_lambda;
                umin = lambda;
                umax = neg_lambda;
            } else {
                k += 1;
                if umin >= lambda {
                    kminus = k;
                    vmin += (umin - lambda) / (k - k0 + 1) as f64;
                    umin = lambda;
                }
                if umax <= neg_lambda {
                    kplus = k;
                    vmax += (umax + lambda) / (k - k0 + 1) as f64;
                    umax = neg_lambda;
                }
            }
        }
    }
}

impl NonsmoothPart for TotalVariation1d {
    fn value(&self, x: &Point) -> f64 {
        self.lambda * forward_difference(x).iter().map(|v| v.abs()).sum::<f64>()
    }

    fn dual_prox(&self) -> Option<&dyn DualProx> {
        Some(self)
    }
}

impl DualProx for TotalVariation1d {
    fn dual_dim(&self, n: usize) -> usize {
        n.saturating_sub(1)
    }

    fn ascent_step(&self, u: &mut Point, y: &Point, gamma: f64) {
        let bound = gamma * self.lambda;
        let grad = forward_difference(&self.primal(u, y));
        ndarray::Zip::from(u)
            .and(&grad)
            .for_each(|ui, &g| *ui = (*ui + TV_DUAL_STEP * g).clamp(-bound, bound));
    }

    fn primal(&self, u: &Point, y: &Point) -> Point {
        y - &forward_difference_adjoint(u)
    }

    fn gap(&self, u: &Point, y: &Point, gamma: f64) -> f64 {
        // P(z) - d(u) = gamma lambda |Dz|_1 - <Dz, u>, termwise nonnegative
        let bound = gamma * self.lambda;
        let dz = forward_difference(&self.primal(u, y));
        ndarray::Zip::from(&dz)
            .and(u)
            .fold(0.0, |acc, &d, &ui| acc + (bound * d.abs() - ui * d).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    HighPrecisionRun {
        tol: f64,
        iterations: usize,
        last_change: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Point,
    pub f_star: f64,
    pub provenance: Provenance,
}

impl ReferenceSolution {
    /// Absolute tolerance on `F_*` implied by the provenance.
    pub fn tolerance(&self) -> f64 {
        match self.provenance {
            Provenance::Analytic => 1e-12 * self.f_star.abs().max(1.0),
            Provenance::HighPrecisionRun { tol, .. } => tol * self.f_star.abs().max(1.0),
        }
    }
}

/// `F = f + g` plus an optional trusted reference optimum.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    pub name: String,
    pub smooth: Arc<dyn SmoothPart>,
    pub nonsmooth: Arc<dyn NonsmoothPart>,
    pub reference: Option<ReferenceSolution>,
}

impl CompositeProblem {
    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn lipschitz(&self) -> f64 {
        self.smooth.lipschitz()
    }

    pub fn objective(&self, x: &Point) -> f64 {
        let g = self.nonsmooth.value(x);
        if g == f64::INFINITY {
            return f64::INFINITY;
        }
        self.smooth.value(x) + g
    }

    pub fn has_exact_prox(&self) -> bool {
        self.nonsmooth.prox(&Array1::zeros(self.dim()), 1.0).is_some()
    }

    pub fn has_dual_prox(&self) -> bool {
        self.nonsmooth.dual_prox().is_some()
    }

    /// Computes and attaches a reference optimum unless one is present.
    pub fn with_reference(mut self, tol: f64) -> Result<Self, ProblemError> {
        if self.reference.is_none() {
            self.reference = Some(reference_optimum(&self, tol)?);
        }
        Ok(self)
    }
}

fn check_len(what: &'static str, v: &[f64], n: usize) -> Result<(), ProblemError> {
    if v.len() != n {
        return Err(ProblemError::Length {
            what,
            got: v.len(),
            expected: n,
        });
    }
    Ok(())
}

fn check_scales(scales: Option<&[f64]>, n: usize) -> Result<Point, ProblemError> {
    let scales = match scales {
        Some(s) => {
            check_len("curvature", s, n)?;
            Array1::from(s.to_vec())
        }
        None => Array1::ones(n),
    };
    if let Some((index, &value)) = scales.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(ProblemError::Curvature { index, value });
    }
    Ok(scales)
}

/// `f(x) = 1/2 |A(x - c)|^2` with `A = diag(scales)` (identity by default), `g = 0`.
pub fn make_quadratic(n: usize, center: &[f64], scales: Option<&[f64]>) -> Result<CompositeProblem, ProblemError> {
    if n < 1 {
        return Err(ProblemError::Dimension { min: 1, got: n });
    }
    check_len("center", center, n)?;
    let scales = check_scales(scales, n)?;
    let center = Array1::from(center.to_vec());
    Ok(CompositeProblem {
        name: "quadratic".into(),
        smooth: Arc::new(DiagonalQuadratic {
            scales,
            center: center.clone(),
        }),
        nonsmooth: Arc::new(Zero),
        reference: Some(ReferenceSolution {
            x_star: center,
            f_star: 0.0,
            provenance: Provenance::Analytic,
        }),
    })
}

/// Diagonal quadratic restricted to a box. The problem is separable, so the
/// minimizer is the projection of the center.
pub fn make_box_qp(
    n: usize,
    center: &[f64],
    lower: &[f64],
    upper: &[f64],
    scales: Option<&[f64]>,
) -> Result<CompositeProblem, ProblemError> {
    if n < 1 {
        return Err(ProblemError::Dimension { min: 1, got: n });
    }
    check_len("center", center, n)?;
    check_len("lower", lower, n)?;
    check_len("upper", upper, n)?;
    for i in 0..n {
        if !(lower[i] <= upper[i]) {
            return Err(ProblemError::EmptyBox {
                index: i,
                lower: lower[i],
                upper: upper[i],
            });
        }
    }
    let scales = check_scales(scales, n)?;
    let smooth = DiagonalQuadratic {
        scales,
        center: Array1::from(center.to_vec()),
    };
    let boxed = BoxIndicator {
        lower: Array1::from(lower.to_vec()),
        upper: Array1::from(upper.to_vec()),
    };
    let x_star = boxed.project(&smooth.center);
    let f_star = smooth.value(&x_star);
    Ok(CompositeProblem {
        name: "box_qp".into(),
        smooth: Arc::new(smooth),
        nonsmooth: Arc::new(boxed),
        reference: Some(ReferenceSolution {
            x_star,
            f_star,
            provenance: Provenance::Analytic,
        }),
    })
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Array2<f64> {
    let scale = 1.0 / (m as f64).sqrt();
    Array2::from_shape_simple_fn((m, n), || {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn noise(rng: &mut ChaCha8Rng, m: usize, level: f64) -> Point {
    Array1::from_shape_simple_fn(m, || {
        let z: f64 = StandardNormal.sample(rng);
        level * z
    })
}

/// Lasso: `f = 1/2 |Ax - b|^2`, `g = lambda |x|_1`, with `A` Gaussian and
/// `b` generated from a sparse signal, all regenerated from `seed`. The
/// reference optimum is attached separately (see [`CompositeProblem::with_reference`]).
pub fn make_lasso(m: usize, n: usize, seed: u64, lambda: f64) -> Result<CompositeProblem, ProblemError> {
    if m < 1 || n < 1 {
        return Err(ProblemError::Dimension { min: 1, got: m.min(n) });
    }
    if !(lambda > 0.0) {
        return Err(ProblemError::Regularization(lambda));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, m, n);
    if a.iter().all(|&v| v == 0.0) {
        return Err(ProblemError::DegenerateMatrix(seed));
    }
    // every tenth coordinate active, alternating sign
    let x_true = Array1::from_shape_fn(n, |i| match (i % 10, (i / 10) % 2) {
        (0, 0) => 1.0,
        (0, _) => -1.0,
        _ => 0.0,
    });
    let b = a.dot(&x_true) + noise(&mut rng, m, 0.01);
    Ok(CompositeProblem {
        name: "lasso".into(),
        smooth: Arc::new(LeastSquares::new(a, b)),
        nonsmooth: Arc::new(L1Norm { lambda }),
        reference: None,
    })
}

/// Least squares plus 1-D total variation `lambda |Dx|_1`; `b` comes from a
/// piecewise-constant signal.
pub fn make_tv1d(m: usize, n: usize, seed: u64, lambda: f64) -> Result<CompositeProblem, ProblemError> {
    if n < 2 {
        return Err(ProblemError::Dimension { min: 2, got: n });
    }
    if m < 1 {
        return Err(ProblemError::Dimension { min: 1, got: m });
    }
    if !(lambda > 0.0) {
        return Err(ProblemError::Regularization(lambda));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, m, n);
    if a.iter().all(|&v| v == 0.0) {
        return Err(ProblemError::DegenerateMatrix(seed));
    }
    let x_true = Array1::from_shape_fn(n, |i| match (4 * i) / n {
        0 => 0.0,
        1 => 1.0,
        2 => -0.5,
        _ => 0.5,
    });
    let b = a.dot(&x_true) + noise(&mut rng, m, 0.01);
    Ok(CompositeProblem {
        name: "tv1d".into(),
        smooth: Arc::new(LeastSquares::new(a, b)),
        nonsmooth: Arc::new(TotalVariation1d { lambda }),
        reference: None,
    })
}

/// Config-level problem declaration; matrices are regenerated from seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        n: usize,
        center: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<Vec<f64>>,
    },
    Lasso {
        m: usize,
        n: usize,
        seed: u64,
        lambda: f64,
    },
    BoxQp {
        n: usize,
        center: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<Vec<f64>>,
    },
    Tv1d {
        m: usize,
        n: usize,
        seed: u64,
        lambda: f64,
    },
}

impl ProblemSpec {
    /// Builds the problem without a reference for the non-analytic kinds.
    pub fn build(&self) -> Result<CompositeProblem, ProblemError> {
        match self {
            ProblemSpec::Quadratic { n, center, scales } => make_quadratic(*n, center, scales.as_deref()),
            ProblemSpec::Lasso { m, n, seed, lambda } => make_lasso(*m, *n, *seed, *lambda),
            ProblemSpec::BoxQp {
                n,
                center,
                lower,
                upper,
                scales,
            } => make_box_qp(*n, center, lower, upper, scales.as_deref()),
            ProblemSpec::Tv1d { m, n, seed, lambda } => make_tv1d(*m, *n, *seed, *lambda),
        }
    }
}

/// Exact (or gap-tightened) proximal step used by the reference run.
struct ReferenceProx<'a> {
    problem: &'a CompositeProblem,
    warm: Option<Point>,
}

impl ReferenceProx<'_> {
    fn step(&mut self, y: &Point, gamma: f64, gap_target: f64) -> Point {
        if let Some(p) = self.problem.nonsmooth.prox(y, gamma) {
            return p;
        }
        let dual = self.problem.nonsmooth.dual_prox().expect("checked by caller");
        let mut u = match self.warm.take() {
            Some(u) if u.len() == dual.dual_dim(y.len()) => u,
            _ => Array1::zeros(dual.dual_dim(y.len())),
        };
        let mut best = (f64::INFINITY, u.clone());
        for _ in 0..REFERENCE_CAP {
            let gap = dual.gap(&u, y, gamma);
            if gap < best.0 {
                best = (gap, u.clone());
            }
            if gap <= gap_target {
                break;
            }
            dual.ascent_step(&mut u, y, gamma);
        }
        let z = dual.primal(&best.1, y);
        self.warm = Some(best.1);
        z
    }
}

/// Reference optimum: analytic when the problem carries one; otherwise exact
/// FISTA with the critical parameters followed by a proximal-gradient polish
/// until successive objective values differ by at most `tol * max(1, |F|)`.
pub fn reference_optimum(problem: &CompositeProblem, tol: f64) -> Result<ReferenceSolution, ProblemError> {
    if let Some(r) = &problem.reference {
        if r.provenance == Provenance::Analytic {
            return Ok(r.clone());
        }
    }
    if !problem.has_exact_prox() && !problem.has_dual_prox() {
        return Err(ProblemError::NoProx);
    }
    let gamma = 1.0 / problem.lipschitz();
    let n = problem.dim();
    let mut prox = ReferenceProx { problem, warm: None };
    let gap_target = |f: f64| 1e-3 * tol * f.abs().max(1.0);

    let mut x = Array1::<f64>::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut f_y = problem.objective(&x);
    let mut best = (problem.objective(&x), x.clone());
    for _ in 0..REFERENCE_FISTA_ITERS {
        let grad = problem.smooth.gradient(&y);
        let x_next = prox.step(&(&y - &(gamma * &grad)), gamma, gap_target(f_y));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let b = (t - 1.0) / t_next;
        y = &x_next + &(b * (&x_next - &x));
        x = x_next;
        t = t_next;
        f_y = problem.objective(&x);
        if f_y < best.0 {
            best = (f_y, x.clone());
        }
    }

    let mut x = best.1.clone();
    let mut f_prev = best.0;
    let mut last_change = f64::INFINITY;
    for it in 1..=REFERENCE_CAP {
        let grad = problem.smooth.gradient(&x);
        x = prox.step(&(&x - &(gamma * &grad)), gamma, gap_target(f_prev));
        let f = problem.objective(&x);
        if f < best.0 {
            best = (f, x.clone());
        }
        last_change = (f_prev - f).abs() / f.abs().max(1.0);
        f_prev = f;
        if last_change <= tol {
            return Ok(ReferenceSolution {
                x_star: best.1,
                f_star: best.0,
                provenance: Provenance::HighPrecisionRun {
                    tol,
                    iterations: REFERENCE_FISTA_ITERS + it,
                    last_change,
                },
            });
        }
    }
    Err(ProblemError::ReferenceNonConvergence {
        iterations: REFERENCE_FISTA_ITERS + REFERENCE_CAP,
        last_change,
    })
}
