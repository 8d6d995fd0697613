//! Inexact proximity steps, gradient errors and stochastic gradients.
//!
//! A point `z` is a `delta`-approximation of `prox_{gamma g}(y)` when
//!
//! ```text
//! gamma g(z) + 1/2 |z - y|^2 <= min { gamma g + 1/2 |. - y|^2 } + delta^2 / 2.
//! ```
//!
//! Every inexact step returns a [`ProxCertificate`] carrying a bound on that
//! excess and, when it can be constructed, a decomposition
//! `(delta1, delta2, e)` with `delta1^2 + delta2^2 <= delta^2`, `|e| <= delta2`
//! and `(y + e - z) / gamma` a `delta1^2 / (2 gamma)`-subgradient of `g` at `z`.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{CompositeProblem, DualProx, Point};

/// Bisection steps for the perturbation length.
pub const BISECTION_STEPS: usize = 60;
/// Default cap on inner dual iterations.
pub const INNER_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("problem has no closed-form proximity operator")]
    NoExactProx,
    #[error("problem has no dual proximity solver")]
    NoDualProx,
    #[error("inner dual solver hit its cap of {iterations} iterations; best gap {best_gap:e} > target {target:e}")]
    InnerCap {
        iterations: usize,
        best_gap: f64,
        target: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxMode {
    Exact,
    Perturbation,
    DualGap,
}

/// `(delta1, delta2, e)` witnessing the subgradient form of the criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub delta1: f64,
    pub delta2: f64,
    pub e: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxCertificate {
    pub delta: f64,
    /// Certified bound on the excess of the prox objective over its minimum.
    pub objective_excess_bound: f64,
    pub mode: ProxMode,
    pub decomposition: Option<Decomposition>,
}

impl ProxCertificate {
    fn exact(delta: f64, n: usize) -> Self {
        ProxCertificate {
            delta,
            objective_excess_bound: 0.0,
            mode: ProxMode::Exact,
            decomposition: Some(Decomposition {
                delta1: 0.0,
                delta2: 0.0,
                e: Array1::zeros(n),
            }),
        }
    }

    /// `(delta1, delta2)` for bound evaluation; `(delta, delta)` when no
    /// decomposition is available.
    pub fn split(&self) -> (f64, f64) {
        match &self.decomposition {
            Some(d) => (d.delta1, d.delta2),
            None => (self.delta, self.delta),
        }
    }
}

/// Direction along which perturbation-mode outputs leave the exact prox.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbDirection {
    /// Uniform random unit vector from the step's stream.
    #[default]
    Seeded,
    /// Away from the prox input, `(p - y) / |p - y|`.
    Adversarial,
}

fn norm(v: &Point) -> f64 {
    v.dot(v).sqrt()
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Point {
    loop {
        let v = Array1::from_shape_simple_fn(n, || {
            let z: f64 = StandardNormal.sample(rng);
            z
        });
        let nv = norm(&v);
        if nv > 0.0 {
            return v / nv;
        }
    }
}

fn first_axis(n: usize) -> Point {
    let mut e = Array1::zeros(n);
    e[0] = 1.0;
    e
}

/// Value of the scaled prox objective `gamma g(z) + 1/2 |z - y|^2`.
pub fn prox_objective(problem: &CompositeProblem, z: &Point, y: &Point, gamma: f64) -> f64 {
    let g = problem.nonsmooth.value(z);
    if g == f64::INFINITY {
        return f64::INFINITY;
    }
    let d = z - y;
    gamma * g + 0.5 * d.dot(&d)
}

/// Largest `eta` in `[0, delta]` with `feasible(eta)`, for a predicate that
/// holds on an interval starting at 0.
fn largest_feasible(delta: f64, feasible: impl Fn(f64) -> bool) -> f64 {
    if feasible(delta) {
        return delta;
    }
    let (mut lo, mut hi) = (0.0, delta);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Perturbation-mode inexact prox: `z = p + eta u` with the largest
/// `eta <= delta` keeping the prox objective within `delta^2 / 2` of its
/// minimum. The decomposition uses `e = z - p` and the `eps`-subgradient
/// `(y - p) / gamma`.
pub fn inexact_prox_perturb<R: Rng + ?Sized>(
    problem: &CompositeProblem,
    y: &Point,
    gamma: f64,
    delta: f64,
    direction: PerturbDirection,
    rng: &mut R,
) -> Result<(Point, ProxCertificate), ProxError> {
    let p = problem.nonsmooth.prox(y, gamma).ok_or(ProxError::NoExactProx)?;
    let n = y.len();
    let u = match direction {
        PerturbDirection::Seeded => random_unit(rng, n),
        PerturbDirection::Adversarial => {
            let d = &p - y;
            let nd = norm(&d);
            if nd > 0.0 {
                d / nd
            } else {
                first_axis(n)
            }
        }
    };
    if delta == 0.0 {
        return Ok((p, ProxCertificate::exact(delta, n)));
    }
    let min_value = prox_objective(problem, &p, y, gamma);
    let target = min_value + 0.5 * delta * delta;
    let eta = largest_feasible(delta, |eta| {
        prox_objective(problem, &(&p + &(eta * &u)), y, gamma) <= target
    });
    if eta == 0.0 {
        return Ok((p, ProxCertificate::exact(delta, n)));
    }
    let z = &p + &(eta * &u);
    let excess = (prox_objective(problem, &z, y, gamma) - min_value).clamp(0.0, 0.5 * delta * delta);
    let e = &z - &p;
    let delta2 = norm(&e);
    // slack of (y - p)/gamma as a subgradient at z, times 2 gamma
    let delta1 = (2.0 * excess - delta2 * delta2).max(0.0).sqrt();
    Ok((
        z,
        ProxCertificate {
            delta,
            objective_excess_bound: excess,
            mode: ProxMode::Perturbation,
            decomposition: Some(Decomposition { delta1, delta2, e }),
        },
    ))
}

/// Fenchel-Young gap `g(z) + g*(w) - <z, w>`.
fn fenchel_young(problem: &CompositeProblem, z: &Point, w: &Point) -> f64 {
    let g = problem.nonsmooth.value(z);
    let conj = problem.nonsmooth.conjugate(w).unwrap_or(f64::INFINITY);
    if g == f64::INFINITY || conj == f64::INFINITY {
        return f64::INFINITY;
    }
    (g + conj - z.dot(w)).max(0.0)
}

/// Inexact prox with `e = 0`: `z = y - gamma w` for a dual point `w` in the
/// domain of `g*` such that `(y - z) / gamma` is a `delta^2 / (2 gamma)`
/// subgradient of `g` at `z`. Falls back to the exact prox when `g` has no
/// conjugate.
pub fn inexact_prox_subgradient<R: Rng + ?Sized>(
    problem: &CompositeProblem,
    y: &Point,
    gamma: f64,
    delta: f64,
    rng: &mut R,
) -> Result<(Point, ProxCertificate), ProxError> {
    let p = problem.nonsmooth.prox(y, gamma).ok_or(ProxError::NoExactProx)?;
    let n = y.len();
    let u = random_unit(rng, n);
    if delta == 0.0 || problem.nonsmooth.conjugate(&p).is_none() {
        return Ok((p, ProxCertificate::exact(delta, n)));
    }
    let w_star = (y - &p) / gamma;
    let candidate = |eta: f64| {
        let w = problem
            .nonsmooth
            .project_conjugate_domain(&(&w_star + &((eta / gamma) * &u)));
        (y - &(gamma * &w), w)
    };
    let budget = 0.5 * delta * delta;
    let eta = largest_feasible(delta, |eta| {
        let (z, w) = candidate(eta);
        gamma * fenchel_young(problem, &z, &w) <= budget
    });
    if eta == 0.0 {
        return Ok((p, ProxCertificate::exact(delta, n)));
    }
    let (z, w) = candidate(eta);
    let slack = (gamma * fenchel_young(problem, &z, &w)).min(budget);
    let min_value = prox_objective(problem, &p, y, gamma);
    let excess = (prox_objective(problem, &z, y, gamma) - min_value).clamp(0.0, slack);
    Ok((
        z,
        ProxCertificate {
            delta,
            objective_excess_bound: excess,
            mode: ProxMode::Perturbation,
            decomposition: Some(Decomposition {
                delta1: (2.0 * slack).sqrt(),
                delta2: 0.0,
                e: Array1::zeros(n),
            }),
        },
    ))
}

/// Output of [`inexact_prox_dual`].
#[derive(Debug, Clone)]
pub struct DualProxOutput {
    pub z: Point,
    pub certificate: ProxCertificate,
    /// Final dual iterate, reusable as a warm start.
    pub dual: Point,
    pub iterations: usize,
}

/// Dual-gap inexact prox: projected gradient ascent on the dual until the
/// primal-dual gap is at most `delta^2 / 2`. Weak duality makes the gap a
/// bound on the primal excess, and the dual point certifies `e = 0` with
/// `delta1^2 = 2 gap`.
pub fn inexact_prox_dual(
    problem: &CompositeProblem,
    y: &Point,
    gamma: f64,
    delta: f64,
    warm_start: Option<&Point>,
    cap: usize,
) -> Result<DualProxOutput, ProxError> {
    let dual: &dyn DualProx = problem.nonsmooth.dual_prox().ok_or(ProxError::NoDualProx)?;
    let m = dual.dual_dim(y.len());
    let mut u = match warm_start {
        Some(w) if w.len() == m => w.clone(),
        _ => Array1::zeros(m),
    };
    let target = 0.5 * delta * delta;
    let mut best_gap = f64::INFINITY;
    for it in 0..=cap {
        let gap = dual.gap(&u, y, gamma);
        best_gap = best_gap.min(gap);
        if gap <= target {
            let z = dual.primal(&u, y);
            return Ok(DualProxOutput {
                certificate: ProxCertificate {
                    delta,
                    objective_excess_bound: gap,
                    mode: ProxMode::DualGap,
                    decomposition: Some(Decomposition {
                        delta1: (2.0 * gap).sqrt(),
                        delta2: 0.0,
                        e: Array1::zeros(y.len()),
                    }),
                },
                z,
                dual: u,
                iterations: it,
            });
        }
        if it < cap {
            dual.ascent_step(&mut u, y, gamma);
        }
    }
    Err(ProxError::InnerCap {
        iterations: cap,
        best_gap,
        target,
    })
}

/// Inexact-prox engine used by the solvers: picks the perturbation or the
/// dual-gap route from the problem and keeps the dual warm start.
#[derive(Debug, Clone)]
pub struct ProxStepper {
    pub direction: PerturbDirection,
    /// Produce `e = 0` outputs (subgradient form of the criterion).
    pub weak: bool,
    pub inner_cap: usize,
    warm: Option<Point>,
}

impl ProxStepper {
    pub fn new(direction: PerturbDirection, weak: bool) -> Self {
        ProxStepper {
            direction,
            weak,
            inner_cap: INNER_CAP,
            warm: None,
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        problem: &CompositeProblem,
        y: &Point,
        gamma: f64,
        delta: f64,
        rng: &mut R,
    ) -> Result<(Point, ProxCertificate), ProxError> {
        if problem.has_exact_prox() {
            if self.weak {
                inexact_prox_subgradient(problem, y, gamma, delta, rng)
            } else {
                inexact_prox_perturb(problem, y, gamma, delta, self.direction, rng)
            }
        } else {
            let out = inexact_prox_dual(problem, y, gamma, delta, self.warm.as_ref(), self.inner_cap)?;
            self.warm = Some(out.dual);
            Ok((out.z, out.certificate))
        }
    }
}

/// `c / (k + 1)^p`, or an explicit list (zero past its end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Magnitude {
    Power { c: f64, p: f64 },
    Explicit { values: Vec<f64> },
}

impl Magnitude {
    pub fn zero() -> Self {
        Magnitude::Power { c: 0.0, p: 0.0 }
    }

    pub fn at(&self, k: usize) -> f64 {
        match self {
            Magnitude::Power { c, p } => {
                if *c == 0.0 {
                    0.0
                } else {
                    c / ((k + 1) as f64).powf(*p)
                }
            }
            Magnitude::Explicit { values } => values.get(k).copied().unwrap_or(0.0),
        }
    }

    /// Decay exponent for the power rule.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Magnitude::Power { c, p } if *c > 0.0 => Some(*p),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Magnitude::Power { c, p } if !(*c >= 0.0) || !(*p >= 0.0) => {
                Err(format!("schedule needs c >= 0 and p >= 0, got c = {c}, p = {p}"))
            }
            Magnitude::Explicit { values } if values.iter().any(|v| !(*v >= 0.0)) => {
                Err("explicit schedule values must be >= 0".into())
            }
            _ => Ok(()),
        }
    }
}

impl Default for Magnitude {
    fn default() -> Self {
        Magnitude::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDirection {
    /// `(1, ..., 1) / sqrt(n)` at every step.
    #[serde(alias = "fixed_unit")]
    Fixed,
    /// Fresh uniform unit vector per step.
    #[default]
    #[serde(alias = "seeded_random_unit")]
    Seeded,
}

/// Deterministic gradient errors `b_k` with `|b_k|` following a schedule.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GradientErrorSchedule {
    #[serde(flatten)]
    pub magnitude: Magnitude,
    #[serde(default)]
    pub direction: ErrorDirection,
}

impl GradientErrorSchedule {
    pub fn none() -> Self {
        GradientErrorSchedule::default()
    }
}

/// `b_k` of norm `schedule.magnitude.at(k)`. Seeded directions always draw
/// from `rng`, so the stream does not depend on the magnitude.
pub fn gradient_error<R: Rng + ?Sized>(schedule: &GradientErrorSchedule, k: usize, n: usize, rng: &mut R) -> Point {
    let u = match schedule.direction {
        ErrorDirection::Fixed => Array1::from_elem(n, 1.0 / (n as f64).sqrt()),
        ErrorDirection::Seeded => random_unit(rng, n),
    };
    let magnitude = schedule.magnitude.at(k);
    if magnitude == 0.0 {
        Array1::zeros(n)
    } else {
        magnitude * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    /// `sigma u` with `u` uniform on the unit sphere: `|noise| = sigma` exactly.
    #[default]
    Sphere,
    /// i.i.d. `N(0, sigma^2 / n)` coordinates: `E |noise|^2 = sigma^2`.
    GaussianIid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub family: NoiseFamily,
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            family: NoiseFamily::Sphere,
            sigma: 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Point {
        match self.family {
            NoiseFamily::Sphere => self.sigma * random_unit(rng, n),
            NoiseFamily::GaussianIid => {
                let scale = self.sigma / (n as f64).sqrt();
                Array1::from_shape_simple_fn(n, || {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                })
            }
        }
    }
}

/// Unbiased gradient estimate `grad f(x) + noise`.
pub fn stochastic_grad<R: Rng + ?Sized>(spec: &NoiseSpec, problem: &CompositeProblem, x: &Point, rng: &mut R) -> Point {
    let grad = problem.smooth.gradient(x);
    let noise = spec.sample(x.len(), rng);
    if spec.sigma == 0.0 {
        grad
    } else {
        grad + noise
    }
}
