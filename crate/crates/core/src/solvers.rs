//! Inexact FISTA, inexact stochastic FISTA and the proximal gradient baseline.
//!
//! Every run records one [`TraceRow`] per iteration. Row `k` describes the
//! iterate `x_k` (objective gap, energy, bound, distance to the reference)
//! together with the parameters of the step that produces `x_{k+1}`
//! (`t_k`, `gamma_k`, `delta_k`, `|b_k|`, certificate excess).
//!
//! Randomness comes from one ChaCha8 generator per purpose and replication,
//! all derived from a single seed. A deterministic run consumes the streams of
//! replication 0, so a noiseless stochastic run reproduces it bit for bit.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inexact::{
    gradient_error, GradientErrorSchedule, Magnitude, NoiseSpec, PerturbDirection, ProxError, ProxStepper, INNER_CAP,
};
use crate::params::{beta, ParamError, ParamFamily, ParamSequence};
use crate::problems::{CompositeProblem, Point};

/// Consecutive iterations above the divergence threshold before aborting.
pub const DIVERGENCE_WINDOW: usize = 100;
/// Divergence threshold relative to `r_0`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Relative slack accepted on `gamma <= 1/L`.
const STEP_SIZE_SLACK: f64 = 1e-12;

const STREAM_PROX: u64 = 0;
const STREAM_GRAD_ERROR: u64 = 1;
const STREAM_NOISE: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("step size gamma = {gamma} violates the step-size constraint 0 < gamma <= 1/L = {bound}")]
    StepSize { gamma: f64, bound: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("inexact prox failed at k = {k}: {source}")]
    Prox { k: usize, source: ProxError },
    #[error("non-finite iterate at k = {k}")]
    NonFinite { k: usize },
    #[error("divergence guard: F(x_k) - F_* > {factor:e} r_0 for {window} consecutive iterations, stopped at k = {k}")]
    Diverged { k: usize, factor: f64, window: usize },
    #[error("bound requested at k = 0, where t_(-1) = 0 makes it vacuous")]
    BoundAtZero,
    #[error("bound inputs cover {got} steps, need {needed}")]
    BoundInputs { got: usize, needed: usize },
}

fn default_params() -> ParamFamily {
    ParamFamily::Critical
}

fn default_inner_cap() -> usize {
    INNER_CAP
}

/// Inputs of inexact FISTA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterministicConfig {
    pub gamma: f64,
    #[serde(default = "default_params")]
    pub params: ParamFamily,
    /// Prox accuracy `delta_k`.
    #[serde(default)]
    pub delta: Magnitude,
    /// Gradient errors `b_k`.
    #[serde(default)]
    pub b: GradientErrorSchedule,
    /// Produce `e = 0` prox outputs and use the matching bound.
    #[serde(default)]
    pub weak_inexactness: bool,
    #[serde(default)]
    pub perturb_direction: PerturbDirection,
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    /// Starting point; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Keep `x_k, y_k, v_k` in the trace.
    #[serde(default)]
    pub store_points: bool,
    /// Iteration cap of the inner dual prox solver.
    #[serde(default = "default_inner_cap")]
    pub inner_cap: usize,
}

impl DeterministicConfig {
    /// Exact FISTA with critical parameters and `gamma = 1/L`.
    pub fn exact(problem: &CompositeProblem, max_iters: usize) -> Self {
        DeterministicConfig {
            gamma: 1.0 / problem.lipschitz(),
            params: ParamFamily::Critical,
            delta: Magnitude::zero(),
            b: GradientErrorSchedule::none(),
            weak_inexactness: false,
            perturb_direction: PerturbDirection::Seeded,
            max_iters,
            seed: 0,
            x0: None,
            store_points: false,
            inner_cap: INNER_CAP,
        }
    }
}

/// Inputs of inexact stochastic FISTA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticConfig {
    pub gamma: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "default_params")]
    pub params: ParamFamily,
    #[serde(default)]
    pub delta: Magnitude,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub weak_inexactness: bool,
    #[serde(default)]
    pub perturb_direction: PerturbDirection,
    pub max_iters: usize,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub store_points: bool,
    #[serde(default = "default_inner_cap")]
    pub inner_cap: usize,
}

/// `gamma_k = gamma / (k^q (1 + log k)^r)` for `k >= 1`, `gamma_0 = gamma`,
/// capped at `1/L` and made nonincreasing by a running minimum.
pub fn step_size_schedule(gamma: f64, q: f64, r: f64, lipschitz: f64, len: usize) -> Vec<f64> {
    let cap = 1.0 / lipschitz;
    let mut out = Vec::with_capacity(len);
    let mut running = f64::INFINITY;
    for k in 0..len {
        let raw = if k == 0 {
            gamma
        } else {
            let kf = k as f64;
            gamma / (kf.powf(q) * (1.0 + kf.ln()).powf(r))
        };
        running = running.min(raw.min(cap));
        out.push(running);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub t_k: f64,
    pub gamma_k: f64,
    pub delta_k: f64,
    /// `|b_k|`, or the realized `|u_hat - grad f|` in stochastic runs.
    pub b_norm: f64,
    pub objective: f64,
    pub f_gap: Option<f64>,
    pub energy: Option<f64>,
    /// Convergence bound on `f_gap`; absent at `k = 0`.
    pub bound_rhs: Option<f64>,
    /// Certified excess of the step's prox objective.
    pub cert_excess: f64,
    pub x_dist_to_ref: Option<f64>,
    /// `gamma_k t_{k-1}^2`.
    pub growth: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TracePoints {
    pub x: Vec<Point>,
    pub y: Vec<Point>,
    pub v: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    pub points: Option<TracePoints>,
    /// Iterate after the last recorded step.
    pub x_final: Point,
}

impl SolverTrace {
    pub fn gaps(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.f_gap).collect()
    }

    /// Largest `f_gap - bound_rhs` over rows with a bound (0 when none).
    pub fn max_bound_violation(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| Some(r.f_gap? - r.bound_rhs?))
            .fold(0.0, f64::max)
    }
}

/// `E_k = 2 gamma_k t_{k-1}^2 r_k + |v_k - x_*|^2`.
pub fn energy(gap: f64, v: &Point, x_star: &Point, gamma_k: f64, t_prev: f64) -> f64 {
    let d = v - x_star;
    2.0 * gamma_k * t_prev * t_prev * gap + d.dot(&d)
}

fn dist_sq(a: &Point, b: &Point) -> f64 {
    let d = a - b;
    d.dot(&d)
}

fn check_steps(k: usize, lens: &[usize]) -> Result<(), SolverError> {
    if k == 0 {
        return Err(SolverError::BoundAtZero);
    }
    match lens.iter().find(|&&l| l < k) {
        Some(&got) => Err(SolverError::BoundInputs { got, needed: k }),
        None => Ok(()),
    }
}

/// Deterministic convergence bound at `k >= 1`:
///
/// ```text
/// [ (10/9)(|x_0 - x_*|^2 + sum t_i^2 delta1_i^2) + 4 (sum t_i delta2_i + gamma sum t_i |b_i|)^2 ]
///   / (2 gamma t_{k-1}^2),  sums over i < k.
/// ```
#[allow(clippy::too_many_arguments)]
pub fn theorem_bound_deterministic(
    k: usize,
    x0: &Point,
    x_star: &Point,
    gamma: f64,
    t: &[f64],
    delta1: &[f64],
    delta2: &[f64],
    b_norm: &[f64],
) -> Result<f64, SolverError> {
    check_steps(k, &[t.len(), delta1.len(), delta2.len(), b_norm.len()])?;
    let mut quad = dist_sq(x0, x_star);
    let mut lin = 0.0;
    let mut grad = 0.0;
    for i in 0..k {
        quad += t[i] * t[i] * delta1[i] * delta1[i];
        lin += t[i] * delta2[i];
        grad += t[i] * b_norm[i];
    }
    let s = lin + gamma * grad;
    Ok((10.0 / 9.0 * quad + 4.0 * s * s) / (2.0 * gamma * t[k - 1] * t[k - 1]))
}

/// Bound for the `e = 0` variant: `delta1 = delta`, `delta2 = 0`.
pub fn theorem_bound_deterministic_weak(
    k: usize,
    x0: &Point,
    x_star: &Point,
    gamma: f64,
    t: &[f64],
    delta: &[f64],
    b_norm: &[f64],
) -> Result<f64, SolverError> {
    let zeros = vec![0.0; delta.len()];
    theorem_bound_deterministic(k, x0, x_star, gamma, t, delta, &zeros, b_norm)
}

/// Stochastic convergence bound on `E F(x_k) - F_*` at `k >= 1`:
///
/// ```text
/// [ (10/9)(|x_0 - x_*|^2 + sum (2 gamma_i t_i^2 delta_i sigma + 2 sigma^2 gamma_i^2 t_i^2 + t_i^2 delta1_i^2))
///   + 4 (sum t_i delta2_i)^2 ] / (2 gamma_k t_{k-1}^2).
/// ```
///
/// `gammas` must hold `gamma_0..=gamma_k`.
#[allow(clippy::too_many_arguments)]
pub fn theorem_bound_stochastic(
    k: usize,
    x0: &Point,
    x_star: &Point,
    gammas: &[f64],
    t: &[f64],
    delta: &[f64],
    delta1: &[f64],
    delta2: &[f64],
    sigma: f64,
) -> Result<f64, SolverError> {
    check_steps(k, &[t.len(), delta.len(), delta1.len(), delta2.len()])?;
    check_steps(k + 1, &[gammas.len()])?;
    let mut quad = dist_sq(x0, x_star);
    let mut lin = 0.0;
    for i in 0..k {
        let (g, tt) = (gammas[i], t[i] * t[i]);
        quad += 2.0 * g * tt * delta[i] * sigma + 2.0 * sigma * sigma * g * g * tt + tt * delta1[i] * delta1[i];
        lin += t[i] * delta2[i];
    }
    Ok((10.0 / 9.0 * quad + 4.0 * lin * lin) / (2.0 * gammas[k] * t[k - 1] * t[k - 1]))
}

/// Running sums behind the bound column.
#[derive(Debug, Clone, Copy)]
enum BoundKind {
    Deterministic { gamma: f64 },
    Stochastic { sigma: f64 },
}

#[derive(Debug, Clone, Copy)]
struct BoundAccumulator {
    kind: BoundKind,
    weak: bool,
    quad: f64,
    lin: f64,
}

impl BoundAccumulator {
    fn new(kind: BoundKind, weak: bool, x0_dist_sq: f64) -> Self {
        BoundAccumulator {
            kind,
            weak,
            quad: x0_dist_sq,
            lin: 0.0,
        }
    }

    fn rhs(&self, gamma_k: f64, t_prev: f64) -> f64 {
        (10.0 / 9.0 * self.quad + 4.0 * self.lin * self.lin) / (2.0 * gamma_k * t_prev * t_prev)
    }

    /// Adds step `i`. Without a trusted decomposition the bound uses
    /// `delta1 = delta2 = delta` (or `delta, 0` in weak mode).
    fn push(&mut self, t: f64, gamma: f64, delta: f64, b_norm: f64) {
        let (d1, d2) = if self.weak { (delta, 0.0) } else { (delta, delta) };
        let tt = t * t;
        match self.kind {
            BoundKind::Deterministic { gamma } => {
                self.quad += tt * d1 * d1;
                self.lin += t * d2 + gamma * t * b_norm;
            }
            BoundKind::Stochastic { sigma } => {
                self.quad += 2.0 * gamma * tt * delta * sigma + 2.0 * sigma * sigma * gamma * gamma * tt + tt * d1 * d1;
                self.lin += t * d2;
            }
        }
    }
}

struct DivergenceGuard {
    threshold: f64,
    streak: usize,
}

impl DivergenceGuard {
    fn new(r0: f64, tol: f64) -> Self {
        DivergenceGuard {
            threshold: DIVERGENCE_FACTOR * r0.max(tol).max(f64::MIN_POSITIVE),
            streak: 0,
        }
    }

    fn observe(&mut self, k: usize, gap: f64) -> Result<(), SolverError> {
        if gap > self.threshold {
            self.streak += 1;
            if self.streak >= DIVERGENCE_WINDOW {
                return Err(SolverError::Diverged {
                    k,
                    factor: DIVERGENCE_FACTOR,
                    window: DIVERGENCE_WINDOW,
                });
            }
        } else {
            self.streak = 0;
        }
        Ok(())
    }
}

/// Generator for one purpose of one replication.
pub fn stream_rng(seed: u64, replication: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replication << 2) | purpose);
    rng
}

/// Everything a single accelerated run needs.
struct RunSpec<'a> {
    problem: &'a CompositeProblem,
    params: &'a ParamFamily,
    gammas: &'a [f64],
    delta: &'a Magnitude,
    b: &'a GradientErrorSchedule,
    noise: NoiseSpec,
    weak: bool,
    direction: PerturbDirection,
    max_iters: usize,
    seed: u64,
    x0: Option<&'a [f64]>,
    store_points: bool,
    inner_cap: usize,
    bound: BoundKind,
}

fn starting_point(problem: &CompositeProblem, x0: Option<&[f64]>) -> Result<Point, SolverError> {
    match x0 {
        None => Ok(Array1::zeros(problem.dim())),
        Some(v) if v.len() == problem.dim() => Ok(Array1::from(v.to_vec())),
        Some(v) => Err(SolverError::Config(format!(
            "x0 has length {}, problem dimension is {}",
            v.len(),
            problem.dim()
        ))),
    }
}

fn check_step_size(problem: &CompositeProblem, gamma: f64) -> Result<(), SolverError> {
    let bound = 1.0 / problem.lipschitz();
    if !(gamma > 0.0) || gamma > bound * (1.0 + STEP_SIZE_SLACK) {
        return Err(SolverError::StepSize { gamma, bound });
    }
    Ok(())
}

fn check_schedules(delta: &Magnitude, b: &GradientErrorSchedule) -> Result<(), SolverError> {
    delta.validate().map_err(SolverError::Config)?;
    b.magnitude.validate().map_err(SolverError::Config)
}

/// Per-row quantities that depend on the reference solution.
struct RowContext<'a> {
    problem: &'a CompositeProblem,
    guard: Option<DivergenceGuard>,
}

impl RowContext<'_> {
    fn gap(&self, objective: f64) -> Option<f64> {
        self.problem.reference.as_ref().map(|r| objective - r.f_star)
    }
}

fn run_accelerated(spec: &RunSpec, replication: u64) -> Result<SolverTrace, SolverError> {
    let problem = spec.problem;
    let mut params = ParamSequence::new(spec.params.clone())?;
    let n = problem.dim();
    let x0 = starting_point(problem, spec.x0)?;
    let mut rng_prox = stream_rng(spec.seed, replication, STREAM_PROX);
    let mut rng_b = stream_rng(spec.seed, replication, STREAM_GRAD_ERROR);
    let mut rng_noise = stream_rng(spec.seed, replication, STREAM_NOISE);
    let mut stepper = ProxStepper::new(spec.direction, spec.weak);
    stepper.inner_cap = spec.inner_cap;
    let reference = problem.reference.as_ref();
    let mut bound = reference.map(|r| BoundAccumulator::new(spec.bound, spec.weak, dist_sq(&x0, &r.x_star)));
    let mut ctx = RowContext { problem, guard: None };

    let mut rows = Vec::with_capacity(spec.max_iters);
    let mut points = spec.store_points.then(TracePoints::default);
    let mut x = x0.clone();
    let mut y = x0.clone();
    let mut v = x0;
    let mut t_prev = 0.0;
    for k in 0..spec.max_iters {
        let t_k = params.t(k);
        let gamma_k = spec.gammas[k];
        let delta_k = spec.delta.at(k);

        let b = gradient_error(spec.b, k, n, &mut rng_b);
        let noise = spec.noise.sample(n, &mut rng_noise);
        let mut u = problem.smooth.gradient(&y);
        let mut b_norm = spec.b.magnitude.at(k);
        if b_norm > 0.0 {
            u += &b;
        }
        if spec.noise.sigma > 0.0 {
            b_norm = noise.dot(&noise).sqrt();
            u += &noise;
        }
        let w = &y - &(gamma_k * &u);
        let (x_next, cert) = stepper
            .step(problem, &w, gamma_k, delta_k, &mut rng_prox)
            .map_err(|source| SolverError::Prox { k, source })?;

        let objective = problem.objective(&x);
        let f_gap = ctx.gap(objective);
        if let (Some(r), Some(gap)) = (reference, f_gap) {
            let guard = ctx
                .guard
                .get_or_insert_with(|| DivergenceGuard::new(gap, r.tolerance()));
            guard.observe(k, gap)?;
        }
        let bound_rhs = match (&bound, k) {
            (Some(acc), k) if k > 0 => Some(acc.rhs(gamma_k, t_prev)),
            _ => None,
        };
        rows.push(TraceRow {
            k,
            t_k,
            gamma_k,
            delta_k,
            b_norm,
            objective,
            f_gap,
            energy: reference
                .zip(f_gap)
                .map(|(r, gap)| energy(gap, &v, &r.x_star, gamma_k, t_prev)),
            bound_rhs,
            cert_excess: cert.objective_excess_bound,
            x_dist_to_ref: reference.map(|r| dist_sq(&x, &r.x_star).sqrt()),
            growth: gamma_k * t_prev * t_prev,
        });
        if let Some(acc) = bound.as_mut() {
            acc.push(t_k, gamma_k, delta_k, b_norm);
        }
        if let Some(p) = points.as_mut() {
            p.x.push(x.clone());
            p.y.push(y.clone());
            p.v.push(v.clone());
        }

        if x_next.iter().any(|c| !c.is_finite()) {
            return Err(SolverError::NonFinite { k: k + 1 });
        }
        let t_next = params.t(k + 1);
        let b_next = beta(t_k, t_next);
        let v_next = &x + &(t_k * &(&x_next - &x));
        y = if b_next == 0.0 {
            x_next.clone()
        } else {
            &x_next + &(b_next * &(&x_next - &x))
        };
        x = x_next;
        v = v_next;
        t_prev = t_k;
    }
    Ok(SolverTrace {
        rows,
        points,
        x_final: x,
    })
}

/// Inexact FISTA: `x_{k+1} ~ prox_{gamma g}(y_k - gamma (grad f(y_k) + b_k))`
/// with accuracy `delta_k`, then `y_{k+1} = x_{k+1} + beta_{k+1}(x_{k+1} - x_k)`.
pub fn run_inexact_fista(problem: &CompositeProblem, config: &DeterministicConfig) -> Result<SolverTrace, SolverError> {
    check_step_size(problem, config.gamma)?;
    check_schedules(&config.delta, &config.b)?;
    let gammas = vec![config.gamma; config.max_iters];
    run_accelerated(
        &RunSpec {
            problem,
            params: &config.params,
            gammas: &gammas,
            delta: &config.delta,
            b: &config.b,
            noise: NoiseSpec::noiseless(),
            weak: config.weak_inexactness,
            direction: config.perturb_direction,
            max_iters: config.max_iters,
            seed: config.seed,
            x0: config.x0.as_deref(),
            store_points: config.store_points,
            inner_cap: config.inner_cap,
            bound: BoundKind::Deterministic { gamma: config.gamma },
        },
        0,
    )
}

/// Mean and standard error of the replications, per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticAggregate {
    pub mean_gap: Vec<f64>,
    /// Standard error of the mean (0 with a single replication).
    pub se_gap: Vec<f64>,
    pub bound_rhs: Vec<Option<f64>>,
    pub mean_energy: Vec<f64>,
    pub max_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticRun {
    pub traces: Vec<SolverTrace>,
    /// Present when the problem carries a reference solution.
    pub aggregate: Option<StochasticAggregate>,
    pub gammas: Vec<f64>,
}

fn aggregate(traces: &[SolverTrace]) -> Option<StochasticAggregate> {
    let len = traces.first()?.rows.len();
    let reps = traces.len() as f64;
    let mut mean_gap = Vec::with_capacity(len);
    let mut se_gap = Vec::with_capacity(len);
    let mut mean_energy = Vec::with_capacity(len);
    let mut max_energy = 0.0_f64;
    for k in 0..len {
        let gaps: Vec<f64> = traces.iter().map(|t| t.rows[k].f_gap).collect::<Option<_>>()?;
        let mean = gaps.iter().sum::<f64>() / reps;
        let se = if traces.len() > 1 {
            let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (reps - 1.0);
            (var / reps).sqrt()
        } else {
            0.0
        };
        let energies: Vec<f64> = traces.iter().map(|t| t.rows[k].energy).collect::<Option<_>>()?;
        max_energy = energies.iter().copied().fold(max_energy, f64::max);
        mean_gap.push(mean);
        se_gap.push(se);
        mean_energy.push(energies.iter().sum::<f64>() / reps);
    }
    Some(StochasticAggregate {
        mean_gap,
        se_gap,
        bound_rhs: traces[0].rows.iter().map(|r| r.bound_rhs).collect(),
        mean_energy,
        max_energy,
    })
}

/// Inexact stochastic FISTA: `x_{k+1} ~ prox_{gamma_k g}(y_k - gamma_k u_hat(y_k))` with an
/// unbiased gradient oracle of variance at most `sigma^2`. Replications use
/// independent streams and run in parallel.
pub fn run_stochastic_fista(
    problem: &CompositeProblem,
    config: &StochasticConfig,
) -> Result<StochasticRun, SolverError> {
    check_step_size(problem, config.gamma)?;
    let none = GradientErrorSchedule::none();
    check_schedules(&config.delta, &none)?;
    if config.replications == 0 {
        return Err(SolverError::Config("replications must be >= 1".into()));
    }
    if !(config.q >= 0.0) || !(config.r >= 0.0) {
        return Err(SolverError::Config(format!(
            "step-size decay needs q >= 0 and r >= 0, got q = {}, r = {}",
            config.q, config.r
        )));
    }
    if !(config.noise.sigma >= 0.0) {
        return Err(SolverError::Config(format!(
            "sigma must be >= 0, got {}",
            config.noise.sigma
        )));
    }
    let gammas = step_size_schedule(config.gamma, config.q, config.r, problem.lipschitz(), config.max_iters);
    let spec = RunSpec {
        problem,
        params: &config.params,
        gammas: &gammas,
        delta: &config.delta,
        b: &none,
        noise: config.noise,
        weak: config.weak_inexactness,
        direction: config.perturb_direction,
        max_iters: config.max_iters,
        seed: config.seed,
        x0: config.x0.as_deref(),
        store_points: config.store_points,
        inner_cap: config.inner_cap,
        bound: BoundKind::Stochastic {
            sigma: config.noise.sigma,
        },
    };
    let traces = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| run_accelerated(&spec, rep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StochasticRun {
        aggregate: aggregate(&traces),
        traces,
        gammas,
    })
}

/// Non-accelerated inexact proximal gradient,
/// `x_{k+1} ~ prox_{gamma g}(x_k - gamma (grad f(x_k) + b_k))`. The trace uses
/// `t_k = 1`.
pub fn run_proximal_gradient(
    problem: &CompositeProblem,
    config: &DeterministicConfig,
) -> Result<SolverTrace, SolverError> {
    check_step_size(problem, config.gamma)?;
    check_schedules(&config.delta, &config.b)?;
    let gamma = config.gamma;
    let n = problem.dim();
    let mut x = starting_point(problem, config.x0.as_deref())?;
    let mut rng_prox = stream_rng(config.seed, 0, STREAM_PROX);
    let mut rng_b = stream_rng(config.seed, 0, STREAM_GRAD_ERROR);
    let mut stepper = ProxStepper::new(config.perturb_direction, config.weak_inexactness);
    stepper.inner_cap = config.inner_cap;
    let reference = problem.reference.as_ref();
    let mut bound = reference.map(|r| {
        BoundAccumulator::new(
            BoundKind::Deterministic { gamma },
            config.weak_inexactness,
            dist_sq(&x, &r.x_star),
        )
    });
    let mut ctx = RowContext { problem, guard: None };
    let mut rows = Vec::with_capacity(config.max_iters);
    let mut points = config.store_points.then(TracePoints::default);
    for k in 0..config.max_iters {
        let delta_k = config.delta.at(k);
        let b = gradient_error(&config.b, k, n, &mut rng_b);
        let b_norm = config.b.magnitude.at(k);
        let mut u = problem.smooth.gradient(&x);
        if b_norm > 0.0 {
            u += &b;
        }
        let w = &x - &(gamma * &u);
        let (x_next, cert) = stepper
            .step(problem, &w, gamma, delta_k, &mut rng_prox)
            .map_err(|source| SolverError::Prox { k, source })?;

        let t_prev = if k == 0 { 0.0 } else { 1.0 };
        let objective = problem.objective(&x);
        let f_gap = ctx.gap(objective);
        if let (Some(r), Some(gap)) = (reference, f_gap) {
            let guard = ctx
                .guard
                .get_or_insert_with(|| DivergenceGuard::new(gap, r.tolerance()));
            guard.observe(k, gap)?;
        }
        rows.push(TraceRow {
            k,
            t_k: 1.0,
            gamma_k: gamma,
            delta_k,
            b_norm,
            objective,
            f_gap,
            energy: reference
                .zip(f_gap)
                .map(|(r, gap)| energy(gap, &x, &r.x_star, gamma, t_prev)),
            bound_rhs: bound.as_ref().filter(|_| k > 0).map(|acc| acc.rhs(gamma, t_prev)),
            cert_excess: cert.objective_excess_bound,
            x_dist_to_ref: reference.map(|r| dist_sq(&x, &r.x_star).sqrt()),
            growth: gamma * t_prev * t_prev,
        });
        if let Some(acc) = bound.as_mut() {
            acc.push(1.0, gamma, delta_k, b_norm);
        }
        if let Some(p) = points.as_mut() {
            p.x.push(x.clone());
            p.y.push(x.clone());
            p.v.push(x.clone());
        }
        if x_next.iter().any(|c| !c.is_finite()) {
            return Err(SolverError::NonFinite { k: k + 1 });
        }
        x = x_next;
    }
    Ok(SolverTrace {
        rows,
        points,
        x_final: x,
    })
}
