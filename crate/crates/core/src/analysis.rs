//! Sequence-lemma bounds with brute-force extremal oracles, the Cesàro
//! representation, a summable-drift check, log-log rate fits and the
//! feasibility test for step-size and error schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute slack for oracle-versus-bound comparisons.
pub const ORACLE_TOL: f64 = 1e-9;
/// Slack on the monotonicity of the drift-corrected sequence.
pub const DRIFT_TOL: f64 = 1e-12;
/// Gaps below this value are clipped before taking logs.
pub const GAP_FLOOR: f64 = 1e-16;
pub const FIT_POINTS_PER_DECADE: f64 = 32.0;
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{what} has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{what}[{index}] = {value} must be >= 0")]
    Negative {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("sigma decreases at k = {index}")]
    SigmaDecreasing { index: usize },
    #[error("lambda[{index}] = {value} must be > 0")]
    NonPositiveLambda { index: usize, value: f64 },
    #[error("not a summable-drift instance: alpha[{k}+1] - alpha[{k}] = {drift} > eps[{k}] = {eps}")]
    DriftHypothesis { k: usize, drift: f64, eps: f64 },
    #[error("window [{k_min}, {k_max}] is invalid for {len} values")]
    Window { k_min: usize, k_max: usize, len: usize },
    #[error("rate fit needs at least {min} points, got {got}")]
    TooFewPoints { got: usize, min: usize },
}

fn check_nonnegative(what: &'static str, v: &[f64]) -> Result<(), AnalysisError> {
    match v.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        Some((index, &value)) => Err(AnalysisError::Negative { what, index, value }),
        None => Ok(()),
    }
}

fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), AnalysisError> {
    if v.len() != expected {
        return Err(AnalysisError::Length {
            what,
            got: v.len(),
            expected,
        });
    }
    Ok(())
}

/// Bounds on `max_{i<=k} sqrt(mu_i)` for `mu_k <= sigma_k + sum_{i<=k} lambda_i sqrt(mu_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BihariBound {
    /// `L/2 + sqrt((L/2)^2 + sigma_k)` with `L = sum_{i<=k} lambda_i`.
    pub tight: Vec<f64>,
    /// `L + sqrt(sigma_k)`.
    pub loose: Vec<f64>,
}

pub fn bihari_bound(lambdas: &[f64], sigmas: &[f64]) -> Result<BihariBound, AnalysisError> {
    check_len("sigmas", sigmas, lambdas.len())?;
    check_nonnegative("lambdas", lambdas)?;
    check_nonnegative("sigmas", sigmas)?;
    if let Some(index) = (1..sigmas.len()).find(|&k| sigmas[k] < sigmas[k - 1]) {
        return Err(AnalysisError::SigmaDecreasing { index });
    }
    let mut big_l = 0.0;
    let mut tight = Vec::with_capacity(lambdas.len());
    let mut loose = Vec::with_capacity(lambdas.len());
    for (l, s) in lambdas.iter().zip(sigmas) {
        big_l += l;
        let h = 0.5 * big_l;
        tight.push(h + (h * h + s).sqrt());
        loose.push(big_l + s.sqrt());
    }
    Ok(BihariBound { tight, loose })
}

/// Largest root in `s` of `s^2 = c + lambda s`.
fn larger_root(lambda: f64, c: f64) -> f64 {
    0.5 * (lambda + (lambda * lambda + 4.0 * c).sqrt())
}

/// Maximal sequence with `mu_k = sigma_k + sum_{i<=k} lambda_i sqrt(mu_i)`, returned as `sqrt(mu_k)`.
pub fn bihari_extremal(lambdas: &[f64], sigmas: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(lambdas.len());
    for (l, s) in lambdas.iter().zip(sigmas) {
        let root = larger_root(*l, s + acc);
        acc += l * root;
        out.push(root);
    }
    out
}

/// Bounds for `alpha_{k+1} <= alpha_k + lambda_k sqrt(alpha_{k+1}) + xi_k`,
/// indexed by `k` (entry `k` bounds `alpha_{k+1}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceBound {
    /// `(10/9)(alpha_0 + sum xi) + (sum lambda)^2`.
    pub ten_ninths: Vec<f64>,
    /// `(sum lambda + sqrt(alpha_0 + sum xi))^2`, from the bound on `max sqrt(alpha_i)`.
    pub max_sqrt: Vec<f64>,
    /// Square of the tight discrete Bihari-LaSalle bound with `mu_k = alpha_{k+1}`.
    pub bihari_squared: Vec<f64>,
    /// `2 (alpha_0 + sum xi) + (sum lambda)^2`, which dominates `bihari_squared`.
    pub two_constant: Vec<f64>,
}

pub fn recurrence_bound(alpha0: f64, lambdas: &[f64], xis: &[f64]) -> Result<RecurrenceBound, AnalysisError> {
    check_len("xis", xis, lambdas.len())?;
    check_nonnegative("alpha0", &[alpha0])?;
    check_nonnegative("lambdas", lambdas)?;
    check_nonnegative("xis", xis)?;
    let mut sigma = alpha0;
    let mut sigmas = Vec::with_capacity(xis.len());
    for xi in xis {
        sigma += xi;
        sigmas.push(sigma);
    }
    let bihari = bihari_bound(lambdas, &sigmas)?;
    let mut out = RecurrenceBound {
        ten_ninths: Vec::with_capacity(xis.len()),
        max_sqrt: Vec::with_capacity(xis.len()),
        bihari_squared: bihari.tight.iter().map(|b| b * b).collect(),
        two_constant: Vec::with_capacity(xis.len()),
    };
    let mut big_l = 0.0;
    for (l, s) in lambdas.iter().zip(&sigmas) {
        big_l += l;
        out.ten_ninths.push(10.0 / 9.0 * s + big_l * big_l);
        out.two_constant.push(2.0 * s + big_l * big_l);
        let m = big_l + s.sqrt();
        out.max_sqrt.push(m * m);
    }
    Ok(out)
}

/// Maximal sequence `alpha_0, alpha_1, ...` with equality in the recursion.
pub fn recurrence_extremal(alpha0: f64, lambdas: &[f64], xis: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(lambdas.len() + 1);
    let mut a = alpha0;
    out.push(a);
    for (l, xi) in lambdas.iter().zip(xis) {
        let root = larger_root(*l, a + xi);
        a = root * root;
        out.push(a);
    }
    out
}

/// Weights `mu_0 = 1`, `mu_{k+1} = mu_k (1 + lambda_k) / lambda_{k+1}`.
pub fn cesaro_weights(lambdas: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if let Some((index, &value)) = lambdas.iter().enumerate().find(|(_, l)| !(**l > 0.0)) {
        return Err(AnalysisError::NonPositiveLambda { index, value });
    }
    let mut mu = Vec::with_capacity(lambdas.len());
    let mut m = 1.0;
    for k in 0..lambdas.len() {
        if k > 0 {
            m *= (1.0 + lambdas[k - 1]) / lambdas[k];
        }
        mu.push(m);
    }
    Ok(mu)
}

/// Recovers `a_0, ..., a_K` from `b_k = a_{k+1} + lambda_k (a_{k+1} - a_k)`
/// as weighted averages
/// `a_{k+1} = (mu_0 lambda_0 a_0 + sum_{i<=k} mu_i b_i) / (mu_0 lambda_0 + sum_{i<=k} mu_i)`.
pub fn cesaro_reconstruct(a0: f64, lambdas: &[f64], bs: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    check_len("bs", bs, lambdas.len())?;
    let mu = cesaro_weights(lambdas)?;
    let mut out = Vec::with_capacity(bs.len() + 1);
    out.push(a0);
    if bs.is_empty() {
        return Ok(out);
    }
    let mut num = mu[0] * lambdas[0] * a0;
    let mut den = mu[0] * lambdas[0];
    for (m, b) in mu.iter().zip(bs) {
        num += m * b;
        den += m;
        out.push(num / den);
    }
    Ok(out)
}

/// Direct unrolling `a_{k+1} = (b_k + lambda_k a_k) / (1 + lambda_k)`.
pub fn cesaro_unroll(a0: f64, lambdas: &[f64], bs: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    check_len("bs", bs, lambdas.len())?;
    cesaro_weights(lambdas)?;
    let mut out = Vec::with_capacity(bs.len() + 1);
    let mut a = a0;
    out.push(a);
    for (l, b) in lambdas.iter().zip(bs) {
        a = (b + l * a) / (1.0 + l);
        out.push(a);
    }
    Ok(out)
}

/// `b_k = a_{k+1} + lambda_k (a_{k+1} - a_k)`.
pub fn cesaro_forward(a: &[f64], lambdas: &[f64]) -> Vec<f64> {
    a.windows(2)
        .zip(lambdas)
        .map(|(w, l)| w[1] + l * (w[1] - w[0]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub is_quasi_monotone: bool,
    /// `max - min` of alpha over the last quarter of the horizon.
    pub tail_oscillation: f64,
    /// First `k` where `u_{k+1} > u_k + tol`, if any.
    pub first_increase: Option<usize>,
}

/// Checks `alpha_{k+1} - alpha_k <= eps_k`, then that
/// `u_k = alpha_k + sum_{k<=i<K} eps_i` is nonincreasing.
pub fn summable_drift_converges(alphas: &[f64], epsilons: &[f64]) -> Result<DriftReport, AnalysisError> {
    let n = alphas.len();
    if n < 2 || epsilons.len() < n - 1 {
        return Err(AnalysisError::Length {
            what: "epsilons",
            got: epsilons.len(),
            expected: n.saturating_sub(1),
        });
    }
    check_nonnegative("epsilons", &epsilons[..n - 1])?;
    for k in 0..n - 1 {
        let drift = alphas[k + 1] - alphas[k];
        let tol = DRIFT_TOL * alphas[k].abs().max(alphas[k + 1].abs()).max(1.0);
        if drift > epsilons[k] + tol {
            return Err(AnalysisError::DriftHypothesis {
                k,
                drift,
                eps: epsilons[k],
            });
        }
    }
    let mut tail = 0.0;
    let mut u = vec![0.0; n];
    for k in (0..n).rev() {
        u[k] = alphas[k] + tail;
        if k > 0 {
            tail += epsilons[k - 1];
        }
    }
    let first_increase = (0..n - 1).find(|&k| u[k + 1] > u[k] + DRIFT_TOL * u[k].abs().max(1.0));
    let start = n - (n / 4).max(1);
    let window = &alphas[start..];
    let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DriftReport {
        is_quasi_monotone: first_increase.is_none(),
        tail_oscillation: hi - lo,
        first_increase,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
    /// Points whose gap was clipped at [`GAP_FLOOR`].
    pub clipped: usize,
}

/// Geometric grid with [`FIT_POINTS_PER_DECADE`] points per decade on `[k_min, k_max]`.
pub fn geometric_grid(k_min: usize, k_max: usize) -> Vec<usize> {
    let decades = (k_max as f64 / k_min as f64).log10();
    let steps = (decades * FIT_POINTS_PER_DECADE).ceil() as usize;
    let mut grid: Vec<usize> = (0..=steps)
        .map(|j| {
            let k = (k_min as f64) * 10f64.powf(j as f64 / FIT_POINTS_PER_DECADE);
            (k.round() as usize).clamp(k_min, k_max)
        })
        .collect();
    grid.dedup();
    grid
}

/// Least-squares line through `(log k, log gaps[k])` on a geometric grid in
/// `[k_min, k_max]`.
pub fn rate_fit(gaps: &[f64], k_min: usize, k_max: usize) -> Result<RateFit, AnalysisError> {
    if k_min < 1 || k_max <= k_min || k_max >= gaps.len() {
        return Err(AnalysisError::Window {
            k_min,
            k_max,
            len: gaps.len(),
        });
    }
    let mut clipped = 0;
    let pts: Vec<(f64, f64)> = geometric_grid(k_min, k_max)
        .into_iter()
        .filter(|&k| !gaps[k].is_nan())
        .map(|k| {
            let g = if gaps[k] < GAP_FLOOR {
                clipped += 1;
                GAP_FLOOR
            } else {
                gaps[k]
            };
            ((k as f64).ln(), g.ln())
        })
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(AnalysisError::TooFewPoints {
            got: pts.len(),
            min: MIN_FIT_POINTS,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (sse / n).sqrt(),
        points: pts.len(),
        clipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// Stochastic schedule: `p > alpha + 1` and either
    /// `alpha + 1/2 < q < 2 alpha` or (`alpha + 1/2 <= q < 2 alpha` and `r > 1/2`).
    pub iterate_convergence_guaranteed: bool,
    /// `2 alpha - q`.
    pub predicted_rate_exponent: f64,
    /// Power of `1 + log k` in the rate.
    pub log_power: f64,
    /// Deterministic errors: `p > 1 + alpha`.
    pub deterministic_condition: bool,
    /// Weak (`e = 0`) prox errors: `p > 1/2 + alpha`.
    pub weak_prox_condition: bool,
}

/// Exponent conditions for `t_k ~ k^alpha`, `delta_k = O(k^-p)` and
/// `gamma_k = gamma / (k^q (1 + log k)^r)`.
pub fn schedule_feasibility(alpha: f64, p: f64, q: f64, r: f64) -> Feasibility {
    let half = alpha + 0.5;
    let strict = half < q && q < 2.0 * alpha;
    let boundary = half <= q && q < 2.0 * alpha && r > 0.5;
    Feasibility {
        iterate_convergence_guaranteed: (strict || boundary) && p > alpha + 1.0,
        predicted_rate_exponent: 2.0 * alpha - q,
        log_power: r,
        deterministic_condition: p > 1.0 + alpha,
        weak_prox_condition: p > 0.5 + alpha,
    }
}

/// Outcome of a seeded oracle battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub instances: usize,
    pub violations: usize,
    /// Largest `oracle - bound` seen (negative when every bound held with room).
    pub worst_excess: f64,
}

impl OracleCheck {
    fn new(name: &str) -> Self {
        OracleCheck {
            name: name.into(),
            instances: 0,
            violations: 0,
            worst_excess: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, excess: f64) {
        self.worst_excess = self.worst_excess.max(excess);
        if excess > ORACLE_TOL {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Random nonnegative sequences with magnitudes spread over several decades.
fn random_sequence(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.gen_range(-3.0..1.0));
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                scale * rng.gen::<f64>()
            }
        })
        .collect()
}

/// Bihari-LaSalle battery: the maximal sequence against the tight and loose
/// bounds.
pub fn bihari_oracle_suite(seed: u64, instances: usize) -> Vec<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tight = OracleCheck::new("bihari_tight");
    let mut loose = OracleCheck::new("bihari_loose");
    for _ in 0..instances {
        let len = rng.gen_range(1..=60);
        let lambdas = random_sequence(&mut rng, len);
        let mut s = 0.0;
        let sigmas: Vec<f64> = random_sequence(&mut rng, len)
            .into_iter()
            .map(|d| {
                s += d;
                s
            })
            .collect();
        let bound = bihari_bound(&lambdas, &sigmas).expect("generated instance is valid");
        let mu = bihari_extremal(&lambdas, &sigmas);
        let mut running = 0.0_f64;
        let (mut e_tight, mut e_loose) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (k, &m) in mu.iter().enumerate().take(len) {
            running = running.max(m);
            e_tight = e_tight.max(running - bound.tight[k]);
            e_loose = e_loose.max(running - bound.loose[k]);
        }
        tight.instances += 1;
        loose.instances += 1;
        tight.record(e_tight);
        loose.record(e_loose);
    }
    vec![tight, loose]
}

/// Recursive-inequality battery: the extremal sequence against the
/// `max sqrt` bound, the `10/9` bound and the constant-2 bound. Both
/// indexings of the Bihari-LaSalle bound are cross-checked through
/// `bihari_squared` (as `mu_k = alpha_{k+1}`) and `max_sqrt` (over
/// `alpha_0..=alpha_{k+1}`).
pub fn recurrence_oracle_suite(seed: u64, instances: usize) -> Vec<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_sqrt = OracleCheck::new("recurrence_max_sqrt");
    let mut shifted = OracleCheck::new("recurrence_bihari_shifted");
    let mut ten_ninths = OracleCheck::new("recurrence_ten_ninths");
    let mut two = OracleCheck::new("recurrence_two_constant");
    for _ in 0..instances {
        let len = rng.gen_range(1..=60);
        let alpha0 = 10f64.powf(rng.gen_range(-3.0..1.0));
        let lambdas = random_sequence(&mut rng, len);
        let xis = random_sequence(&mut rng, len);
        let bound = recurrence_bound(alpha0, &lambdas, &xis).expect("generated instance is valid");
        let alpha = recurrence_extremal(alpha0, &lambdas, &xis);
        let mut running = alpha0.sqrt();
        let mut e = [f64::NEG_INFINITY; 4];
        for k in 0..len {
            let next = alpha[k + 1];
            running = running.max(next.sqrt());
            e[0] = e[0].max(running - bound.max_sqrt[k].sqrt());
            e[1] = e[1].max(next - bound.bihari_squared[k]);
            e[2] = e[2].max(next - bound.ten_ninths[k]);
            e[3] = e[3].max(next - bound.two_constant[k]);
        }
        for (check, excess) in [&mut max_sqrt, &mut shifted, &mut ten_ninths, &mut two]
            .into_iter()
            .zip(e)
        {
            check.instances += 1;
            check.record(excess);
        }
    }
    vec![max_sqrt, shifted, ten_ninths, two]
}

/// Largest relative round-trip error of [`cesaro_reconstruct`] over random
/// `(a, lambda)` instances with `lambda` in `[0.1, 10]`.
pub fn cesaro_round_trip_suite(seed: u64, instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let len = rng.gen_range(1..=50);
        let a: Vec<f64> = (0..=len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lambdas: Vec<f64> = (0..len).map(|_| 10f64.powf(rng.gen_range(-1.0..1.0))).collect();
        let b = cesaro_forward(&a, &lambdas);
        let rec = cesaro_reconstruct(a[0], &lambdas, &b).expect("positive lambdas");
        worst = worst.max(relative_error(&rec, &a));
    }
    worst
}

/// `max |x - y| / max(max |y|, tiny)`.
pub fn relative_error(x: &[f64], y: &[f64]) -> f64 {
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    x.iter().zip(y).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

/// `sup_{k >= K/2} |x_k - x_K|` over the stored iterates `x_0..=x_K`.
pub fn tail_spread(points: &[crate::Point], big_k: usize) -> f64 {
    let last = &points[big_k];
    points[big_k / 2..=big_k]
        .iter()
        .map(|x| {
            let d = x - last;
            d.dot(&d).sqrt()
        })
        .fold(0.0, f64::max)
}
