//! Acceleration-parameter sequences `t_k` for FISTA.
//!
//! A sequence is admissible when `t_0 = 1` and, for `k >= 1`, `t_k >= 1` and
//! `t_k^2 - t_k <= t_{k-1}^2`. The families generated here are all
//! increasing; [`validate_admissible`] accepts arbitrary prefixes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the quadratic admissibility inequality, scaled by
/// `max(1, t_{k-1}^2)`.
pub const ADMISSIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("phi is defined on [1, inf), got t = {0}")]
    PhiDomain(f64),
    #[error("linear family requires a >= 2, got a = {0}")]
    LinearRate(f64),
    #[error("power family requires 0 < alpha <= 1, got alpha = {0}")]
    PowerExponent(f64),
    #[error("explicit parameter list is not admissible: {0}")]
    NotAdmissible(Violation),
}

/// Base sequence raised to a power in [`ParamFamily::Power`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerBase {
    /// `(k + 2) / 2`
    LinearHalf,
    /// the critical recursion `s_k = phi(s_{k-1})`
    Critical,
}

/// Admissible families. Serialized as a tagged record, e.g.
/// `{"family":"power","alpha":0.5,"base":"critical"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ParamFamily {
    /// `t_k = 1`: plain proximal gradient.
    ConstantOne,
    /// `t_k = (k + a) / a` with `a >= 2`.
    Linear { a: f64 },
    /// `t_k = phi(t_{k-1})`, equality in the admissibility inequality.
    Critical,
    /// `t_k = s_k^alpha` over a linear-half or critical base.
    Power { alpha: f64, base: PowerBase },
    /// Fixed values; the last value is repeated past the end of the list.
    Explicit { values: Vec<f64> },
}

impl ParamFamily {
    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            ParamFamily::Linear { a } if !(*a >= 2.0) || !a.is_finite() => Err(ParamError::LinearRate(*a)),
            ParamFamily::Power { alpha, .. } if !(*alpha > 0.0 && *alpha <= 1.0) => {
                Err(ParamError::PowerExponent(*alpha))
            }
            ParamFamily::Explicit { values } => {
                let report = validate_admissible(values);
                match report.first_violation {
                    Some(v) => Err(ParamError::NotAdmissible(v)),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Growth exponent `alpha` with `t_k ~ k^alpha` (0 for bounded families).
    pub fn growth_exponent(&self) -> f64 {
        match self {
            ParamFamily::ConstantOne | ParamFamily::Explicit { .. } => 0.0,
            ParamFamily::Linear { .. } | ParamFamily::Critical => 1.0,
            ParamFamily::Power { alpha, .. } => *alpha,
        }
    }

    /// Family with `t_k ~ k^alpha`: critical for `alpha = 1`, a power of the
    /// critical recursion otherwise, constant one for `alpha = 0`.
    pub fn with_growth(alpha: f64) -> Result<Self, ParamError> {
        let family = if alpha == 0.0 {
            ParamFamily::ConstantOne
        } else if alpha == 1.0 {
            ParamFamily::Critical
        } else {
            ParamFamily::Power {
                alpha,
                base: PowerBase::Critical,
            }
        };
        family.validate()?;
        Ok(family)
    }
}

/// `phi(t) = (1 + sqrt(1 + 4 t^2)) / 2`, the largest admissible successor of `t`.
pub fn phi(t: f64) -> Result<f64, ParamError> {
    if !(t >= 1.0) {
        return Err(ParamError::PhiDomain(t));
    }
    Ok(phi_unchecked(t))
}

fn phi_unchecked(t: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0
}

/// Momentum coefficient `beta_{k+1} = (t_k - 1) / t_{k+1}`.
pub fn beta(t_k: f64, t_next: f64) -> f64 {
    (t_k - 1.0) / t_next
}

/// Lazily extended admissible sequence `t_0 = 1, t_1, ...`.
///
/// The convention `t_{-1} = 0` used by the energy is exposed through
/// [`ParamSequence::t_prev`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSequence {
    family: ParamFamily,
    values: Vec<f64>,
    // critical recursion underlying `Power { base: Critical }`
    base: Vec<f64>,
}

impl ParamSequence {
    pub fn new(family: ParamFamily) -> Result<Self, ParamError> {
        family.validate()?;
        Ok(ParamSequence {
            family,
            values: vec![1.0],
            base: vec![1.0],
        })
    }

    pub fn family(&self) -> &ParamFamily {
        &self.family
    }

    /// Number of generated terms.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Appends and returns the next term.
    pub fn next_t(&mut self) -> f64 {
        let k = self.values.len();
        let prev = self.values[k - 1];
        let t = match &self.family {
            ParamFamily::ConstantOne => 1.0,
            ParamFamily::Linear { a } => (k as f64 + a) / a,
            ParamFamily::Critical => phi_unchecked(prev),
            ParamFamily::Power { alpha, base } => match base {
                PowerBase::LinearHalf => ((k as f64 + 2.0) / 2.0).powf(*alpha),
                PowerBase::Critical => {
                    let s = phi_unchecked(self.base[k - 1]);
                    self.base.push(s);
                    s.powf(*alpha)
                }
            },
            ParamFamily::Explicit { values } => values.get(k).copied().unwrap_or(*values.last().unwrap_or(&1.0)),
        };
        self.values.push(t);
        t
    }

    /// `t_k`, extending the sequence as needed.
    pub fn t(&mut self, k: usize) -> f64 {
        while self.values.len() <= k {
            self.next_t();
        }
        self.values[k]
    }

    /// `t_{k-1}` with the convention `t_{-1} = 0`.
    pub fn t_prev(&mut self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.t(k - 1)
        }
    }

    /// First `len` terms.
    pub fn prefix(&mut self, len: usize) -> Vec<f64> {
        if len > 0 {
            self.t(len - 1);
        }
        self.values[..len].to_vec()
    }
}

/// Where and why a prefix fails admissibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "k = {}: {}", self.index, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub ok: bool,
    pub first_violation: Option<Violation>,
}

/// Checks `t_0 = 1`, `t_k >= 1` and `t_k^2 - t_k <= t_{k-1}^2` along a prefix.
pub fn validate_admissible(prefix: &[f64]) -> AdmissibilityReport {
    let fail = |index: usize, reason: String| AdmissibilityReport {
        ok: false,
        first_violation: Some(Violation { index, reason }),
    };
    match prefix.first() {
        None => return fail(0, "empty prefix".into()),
        Some(&t0) if t0 != 1.0 => return fail(0, format!("t_0 = {t0}, expected 1")),
        _ => {}
    }
    for k in 1..prefix.len() {
        let (prev, t) = (prefix[k - 1], prefix[k]);
        if !t.is_finite() || t < 1.0 {
            return fail(k, format!("t_k = {t} < 1"));
        }
        let residual = t * t - t - prev * prev;
        if residual > ADMISSIBILITY_TOL * (prev * prev).max(1.0) {
            return fail(
                k,
                format!("t_k^2 - t_k - t_(k-1)^2 = {residual:e} > 0 (t_k = {t}, t_(k-1) = {prev})"),
            );
        }
    }
    AdmissibilityReport {
        ok: true,
        first_violation: None,
    }
}
