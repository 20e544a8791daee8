//! Processing-time and interarrival laws.
//!
//! A [`Law`] wraps a [`DistributionSpec`] with its first two moments and
//! exposes the tail `F̄`, the tail work `H(x) = E[v; v > x]`, the scale
//! function `S = 1/H` and its right-continuous inverse.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Parameters of a supported law.
///
/// Weibull `scale` is the rate `μ` in `F̄(x) = exp(-(μx)^α)`. Pareto with
/// `index = p` has tail `(x_m / x)^(p+1)` above `x_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Weibull { scale: f64, shape: f64 },
    Pareto { index: f64, x_m: f64 },
    Uniform { lo: f64, hi: f64 },
    Deterministic { value: f64 },
}

impl DistributionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Weibull { .. } => "weibull",
            Self::Pareto { .. } => "pareto",
            Self::Uniform { .. } => "uniform",
            Self::Deterministic { .. } => "deterministic",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Self::Exponential { rate } if !pos(rate) => bad(format!("exponential rate {rate}")),
            Self::Weibull { scale, shape } if !pos(scale) || !pos(shape) => {
                bad(format!("weibull scale {scale}, shape {shape}"))
            }
            Self::Pareto { index, x_m } if !(index.is_finite() && index > 1.0) || !pos(x_m) => {
                bad(format!("pareto index {index} (must exceed 1), x_m {x_m}"))
            }
            Self::Uniform { lo, hi } if !(lo.is_finite() && lo >= 0.0) || !(hi.is_finite() && hi > lo) => {
                bad(format!("uniform bounds [{lo}, {hi}]"))
            }
            Self::Deterministic { value } if !pos(value) => bad(format!("deterministic value {value}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Exponential { rate } => write!(f, "exponential:{rate}"),
            Self::Weibull { scale, shape } => write!(f, "weibull:{scale},{shape}"),
            Self::Pareto { index, x_m } => write!(f, "pareto:{index},{x_m}"),
            Self::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            Self::Deterministic { value } => write!(f, "deterministic:{value}"),
        }
    }
}

/// Parses the shorthand `kind:p1[,p2]`, e.g. `exponential:1` or `weibull:1,2`.
impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("expected kind:params, got {s:?}")))?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidParameter(format!("{s:?}: {e}")))?;
        let arity = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{kind} takes {n} parameter(s), got {}", nums.len())))
            }
        };
        let spec = match kind.trim().to_ascii_lowercase().as_str() {
            "exponential" | "exp" => {
                arity(1)?;
                Self::Exponential { rate: nums[0] }
            }
            "weibull" => {
                arity(2)?;
                Self::Weibull { scale: nums[0], shape: nums[1] }
            }
            "pareto" => {
                arity(2)?;
                Self::Pareto { index: nums[0], x_m: nums[1] }
            }
            "uniform" => {
                arity(2)?;
                Self::Uniform { lo: nums[0], hi: nums[1] }
            }
            "deterministic" | "det" => {
                arity(1)?;
                Self::Deterministic { value: nums[0] }
            }
            other => return Err(Error::InvalidParameter(format!("unknown law kind {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A validated law with cached moments.
///
/// Serializes as its [`DistributionSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct Law {
    spec: DistributionSpec,
    mean: f64,
    variance: f64,
    quadrature_tol: f64,
}

impl TryFrom<DistributionSpec> for Law {
    type Error = Error;
    fn try_from(spec: DistributionSpec) -> Result<Self> {
        Law::new(spec)
    }
}

impl From<Law> for DistributionSpec {
    fn from(law: Law) -> Self {
        law.spec
    }
}

const QUAD_REL_TOL: f64 = 1e-13;
const MAX_PANELS: usize = 200;

impl Law {
    pub fn new(spec: DistributionSpec) -> Result<Self> {
        spec.validate()?;
        let (mean, variance) = match spec {
            DistributionSpec::Exponential { rate } => (1.0 / rate, 1.0 / (rate * rate)),
            DistributionSpec::Weibull { scale, shape } => {
                let g1 = libm::tgamma(1.0 + 1.0 / shape);
                let g2 = libm::tgamma(1.0 + 2.0 / shape);
                (g1 / scale, (g2 - g1 * g1) / (scale * scale))
            }
            DistributionSpec::Pareto { index: p, x_m } => {
                let var = if p > 1.0 { x_m * x_m * (p + 1.0) / (p * p * (p - 1.0)) } else { f64::INFINITY };
                ((p + 1.0) * x_m / p, var)
            }
            DistributionSpec::Uniform { lo, hi } => (0.5 * (lo + hi), (hi - lo) * (hi - lo) / 12.0),
            DistributionSpec::Deterministic { value } => (value, 0.0),
        };
        Ok(Law { spec, mean, variance, quadrature_tol: 1e-10 })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(DistributionSpec::Exponential { rate })
    }

    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Self::new(DistributionSpec::Weibull { scale, shape })
    }

    pub fn pareto(index: f64, x_m: f64) -> Result<Self> {
        Self::new(DistributionSpec::Pareto { index, x_m })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DistributionSpec::Uniform { lo, hi })
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::new(DistributionSpec::Deterministic { value })
    }

    pub fn with_quadrature_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidParameter(format!("quadrature tolerance {tol}")));
        }
        self.quadrature_tol = tol;
        Ok(self)
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn quadrature_tol(&self) -> f64 {
        self.quadrature_tol
    }

    pub fn has_unbounded_support(&self) -> bool {
        matches!(
            self.spec,
            DistributionSpec::Exponential { .. } | DistributionSpec::Weibull { .. } | DistributionSpec::Pareto { .. }
        )
    }

    /// Exponential and Weibull tails vanish faster than any power.
    pub fn is_rapidly_varying(&self) -> bool {
        matches!(self.spec, DistributionSpec::Exponential { .. } | DistributionSpec::Weibull { .. })
    }

    /// `F̄(x) = P(v > x)`. Negative arguments return 1.
    pub fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self.spec {
            DistributionSpec::Exponential { rate } => (-rate * x).exp(),
            DistributionSpec::Weibull { scale, shape } => (-(scale * x).powf(shape)).exp(),
            DistributionSpec::Pareto { index, x_m } => {
                if x < x_m {
                    1.0
                } else {
                    (x_m / x).powf(index + 1.0)
                }
            }
            DistributionSpec::Uniform { lo, hi } => {
                if x < lo {
                    1.0
                } else if x >= hi {
                    0.0
                } else {
                    (hi - x) / (hi - lo)
                }
            }
            DistributionSpec::Deterministic { value } => {
                if x < value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `H(x) = E[v; v > x]`, in closed form except for Weibull with shape ≠ 1.
    pub fn tail_work(&self, x: f64) -> Result<f64> {
        let x = x.max(0.0);
        Ok(match self.spec {
            DistributionSpec::Exponential { rate } => (x + 1.0 / rate) * (-rate * x).exp(),
            DistributionSpec::Weibull { scale, shape: 1.0 } => {
                (x + 1.0 / scale) * (-scale * x).exp()
            }
            DistributionSpec::Weibull { .. } => return self.tail_work_quadrature(x),
            DistributionSpec::Pareto { index, x_m } => {
                if x < x_m {
                    self.mean
                } else {
                    (index + 1.0) / index * x * (x_m / x).powf(index + 1.0)
                }
            }
            DistributionSpec::Uniform { lo, hi } => {
                if x < lo {
                    self.mean
                } else if x >= hi {
                    0.0
                } else {
                    (hi * hi - x * x) / (2.0 * (hi - lo))
                }
            }
            DistributionSpec::Deterministic { value } => {
                if x < value {
                    value
                } else {
                    0.0
                }
            }
        })
    }

    /// `H(x) = x F̄(x) + ∫ₓ^∞ F̄` evaluated numerically for any kind.
    ///
    /// The integral is split into panels of doubling width starting at `x`
    /// and stops once an analytic bound on the remaining tail integral drops
    /// below half the tolerance.
    pub fn tail_work_quadrature(&self, x: f64) -> Result<f64> {
        let x = x.max(0.0);
        Ok(x * self.tail(x) + self.tail_integral(x)?)
    }

    fn tail_integral(&self, x: f64) -> Result<f64> {
        let tol = self.quadrature_tol;
        let mut breaks = self.kinks();
        breaks.retain(|&b| b > x);
        let mut width = self.mean.max(f64::MIN_POSITIVE);
        let mut a = x;
        let mut total = 0.0;
        let mut budget = 0.5 * tol;
        for _ in 0..MAX_PANELS {
            if self.tail(a) == 0.0 {
                return Ok(total);
            }
            let mut b = a + width;
            if let Some(&k) = breaks.first() {
                if k <= b {
                    b = k;
                    breaks.remove(0);
                }
            }
            budget *= 0.5;
            let (v, _) = quadrature::integrate(|y| self.tail(y), a, b, budget, QUAD_REL_TOL)?;
            total += v;
            if self.tail_integral_bound(b) <= 0.5 * tol.min(QUAD_REL_TOL * total.abs()).max(tol * f64::EPSILON) {
                return Ok(total);
            }
            a = b;
            width *= 2.0;
        }
        Err(Error::QuadratureNotConverged { tol, err: self.tail_integral_bound(a) })
    }

    // Points where F̄ is not smooth; panels never straddle them.
    fn kinks(&self) -> Vec<f64> {
        match self.spec {
            DistributionSpec::Pareto { x_m, .. } => vec![x_m],
            DistributionSpec::Uniform { lo, hi } => vec![lo, hi],
            DistributionSpec::Deterministic { value } => vec![value],
            _ => Vec::new(),
        }
    }

    /// Upper bound on `∫_u^∞ F̄(y) dy`, or infinity where none is available.
    fn tail_integral_bound(&self, u: f64) -> f64 {
        match self.spec {
            DistributionSpec::Exponential { rate } => (-rate * u).exp() / rate,
            DistributionSpec::Weibull { scale, shape } => {
                // ∫_u^∞ e^{-(μy)^α} dy = Γ(1/α, s)/(μα) with s = (μu)^α.
                let s = (scale * u).powf(shape);
                let beta = 1.0 / shape - 1.0;
                let lead = s.powf(beta) * (-s).exp() / (scale * shape);
                if beta <= 0.0 {
                    if s > 0.0 {
                        lead
                    } else {
                        f64::INFINITY
                    }
                } else if s >= 2.0 * beta {
                    2.0 * lead
                } else {
                    f64::INFINITY
                }
            }
            DistributionSpec::Pareto { index, x_m } => {
                if u >= x_m {
                    u * (x_m / u).powf(index + 1.0) / index
                } else {
                    f64::INFINITY
                }
            }
            DistributionSpec::Uniform { hi, .. } => {
                if u >= hi {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            DistributionSpec::Deterministic { value } => {
                if u >= value {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn require_unbounded(&self) -> Result<()> {
        if self.has_unbounded_support() {
            Ok(())
        } else {
            Err(Error::UnboundedSupportRequired(self.spec.name()))
        }
    }

    /// Scale function `S(x) = 1/H(x)`.
    pub fn big_s(&self, x: f64) -> Result<f64> {
        self.require_unbounded()?;
        Ok(1.0 / self.tail_work(x)?)
    }

    /// `S⁻¹(r) = inf{x ≥ 0 : S(x) > r}` by bracketing and bisection.
    pub fn s_inverse(&self, r: f64) -> Result<f64> {
        self.require_unbounded()?;
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("s_inverse needs r > 0, got {r}")));
        }
        if self.big_s(0.0)? > r {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while self.big_s(hi)? <= r {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::InvalidParameter(format!("S never exceeds {r}")));
            }
        }
        for _ in 0..200 {
            if hi - lo < 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.big_s(mid)? > r {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// `F̄(tx)/F̄(x)`.
    pub fn ratio_tail(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 1.0) {
            return Err(Error::InvalidParameter(format!("ratio_tail needs t > 1, got {t}")));
        }
        let den = self.tail(x);
        if den == 0.0 {
            return Err(Error::DivisionByZeroTail(x));
        }
        Ok(self.tail(t * x) / den)
    }

    /// `S⁻¹(tr)/S⁻¹(r)`.
    pub fn ratio_s_inverse(&self, t: f64, r: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("ratio_s_inverse needs t > 0, got {t}")));
        }
        let base = self.s_inverse(r)?;
        if base == 0.0 {
            return Err(Error::InvalidParameter(format!("S⁻¹({r}) = 0; choose r > S(0)")));
        }
        Ok(self.s_inverse(t * r)? / base)
    }

    /// Solves `F̄(x) = u` for `u ∈ (0, 1)`.
    pub fn inverse_tail(&self, u: f64) -> f64 {
        match self.spec {
            DistributionSpec::Exponential { rate } => -u.ln() / rate,
            DistributionSpec::Weibull { scale, shape } => (-u.ln()).powf(1.0 / shape) / scale,
            DistributionSpec::Pareto { index, x_m } => x_m * u.powf(-1.0 / (index + 1.0)),
            DistributionSpec::Uniform { lo, hi } => hi - (hi - lo) * u,
            DistributionSpec::Deterministic { value } => value,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if let DistributionSpec::Deterministic { value } = self.spec {
            return value;
        }
        let u: f64 = rng.sample(Open01);
        self.inverse_tail(u)
    }
}
