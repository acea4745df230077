//! Convex entropy families `η_δ` used by the entropy-inequality checks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mollifier::{unit_bump, unit_bump_cdf, unit_bump_cdf_integral, CumulativeTable};
use crate::quadrature::GaussRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyFamily {
    /// `η″_δ(r) = ρ_δ(|r|)`.
    Standard,
    /// `η″_δ(r) = (ρ_{δ²/4} * (ζ ↦ 1/(ζ|log δ|) 1_{[δ²/2, δ/2]}))(|r|)`.
    Logarithmic,
    /// `η(r) = r`.
    Identity,
    /// `η(r) = -r`.
    NegIdentity,
}

#[derive(Debug, Clone)]
enum Repr {
    Standard,
    Logarithmic(Arc<CumulativeTable>),
    Linear(f64),
}

/// An even (or linear) convex `C²` entropy with `η(0) = η'(0) = 0` where
/// applicable.
#[derive(Debug, Clone)]
pub struct EntropyFunction {
    delta: f64,
    family: EntropyFamily,
    repr: Repr,
}

/// Builds the standard family member for `δ ∈ (0, 1]`.
pub fn make_standard_eta(delta: f64) -> Result<EntropyFunction> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param("delta", "standard entropy requires δ ∈ (0, 1]"));
    }
    Ok(EntropyFunction {
        delta,
        family: EntropyFamily::Standard,
        repr: Repr::Standard,
    })
}

/// Builds the logarithmic family member for `δ ∈ (0, 1/2)`.
pub fn make_log_eta(delta: f64) -> Result<EntropyFunction> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::param("delta", "logarithmic entropy requires δ ∈ (0, 1/2)"));
    }
    let theta = delta * delta / 4.0;
    let lo = delta * delta / 2.0;
    let hi = delta / 2.0;
    let log_inv = delta.ln().abs();
    let rule = GaussRule::new(32);
    let second = move |s: f64| -> f64 {
        // ∫ρ(t) g(s - θt) dt restricted to s - θt ∈ [lo, hi].
        let t_min = ((s - hi) / theta).max(0.0);
        let t_max = ((s - lo) / theta).min(1.0);
        if t_max <= t_min {
            return 0.0;
        }
        rule.integrate(t_min, t_max, |t| unit_bump(t) / ((s - theta * t) * log_inv))
    };
    let end = hi + theta;
    let cells = ((end / (theta / 16.0)).ceil() as usize).clamp(1024, 200_000);
    // The exact mass is ∫_{δ²/2}^{δ/2} dζ/(ζ|log δ|) = 1.
    let table = CumulativeTable::build(&second, end, cells).with_total_mass(1.0);
    Ok(EntropyFunction {
        delta,
        family: EntropyFamily::Logarithmic,
        repr: Repr::Logarithmic(Arc::new(table)),
    })
}

impl EntropyFunction {
    pub fn identity() -> Self {
        Self {
            delta: 0.0,
            family: EntropyFamily::Identity,
            repr: Repr::Linear(1.0),
        }
    }

    pub fn neg_identity() -> Self {
        Self {
            delta: 0.0,
            family: EntropyFamily::NegIdentity,
            repr: Repr::Linear(-1.0),
        }
    }

    pub fn from_family(family: EntropyFamily, delta: f64) -> Result<Self> {
        match family {
            EntropyFamily::Standard => make_standard_eta(delta),
            EntropyFamily::Logarithmic => make_log_eta(delta),
            EntropyFamily::Identity => Ok(Self::identity()),
            EntropyFamily::NegIdentity => Ok(Self::neg_identity()),
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn family(&self) -> EntropyFamily {
        self.family
    }

    /// Radius of the support of `η″` (zero for the linear entropies).
    pub fn support_radius(&self) -> f64 {
        match &self.repr {
            Repr::Standard => self.delta,
            Repr::Logarithmic(t) => t.end(),
            Repr::Linear(_) => 0.0,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.repr {
            Repr::Standard => self.delta * unit_bump_cdf_integral(r.abs() / self.delta),
            Repr::Logarithmic(t) => t.second(r.abs()),
            Repr::Linear(s) => s * r,
        }
    }

    pub fn eval_d1(&self, r: f64) -> f64 {
        let mag = match &self.repr {
            Repr::Standard => unit_bump_cdf(r.abs() / self.delta),
            Repr::Logarithmic(t) => t.first(r.abs()),
            Repr::Linear(s) => return *s,
        };
        if r < 0.0 {
            -mag
        } else {
            mag
        }
    }

    pub fn eval_d2(&self, r: f64) -> f64 {
        match &self.repr {
            Repr::Standard => unit_bump(r.abs() / self.delta) / self.delta,
            Repr::Logarithmic(_) => self.log_second(r.abs()),
            Repr::Linear(_) => 0.0,
        }
    }

    fn log_second(&self, s: f64) -> f64 {
        let delta = self.delta;
        let theta = delta * delta / 4.0;
        let lo = delta * delta / 2.0;
        let hi = delta / 2.0;
        let t_min = ((s - hi) / theta).max(0.0);
        let t_max = ((s - lo) / theta).min(1.0);
        if t_max <= t_min {
            return 0.0;
        }
        let log_inv = delta.ln().abs();
        log_rule().integrate(t_min, t_max, |t| unit_bump(t) / ((s - theta * t) * log_inv))
    }
}

fn log_rule() -> &'static GaussRule {
    static RULE: std::sync::OnceLock<GaussRule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussRule::new(32))
}
