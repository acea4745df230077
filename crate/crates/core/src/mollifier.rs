//! Mollifier kernels supported in `(0, θ)` and the cumulative tables built
//! on top of them.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

/// Unnormalized bump `exp(-1/(4 s (1 - s)))` on `(0, 1)`.
fn raw_bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let q = 4.0 * s * (1.0 - s);
    (-1.0 / q).exp()
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        let rule = GaussRule::new(20);
        let pieces = 512;
        (0..pieces)
            .map(|i| {
                let a = i as f64 / pieces as f64;
                let b = (i + 1) as f64 / pieces as f64;
                rule.integrate(a, b, raw_bump)
            })
            .sum()
    })
}

/// The reference mollifier on `(0, 1)`: smooth, nonnegative, mass one and
/// bounded by 2 (its maximum is about 1.657, attained at `s = 1/2`).
pub fn unit_bump(s: f64) -> f64 {
    raw_bump(s) / bump_mass()
}

fn unit_tables() -> &'static CumulativeTable {
    static TABLE: OnceLock<CumulativeTable> = OnceLock::new();
    TABLE.get_or_init(|| CumulativeTable::build(unit_bump, 1.0, 4096))
}

/// `P(s) = ∫_0^s ρ`, the distribution function of the reference bump.
pub fn unit_bump_cdf(s: f64) -> f64 {
    unit_tables().first(s)
}

/// `Q(s) = ∫_0^s P`.
pub fn unit_bump_cdf_integral(s: f64) -> f64 {
    unit_tables().second(s)
}

/// `ρ_θ(r) = θ⁻¹ ρ(r/θ)`, supported in `(0, θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierKernel {
    theta: f64,
}

impl MollifierKernel {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::param("theta", "mollifier width must be positive"));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eval(&self, r: f64) -> f64 {
        unit_bump(r / self.theta) / self.theta
    }

    pub fn support(&self) -> (f64, f64) {
        (0.0, self.theta)
    }
}

/// Gauss–Legendre discretization of the reference bump: offsets in `(0, 1)`
/// with weights `w_i ∝ ρ(t_i)` summing to one.
///
/// Convolving with `ρ_θ` then reads `∫ρ_θ(y) g(x - y) dy ≈ Σ w_i g(x - θ t_i)`.
#[derive(Debug, Clone)]
pub struct DiscreteMollifier {
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMollifier {
    pub fn new(order: usize) -> Self {
        let rule = GaussRule::new(order);
        let (offsets, mut weights): (Vec<f64>, Vec<f64>) =
            rule.mapped(0.0, 1.0).map(|(t, w)| (t, w * unit_bump(t))).unzip();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { offsets, weights }
    }

    /// Composite rule: `order` Gauss nodes on each of `panels` equal
    /// subintervals of `(0, 1)`. Resolves kinks of the integrand (from
    /// truncation) better than a single high-order rule.
    pub fn composite(panels: usize, order: usize) -> Self {
        let rule = GaussRule::new(order);
        let panels = panels.max(1);
        let (offsets, mut weights): (Vec<f64>, Vec<f64>) = (0..panels)
            .flat_map(|p| {
                let a = p as f64 / panels as f64;
                let b = (p + 1) as f64 / panels as f64;
                rule.mapped(a, b).collect::<Vec<_>>()
            })
            .map(|(t, w)| (t, w * unit_bump(t)))
            .unzip();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { offsets, weights }
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// First moment `Σ w_i t_i` (one half, by symmetry of the bump).
    pub fn mean(&self) -> f64 {
        self.offsets.iter().zip(&self.weights).map(|(t, w)| t * w).sum()
    }

    /// `Σ w_i g(x - θ t_i)`, accumulated relative to the first sample so that
    /// constant inputs are reproduced exactly.
    pub fn convolve(&self, theta: f64, x: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let mut base = None;
        let mut acc = 0.0;
        for (t, w) in self.offsets.iter().zip(&self.weights) {
            let v = g(x - theta * t);
            let b = *base.get_or_insert(v);
            acc += w * (v - b);
        }
        base.unwrap_or(0.0) + acc
    }
}

/// Twice-integrated density on a uniform grid over `[0, end]`.
///
/// Node values of the first antiderivative come from Gauss–Legendre on each
/// cell; between nodes it is the cubic Hermite interpolant built from those
/// values and the density. The second antiderivative is the exact integral
/// of that interpolant, so the two levels stay differentiably consistent.
/// Beyond `end` the density is taken to vanish.
#[derive(Debug, Clone)]
pub struct CumulativeTable {
    step: f64,
    density: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl CumulativeTable {
    pub fn build(density: impl Fn(f64) -> f64, end: f64, cells: usize) -> Self {
        let cells = cells.max(1);
        let step = end / cells as f64;
        let rule = GaussRule::new(6);
        let mut dens = Vec::with_capacity(cells + 1);
        let mut first = Vec::with_capacity(cells + 1);
        let mut second = Vec::with_capacity(cells + 1);
        dens.push(density(0.0));
        first.push(0.0);
        second.push(0.0);
        for i in 0..cells {
            let a = i as f64 * step;
            let b = if i + 1 == cells { end } else { a + step };
            let d1 = density(b);
            let f1 = first[i] + rule.integrate(a, b, &density);
            let f2 = second[i] + 0.5 * step * (first[i] + f1) + step * step / 12.0 * (dens[i] - d1);
            dens.push(d1);
            first.push(f1);
            second.push(f2);
        }
        Self {
            step,
            density: dens,
            first,
            second,
        }
    }

    /// Rescales the table so the total mass `first(end)` equals `mass`.
    pub fn with_total_mass(mut self, mass: f64) -> Self {
        let total = *self.first.last().unwrap();
        if total != 0.0 {
            let c = mass / total;
            for v in self.density.iter_mut().chain(&mut self.first).chain(&mut self.second) {
                *v *= c;
            }
        }
        self
    }

    pub fn end(&self) -> f64 {
        self.step * (self.density.len() - 1) as f64
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let cells = self.density.len() - 1;
        let pos = x / self.step;
        let i = (pos.floor() as usize).min(cells - 1);
        (i, (pos - i as f64).clamp(0.0, 1.0))
    }

    pub fn density_at_nodes(&self) -> &[f64] {
        &self.density
    }

    /// First antiderivative at `x ≥ 0`.
    pub fn first(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.end() {
            return *self.first.last().unwrap();
        }
        let (i, t) = self.locate(x);
        let h = self.step;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.first[i]
            + (t3 - 2.0 * t2 + t) * h * self.density[i]
            + (-2.0 * t3 + 3.0 * t2) * self.first[i + 1]
            + (t3 - t2) * h * self.density[i + 1]
    }

    /// Second antiderivative at `x ≥ 0`.
    pub fn second(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let end = self.end();
        if x >= end {
            return *self.second.last().unwrap() + *self.first.last().unwrap() * (x - end);
        }
        let (i, t) = self.locate(x);
        let h = self.step;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        self.second[i]
            + h * ((0.5 * t4 - t3 + t) * self.first[i]
                + (0.25 * t4 - 2.0 / 3.0 * t3 + 0.5 * t2) * h * self.density[i]
                + (-0.5 * t4 + t3) * self.first[i + 1]
                + (0.25 * t4 - t3 / 3.0) * h * self.density[i + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_a_probability_density_bounded_by_two() {
        let rule = GaussRule::new(16);
        let cells = 2000;
        let mass: f64 = (0..cells)
            .map(|i| rule.integrate(i as f64 / cells as f64, (i + 1) as f64 / cells as f64, unit_bump))
            .sum();
        assert!((mass - 1.0).abs() < 1e-12, "mass {mass}");
        let max = (0..=10_000).map(|i| unit_bump(i as f64 / 10_000.0)).fold(0.0, f64::max);
        assert!(max <= 2.0 && max > 1.6);
        assert_eq!(unit_bump(0.0), 0.0);
        assert_eq!(unit_bump(1.0), 0.0);
        assert_eq!(unit_bump(-0.3), 0.0);
    }

    #[test]
    fn scaled_kernel_support_and_mass() {
        let k = MollifierKernel::new(0.25).unwrap();
        assert_eq!(k.eval(0.25), 0.0);
        assert_eq!(k.eval(0.3), 0.0);
        assert!(k.eval(0.125) <= 2.0 / 0.25);
        let rule = GaussRule::new(16);
        let mass: f64 = (0..400)
            .map(|i| rule.integrate(i as f64 * 0.25 / 400.0, (i + 1) as f64 * 0.25 / 400.0, |r| k.eval(r)))
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(MollifierKernel::new(0.0).is_err());
    }

    #[test]
    fn cdf_tables_match_moments() {
        assert!((unit_bump_cdf(1.0) - 1.0).abs() < 1e-13);
        assert!((unit_bump_cdf(0.5) - 0.5).abs() < 1e-12);
        // Q(1) = 1 - mean = 1/2.
        assert!((unit_bump_cdf_integral(1.0) - 0.5).abs() < 1e-12);
        assert!((unit_bump_cdf_integral(3.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn discrete_mollifier_reproduces_constants_and_lines() {
        let dm = DiscreteMollifier::new(8);
        assert_eq!(dm.convolve(0.1, 0.3, |_| 0.7), 0.7);
        assert!((dm.mean() - 0.5).abs() < 1e-14);
        let v = dm.convolve(0.1, 2.0, |y| y);
        assert!((v - (2.0 - 0.05)).abs() < 1e-14);
    }
}
