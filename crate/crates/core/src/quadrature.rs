//! Quadrature rules and small root-finding helpers.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Chebyshev initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A fixed Gauss–Legendre rule mapped onto arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

const SIMPSON_MAX_DEPTH: u32 = 50;
/// Levels refined unconditionally so features narrower than the interval
/// are not missed by a coincidentally small first error estimate.
const SIMPSON_MIN_DEPTH: u32 = 6;

/// Adaptive Simpson quadrature with an absolute tolerance.
///
/// Fails with [`Error::Quadrature`] when the recursion depth is exhausted
/// before the local error estimates meet the requested tolerance.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut unmet = 0.0;
    let value = simpson_step(&f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH, &mut unmet);
    if unmet > tol {
        return Err(Error::Quadrature {
            achieved: unmet,
            requested: tol,
        });
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    unmet: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let forced = SIMPSON_MAX_DEPTH - depth < SIMPSON_MIN_DEPTH;
    if !forced && delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 || !delta.is_finite() {
        *unmet += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, unmet)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, unmet)
}

/// Integral of `f` over `[0, r]` through the substitution `ζ = r s²`,
/// which removes power-type singularities of the integrand at the origin.
pub fn integrate_from_origin(f: impl Fn(f64) -> f64, r: f64, tol: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    adaptive_simpson(|s| 2.0 * r * s * f(r * s * s), 0.0, 1.0, tol)
}

/// Bisection on a sign change of `g` in `[lo, hi]`.
pub fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut glo = g(lo);
    let ghi = g(hi);
    if glo == 0.0 {
        return Some(lo);
    }
    if ghi == 0.0 {
        return Some(hi);
    }
    if glo.signum() == ghi.signum() {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return Some(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::new(5);
        // Degree 9 is the exactness limit of a 5-point rule.
        let v = rule.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-10);
        let (_, w) = gauss_legendre(12);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_handles_sqrt_via_substitution() {
        let v = integrate_from_origin(|z: f64| z.sqrt(), 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_reports_failure() {
        let err = adaptive_simpson(|x: f64| if x > 0.5 { 1e6 } else { 0.0 }, 0.0, 1.0, 1e-300);
        assert!(matches!(err, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-13).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-6).is_none());
    }
}
