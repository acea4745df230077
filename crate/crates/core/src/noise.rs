//! Diffusion coefficients `σ^k(x, r)`, their structural validators and
//! mollification, and seeded Wiener increments.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mollifier::DiscreteMollifier;
use crate::report::{CheckOutcome, ValidationReport};

/// Variable slots available to coefficient expressions.
pub const SIGMA_VARS: &[&[&str]] = &[&["x", "x1"], &["y", "x2"], &["u", "r"]];

/// Quadrature nodes per axis for coefficient mollification.
const MOLLIFIER_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseVariant {
    /// Hölder in `r` with exponent `1/2 + κ` and in `x` with exponent `κ̄`.
    A,
    /// `x`-independent and `1/2`-Hölder in `r` with constant 1.
    B,
}

#[derive(Debug, Clone)]
struct Mode {
    expr: Expr,
    /// Slot indices the mollifier must act on (subset of x1, x2, r).
    axes: Vec<usize>,
}

/// A finite family `σ^1, …, σ^M` with structural constants.
#[derive(Debug, Clone)]
pub struct DiffusionCoefficient {
    modes: Vec<Mode>,
    d: usize,
    k: f64,
    kappa: f64,
    kappa_bar: f64,
    variant: NoiseVariant,
    mollified: Option<u32>,
}

impl DiffusionCoefficient {
    /// Parses one expression per mode over `x` (or `x1`), `y` (or `x2`) and
    /// `u` (or `r`).
    pub fn from_exprs(
        modes: &[impl AsRef<str>],
        d: usize,
        k: f64,
        kappa: f64,
        kappa_bar: f64,
        variant: NoiseVariant,
    ) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::param("d", "dimension must be 1 or 2"));
        }
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::param("K", "K must be finite and non-negative"));
        }
        let modes = modes
            .iter()
            .map(|src| {
                let expr = Expr::parse(src.as_ref(), SIGMA_VARS)?;
                if d == 1 && expr.uses_var(1) {
                    return Err(Error::param("modes", format!("`{}` uses x2 in d = 1", src.as_ref())));
                }
                Ok(Mode { expr, axes: vec![] })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            modes,
            d,
            k,
            kappa,
            kappa_bar,
            variant,
            mollified: None,
        })
    }

    /// The zero coefficient with a single mode.
    pub fn zero(d: usize) -> Self {
        Self::from_exprs(&["0"], d, 1.0, 0.5, 1.0, NoiseVariant::B).expect("constant expression")
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kappa_bar(&self) -> f64 {
        self.kappa_bar
    }

    pub fn variant(&self) -> NoiseVariant {
        self.variant
    }

    pub fn mollification_level(&self) -> Option<u32> {
        self.mollified
    }

    pub fn sources(&self) -> Vec<String> {
        self.modes.iter().map(|m| m.expr.source().to_string()).collect()
    }

    pub fn is_x_dependent(&self) -> bool {
        self.modes.iter().any(|m| m.expr.uses_var(0) || m.expr.uses_var(1))
    }

    /// True when every mode is identically zero.
    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.expr.as_constant() == Some(0.0))
    }

    /// Adds `c` to the first mode, so the `ℓ2` sup-distance to `self` is `|c|`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let mut out = self.clone();
        let src = format!("({}) + ({c:e})", self.modes[0].expr.source());
        out.modes[0].expr = Expr::parse(&src, SIGMA_VARS)?;
        Ok(out)
    }

    /// `σ^k(x, r)`.
    pub fn eval_mode(&self, k: usize, x: [f64; 2], r: f64) -> f64 {
        let mode = &self.modes[k];
        match self.mollified {
            Some(n) if !mode.axes.is_empty() => convolve_mode(&mode.expr, &mode.axes, 1.0 / n as f64, x, r),
            _ => mode.expr.eval(&[x[0], x[1], r]),
        }
    }

    /// Writes `σ^k(x, r)` for every mode into `out`.
    pub fn eval_into(&self, x: [f64; 2], r: f64, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.modes.len()) {
            *o = self.eval_mode(k, x, r);
        }
    }

    /// `|σ(x, r)|_{ℓ2}`.
    pub fn l2_norm(&self, x: [f64; 2], r: f64) -> f64 {
        (0..self.modes.len())
            .map(|k| self.eval_mode(k, x, r).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ_k σ^k(x, r) dW^k`.
    #[inline]
    pub fn forcing(&self, x: [f64; 2], r: f64, dw: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, w) in dw.iter().enumerate().take(self.modes.len()) {
            acc += self.eval_mode(k, x, r) * w;
        }
        acc
    }
}

fn convolve_mode(expr: &Expr, axes: &[usize], theta: f64, x: [f64; 2], r: f64) -> f64 {
    let dm = mollifier();
    let base = [x[0], x[1], r];
    let nodes = dm.len();
    let total = nodes.pow(axes.len() as u32);
    let mut acc = 0.0;
    let mut first = None;
    let mut vars = base;
    for idx in 0..total {
        let mut rem = idx;
        let mut w = 1.0;
        for &axis in axes {
            let j = rem % nodes;
            rem /= nodes;
            vars[axis] = base[axis] - theta * dm.offsets()[j];
            w *= dm.weights()[j];
        }
        let v = expr.eval(&vars);
        // Accumulate relative to the first sample so constants are exact.
        let f0 = *first.get_or_insert(v);
        acc += w * (v - f0);
    }
    first.unwrap_or(0.0) + acc
}

fn mollifier() -> &'static DiscreteMollifier {
    static DM: std::sync::OnceLock<DiscreteMollifier> = std::sync::OnceLock::new();
    DM.get_or_init(|| DiscreteMollifier::new(MOLLIFIER_NODES))
}

/// `σ_n = ρ_{1/n}^{⊗(d+1)} * σ`, realized by tensor Gauss quadrature over
/// the axes each mode actually depends on. The structural constant doubles.
pub fn mollify_sigma(sc: &DiffusionCoefficient, n: u32) -> Result<DiffusionCoefficient> {
    if n == 0 {
        return Err(Error::param("n", "mollification level must be positive"));
    }
    if sc.mollified.is_some() {
        return Err(Error::param("n", "coefficient is already mollified"));
    }
    let mut out = sc.clone();
    for mode in &mut out.modes {
        mode.axes = (0..3)
            .filter(|&slot| slot != 1 || sc.d == 2)
            .filter(|&slot| mode.expr.uses_var(slot))
            .collect();
    }
    out.mollified = Some(n);
    out.k = 2.0 * sc.k;
    Ok(out)
}

/// Sample points for the noise validators.
#[derive(Debug, Clone)]
pub struct NoiseSamples {
    pub xs: Vec<[f64; 2]>,
    pub rs: Vec<f64>,
}

impl NoiseSamples {
    /// `r ∈ [-4, 4]` in steps of 0.1 plus points near 0, and a coarse lattice
    /// on the torus.
    pub fn standard(d: usize) -> Self {
        let mut rs: Vec<f64> = (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect();
        for k in 1..=8 {
            let v = 10f64.powf(-(k as f64) / 2.0);
            rs.push(v);
            rs.push(-v);
        }
        rs.sort_by(f64::total_cmp);
        let per_axis = if d == 1 { 8 } else { 4 };
        let axis: Vec<f64> = (0..per_axis).map(|i| i as f64 / per_axis as f64).collect();
        let xs = if d == 1 {
            axis.iter().map(|&x| [x, 0.0]).collect()
        } else {
            axis.iter().flat_map(|&a| axis.iter().map(move |&b| [a, b])).collect()
        };
        Self { xs, rs }
    }
}

fn torus_distance(x: [f64; 2], y: [f64; 2], d: usize) -> f64 {
    (0..d)
        .map(|i| {
            let t = (x[i] - y[i]).rem_euclid(1.0);
            t.min(1.0 - t).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Checks the growth and Hölder bounds on sampled points and pairs.
///
/// `m` is the exponent of the accompanying nonlinearity, which bounds `κ̄`
/// from below.
pub fn validate_assumption_noise(sc: &DiffusionCoefficient, m: f64, samples: &NoiseSamples) -> ValidationReport {
    let mut report = ValidationReport::new(format!(
        "structural checks for sigma (M = {}, K = {}, variant {:?})",
        sc.mode_count(),
        sc.k,
        sc.variant
    ));
    let k = sc.k;

    let mut kc = CheckOutcome::new("K >= 1");
    kc.record(1.0, k, &[k]);
    report.push(kc);

    let mut kappa = CheckOutcome::new("kappa in (0, 1/2]");
    let mut kappa_bar = CheckOutcome::new("kappa_bar in ((m ^ 2)^-1, 1]");
    if sc.variant == NoiseVariant::A {
        if !(sc.kappa > 0.0 && sc.kappa <= 0.5) {
            kappa = CheckOutcome::fail_with("kappa in (0, 1/2]", &[sc.kappa]);
        } else {
            kappa.record(0.0, 0.0, &[sc.kappa]);
        }
        let lower = 1.0 / m.min(2.0);
        if !(sc.kappa_bar > lower && sc.kappa_bar <= 1.0) {
            kappa_bar = CheckOutcome::fail_with("kappa_bar in ((m ^ 2)^-1, 1]", &[sc.kappa_bar, lower]);
        } else {
            kappa_bar.record(0.0, 0.0, &[sc.kappa_bar]);
        }
        report.push(kappa);
        report.push(kappa_bar);
    } else {
        let mut xi = CheckOutcome::new("sigma independent of x");
        if sc.is_x_dependent() {
            xi = CheckOutcome::fail_with("sigma independent of x", &[]);
        }
        report.push(xi);
    }

    let values: Vec<Vec<f64>> = samples
        .xs
        .iter()
        .map(|&x| {
            samples
                .rs
                .iter()
                .flat_map(|&r| (0..sc.mode_count()).map(move |j| (j, r)))
                .map(|(j, r)| sc.eval_mode(j, x, r))
                .collect()
        })
        .collect();
    let m_count = sc.mode_count();
    let at = |xi: usize, ri: usize| &values[xi][ri * m_count..(ri + 1) * m_count];

    let mut growth = CheckOutcome::new("|sigma(x,r)| <= K(1+|r|)");
    for (xi, x) in samples.xs.iter().enumerate() {
        for (ri, &r) in samples.rs.iter().enumerate() {
            let norm = at(xi, ri).iter().map(|v| v * v).sum::<f64>().sqrt();
            growth.record(norm, k * (1.0 + r.abs()), &[x[0], x[1], r]);
        }
    }
    report.push(growth);

    let name = match sc.variant {
        NoiseVariant::A => "|sigma(x,r)-sigma(y,z)| <= K|r-z|^(1/2+kappa) + K|x-y|^kappa_bar",
        NoiseVariant::B => "|sigma(r)-sigma(z)| <= |r-z|^(1/2)",
    };
    let mut holder = CheckOutcome::new(name);
    let x_count = match sc.variant {
        NoiseVariant::A => samples.xs.len(),
        NoiseVariant::B => 1,
    };
    for xi in 0..x_count {
        for yi in xi..x_count {
            let dx = torus_distance(samples.xs[xi], samples.xs[yi], sc.d);
            for (ri, &r) in samples.rs.iter().enumerate() {
                for (zi, &z) in samples.rs.iter().enumerate() {
                    let gap = (r - z).abs();
                    if gap > 1.0 || (xi == yi && zi <= ri) {
                        continue;
                    }
                    let diff = at(xi, ri)
                        .iter()
                        .zip(at(yi, zi))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let bound = match sc.variant {
                        NoiseVariant::A => k * gap.powf(0.5 + sc.kappa) + k * dx.powf(sc.kappa_bar),
                        NoiseVariant::B => gap.sqrt(),
                    };
                    holder.record(diff, bound * (1.0 + 1e-12), &[dx, r, z]);
                }
            }
        }
    }
    report.push(holder);
    report
}

/// Grid sup of `|σ(x,r) - σ̃(x,r)|_{ℓ2}` over the samples.
pub fn sup_distance(a: &DiffusionCoefficient, b: &DiffusionCoefficient, samples: &NoiseSamples) -> f64 {
    let mut sup: f64 = 0.0;
    let modes = a.mode_count().max(b.mode_count());
    for &x in &samples.xs {
        for &r in &samples.rs {
            let mut acc = 0.0;
            for k in 0..modes {
                let va = if k < a.mode_count() { a.eval_mode(k, x, r) } else { 0.0 };
                let vb = if k < b.mode_count() { b.eval_mode(k, x, r) } else { 0.0 };
                acc += (va - vb).powi(2);
            }
            sup = sup.max(acc.sqrt());
        }
    }
    sup
}

/// `splitmix64` finalizer.
pub fn splitmix64(i: u64) -> u64 {
    let mut z = i.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of ensemble member `i`.
pub fn derive_seed(base: u64, i: u64) -> u64 {
    base ^ splitmix64(i)
}

/// Wiener increments on a uniform time mesh, row-major `steps × M`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub modes: usize,
    increments: Vec<f64>,
}

/// Draws i.i.d. `N(0, dt)` increments from a ChaCha8 stream keyed by `seed`.
pub fn sample_wiener(seed: u64, dt: f64, steps: usize, modes: usize) -> Result<WienerPath> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "dt must be positive"));
    }
    if modes == 0 {
        return Err(Error::param("M", "at least one mode required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = dt.sqrt();
    let increments = (0..steps * modes)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();
    Ok(WienerPath {
        seed,
        dt,
        steps,
        modes,
        increments,
    })
}

impl WienerPath {
    pub fn zero(dt: f64, steps: usize, modes: usize) -> Self {
        Self {
            seed: 0,
            dt,
            steps,
            modes,
            increments: vec![0.0; steps * modes],
        }
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.increments[step * self.modes..(step + 1) * self.modes]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Path on the mesh `factor · dt`, summing consecutive increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::param("factor", "must divide the step count"));
        }
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * self.modes];
        for s in 0..self.steps {
            for k in 0..self.modes {
                increments[(s / factor) * self.modes + k] += self.increments[s * self.modes + k];
            }
        }
        Ok(Self {
            seed: self.seed,
            dt: self.dt * factor as f64,
            steps,
            modes: self.modes,
            increments,
        })
    }

    /// Little-endian dump: `seed: u64, dt: f64, steps: u64, M: u64`, then the
    /// increments as `f64`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.steps as u64).to_le_bytes())?;
        w.write_all(&(self.modes as u64).to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let seed = u64::from_le_bytes(next(&mut r)?);
        let dt = f64::from_le_bytes(next(&mut r)?);
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let modes = u64::from_le_bytes(next(&mut r)?) as usize;
        let count = steps
            .checked_mul(modes)
            .ok_or_else(|| Error::param("header", "step count overflows"))?;
        let mut increments = Vec::with_capacity(count);
        for _ in 0..count {
            increments.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(Self {
            seed,
            dt,
            steps,
            modes,
            increments,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> DiffusionCoefficient {
        DiffusionCoefficient::from_exprs(&["u"], 1, 1.0, 0.5, 1.0, NoiseVariant::B).unwrap()
    }

    #[test]
    fn linear_sigma_passes_both_variants() {
        let s = NoiseSamples::standard(1);
        assert!(validate_assumption_noise(&linear(), 2.0, &s).all_passed());
        let a = DiffusionCoefficient::from_exprs(&["0.5*u"], 1, 1.0, 0.5, 1.0, NoiseVariant::A).unwrap();
        assert!(validate_assumption_noise(&a, 2.0, &s).all_passed());
    }

    #[test]
    fn zero_k_fails_growth() {
        let s = NoiseSamples::standard(1);
        let sc = DiffusionCoefficient::from_exprs(&["u"], 1, 0.0, 0.5, 1.0, NoiseVariant::B).unwrap();
        let rep = validate_assumption_noise(&sc, 2.0, &s);
        assert!(!rep.check("K >= 1").unwrap().passed);
        assert!(!rep.check("|sigma(x,r)| <= K(1+|r|)").unwrap().passed);
    }

    #[test]
    fn kappa_bar_lower_bound() {
        let s = NoiseSamples::standard(1);
        let sc = DiffusionCoefficient::from_exprs(&["u"], 1, 1.0, 0.5, 0.4, NoiseVariant::A).unwrap();
        let rep = validate_assumption_noise(&sc, 2.0, &s);
        assert!(!rep.check("kappa_bar in ((m ^ 2)^-1, 1]").unwrap().passed);
    }

    #[test]
    fn mollified_linear_shift() {
        let n = 10;
        let sn = mollify_sigma(&linear(), n).unwrap();
        let mean = DiscreteMollifier::new(MOLLIFIER_NODES).mean();
        for r in [-2.0, 0.0, 0.3, 5.0] {
            let v = sn.eval_mode(0, [0.0, 0.0], r);
            assert!((v - (r - mean / n as f64)).abs() < 1e-13);
        }
        let c = DiffusionCoefficient::from_exprs(&["0.7"], 1, 1.0, 0.5, 1.0, NoiseVariant::B).unwrap();
        assert_eq!(mollify_sigma(&c, 3).unwrap().eval_mode(0, [0.2, 0.0], 1.0), 0.7);
    }

    #[test]
    fn wiener_roundtrip_and_coarsen() {
        let w = sample_wiener(7, 0.01, 10, 2).unwrap();
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 8 * 20);
        assert_eq!(WienerPath::read_from(buf.as_slice()).unwrap(), w);
        let c = w.coarsen(2).unwrap();
        assert_eq!(c.row(1)[1], w.row(2)[1] + w.row(3)[1]);
        assert!(w.coarsen(3).is_err());
    }
}
