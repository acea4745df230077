//! The degenerate nonlinearity `A`, its square-root diffusivity
//! `𝔞 = √A'`, the Kirchhoff transform `Ψ = ∫𝔞`, entropy fluxes, structural
//! validators and the smooth nondegenerate regularization `A_n`.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use crate::entropy::EntropyFunction;
use crate::error::{Error, Result};
use crate::mollifier::{CumulativeTable, DiscreteMollifier};
use crate::quadrature::{adaptive_simpson, integrate_from_origin};
use crate::report::{CheckOutcome, ValidationReport};

/// Absolute tolerance used for every adaptive quadrature in this module.
pub const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearityKind {
    PowerLaw { m: f64 },
    /// `A(r) = slope · r`; only used as a nondegenerate sanity mode.
    Linear { slope: f64 },
    Tabulated,
    Regularized { n: u32 },
}

/// A strictly increasing odd nonlinearity together with its structural
/// constants `(m, K)`.
///
/// Cloning is cheap; the numerical representation is shared.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    m: f64,
    k: f64,
    repr: Arc<Repr>,
}

#[derive(Debug)]
enum Repr {
    PowerLaw { m: f64, psi_coef: f64, sqrt_m: f64 },
    Linear { slope: f64 },
    Tabulated(Profile),
    Regularized { core: RegularizedCore, profile: Profile },
}

/// Builds `A(r) = |r|^{m-1} r`.
pub fn make_power_law(m: f64, k: f64) -> Result<Nonlinearity> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::param("m", "m > 1 required"));
    }
    check_k(k)?;
    Ok(Nonlinearity {
        kind: NonlinearityKind::PowerLaw { m },
        m,
        k,
        repr: Arc::new(Repr::PowerLaw {
            m,
            psi_coef: 2.0 * m.sqrt() / (m + 1.0),
            sqrt_m: m.sqrt(),
        }),
    })
}

fn check_k(k: f64) -> Result<()> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::param("K", "K must be a positive finite number"));
    }
    Ok(())
}

impl Nonlinearity {
    /// `A(r) = slope · r` with declared structural constants `(m, K)`.
    pub fn linear(slope: f64, m: f64, k: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::param("slope", "slope must be positive"));
        }
        if !(m > 1.0) {
            return Err(Error::param("m", "m > 1 required"));
        }
        check_k(k)?;
        Ok(Self {
            kind: NonlinearityKind::Linear { slope },
            m,
            k,
            repr: Arc::new(Repr::Linear { slope }),
        })
    }

    /// Monotone cubic interpolation of `(r, A(r))` samples, extended oddly
    /// to `r < 0` and linearly beyond the last sample.
    ///
    /// The table must contain `r = 0` with `A(0) = 0`. Rows with negative
    /// `r` are accepted only if they mirror the positive part.
    pub fn tabulated(points: &[(f64, f64)], m: f64, k: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(Error::param("m", "m > 1 required"));
        }
        check_k(k)?;
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::param("table", "r must be strictly increasing"));
        }
        if points.windows(2).any(|w| !(w[1].1 > w[0].1)) {
            return Err(Error::param("table", "A must be strictly increasing"));
        }
        let positive: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 >= 0.0).collect();
        for &(r, a) in points.iter().filter(|p| p.0 < 0.0) {
            let mirror = positive.iter().find(|p| (p.0 + r).abs() <= 1e-12 * r.abs().max(1.0));
            match mirror {
                Some(&(_, am)) if (am + a).abs() <= 1e-12 * a.abs().max(1.0) => {}
                _ => return Err(Error::param("table", format!("table is not odd at r = {r}"))),
            }
        }
        if positive.len() < 2 || positive[0].0 != 0.0 || positive[0].1 != 0.0 {
            return Err(Error::param("table", "table must start at (0, 0) and have a positive row"));
        }
        let profile = Profile::from_table(&positive)?;
        Ok(Self {
            kind: NonlinearityKind::Tabulated,
            m,
            k,
            repr: Arc::new(Repr::Tabulated(profile)),
        })
    }

    /// Reads a two-column `r,A` CSV (an optional header row is skipped).
    pub fn tabulated_from_csv(path: &Path, m: f64, k: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut points = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::param("table", format!("row {i}: expected two columns")));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(r), Ok(a)) => points.push((r, a)),
                _ if i == 0 => continue,
                _ => return Err(Error::param("table", format!("row {i}: non-numeric value"))),
            }
        }
        Self::tabulated(&points, m, k)
    }

    pub fn kind(&self) -> NonlinearityKind {
        self.kind
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn regularization_level(&self) -> Option<u32> {
        match self.kind {
            NonlinearityKind::Regularized { n } => Some(n),
            _ => None,
        }
    }

    /// For regularized nonlinearities, the mollification scale `ε_n`.
    pub fn regularization_eps(&self) -> Option<f64> {
        match &*self.repr {
            Repr::Regularized { core, .. } => Some(core.eps),
            _ => None,
        }
    }

    /// `A(r)`.
    pub fn eval_a_fn(&self, r: f64) -> f64 {
        match &*self.repr {
            Repr::PowerLaw { m, .. } => r.abs().powf(m - 1.0) * r,
            Repr::Linear { slope } => slope * r,
            Repr::Tabulated(p) | Repr::Regularized { profile: p, .. } => r.signum() * p.big_a(r.abs()),
        }
    }

    /// `A'(r)`; for tabulated kinds, the derivative of the interpolant.
    pub fn eval_da(&self, r: f64) -> f64 {
        match &*self.repr {
            Repr::PowerLaw { m, .. } => m * r.abs().powf(m - 1.0),
            Repr::Linear { slope } => *slope,
            Repr::Tabulated(p) | Repr::Regularized { profile: p, .. } => p.big_a_derivative(r.abs()),
        }
    }

    /// `A(r)` and `A'(r)` in one lookup.
    #[inline]
    pub fn eval_a_and_da(&self, r: f64) -> (f64, f64) {
        match &*self.repr {
            Repr::PowerLaw { m, .. } => {
                let p = r.abs().powf(m - 1.0);
                (p * r, m * p)
            }
            Repr::Linear { slope } => (slope * r, *slope),
            Repr::Tabulated(p) | Repr::Regularized { profile: p, .. } => {
                let (a, da) = p.big_a_with_derivative(r.abs());
                (r.signum() * a, da)
            }
        }
    }

    /// `𝔞(r) = √A'(r)`.
    pub fn eval_a(&self, r: f64) -> f64 {
        match &*self.repr {
            Repr::PowerLaw { m, sqrt_m, .. } => sqrt_m * r.abs().powf(0.5 * (m - 1.0)),
            Repr::Linear { slope } => slope.sqrt(),
            Repr::Tabulated(p) => p.sqrt_diffusivity(r.abs()),
            Repr::Regularized { core, .. } => core.eval(r),
        }
    }

    /// `Ψ(r) = ∫_0^r 𝔞`.
    pub fn eval_psi(&self, r: f64) -> f64 {
        match &*self.repr {
            Repr::PowerLaw { m, psi_coef, .. } => r.signum() * psi_coef * r.abs().powf(0.5 * (m + 1.0)),
            Repr::Linear { slope } => slope.sqrt() * r,
            Repr::Tabulated(p) | Repr::Regularized { profile: p, .. } => r.signum() * p.psi(r.abs()),
        }
    }

    /// `Ψ_f(r) = ∫_0^r f 𝔞` by adaptive quadrature.
    pub fn eval_psi_f(&self, f: impl Fn(f64) -> f64, r: f64) -> Result<f64> {
        integrate_from_origin(|z| f(z) * self.eval_a(z), r, QUAD_TOL)
    }

    /// Lower bound of `A'` over the real line, when one is known.
    pub fn min_diffusivity(&self) -> f64 {
        match &*self.repr {
            Repr::PowerLaw { .. } => 0.0,
            Repr::Linear { slope } => *slope,
            Repr::Tabulated(p) => p.a.iter().copied().fold(f64::INFINITY, f64::min).powi(2),
            Repr::Regularized { core, .. } => (2.0 / core.n as f64).powi(2),
        }
    }
}

/// Hermite tables of `𝔞`, `Ψ` and `A` on nodes covering `[0, r_end]`,
/// extended linearly beyond.
#[derive(Debug)]
struct Profile {
    nodes: Vec<f64>,
    a: Vec<f64>,
    psi: Vec<f64>,
    big_a: Vec<f64>,
    /// Derivative of `𝔞` at the nodes, when the table carries it.
    da: Option<Vec<f64>>,
}

impl Profile {
    fn from_table(points: &[(f64, f64)]) -> Result<Self> {
        let pchip = Pchip::new(points);
        let refine = 16;
        let mut nodes = Vec::new();
        for w in points.windows(2) {
            for j in 0..refine {
                nodes.push(w[0].0 + (w[1].0 - w[0].0) * j as f64 / refine as f64);
            }
        }
        nodes.push(points.last().unwrap().0);
        let a: Vec<f64> = nodes.iter().map(|&r| pchip.derivative(r).max(0.0).sqrt()).collect();
        let big_a: Vec<f64> = nodes.iter().map(|&r| pchip.value(r)).collect();
        let mut psi = vec![0.0; nodes.len()];
        let tol = QUAD_TOL / nodes.len() as f64;
        for i in 1..nodes.len() {
            let (lo, hi) = (nodes[i - 1], nodes[i]);
            let seg = if i == 1 {
                integrate_from_origin(|z| pchip.derivative(z).max(0.0).sqrt(), hi, tol)?
            } else {
                adaptive_simpson(|z| pchip.derivative(z).max(0.0).sqrt(), lo, hi, tol)?
            };
            psi[i] = psi[i - 1] + seg;
        }
        let da = nodes
            .iter()
            .zip(&a)
            .map(|(&r, &av)| if av > 0.0 { pchip.second_derivative(r) / (2.0 * av) } else { 0.0 })
            .collect();
        Ok(Self {
            nodes,
            a,
            psi,
            big_a,
            da: Some(da),
        })
    }

    fn from_sqrt_diffusivity(nodes: Vec<f64>, eval: impl Fn(f64) -> f64) -> Self {
        let a: Vec<f64> = nodes.iter().map(|&r| eval(r)).collect();
        let mut psi = vec![0.0; nodes.len()];
        let mut big_a = vec![0.0; nodes.len()];
        for i in 1..nodes.len() {
            let h = nodes[i] - nodes[i - 1];
            let mid = eval(0.5 * (nodes[i] + nodes[i - 1]));
            psi[i] = psi[i - 1] + h / 6.0 * (a[i - 1] + 4.0 * mid + a[i]);
            big_a[i] = big_a[i - 1] + h / 6.0 * (a[i - 1].powi(2) + 4.0 * mid * mid + a[i].powi(2));
        }
        Self {
            nodes,
            a,
            psi,
            big_a,
            da: None,
        }
    }

    fn last(&self) -> usize {
        self.nodes.len() - 1
    }

    #[inline]
    fn locate(&self, r: f64) -> Option<(usize, f64, f64)> {
        let last = self.last();
        if r >= self.nodes[last] {
            return None;
        }
        let i = self.nodes.partition_point(|&x| x <= r).saturating_sub(1).min(last - 1);
        let h = self.nodes[i + 1] - self.nodes[i];
        Some((i, (r - self.nodes[i]) / h, h))
    }

    fn big_a(&self, r: f64) -> f64 {
        self.big_a_with_derivative(r).0
    }

    fn big_a_derivative(&self, r: f64) -> f64 {
        self.big_a_with_derivative(r).1
    }

    #[inline]
    fn big_a_with_derivative(&self, r: f64) -> (f64, f64) {
        match self.locate(r) {
            None => {
                let l = self.last();
                let slope = self.a[l] * self.a[l];
                (self.big_a[l] + slope * (r - self.nodes[l]), slope)
            }
            Some((i, t, h)) => {
                let d0 = self.a[i] * self.a[i];
                let d1 = self.a[i + 1] * self.a[i + 1];
                hermite(self.big_a[i], d0, self.big_a[i + 1], d1, t, h)
            }
        }
    }

    fn psi(&self, r: f64) -> f64 {
        match self.locate(r) {
            None => {
                let l = self.last();
                self.psi[l] + self.a[l] * (r - self.nodes[l])
            }
            Some((i, t, h)) => hermite(self.psi[i], self.a[i], self.psi[i + 1], self.a[i + 1], t, h).0,
        }
    }

    fn sqrt_diffusivity(&self, r: f64) -> f64 {
        match self.locate(r) {
            None => self.a[self.last()],
            Some((i, t, h)) => match &self.da {
                Some(da) => hermite(self.a[i], da[i], self.a[i + 1], da[i + 1], t, h).0.max(0.0),
                None => self.a[i] + t * (self.a[i + 1] - self.a[i]),
            },
        }
    }
}

#[inline]
fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, t: f64, h: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1;
    let dv = ((6.0 * t2 - 6.0 * t) * (y0 - y1)) / h + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1;
    (v, dv)
}

/// Fritsch–Carlson monotone cubic interpolation on `r ≥ 0`, with the
/// derivative at the origin matching the odd extension.
#[derive(Debug)]
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(points: &[(f64, f64)]) -> Self {
        let x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = x.len();
        let slopes: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut d = vec![0.0; n];
        // The odd reflection makes both one-sided secants at 0 equal.
        d[0] = slopes[0];
        d[n - 1] = slopes[n - 2];
        for i in 1..n - 1 {
            let (s0, s1) = (slopes[i - 1], slopes[i]);
            if s0 * s1 <= 0.0 {
                d[i] = 0.0;
            } else {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                d[i] = (w0 + w1) / (w0 / s0 + w1 / s1);
            }
        }
        Self { x, y, d }
    }

    fn segment(&self, r: f64) -> (usize, f64, f64) {
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v <= r).saturating_sub(1).min(n - 2);
        let h = self.x[i + 1] - self.x[i];
        (i, (r - self.x[i]) / h, h)
    }

    fn value(&self, r: f64) -> f64 {
        let last = *self.x.last().unwrap();
        if r >= last {
            return *self.y.last().unwrap() + self.d.last().unwrap() * (r - last);
        }
        let (i, t, h) = self.segment(r);
        hermite(self.y[i], self.d[i], self.y[i + 1], self.d[i + 1], t, h).0
    }

    fn derivative(&self, r: f64) -> f64 {
        if r >= *self.x.last().unwrap() {
            return *self.d.last().unwrap();
        }
        let (i, t, h) = self.segment(r);
        hermite(self.y[i], self.d[i], self.y[i + 1], self.d[i + 1], t, h).1
    }

    fn second_derivative(&self, r: f64) -> f64 {
        if r >= *self.x.last().unwrap() {
            return 0.0;
        }
        let (i, t, h) = self.segment(r);
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.d[i], self.d[i + 1]);
        ((12.0 * t - 6.0) * (y0 - y1) / h + (6.0 * t - 4.0) * d0 + (6.0 * t - 2.0) * d1) / h
    }
}

/// `𝔞_n = ρ̄_ε * (2/n + 𝔞(3ε ∨ |r| ∧ 3n))` with `ρ̄_ε(r) = ∫ρ_ε(r+s)ρ_ε(s)ds`.
///
/// The self-correlation is realized as the law of `ε(U - V)` with `U, V`
/// independent draws from the discretized bump.
#[derive(Debug)]
struct RegularizedCore {
    base: Nonlinearity,
    n: u32,
    eps: f64,
    shifts: Vec<f64>,
    weights: Vec<f64>,
}

impl RegularizedCore {
    fn new(base: Nonlinearity, n: u32, eps: f64) -> Self {
        let dm = DiscreteMollifier::new(16);
        let mut shifts = Vec::with_capacity(dm.len() * dm.len());
        let mut weights = Vec::with_capacity(dm.len() * dm.len());
        for (ti, wi) in dm.offsets().iter().zip(dm.weights()) {
            for (tj, wj) in dm.offsets().iter().zip(dm.weights()) {
                shifts.push(eps * (ti - tj));
                weights.push(wi * wj);
            }
        }
        Self {
            base,
            n,
            eps,
            shifts,
            weights,
        }
    }

    fn floor(&self) -> f64 {
        2.0 / self.n as f64
    }

    fn clamp_arg(&self, s: f64) -> f64 {
        s.abs().clamp(3.0 * self.eps, 3.0 * self.n as f64)
    }

    fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let mut acc = 0.0;
        for (s, w) in self.shifts.iter().zip(&self.weights) {
            acc += w * self.base.eval_a(self.clamp_arg(r + s));
        }
        self.floor() + acc
    }
}

/// Largest dyadic `ε` for which the continuity modulus criterion holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsN {
    pub value: f64,
    /// False when the criterion failed at every scanned scale; `value` is
    /// then the smallest scale scanned.
    pub certified: bool,
}

/// Deepest dyadic level scanned by [`compute_eps_n`].
pub const EPS_SCAN_DEPTH: u32 = 52;
const EPS_SCAN_CELLS_PER_SIDE: usize = 10_000;

/// Certified scan lower bound for
/// `sup{ε ∈ (0,1] : |𝔞(r) - 𝔞(ζ)| ≤ 1/n ∀ |r| ≤ 3n, |ζ - r| ≤ 3ε}`.
pub fn compute_eps_n(nl: &Nonlinearity, n: u32) -> EpsN {
    let n_f = n.max(1) as f64;
    let limit = 3.0 * n_f;
    let spacing = limit / EPS_SCAN_CELLS_PER_SIDE as f64;
    let count = 2 * EPS_SCAN_CELLS_PER_SIDE + 1;
    let r: Vec<f64> = (0..count)
        .map(|i| (i as f64 - EPS_SCAN_CELLS_PER_SIDE as f64) * spacing)
        .collect();
    let a: Vec<f64> = r.iter().map(|&x| nl.eval_a(x)).collect();
    let tol = 1.0 / n_f;
    let mut eps = 1.0;
    for _ in 0..=EPS_SCAN_DEPTH {
        if modulus_within(nl, &r, &a, spacing, 3.0 * eps, tol) {
            return EpsN {
                value: eps,
                certified: true,
            };
        }
        eps *= 0.5;
    }
    EpsN {
        value: eps * 2.0,
        certified: false,
    }
}

fn modulus_within(nl: &Nonlinearity, r: &[f64], a: &[f64], spacing: f64, reach: f64, tol: f64) -> bool {
    for (&x, &ax) in r.iter().zip(a) {
        if (nl.eval_a(x + reach) - ax).abs() > tol || (nl.eval_a(x - reach) - ax).abs() > tol {
            return false;
        }
    }
    let w = (reach / spacing + 1e-9).floor() as usize;
    if w == 0 {
        return true;
    }
    let (lo, hi) = sliding_extrema(a, w);
    a.iter()
        .zip(lo.iter().zip(&hi))
        .all(|(&v, (&l, &h))| v - l <= tol && h - v <= tol)
}

/// Minimum and maximum of `a[i-w..=i+w]` (clipped to the slice) for every `i`.
fn sliding_extrema(a: &[f64], w: usize) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    let mut qmin: VecDeque<usize> = VecDeque::new();
    let mut qmax: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let right = (i + w).min(n - 1);
        while next <= right {
            while qmin.back().is_some_and(|&j| a[j] >= a[next]) {
                qmin.pop_back();
            }
            qmin.push_back(next);
            while qmax.back().is_some_and(|&j| a[j] <= a[next]) {
                qmax.pop_back();
            }
            qmax.push_back(next);
            next += 1;
        }
        let left = i.saturating_sub(w);
        while qmin.front().is_some_and(|&j| j < left) {
            qmin.pop_front();
        }
        while qmax.front().is_some_and(|&j| j < left) {
            qmax.pop_front();
        }
        lo[i] = a[qmin[0]];
        hi[i] = a[qmax[0]];
    }
    (lo, hi)
}

/// Smooth nondegenerate approximation `A_n` with `𝔞_n ≥ 2/n` and
/// `sup_{|r|≤n} |𝔞 - 𝔞_n| ≤ 4/n`.
pub fn regularize_a(nl: &Nonlinearity, n: u32) -> Result<Nonlinearity> {
    if n == 0 {
        return Err(Error::param("n", "regularization level must be positive"));
    }
    let report = validate_assumption_a(nl, &standard_samples());
    if !report.all_passed() {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(Error::Validation(format!(
            "nonlinearity fails structural checks before regularization: {}",
            names.join(", ")
        )));
    }
    let eps = compute_eps_n(nl, n);
    if !eps.certified {
        return Err(Error::param(
            "eps_n",
            format!("modulus of continuity not resolved down to 2^-{EPS_SCAN_DEPTH} for n = {n}"),
        ));
    }
    let core = RegularizedCore::new(nl.clone(), n, eps.value);
    let nodes = regularized_nodes(eps.value, 3.0 * n as f64 + 2.0 * eps.value);
    let profile = Profile::from_sqrt_diffusivity(nodes, |r| core.eval(r));
    Ok(Nonlinearity {
        kind: NonlinearityKind::Regularized { n },
        m: nl.m,
        k: 3.0 * nl.k,
        repr: Arc::new(Repr::Regularized { core, profile }),
    })
}

fn regularized_nodes(eps: f64, end: f64) -> Vec<f64> {
    let inner = 8.0 * eps;
    let mut nodes: Vec<f64> = (0..=64).map(|i| inner * i as f64 / 64.0).collect();
    let ratio = 1.002;
    let mut r = inner;
    while r < end {
        r = (r * ratio).min(end);
        nodes.push(r);
    }
    nodes
}

/// `R_λ = sup{R ≤ R_max : |𝔞(r) - 𝔞̃(r)| ≤ λ for all scanned |r| < R}`,
/// or `+∞` if the bound holds on the whole scan.
pub fn compute_r_lambda(
    a: impl Fn(f64) -> f64,
    a_tilde: impl Fn(f64) -> f64,
    lambda: f64,
    r_max: f64,
) -> f64 {
    const POINTS: usize = 100_000;
    for i in 0..=POINTS {
        let r = r_max * i as f64 / POINTS as f64;
        if (a(r) - a_tilde(r)).abs() > lambda {
            return r;
        }
    }
    f64::INFINITY
}

/// Default `R_max` for [`compute_r_lambda`].
pub const R_LAMBDA_MAX: f64 = 100.0;

/// Sample grid covering `[-4, 4]` with extra points near the origin.
pub fn standard_samples() -> Vec<f64> {
    let mut s: Vec<f64> = (0..=400).map(|i| -4.0 + 8.0 * i as f64 / 400.0).collect();
    for k in 1..=12 {
        let v = 10f64.powf(-(k as f64) / 3.0);
        s.push(v);
        s.push(-v);
    }
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Checks oddness, monotonicity, and the bounds on `𝔞`, `𝔞'` and `Ψ` over
/// the given samples.
pub fn validate_assumption_a(nl: &Nonlinearity, samples: &[f64]) -> ValidationReport {
    let k = nl.k;
    let m = nl.m;
    let mut report = ValidationReport::new(format!("structural checks for A (m = {m}, K = {k})"));

    let mut odd = CheckOutcome::new("A odd");
    let mut inc = CheckOutcome::new("A strictly increasing");
    for &r in samples {
        let diff = (nl.eval_a_fn(-r) + nl.eval_a_fn(r)).abs();
        odd.record(diff, 1e-12 * nl.eval_a_fn(r).abs().max(1.0), &[r]);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            let gap = nl.eval_a_fn(w[1]) - nl.eval_a_fn(w[0]);
            inc.record(-gap, -f64::MIN_POSITIVE, &[w[0], w[1]]);
        }
    }
    report.push(odd);
    report.push(inc);

    let mut a0 = CheckOutcome::new("|a(0)| <= K");
    a0.record(nl.eval_a(0.0).abs(), k, &[0.0]);
    report.push(a0);

    let mut da = CheckOutcome::new("|a'(r)| <= K r^((m-3)/2)");
    for &r in samples.iter().filter(|&&r| r >= 1e-3) {
        let h = 1e-5 * r.max(1.0);
        let deriv = (nl.eval_a(r + h) - nl.eval_a(r - h)) / (2.0 * h);
        let bound = k * r.powf(0.5 * (m - 3.0));
        da.record(deriv.abs(), bound + 1e-6 * bound.max(1.0), &[r]);
    }
    report.push(da);

    let mut lower = CheckOutcome::new("K a(r) >= 1 for |r| >= 1");
    for &r in samples.iter().filter(|&&r| r.abs() >= 1.0) {
        lower.record(-k * nl.eval_a(r), -1.0, &[r]);
    }
    report.push(lower);

    let mut psi = CheckOutcome::new("K |Psi(r) - Psi(z)| lower bound");
    let stride = samples.len().div_ceil(401).max(1);
    let pair_samples: Vec<f64> = samples.iter().step_by(stride).copied().collect();
    let psi_vals: Vec<f64> = pair_samples.iter().map(|&r| nl.eval_psi(r)).collect();
    for (i, &r) in pair_samples.iter().enumerate() {
        for (j, &z) in pair_samples.iter().enumerate().skip(i + 1) {
            let gap = (r - z).abs();
            let required = if r.abs().max(z.abs()) >= 1.0 {
                gap
            } else {
                gap.powf(0.5 * (m + 1.0))
            };
            let have = k * (psi_vals[i] - psi_vals[j]).abs();
            // Relative slack absorbs rounding in Ψ differences.
            psi.record(required, have * (1.0 + 1e-12) + 1e-15, &[r, z]);
        }
    }
    report.push(psi);
    report
}

/// An entropy flux `q_η` with `q_η' = η' 𝔞²` and `q_η(0) = 0`.
#[derive(Debug, Clone)]
pub struct EntropyFlux {
    eta: EntropyFunction,
    nl: Nonlinearity,
    support: f64,
    /// `∫_0^s η''(ζ) A(ζ) dζ` on the support of `η''`.
    correction: Option<Arc<CumulativeTable>>,
}

/// `q_η(r) = η'(r) A(r) - ∫_0^r η'' A`, the integration-by-parts form of
/// `∫_0^r η' A'`.
pub fn make_q_eta(nl: &Nonlinearity, eta: &EntropyFunction) -> EntropyFlux {
    let support = eta.support_radius();
    let correction = (support > 0.0).then(|| {
        let cells = if eta.delta() > 0.0 {
            let theta = match eta.family() {
                crate::entropy::EntropyFamily::Logarithmic => eta.delta() * eta.delta() / 4.0,
                _ => eta.delta(),
            };
            ((support / (theta / 64.0)).ceil() as usize).clamp(2048, 200_000)
        } else {
            2048
        };
        let eta2 = eta.clone();
        let nl2 = nl.clone();
        Arc::new(CumulativeTable::build(
            move |s| eta2.eval_d2(s) * nl2.eval_a_fn(s),
            support,
            cells,
        ))
    });
    EntropyFlux {
        eta: eta.clone(),
        nl: nl.clone(),
        support,
        correction,
    }
}

impl EntropyFlux {
    pub fn eta(&self) -> &EntropyFunction {
        &self.eta
    }

    pub fn eval(&self, r: f64) -> f64 {
        let head = self.eta.eval_d1(r) * self.nl.eval_a_fn(r);
        match &self.correction {
            None => head,
            Some(t) => head - t.first(r.abs().min(self.support)),
        }
    }
}
