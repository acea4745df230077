//! Periodic lattices on `𝕋^d`, sampled fields and the grid operators the
//! solver and the probes share.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mollifier::DiscreteMollifier;
use crate::nonlinearity::Nonlinearity;

/// Variable slots available to initial-condition expressions.
pub const XI_VARS: &[&[&str]] = &[&["x", "x1"], &["y", "x2"]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    d: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::param("d", "dimension must be 1 or 2"));
        }
        if n < 8 {
            return Err(Error::param("N", "at least 8 points per axis required"));
        }
        Ok(Self { d, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Coordinates of the point with flat index `i` (row-major, `x1` slow).
    pub fn coords(&self, i: usize) -> [f64; 2] {
        let h = self.h();
        match self.d {
            1 => [i as f64 * h, 0.0],
            _ => [(i / self.n) as f64 * h, (i % self.n) as f64 * h],
        }
    }

    /// Flat index of the forward neighbour along `axis`.
    #[inline]
    pub fn forward(&self, i: usize, axis: usize) -> usize {
        let n = self.n;
        match (self.d, axis) {
            (1, _) => if i + 1 == n { 0 } else { i + 1 },
            (_, 0) => (i + n) % (n * n),
            _ => {
                let row = i - i % n;
                row + (i % n + 1) % n
            }
        }
    }

    /// Flat index of the backward neighbour along `axis`.
    #[inline]
    pub fn backward(&self, i: usize, axis: usize) -> usize {
        let n = self.n;
        match (self.d, axis) {
            (1, _) => if i == 0 { n - 1 } else { i - 1 },
            (_, 0) => (i + n * n - n) % (n * n),
            _ => {
                let row = i - i % n;
                row + (i % n + n - 1) % n
            }
        }
    }

    /// Flat index of the point shifted by `offset` cells along each axis.
    pub fn shifted(&self, i: usize, offset: [isize; 2]) -> usize {
        let n = self.n as isize;
        match self.d {
            1 => (i as isize + offset[0]).rem_euclid(n) as usize,
            _ => {
                let a = ((i / self.n) as isize + offset[0]).rem_euclid(n);
                let b = ((i % self.n) as isize + offset[1]).rem_euclid(n);
                (a * n + b) as usize
            }
        }
    }

    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> GridField {
        GridField {
            grid: *self,
            values: (0..self.len()).map(|i| f(self.coords(i))).collect(),
        }
    }
}

/// Values of a function on every lattice point of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param("values", format!("expected {} values, got {}", grid.len(), values.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `∫u ≈ h^d Σ u`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete `L_p` norm for `p ≥ 1`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let vol = self.grid.cell_volume();
        if p == 1.0 {
            return self.values.iter().map(|v| v.abs()).sum::<f64>() * vol;
        }
        if p == 2.0 {
            return (self.values.iter().map(|v| v * v).sum::<f64>() * vol).sqrt();
        }
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * vol).powf(1.0 / p)
    }

    pub fn l1_distance(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn l2_distance_sq(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Binary dump: `d: u64, N: u64, t: f64`, then the values, little-endian.
    pub fn write_to(&self, t: f64, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.grid.d as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&t.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`GridField::write_to`], returning `(field, t)`.
    pub fn read_from(mut r: impl Read) -> Result<(Self, f64)> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let d = u64::from_le_bytes(buf) as usize;
        r.read_exact(&mut buf)?;
        let n = u64::from_le_bytes(buf) as usize;
        r.read_exact(&mut buf)?;
        let t = f64::from_le_bytes(buf);
        let grid = TorusGrid::new(d, n)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok((Self { grid, values }, t))
    }

    /// Periodic multilinear interpolation at `x ∈ 𝕋^d`.
    pub fn interpolate(&self, x: [f64; 2]) -> f64 {
        let n = self.grid.n;
        let split = |c: f64| {
            let s = c.rem_euclid(1.0) * n as f64;
            let i = (s.floor() as usize).min(n - 1);
            (i, s - i as f64, (i + 1) % n)
        };
        match self.grid.d {
            1 => {
                let (i, t, j) = split(x[0]);
                (1.0 - t) * self.values[i] + t * self.values[j]
            }
            _ => {
                let (i0, s, i1) = split(x[0]);
                let (j0, t, j1) = split(x[1]);
                let v = |a: usize, b: usize| self.values[a * n + b];
                (1.0 - s) * ((1.0 - t) * v(i0, j0) + t * v(i0, j1)) + s * ((1.0 - t) * v(i1, j0) + t * v(i1, j1))
            }
        }
    }
}

/// Writes the periodic 5-point (3-point in 1D) Laplacian of `f` into `out`.
pub fn laplacian_into(grid: &TorusGrid, f: &[f64], out: &mut [f64]) {
    let inv_h2 = (grid.n * grid.n) as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for axis in 0..grid.d {
            acc += f[grid.forward(i, axis)] + f[grid.backward(i, axis)] - 2.0 * f[i];
        }
        *o = acc * inv_h2;
    }
}

/// Second-order periodic Laplacian `Δ_h f`.
pub fn discrete_laplacian(f: &GridField) -> GridField {
    let mut out = vec![0.0; f.values.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    GridField {
        grid: f.grid,
        values: out,
    }
}

/// `(‖∇_h g‖_{L1}, ‖∇_h g‖_{L2})` for the forward-difference gradient of the
/// pointwise transform `g = G(f)`.
pub fn grad_norms(f: &GridField, transform: impl Fn(f64) -> f64) -> (f64, f64) {
    let g: Vec<f64> = f.values.iter().map(|&v| transform(v)).collect();
    let grid = &f.grid;
    let inv_h = grid.n as f64;
    let (mut l1, mut l2) = (0.0, 0.0);
    for i in 0..g.len() {
        let mut sq = 0.0;
        for axis in 0..grid.d {
            let d = (g[grid.forward(i, axis)] - g[i]) * inv_h;
            sq += d * d;
        }
        l1 += sq.sqrt();
        l2 += sq;
    }
    let vol = grid.cell_volume();
    (l1 * vol, (l2 * vol).sqrt())
}

/// `(‖∇_h Ψ(f)‖_{L1}, ‖∇_h Ψ(f)‖_{L2})`.
pub fn grad_psi_norms(f: &GridField, nl: &Nonlinearity) -> (f64, f64) {
    grad_norms(f, |v| nl.eval_psi(v))
}

/// Raw initial datum: a closed-form expression in `x` (and `y`) or a
/// sampled field interpolated periodically.
#[derive(Debug, Clone)]
pub enum InitialData {
    Expr(Expr),
    Field(GridField),
}

impl InitialData {
    pub fn parse(source: &str) -> Result<Self> {
        Ok(Self::Expr(Expr::parse(source, XI_VARS)?))
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Self::Expr(e) => e.eval(&[x[0], x[1]]),
            Self::Field(f) => f.interpolate(x),
        }
    }

    pub fn sample(&self, grid: &TorusGrid) -> GridField {
        grid.sample(|x| self.eval(x))
    }
}

/// `ξ_n = ρ_{1/n}^{⊗d} * ((-n) ∨ ξ ∧ n)` sampled on `grid`.
///
/// The convolution uses a composite Gauss rule (8 panels of 8 nodes) in 1D
/// and 8 tensor Gauss nodes per axis in 2D.
pub fn mollify_xi(xi: &InitialData, n: u32, grid: &TorusGrid) -> Result<GridField> {
    if n == 0 {
        return Err(Error::param("n", "mollification level must be positive"));
    }
    let bound = n as f64;
    let theta = 1.0 / bound;
    let clamp = |x: [f64; 2]| xi.eval(x).clamp(-bound, bound);
    let out = match grid.d {
        1 => {
            let dm = DiscreteMollifier::composite(8, 8);
            grid.sample(|x| dm.convolve(theta, x[0], |s| clamp([s, 0.0])))
        }
        _ => {
            let dm = DiscreteMollifier::new(8);
            grid.sample(|x| dm.convolve(theta, x[0], |s| dm.convolve(theta, x[1], |t| clamp([s, t]))))
        }
    };
    if !out.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn neighbours_wrap() {
        let g = TorusGrid::new(2, 8).unwrap();
        assert_eq!(g.forward(7, 1), 0);
        assert_eq!(g.backward(0, 1), 7);
        assert_eq!(g.forward(63, 0), 7);
        assert_eq!(g.backward(3, 0), 59);
        assert_eq!(g.shifted(0, [-1, -1]), 63);
        let g1 = TorusGrid::new(1, 8).unwrap();
        assert_eq!(g1.forward(7, 0), 0);
        assert!(TorusGrid::new(1, 4).is_err());
    }

    #[test]
    fn laplacian_of_sine() {
        let g = TorusGrid::new(1, 256).unwrap();
        let f = g.sample(|x| (2.0 * PI * x[0]).sin());
        let lap = discrete_laplacian(&f);
        let tol = (2.0 * PI * g.h()).powi(2) * 4.0 * PI * PI;
        for (i, v) in lap.values.iter().enumerate() {
            let exact = -4.0 * PI * PI * f.values[i];
            assert!((v - exact).abs() <= tol);
        }
        assert!(lap.values.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn field_roundtrip() {
        let g = TorusGrid::new(2, 8).unwrap();
        let f = g.sample(|x| x[0] - 2.0 * x[1]);
        let mut buf = Vec::new();
        f.write_to(0.25, &mut buf).unwrap();
        let (back, t) = GridField::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert_eq!(t, 0.25);
    }

    #[test]
    fn mollified_constants() {
        let g = TorusGrid::new(1, 32).unwrap();
        let zero = mollify_xi(&InitialData::parse("0").unwrap(), 5, &g).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let c = mollify_xi(&InitialData::parse("3").unwrap(), 5, &g).unwrap();
        assert!(c.values.iter().all(|&v| v == 3.0));
        let big = mollify_xi(&InitialData::parse("30").unwrap(), 5, &g).unwrap();
        assert!(big.values.iter().all(|&v| v == 5.0));
    }
}
