//! Semi-implicit Euler–Maruyama integration of
//! `du = ΔA_n(u) dt + Σ_k σ_n^k(x, u) dβ^k` on a periodic lattice.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad_psi_norms, GridField, TorusGrid};
use crate::noise::{DiffusionCoefficient, WienerPath};
use crate::nonlinearity::Nonlinearity;

/// Newton iteration cap per step.
pub const NEWTON_MAX_ITERS: usize = 50;
/// Newton acceptance threshold on the Euclidean residual is this times `N^{d/2}`.
pub const NEWTON_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

/// Uniform time mesh with a save cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    pub dt: f64,
    pub steps: usize,
    pub save_every: usize,
}

impl TimeMesh {
    pub fn new(t_final: f64, steps: usize, save_every: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::param("T", "final time must be positive"));
        }
        if save_every == 0 {
            return Err(Error::param("save_every", "must be positive"));
        }
        let steps_f = steps.max(1) as f64;
        Ok(Self {
            dt: t_final / steps_f,
            steps,
            save_every,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// Step indices at which the state is recorded: `0`, every
    /// `save_every`-th step, and the last step.
    pub fn save_steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = (0..=self.steps).step_by(self.save_every).collect();
        if *s.last().unwrap() != self.steps {
            s.push(self.steps);
        }
        s
    }
}

/// Everything a run needs besides the noise: lattice, regularized
/// coefficients and mollified initial datum.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: TorusGrid,
    pub nl: Nonlinearity,
    pub sigma: DiffusionCoefficient,
    pub xi: GridField,
}

impl Problem {
    pub fn new(nl: Nonlinearity, sigma: DiffusionCoefficient, xi: GridField) -> Result<Self> {
        if nl.min_diffusivity() <= 0.0 {
            return Err(Error::param(
                "nonlinearity",
                "the solver needs a nondegenerate (regularized or linear) nonlinearity",
            ));
        }
        if sigma.dim() != xi.grid.dim() {
            return Err(Error::param("sigma", "dimension differs from the grid"));
        }
        Ok(Self {
            grid: xi.grid,
            nl,
            sigma,
            xi,
        })
    }
}

/// Norms recorded at one save time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    /// `‖u‖_{L_{m+1}}`.
    pub lm1: f64,
    pub grad_psi_l1: f64,
    pub grad_psi_l2: f64,
}

impl NormRecord {
    pub fn of(t: f64, u: &GridField, nl: &Nonlinearity) -> Self {
        let (g1, g2) = grad_psi_norms(u, nl);
        Self {
            t,
            mass: u.mass(),
            l1: u.lp_norm(1.0),
            l2: u.lp_norm(2.0),
            lm1: u.lp_norm(nl.m() + 1.0),
            grad_psi_l1: g1,
            grad_psi_l2: g2,
        }
    }
}

/// Saved states and norms of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mesh: TimeMesh,
    pub seed: u64,
    pub config_hash: String,
    pub times: Vec<f64>,
    pub fields: Vec<GridField>,
    pub records: Vec<NormRecord>,
    /// Total Newton iterations over the run.
    pub newton_iterations: usize,
}

pub const CSV_HEADER: [&str; 7] = ["t", "mass", "L1", "L2", "Lm1", "gradPsi_L1", "gradPsi_L2"];

impl Trajectory {
    /// One row per save time, preceded by a `# config_hash=` comment line.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# config_hash={} seed={}", self.config_hash, self.seed)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(CSV_HEADER)?;
        for r in &self.records {
            csv.write_record(
                [r.t, r.mass, r.l1, r.l2, r.lm1, r.grad_psi_l1, r.grad_psi_l2].map(|v| v.to_string()),
            )?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn final_field(&self) -> &GridField {
        self.fields.last().expect("trajectory has at least the initial field")
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub struct Workspace {
    coords: Vec<[f64; 2]>,
    rhs: Vec<f64>,
    a: Vec<f64>,
    da: Vec<f64>,
    lap: Vec<f64>,
    residual: Vec<f64>,
    delta: Vec<f64>,
    trial: Vec<f64>,
    scratch: [Vec<f64>; 4],
}

impl Workspace {
    pub fn new(grid: &TorusGrid) -> Self {
        let n = grid.len();
        Self {
            coords: (0..n).map(|i| grid.coords(i)).collect(),
            rhs: vec![0.0; n],
            a: vec![0.0; n],
            da: vec![0.0; n],
            lap: vec![0.0; n],
            residual: vec![0.0; n],
            delta: vec![0.0; n],
            trial: vec![0.0; n],
            scratch: std::array::from_fn(|_| vec![0.0; n]),
        }
    }
}

/// Advances `state` by one step, returning the Newton iteration count.
///
/// Solves `u⁺ - dt Δ_h A(u⁺) = u + Σ_k σ^k(x, u) ΔW^k` in place.
pub fn step_in_place(
    grid: &TorusGrid,
    state: &mut [f64],
    dt: f64,
    nl: &Nonlinearity,
    sc: &DiffusionCoefficient,
    dw: &[f64],
    ws: &mut Workspace,
) -> Result<usize> {
    let noiseless = sc.is_zero() || dw.iter().all(|&w| w == 0.0);
    for (i, b) in ws.rhs.iter_mut().enumerate() {
        *b = state[i];
        if !noiseless {
            *b += sc.forcing(ws.coords[i], state[i], dw);
        }
    }
    if !ws.rhs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    state.copy_from_slice(&ws.rhs);
    let tol = NEWTON_TOL * (grid.len() as f64).sqrt();
    let mut res = residual(grid, state, dt, nl, ws);
    let mut iters = 0;
    while res > tol {
        if iters == NEWTON_MAX_ITERS {
            return Err(Error::NewtonDivergence {
                iterations: iters,
                residual: res,
            });
        }
        iters += 1;
        solve_jacobian(grid, dt, ws)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            for i in 0..state.len() {
                ws.trial[i] = state[i] - lambda * ws.delta[i];
            }
            let trial = std::mem::take(&mut ws.trial);
            let r_new = residual(grid, &trial, dt, nl, ws);
            ws.trial = trial;
            if r_new.is_finite() && r_new <= res {
                state.copy_from_slice(&ws.trial);
                res = r_new;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence {
                iterations: iters,
                residual: res,
            });
        }
    }
    if !state.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(iters)
}

/// Fills `ws.residual = v - dt Δ_h A(v) - rhs`, `ws.a`, `ws.da`; returns `‖F‖_2`.
fn residual(grid: &TorusGrid, v: &[f64], dt: f64, nl: &Nonlinearity, ws: &mut Workspace) -> f64 {
    for (i, &x) in v.iter().enumerate() {
        let (a, da) = nl.eval_a_and_da(x);
        ws.a[i] = a;
        ws.da[i] = da;
    }
    crate::grid::laplacian_into(grid, &ws.a, &mut ws.lap);
    let mut sq = 0.0;
    for i in 0..v.len() {
        let f = v[i] - dt * ws.lap[i] - ws.rhs[i];
        ws.residual[i] = f;
        sq += f * f;
    }
    sq.sqrt()
}

/// Solves `(I - dt Δ_h diag(A')) δ = F` through the symmetric form
/// `(diag(A')^{-1} - dt Δ_h) y = F`, `δ = y / A'`.
fn solve_jacobian(grid: &TorusGrid, dt: f64, ws: &mut Workspace) -> Result<()> {
    let c = dt * (grid.points_per_axis() * grid.points_per_axis()) as f64;
    let n = grid.len();
    let [diag, s1, s2, s3] = &mut ws.scratch;
    for i in 0..n {
        diag[i] = 1.0 / ws.da[i] + 2.0 * grid.dim() as f64 * c;
    }
    if grid.dim() == 1 {
        cyclic_tridiagonal(diag, -c, &ws.residual, &mut ws.delta, s1, s2)?;
    } else {
        pcg(grid, diag, c, &ws.residual, &mut ws.delta, s1, s2, s3)?;
    }
    for i in 0..n {
        ws.delta[i] /= ws.da[i];
    }
    Ok(())
}

/// Symmetric cyclic tridiagonal solve with constant off-diagonal `off`
/// (Sherman–Morrison on the Thomas algorithm).
fn cyclic_tridiagonal(diag: &[f64], off: f64, rhs: &[f64], x: &mut [f64], cp: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let gamma = -diag[0];
    // Modified diagonal: b0 - γ, b_{n-1} - off²/γ.
    let b = |i: usize| {
        if i == 0 {
            diag[0] - gamma
        } else if i == n - 1 {
            diag[n - 1] - off * off / gamma
        } else {
            diag[i]
        }
    };
    let thomas = |d: &dyn Fn(usize) -> f64, out: &mut [f64], cp: &mut [f64]| {
        let mut denom = b(0);
        cp[0] = off / denom;
        out[0] = d(0) / denom;
        for i in 1..n {
            denom = b(i) - off * cp[i - 1];
            cp[i] = off / denom;
            out[i] = (d(i) - off * out[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            out[i] -= cp[i] * out[i + 1];
        }
    };
    thomas(&|i| rhs[i], x, cp);
    thomas(
        &|i| {
            if i == 0 {
                gamma
            } else if i == n - 1 {
                off
            } else {
                0.0
            }
        },
        z,
        cp,
    );
    let fact = (x[0] + off * x[n - 1] / gamma) / (1.0 + z[0] + off * z[n - 1] / gamma);
    for i in 0..n {
        x[i] -= fact * z[i];
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Jacobi-preconditioned conjugate gradients for `(diag - c·h²Δ_h) y = rhs`.
#[allow(clippy::too_many_arguments)]
fn pcg(
    grid: &TorusGrid,
    diag: &[f64],
    c: f64,
    rhs: &[f64],
    x: &mut [f64],
    r: &mut [f64],
    p: &mut [f64],
    q: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut nb = 0.0;
            for axis in 0..grid.dim() {
                nb += v[grid.forward(i, axis)] + v[grid.backward(i, axis)];
            }
            out[i] = diag[i] * v[i] - c * nb;
        }
    };
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    for i in 0..n {
        x[i] = rhs[i] / diag[i];
    }
    apply(x, q);
    for i in 0..n {
        r[i] = rhs[i] - q[i];
        p[i] = r[i] / diag[i];
    }
    let mut rz: f64 = (0..n).map(|i| r[i] * r[i] / diag[i]).sum();
    let tol = 1e-13 * rhs_norm;
    for _ in 0..10 * n {
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= tol {
            return Ok(());
        }
        apply(p, q);
        let pq: f64 = p.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rz_new: f64 = (0..n).map(|i| r[i] * r[i] / diag[i]).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = r[i] / diag[i] + beta * p[i];
        }
    }
    let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rn <= 1e-8 * rhs_norm {
        Ok(())
    } else {
        Err(Error::NewtonDivergence {
            iterations: 10 * n,
            residual: rn,
        })
    }
}

/// Single step on a [`GridField`].
pub fn step(
    state: &GridField,
    dt: f64,
    nl: &Nonlinearity,
    sc: &DiffusionCoefficient,
    dw: &[f64],
) -> Result<GridField> {
    let mut out = state.clone();
    let mut ws = Workspace::new(&state.grid);
    step_in_place(&state.grid, &mut out.values, dt, nl, sc, dw, &mut ws)?;
    Ok(out)
}

/// Integrates `problem` over `mesh` driven by `path`.
pub fn solve(problem: &Problem, mesh: &TimeMesh, path: &WienerPath, config_hash: &str) -> Result<Trajectory> {
    solve_observed(problem, mesh, path, config_hash, |_, _| {})
}

/// As [`solve`], additionally calling `observer(k, u^k)` for every step
/// index `k = 0..=steps`.
pub fn solve_observed(
    problem: &Problem,
    mesh: &TimeMesh,
    path: &WienerPath,
    config_hash: &str,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<Trajectory> {
    if path.steps < mesh.steps {
        return Err(Error::param("wiener", "path shorter than the time mesh"));
    }
    if path.modes < problem.sigma.mode_count() {
        return Err(Error::param("wiener", "path has fewer modes than the coefficient"));
    }
    if (path.dt - mesh.dt).abs() > 1e-12 * mesh.dt {
        return Err(Error::param("wiener", "path time step differs from the mesh"));
    }
    let grid = problem.grid;
    let mut ws = Workspace::new(&grid);
    let mut u = problem.xi.values.clone();
    let saves = mesh.save_steps();
    let mut traj = Trajectory {
        mesh: *mesh,
        seed: path.seed,
        config_hash: config_hash.to_string(),
        times: Vec::with_capacity(saves.len()),
        fields: Vec::with_capacity(saves.len()),
        records: Vec::with_capacity(saves.len()),
        newton_iterations: 0,
    };
    let record = |traj: &mut Trajectory, k: usize, u: &[f64]| {
        let t = k as f64 * mesh.dt;
        let f = GridField {
            grid,
            values: u.to_vec(),
        };
        traj.times.push(t);
        traj.records.push(NormRecord::of(t, &f, &problem.nl));
        traj.fields.push(f);
    };
    let mut next_save = saves.iter().copied().peekable();
    observer(0, &u);
    if next_save.peek() == Some(&0) {
        record(&mut traj, 0, &u);
        next_save.next();
    }
    for k in 0..mesh.steps {
        let dw = &path.row(k)[..problem.sigma.mode_count()];
        let iters = step_in_place(&grid, &mut u, mesh.dt, &problem.nl, &problem.sigma, dw, &mut ws).map_err(
            |e| Error::Step {
                step: k,
                seed: path.seed,
                source: Box::new(e),
            },
        )?;
        traj.newton_iterations += iters;
        observer(k + 1, &u);
        if next_save.peek() == Some(&(k + 1)) {
            record(&mut traj, k + 1, &u);
            next_save.next();
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 9;
        let diag: Vec<f64> = (0..n).map(|i| 3.0 + 0.1 * i as f64).collect();
        let off = -1.2;
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        cyclic_tridiagonal(&diag, off, &rhs, &mut x, &mut a, &mut b).unwrap();
        for i in 0..n {
            let ax = diag[i] * x[i] + off * (x[(i + 1) % n] + x[(i + n - 1) % n]);
            assert!((ax - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn save_steps_include_ends() {
        let m = TimeMesh::new(1.0, 10, 4).unwrap();
        assert_eq!(m.save_steps(), vec![0, 4, 8, 10]);
        let z = TimeMesh::new(1.0, 0, 4).unwrap();
        assert_eq!(z.save_steps(), vec![0]);
    }
}
