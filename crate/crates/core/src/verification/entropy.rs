//! Ensemble-mean residual of the entropy inequality
//!
//! `-∫∫η(u)∂_tφ ≤ ∫η(ξ)φ(0) + ∫∫q_η(u)Δφ + ∫∫(½φη''(u)|σ|² - φη''(u)|∇Ψ(u)|²)`
//!
//! for `φ = ϕ(t)ϱ(x)`, with the martingale term dropped after expectation.
//!
//! Each term is summed along the scheme so that for `η(r) = ±r` the
//! residual of one run is exactly the discrete stochastic integral.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::stats::{mean_se, par_seeds, refined, refinement_pair, DiscSlack, ProbeOutput, Table, TestVerdict, SE_MULTIPLIER};
use crate::config::{RunConfig, Setup};
use crate::entropy::{EntropyFamily, EntropyFunction};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{discrete_laplacian, XI_VARS};
use crate::noise::{sample_wiener, WienerPath};
use crate::nonlinearity::{make_q_eta, EntropyFlux};
use crate::solver::solve_observed;

/// Variable slots for the time factor: `t` and the horizon `T`.
pub const TIME_VARS: &[&[&str]] = &[&["t"], &["T"]];

/// `φ(t, x) = ϕ(t) ϱ(x)`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub phi_time: Expr,
    pub phi_space: Expr,
}

impl TestFunction {
    pub fn parse(phi_time: &str, phi_space: &str) -> Result<Self> {
        Ok(Self {
            phi_time: Expr::parse(phi_time, TIME_VARS)?,
            phi_space: Expr::parse(phi_space, XI_VARS)?,
        })
    }

    pub fn label(&self) -> String {
        format!("phi={} rho={}", self.phi_time.source(), self.phi_space.source())
    }
}

/// Deterministic terms of the inequality for one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EntropyTerms {
    /// `-∫∫η(u)∂_tφ`.
    pub time: f64,
    /// `∫η(ξ)φ(0)`.
    pub init: f64,
    /// `∫∫q_η(u)Δφ`.
    pub flux: f64,
    /// `∫∫½φη''(u)|σ(u)|²`.
    pub ito: f64,
    /// `∫∫φη''(u)|∇Ψ(u)|²`.
    pub diss: f64,
}

impl EntropyTerms {
    /// `LHS - RHS`; non-positive in expectation for an entropy solution.
    pub fn residual(&self) -> f64 {
        self.time - self.init - self.flux - self.ito + self.diss
    }
}

struct Prepared {
    rho: Vec<f64>,
    lap_rho: Vec<f64>,
    /// Edge averages of `ϱ` toward the forward neighbour, per axis.
    rho_edge: Vec<[f64; 2]>,
    phi: Vec<f64>,
}

fn prepare(setup: &Setup, tf: &TestFunction) -> Result<Prepared> {
    let grid = setup.problem.grid;
    let rho_field = grid.sample(|x| tf.phi_space.eval(&x));
    let lap_rho = discrete_laplacian(&rho_field).values;
    let rho = rho_field.values;
    let rho_edge = (0..grid.len())
        .map(|i| {
            let mut e = [0.0; 2];
            for (axis, v) in e.iter_mut().enumerate().take(grid.dim()) {
                *v = 0.5 * (rho[i] + rho[grid.forward(i, axis)]);
            }
            e
        })
        .collect();
    let t_final = setup.mesh.t_final();
    let phi: Vec<f64> = (0..=setup.mesh.steps)
        .map(|k| tf.phi_time.eval(&[k as f64 * setup.mesh.dt, t_final]))
        .collect();
    let scale = phi.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if phi.last().unwrap().abs() > 1e-12 * scale {
        return Err(Error::param("phi_time", "the time factor must vanish at t = T"));
    }
    Ok(Prepared {
        rho,
        lap_rho,
        rho_edge,
        phi,
    })
}

/// Terms for every `(flux, test function)` pair from a single run driven
/// by `path`; indexed `[flux][test]`.
pub fn entropy_terms(
    setup: &Setup,
    path: &WienerPath,
    fluxes: &[EntropyFlux],
    tests: &[TestFunction],
) -> Result<Vec<Vec<EntropyTerms>>> {
    let prepared = tests.iter().map(|tf| prepare(setup, tf)).collect::<Result<Vec<_>>>()?;
    let grid = setup.problem.grid;
    let nl = &setup.problem.nl;
    let sigma = &setup.problem.sigma;
    let steps = setup.mesh.steps;
    let dt = setup.mesh.dt;
    let vol = grid.cell_volume();
    let inv_h2 = (grid.points_per_axis() * grid.points_per_axis()) as f64;
    let coords: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.coords(i)).collect();
    let noisy = !sigma.is_zero();
    let mut out = vec![vec![EntropyTerms::default(); tests.len()]; fluxes.len()];
    let mut eta_v = vec![0.0; grid.len()];
    let mut d1 = vec![0.0; grid.len()];
    let mut d2 = vec![0.0; grid.len()];
    let mut q = vec![0.0; grid.len()];
    let mut a = vec![0.0; grid.len()];
    let mut sig2 = vec![0.0; grid.len()];

    solve_observed(&setup.problem, &setup.mesh, path, &setup.hash, |k, u| {
        for (i, &v) in u.iter().enumerate() {
            a[i] = nl.eval_a_fn(v);
            if noisy && k < steps {
                sig2[i] = sigma.l2_norm(coords[i], v).powi(2);
            }
        }
        for (fi, flux) in fluxes.iter().enumerate() {
            let eta = flux.eta();
            let curved = !matches!(eta.family(), EntropyFamily::Identity | EntropyFamily::NegIdentity);
            for (i, &v) in u.iter().enumerate() {
                eta_v[i] = eta.eval(v);
                if k >= 1 {
                    q[i] = flux.eval(v);
                    d1[i] = eta.eval_d1(v);
                }
                d2[i] = if curved { eta.eval_d2(v) } else { 0.0 };
            }
            for (ti, p) in prepared.iter().enumerate() {
                let terms = &mut out[fi][ti];
                let eta_rho: f64 = eta_v.iter().zip(&p.rho).map(|(e, r)| e * r).sum::<f64>() * vol;
                if k == 0 {
                    terms.init = p.phi[0] * eta_rho;
                }
                if k < steps {
                    terms.time -= (p.phi[k + 1] - p.phi[k]) * eta_rho;
                    if noisy && curved {
                        let s: f64 = (0..u.len()).map(|i| 0.5 * p.rho[i] * d2[i] * sig2[i]).sum();
                        terms.ito += dt * p.phi[k + 1] * s * vol;
                    }
                }
                if k >= 1 && p.phi[k] != 0.0 {
                    let f: f64 = q.iter().zip(&p.lap_rho).map(|(a, b)| a * b).sum();
                    terms.flux += dt * p.phi[k] * f * vol;
                    if curved {
                        let mut s = 0.0;
                        for i in 0..u.len() {
                            for axis in 0..grid.dim() {
                                let j = grid.forward(i, axis);
                                s += p.rho_edge[i][axis] * (d1[j] - d1[i]) * (a[j] - a[i]);
                            }
                        }
                        terms.diss += dt * p.phi[k] * s * inv_h2 * vol;
                    }
                }
            }
        }
    })?;
    Ok(out)
}

fn residual_means(terms: &[Vec<Vec<EntropyTerms>>], fi: usize, ti: usize) -> (f64, f64) {
    mean_se(&terms.iter().map(|t| t[fi][ti].residual()).collect::<Vec<_>>())
}

fn eta_label(eta: &EntropyFunction) -> String {
    match eta.family() {
        EntropyFamily::Identity => "eta=r".into(),
        EntropyFamily::NegIdentity => "eta=-r".into(),
        EntropyFamily::Standard => format!("eta=standard(delta={})", eta.delta()),
        EntropyFamily::Logarithmic => format!("eta=log(delta={})", eta.delta()),
    }
}

/// Tests the entropy inequality for every `η` and test function, plus the
/// weak-form identity from the `η = ±r` pair when `weak_form` is set.
pub fn entropy_residual(
    cfg: &RunConfig,
    base_dir: &Path,
    etas: &[EntropyFunction],
    tests: &[TestFunction],
    seeds: &[u64],
    refine_seeds: usize,
    weak_form: bool,
) -> Result<ProbeOutput> {
    if tests.is_empty() {
        return Err(Error::param("test_functions", "at least one test function required"));
    }
    let setup = cfg.build(base_dir)?;
    let mut all_etas = etas.to_vec();
    if weak_form {
        all_etas.push(EntropyFunction::identity());
        all_etas.push(EntropyFunction::neg_identity());
    }
    let fluxes: Vec<EntropyFlux> = all_etas.iter().map(|e| make_q_eta(&setup.problem.nl, e)).collect();
    let modes = setup.problem.sigma.mode_count();
    let terms = par_seeds(seeds, |seed| {
        let path = sample_wiener(seed, setup.mesh.dt, setup.mesh.steps, modes)?;
        entropy_terms(&setup, &path, &fluxes, tests)
    })?;

    let slacks: Vec<Vec<DiscSlack>> = if refine_seeds > 0 {
        let fine = refined(cfg).build(base_dir)?;
        let fine_fluxes: Vec<EntropyFlux> = all_etas.iter().map(|e| make_q_eta(&fine.problem.nl, e)).collect();
        let subset = &seeds[..refine_seeds.min(seeds.len())];
        let (coarse, fine_terms) = refinement_pair(&fine, subset, |is_fine, path| {
            if is_fine {
                entropy_terms(&fine, path, &fine_fluxes, tests)
            } else {
                entropy_terms(&setup, path, &fluxes, tests)
            }
        })?;
        (0..all_etas.len())
            .map(|fi| {
                (0..tests.len())
                    .map(|ti| {
                        DiscSlack::fit(
                            residual_means(&coarse, fi, ti).0,
                            residual_means(&fine_terms, fi, ti).0,
                            setup.mesh.dt,
                            setup.problem.grid.h(),
                        )
                    })
                    .collect()
            })
            .collect()
    } else {
        vec![vec![DiscSlack::none(); tests.len()]; all_etas.len()]
    };

    let mut table = Table::new(&[
        "eta_index",
        "test_index",
        "time",
        "init",
        "flux",
        "ito",
        "diss",
        "residual_mean",
        "residual_se",
        "slack_tol",
    ]);
    let mut verdicts = Vec::new();
    let mut tolerances = vec![vec![0.0; tests.len()]; all_etas.len()];
    for (fi, eta) in all_etas.iter().enumerate() {
        for (ti, tf) in tests.iter().enumerate() {
            let mean_of = |f: fn(&EntropyTerms) -> f64| mean_se(&terms.iter().map(|t| f(&t[fi][ti])).collect::<Vec<_>>()).0;
            let (mean, se) = residual_means(&terms, fi, ti);
            let slack = slacks[fi][ti];
            let tol = SE_MULTIPLIER * se + slack.tol;
            tolerances[fi][ti] = tol;
            table.push(vec![
                fi as f64,
                ti as f64,
                mean_of(|t| t.time),
                mean_of(|t| t.init),
                mean_of(|t| t.flux),
                mean_of(|t| t.ito),
                mean_of(|t| t.diss),
                mean,
                se,
                slack.tol,
            ]);
            verdicts.push(TestVerdict::new(
                format!("entropy residual [{}; {}]", eta_label(eta), tf.label()),
                mean,
                tol,
                seeds,
                &setup.hash,
                json!({ "se": se, "slack": slack }),
            ));
        }
    }
    if weak_form {
        let (plus, minus) = (all_etas.len() - 2, all_etas.len() - 1);
        for (ti, tf) in tests.iter().enumerate() {
            let (rp, _) = residual_means(&terms, plus, ti);
            let (rm, _) = residual_means(&terms, minus, ti);
            let tol = tolerances[plus][ti].max(tolerances[minus][ti]);
            verdicts.push(TestVerdict::new(
                format!("entropy weak-form identity [{}]", tf.label()),
                rp.abs().max(rm.abs()),
                2.0 * tol,
                seeds,
                &setup.hash,
                json!({ "residual_plus": rp, "residual_minus": rm, "sum": rp + rm }),
            ));
        }
    }
    Ok(ProbeOutput { verdicts, table })
}
