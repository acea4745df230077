//! Distance to a reference run under a vanishing coefficient perturbation,
//! reported with the computable terms of the stability estimate.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::stats::{mean_se, par_seeds, trapezoid, ProbeOutput, Table, TestVerdict, SE_MULTIPLIER};
use crate::config::{with_edit, RunConfig, Setup};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::noise::{sample_wiener, sup_distance, NoiseSamples};
use crate::nonlinearity::{compute_r_lambda, R_LAMBDA_MAX};
use crate::solver::Trajectory;

/// Fewest perturbation levels for which a trend is assessed.
pub const MIN_LEVELS: usize = 3;

/// `λ` values at which the `R_λ` tail terms are reported.
pub const LAMBDAS: [f64; 3] = [0.1, 0.3, 1.0];
/// `ε` and `δ` values at which the estimate is checked.
pub const EPS_DELTA: [f64; 3] = [0.05, 0.1, 0.2];
/// Parameter point `(ε, δ, λ)` at which the constant is fitted.
pub const FIT_POINT: (f64, f64, f64) = (0.1, 0.1, 0.3);

/// A one-parameter family of perturbations, listed in the order in which
/// it vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// `A` regularized at each level; the reference uses `reference`.
    /// The mollification levels of `σ` and `ξ` stay at their base values.
    RegularizationLevel { levels: Vec<u32>, reference: u32 },
    /// `σ̃ = σ + c` in the first mode.
    SigmaShift { shifts: Vec<f64> },
    /// `ξ̃ = ξ + c`.
    XiShift { shifts: Vec<f64> },
}

impl Perturbation {
    pub fn len(&self) -> usize {
        match self {
            Self::RegularizationLevel { levels, .. } => levels.len(),
            Self::SigmaShift { shifts } | Self::XiShift { shifts } => shifts.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Numeric label of each level.
    pub fn labels(&self) -> Vec<f64> {
        match self {
            Self::RegularizationLevel { levels, .. } => levels.iter().map(|&n| n as f64).collect(),
            Self::SigmaShift { shifts } | Self::XiShift { shifts } => shifts.clone(),
        }
    }

    /// Checks the length and ordering of the schedule.
    pub fn validate(&self) -> Result<()> {
        if self.len() < MIN_LEVELS {
            return Err(Error::param(
                "perturbation",
                format!("at least {MIN_LEVELS} levels are needed to assess a trend, got {}", self.len()),
            ));
        }
        match self {
            Self::RegularizationLevel { levels, reference } => {
                if levels.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::param("perturbation.levels", "levels must be strictly increasing"));
                }
                if levels.contains(&0) || *reference <= *levels.last().unwrap() {
                    return Err(Error::param(
                        "perturbation.reference",
                        "reference level must exceed every perturbation level",
                    ));
                }
            }
            Self::SigmaShift { shifts } | Self::XiShift { shifts } => {
                if shifts.iter().any(|c| !c.is_finite()) || shifts.windows(2).any(|w| w[0].abs() < w[1].abs()) {
                    return Err(Error::param("perturbation.shifts", "shift magnitudes must be nonincreasing"));
                }
            }
        }
        Ok(())
    }

    /// Reference configuration and one configuration per level.
    pub fn configs(&self, base: &RunConfig) -> Result<(RunConfig, Vec<RunConfig>)> {
        self.validate()?;
        match self {
            Self::RegularizationLevel { levels, reference } => {
                let (sn, xn) = (base.sigma_n(), base.xi_n());
                let at = |n: u32| {
                    with_edit(base, |c| {
                        c.nonlinearity.n = Some(n);
                        c.diffusion.n = sn;
                        c.initial.n = xn;
                    })
                };
                Ok((at(*reference), levels.iter().map(|&n| at(n)).collect()))
            }
            Self::SigmaShift { shifts } => {
                let first = base
                    .diffusion
                    .modes
                    .first()
                    .ok_or_else(|| Error::config("diffusion.modes", "a sigma shift needs at least one mode"))?
                    .clone();
                let cfgs = shifts
                    .iter()
                    .map(|&c| with_edit(base, |b| b.diffusion.modes[0] = format!("({first}) + ({c:?})")))
                    .collect();
                Ok((base.clone(), cfgs))
            }
            Self::XiShift { shifts } => {
                let expr = base
                    .initial
                    .expr
                    .clone()
                    .ok_or_else(|| Error::config("initial.expr", "a xi shift needs a closed-form initial condition"))?;
                let cfgs = shifts
                    .iter()
                    .map(|&c| with_edit(base, |b| b.initial.expr = Some(format!("({expr}) + ({c:?})"))))
                    .collect();
                Ok((base.clone(), cfgs))
            }
        }
    }
}

/// Per-seed quantities of one level against the reference.
#[derive(Debug, Clone)]
struct LevelSample {
    /// `∫‖u - ũ‖_{L1} dt`.
    lhs: f64,
    /// `∫∫1_{|u|≥R_λ}(1+|u|)^m + same for ũ`, one per `λ`.
    tails: Vec<f64>,
    /// `1 + ‖u‖^m_{L_m(Q_T)} + ‖ũ‖^m_{L_m(Q_T)}`.
    moment: f64,
    /// `‖∇Ψ(u)‖_{L1(Q_T)}`.
    grad_psi: f64,
}

fn time_integral(traj: &Trajectory, f: impl Fn(&GridField) -> f64) -> f64 {
    let values: Vec<f64> = traj.fields.iter().map(f).collect();
    trapezoid(&traj.times, &values)
}

fn tail_mass(u: &GridField, r: f64, m: f64) -> f64 {
    let s: f64 = u.values.iter().filter(|v| v.abs() >= r).map(|v| (1.0 + v.abs()).powf(m)).sum();
    s * u.grid.cell_volume()
}

fn lm_pow(u: &GridField, m: f64) -> f64 {
    u.values.iter().map(|v| v.abs().powf(m)).sum::<f64>() * u.grid.cell_volume()
}

/// `sup_{|h|≤ε} ‖f(·) - f(·+h)‖_{L1}` over lattice shifts.
pub fn shift_modulus(f: &GridField, eps: f64) -> f64 {
    let grid = f.grid;
    let reach = (eps / grid.h()).floor() as isize;
    let span = if grid.dim() == 2 { reach } else { 0 };
    let mut sup: f64 = 0.0;
    for a in -reach..=reach {
        for b in -span..=span {
            let (ha, hb) = (a as f64 * grid.h(), b as f64 * grid.h());
            if ha * ha + hb * hb > eps * eps * (1.0 + 1e-12) {
                continue;
            }
            let s: f64 = (0..grid.len())
                .map(|i| (f.values[i] - f.values[grid.shifted(i, [a, b])]).abs())
                .sum();
            sup = sup.max(s * grid.cell_volume());
        }
    }
    sup
}

/// Coefficient of the fitted constant in the stability estimate at
/// `(ε, δ, λ)`.
#[allow(clippy::too_many_arguments)]
fn estimate_weight(
    eps: f64,
    delta: f64,
    lambda_index: usize,
    m: f64,
    kappa: f64,
    kappa_bar: f64,
    sigma_sup: f64,
    means: &LevelMeans,
) -> f64 {
    let alpha = 0.5 * 1f64.min(m / 2.0);
    let lambda = LAMBDAS[lambda_index];
    eps.powf(2.0 / (m + 1.0)) * (1.0 + means.grad_psi)
        + sigma_sup * sigma_sup / delta
        + means.tails[lambda_index] / (eps * eps)
        + (delta.powf(2.0 * kappa)
            + eps.powf(2.0 * kappa_bar) / delta
            + delta.powf(2.0 * alpha) / (eps * eps)
            + lambda * lambda / (eps * eps))
            * means.moment
}

#[derive(Debug, Clone)]
struct LevelMeans {
    lhs: f64,
    lhs_se: f64,
    tails: Vec<f64>,
    moment: f64,
    grad_psi: f64,
    /// `T‖ξ - ξ̃‖_{L1} + T sup_{|h|≤ε}‖ξ̃ - ξ̃(·+h)‖_{L1}` per `ε`.
    fixed: Vec<f64>,
    xi_l1: f64,
    sigma_sup: f64,
    r_lambda: Vec<f64>,
}

/// Runs the reference and each perturbation level on common noise.
///
/// Verdicts: the `L1(Q_T)` distance to the reference is nonincreasing as
/// the perturbation vanishes (paired differences within 3 SE), and the
/// stability estimate holds at every `(ε, δ, λ)` of the check grid with the
/// constant fitted at [`FIT_POINT`].
pub fn stability_probe(
    base: &RunConfig,
    base_dir: &Path,
    perturbation: &Perturbation,
    seeds: &[u64],
) -> Result<ProbeOutput> {
    let (ref_cfg, level_cfgs) = perturbation.configs(base)?;
    let reference = ref_cfg.build(base_dir)?;
    let levels = level_cfgs.iter().map(|c| c.build(base_dir)).collect::<Result<Vec<Setup>>>()?;
    let m = reference.raw_nl.m();
    let samples = NoiseSamples::standard(reference.problem.grid.dim());
    let t_final = reference.mesh.t_final();

    let r_lambdas: Vec<Vec<f64>> = levels
        .iter()
        .map(|s| {
            LAMBDAS
                .iter()
                .map(|&l| {
                    compute_r_lambda(
                        |r| s.problem.nl.eval_a(r),
                        |r| reference.problem.nl.eval_a(r),
                        l,
                        R_LAMBDA_MAX,
                    )
                })
                .collect()
        })
        .collect();

    let modes = reference.problem.sigma.mode_count();
    let per_seed: Vec<Vec<LevelSample>> = par_seeds(seeds, |seed| {
        let path = sample_wiener(seed, reference.mesh.dt, reference.mesh.steps, modes)?;
        let ut = reference.run_with_path(&path)?;
        let ref_lm = time_integral(&ut, |f| lm_pow(f, m));
        levels
            .iter()
            .zip(&r_lambdas)
            .map(|(setup, rl)| {
                let u = setup.run_with_path(&path)?;
                let dist: Vec<f64> = u.fields.iter().zip(&ut.fields).map(|(a, b)| a.l1_distance(b)).collect();
                let tails = rl
                    .iter()
                    .map(|&r| time_integral(&u, |f| tail_mass(f, r, m)) + time_integral(&ut, |f| tail_mass(f, r, m)))
                    .collect();
                let grad: Vec<f64> = u.records.iter().map(|r| r.grad_psi_l1).collect();
                Ok(LevelSample {
                    lhs: trapezoid(&u.times, &dist),
                    tails,
                    moment: 1.0 + time_integral(&u, |f| lm_pow(f, m)) + ref_lm,
                    grad_psi: trapezoid(&u.times, &grad),
                })
            })
            .collect()
    })?;

    let means: Vec<LevelMeans> = levels
        .iter()
        .enumerate()
        .map(|(li, setup)| {
            let col = |f: &dyn Fn(&LevelSample) -> f64| mean_se(&per_seed.iter().map(|s| f(&s[li])).collect::<Vec<_>>());
            let (lhs, lhs_se) = col(&|s| s.lhs);
            let xi_l1 = setup.problem.xi.l1_distance(&reference.problem.xi);
            let fixed = EPS_DELTA
                .iter()
                .map(|&e| t_final * (xi_l1 + shift_modulus(&reference.problem.xi, e)))
                .collect();
            LevelMeans {
                lhs,
                lhs_se,
                tails: (0..LAMBDAS.len()).map(|k| col(&|s| s.tails[k]).0).collect(),
                moment: col(&|s| s.moment).0,
                grad_psi: col(&|s| s.grad_psi).0,
                fixed,
                xi_l1,
                sigma_sup: sup_distance(&setup.problem.sigma, &reference.problem.sigma, &samples),
                r_lambda: r_lambdas[li].clone(),
            }
        })
        .collect();

    let mut table = Table::new(&[
        "level",
        "lhs_mean",
        "lhs_se",
        "xi_l1",
        "xi_modulus",
        "sigma_sup",
        "r_lambda_0.1",
        "r_lambda_0.3",
        "r_lambda_1",
        "tail_0.1",
        "tail_0.3",
        "tail_1",
        "moment",
        "grad_psi_l1",
    ]);
    let labels = perturbation.labels();
    let fit_eps_index = EPS_DELTA.iter().position(|&e| e == FIT_POINT.0).unwrap();
    for (li, lm) in means.iter().enumerate() {
        table.push(vec![
            labels[li],
            lm.lhs,
            lm.lhs_se,
            lm.xi_l1,
            lm.fixed[fit_eps_index] / t_final - lm.xi_l1,
            lm.sigma_sup,
            lm.r_lambda[0],
            lm.r_lambda[1],
            lm.r_lambda[2],
            lm.tails[0],
            lm.tails[1],
            lm.tails[2],
            lm.moment,
            lm.grad_psi,
        ]);
    }

    // Monotone trend along the schedule, on paired per-seed differences.
    let mut trend = f64::NEG_INFINITY;
    let mut steps = Vec::new();
    for li in 1..levels.len() {
        let diffs: Vec<f64> = per_seed.iter().map(|s| s[li].lhs - s[li - 1].lhs).collect();
        let (dm, dse) = mean_se(&diffs);
        steps.push(json!({ "from": labels[li - 1], "to": labels[li], "mean": dm, "se": dse }));
        trend = trend.max(dm - SE_MULTIPLIER * dse);
    }
    let trend_verdict = TestVerdict::new(
        "stability: L1(Q_T) distance nonincreasing as the perturbation vanishes",
        trend,
        0.0,
        seeds,
        &reference.hash,
        json!({ "steps": steps, "labels": labels }),
    );

    // Single constant fitted at FIT_POINT, checked over the whole grid.
    let kappa = reference.problem.sigma.kappa();
    let kappa_bar = reference.problem.sigma.kappa_bar();
    let lambda_fit = LAMBDAS.iter().position(|&l| l == FIT_POINT.2).unwrap();
    let n_hat = means
        .iter()
        .map(|lm| {
            let w = estimate_weight(FIT_POINT.0, FIT_POINT.1, lambda_fit, m, kappa, kappa_bar, lm.sigma_sup, lm);
            ((lm.lhs - lm.fixed[fit_eps_index]) / w).max(0.0)
        })
        .fold(0.0, f64::max);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = json!(null);
    for lm in &means {
        for (ei, &eps) in EPS_DELTA.iter().enumerate() {
            for &delta in &EPS_DELTA {
                for k in 0..LAMBDAS.len() {
                    let w = estimate_weight(eps, delta, k, m, kappa, kappa_bar, lm.sigma_sup, lm);
                    let excess = lm.lhs - SE_MULTIPLIER * lm.lhs_se - lm.fixed[ei] - n_hat * w;
                    if excess > worst {
                        worst = excess;
                        worst_at = json!({ "eps": eps, "delta": delta, "lambda": LAMBDAS[k], "lhs": lm.lhs });
                    }
                }
            }
        }
    }
    let estimate_verdict = TestVerdict::new(
        "stability: estimate holds with a single fitted constant",
        worst,
        0.0,
        seeds,
        &reference.hash,
        json!({ "n_hat": n_hat, "fit_point": FIT_POINT, "worst": worst_at }),
    );
    Ok(ProbeOutput {
        verdicts: vec![trend_verdict, estimate_verdict],
        table,
    })
}
