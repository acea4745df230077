//! The four uniform estimates of the regularized problems and their
//! dependence on the regularization level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::stats::{mean_se, require_seeds, run_ensemble, trapezoid, ProbeOutput, Table, TestVerdict, MIN_SEEDS};
use crate::config::{with_edit, RunConfig};
use crate::error::{Error, Result};
use crate::grid::grad_norms;
use crate::nonlinearity::Nonlinearity;
use crate::solver::Trajectory;

/// Largest accepted relative spread across regularization levels.
pub const MAX_SPREAD: f64 = 0.5;

pub const MOMENT_NAMES: [&str; 4] = ["sup_L2_sq", "grad_psi_L2_sq", "sup_Lm1_pow", "grad_a_L2_sq"];

/// Per-run values of the four statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// `sup_t ‖u‖²_{L2}`.
    pub sup_l2_sq: f64,
    /// `∫‖∇Ψ_n(u)‖²_{L2} dt`.
    pub grad_psi_l2_sq: f64,
    /// `sup_t ‖u‖^{m+1}_{L_{m+1}}`.
    pub sup_lm1_pow: f64,
    /// `∫‖∇A_n(u)‖²_{L2} dt`.
    pub grad_a_l2_sq: f64,
}

impl Moments {
    pub fn of(traj: &Trajectory, nl: &Nonlinearity) -> Self {
        let m = nl.m();
        let sup = |f: &dyn Fn(usize) -> f64| (0..traj.records.len()).map(f).fold(0.0, f64::max);
        let gpsi: Vec<f64> = traj.records.iter().map(|r| r.grad_psi_l2 * r.grad_psi_l2).collect();
        let ga: Vec<f64> = traj
            .fields
            .iter()
            .map(|u| grad_norms(u, |v| nl.eval_a_fn(v)).1.powi(2))
            .collect();
        Self {
            sup_l2_sq: sup(&|k| traj.records[k].l2.powi(2)),
            grad_psi_l2_sq: trapezoid(&traj.times, &gpsi),
            sup_lm1_pow: sup(&|k| traj.records[k].lm1.powf(m + 1.0)),
            grad_a_l2_sq: trapezoid(&traj.times, &ga),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.sup_l2_sq, self.grad_psi_l2_sq, self.sup_lm1_pow, self.grad_a_l2_sq]
    }
}

/// Ensemble mean and standard error of each statistic, in the order of
/// [`MOMENT_NAMES`].
pub fn moment_summary(trajs: &[Trajectory], nl: &Nonlinearity) -> Result<Vec<(f64, f64)>> {
    require_seeds(trajs.len(), MIN_SEEDS, "the moment report")?;
    let per: Vec<[f64; 4]> = trajs.iter().map(|t| Moments::of(t, nl).as_array()).collect();
    Ok((0..4)
        .map(|k| mean_se(&per.iter().map(|p| p[k]).collect::<Vec<_>>()))
        .collect())
}

/// Reports the statistics of one ensemble; the verdict asserts they are
/// finite.
pub fn moment_report(trajs: &[Trajectory], nl: &Nonlinearity, hash: &str) -> Result<ProbeOutput> {
    let summary = moment_summary(trajs, nl)?;
    let seeds: Vec<u64> = trajs.iter().map(|t| t.seed).collect();
    let mut table = Table::new(&["n", "statistic_index", "mean", "se"]);
    let level = nl.regularization_level().map_or(f64::NAN, f64::from);
    for (k, (m, se)) in summary.iter().enumerate() {
        table.push(vec![level, k as f64, *m, *se]);
    }
    let non_finite = summary.iter().filter(|(m, se)| !m.is_finite() || !se.is_finite()).count();
    Ok(ProbeOutput {
        verdicts: vec![TestVerdict::new(
            "moments: all statistics finite",
            non_finite as f64,
            0.0,
            &seeds,
            hash,
            json!(MOMENT_NAMES.iter().zip(&summary).map(|(n, s)| json!({ "name": n, "mean": s.0, "se": s.1 })).collect::<Vec<_>>()),
        )],
        table,
    })
}

/// Runs `base` at each regularization level and checks every statistic
/// changes by at most [`MAX_SPREAD`] relative to its value at the largest
/// level. The mollification levels of `σ` and `ξ` follow `n` unless the
/// base configuration fixes them.
pub fn moment_uniformity(base: &RunConfig, base_dir: &Path, levels: &[u32], seeds: &[u64]) -> Result<ProbeOutput> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("levels", "at least two strictly increasing levels required"));
    }
    require_seeds(seeds.len(), MIN_SEEDS, "the moment report")?;
    let mut summaries = Vec::new();
    let mut hash = String::new();
    for &n in levels {
        let setup = with_edit(base, |c| c.nonlinearity.n = Some(n)).build(base_dir)?;
        let trajs = run_ensemble(&setup, seeds)?;
        summaries.push(moment_summary(&trajs, &setup.problem.nl)?);
        hash = setup.hash;
    }
    let mut table = Table::new(&["n", "statistic_index", "mean", "se"]);
    for (li, s) in summaries.iter().enumerate() {
        for (k, (m, se)) in s.iter().enumerate() {
            table.push(vec![levels[li] as f64, k as f64, *m, *se]);
        }
    }
    let reference = summaries.last().unwrap();
    let verdicts = MOMENT_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let values: Vec<f64> = summaries.iter().map(|s| s[k].0).collect();
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let r = reference[k].0;
            let spread = if max == min { 0.0 } else { (max - min) / r.abs() };
            TestVerdict::new(
                format!("moments: relative spread of {name} across n"),
                spread,
                MAX_SPREAD,
                seeds,
                &hash,
                json!({ "levels": levels, "values": values }),
            )
        })
        .collect();
    Ok(ProbeOutput { verdicts, table })
}
