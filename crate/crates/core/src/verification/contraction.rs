//! `sup_t E‖u(t) - ũ(t)‖_{L1} ≤ E‖ξ - ξ̃‖_{L1}` under common noise.

use std::path::Path;

use serde_json::json;

use super::stats::{mean_se, par_seeds, refined, refinement_pair, DiscSlack, ProbeOutput, Table, TestVerdict, SE_MULTIPLIER};
use crate::config::{with_edit, RunConfig, Setup};
use crate::error::{Error, Result};
use crate::noise::{sample_wiener, WienerPath};

/// `‖u(t) - ũ(t)‖_{L1}` at every save time for one shared path.
pub fn paired_distance(a: &Setup, b: &Setup, path: &WienerPath) -> Result<Vec<f64>> {
    let ta = a.run_with_path(path)?;
    let tb = b.run_with_path(path)?;
    Ok(ta.fields.iter().zip(&tb.fields).map(|(u, v)| u.l1_distance(v)).collect())
}

fn shared_run(a: &Setup, b: &Setup, seeds: &[u64]) -> Result<Vec<Vec<f64>>> {
    let modes = a.problem.sigma.mode_count();
    par_seeds(seeds, |seed| {
        let path = sample_wiener(seed, a.mesh.dt, a.mesh.steps, modes)?;
        paired_distance(a, b, &path)
    })
}

/// Ensemble mean and standard error of `D(t)` per save time.
fn summarize(per_seed: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let times = per_seed[0].len();
    (0..times)
        .map(|j| mean_se(&per_seed.iter().map(|d| d[j]).collect::<Vec<_>>()))
        .collect()
}

/// `max_t D̄(t) - D̄(0)`.
fn excess(per_seed: &[Vec<f64>]) -> f64 {
    let s = summarize(per_seed);
    s.iter().map(|(m, _)| m - s[0].0).fold(f64::NEG_INFINITY, f64::max)
}

/// Checks the paired configurations differ only in their initial data.
pub fn check_contraction_pair(cfg1: &RunConfig, cfg2: &RunConfig) -> Result<()> {
    if with_edit(cfg2, |c| c.initial = cfg1.initial.clone()) != *cfg1 {
        return Err(Error::MismatchedConfigs(
            "contraction runs must share every block except the initial condition".into(),
        ));
    }
    Ok(())
}

/// Runs the coupled pair over `seeds` and tests the contraction bound.
///
/// With `refine_seeds > 0` the discretization slack is fitted from a
/// refinement pair on the first `refine_seeds` seeds.
pub fn contraction_test(
    cfg1: &RunConfig,
    cfg2: &RunConfig,
    base_dir: &Path,
    seeds: &[u64],
    refine_seeds: usize,
) -> Result<ProbeOutput> {
    check_contraction_pair(cfg1, cfg2)?;
    let a = cfg1.build(base_dir)?;
    let b = cfg2.build(base_dir)?;
    let per_seed = shared_run(&a, &b, seeds)?;
    let slack = if refine_seeds > 0 {
        let (af, bf) = (refined(cfg1).build(base_dir)?, refined(cfg2).build(base_dir)?);
        let subset = &seeds[..refine_seeds.min(seeds.len())];
        let (coarse, fine) = refinement_pair(&af, subset, |is_fine, path| {
            if is_fine {
                paired_distance(&af, &bf, path)
            } else {
                paired_distance(&a, &b, path)
            }
        })?;
        DiscSlack::fit(excess(&coarse), excess(&fine), a.mesh.dt, a.problem.grid.h())
    } else {
        DiscSlack::none()
    };
    Ok(contraction_verdict(&per_seed, &a.mesh.save_steps(), a.mesh.dt, seeds, &a.hash, slack))
}

/// Builds the verdict and the `D(t)` table from per-seed distance series.
pub fn contraction_verdict(
    per_seed: &[Vec<f64>],
    save_steps: &[usize],
    dt: f64,
    seeds: &[u64],
    hash: &str,
    slack: DiscSlack,
) -> ProbeOutput {
    let summary = summarize(per_seed);
    let d0 = summary[0].0;
    let mut table = Table::new(&["t", "D_mean", "D_se", "D0"]);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    let mut max_d: f64 = 0.0;
    for (j, &(m, se)) in summary.iter().enumerate() {
        let t = save_steps[j] as f64 * dt;
        table.push(vec![t, m, se, d0]);
        max_d = max_d.max(m);
        let e = m - d0 - SE_MULTIPLIER * se;
        if e > worst {
            worst = e;
            worst_t = t;
        }
    }
    // L1 norms of O(1) fields carry summation error of a few ulps per cell.
    let roundoff = 1e-12 * d0.max(1.0);
    let mut monotone_violations = 0;
    for j in 1..summary.len() {
        let diffs: Vec<f64> = per_seed.iter().map(|d| d[j] - d[j - 1]).collect();
        let (m, se) = mean_se(&diffs);
        if m > SE_MULTIPLIER * se + slack.tol + roundoff {
            monotone_violations += 1;
        }
    }
    let verdict = TestVerdict::new(
        "contraction: max_t E|u-v|_L1 - E|xi-xi~|_L1 - 3 SE",
        worst,
        slack.tol + roundoff,
        seeds,
        hash,
        json!({
            "max_D": max_d,
            "D0": d0,
            "worst_t": worst_t,
            "slack": slack,
            "monotone_violations": monotone_violations,
        }),
    );
    ProbeOutput {
        verdicts: vec![verdict],
        table,
    }
}
