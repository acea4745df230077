//! `G(h) = (1/h) E∫_0^h ‖u(t) - ξ_n‖²_{L2} dt` along a decreasing `h` list.

use serde_json::json;

use super::stats::{mean_se, trapezoid, ProbeOutput, Table, TestVerdict, SE_MULTIPLIER};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::solver::Trajectory;

/// `h ∈ {0.1, 0.05, 0.025, 0.0125}·T`.
pub fn default_h_list(t_final: f64) -> Vec<f64> {
    [0.1, 0.05, 0.025, 0.0125].iter().map(|c| c * t_final).collect()
}

/// Number of save intervals in `h`, or an error if `h` is not a positive
/// multiple of the save interval.
fn save_intervals(h: f64, interval: f64) -> Result<usize> {
    let k = h / interval;
    let r = k.round();
    if r < 1.0 {
        return Err(Error::param(
            "h_list",
            format!("h = {h} is shorter than one save interval ({interval})"),
        ));
    }
    if (k - r).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::param(
            "h_list",
            format!("h = {h} is not a multiple of the save interval ({interval})"),
        ));
    }
    Ok(r as usize)
}

/// Checks that every `h` is a multiple of `interval` no larger than `t_final`.
pub fn check_h_list(h_list: &[f64], interval: f64, t_final: f64) -> Result<()> {
    for &h in h_list {
        if h > t_final * (1.0 + 1e-12) {
            return Err(Error::param("h_list", format!("h = {h} exceeds T = {t_final}")));
        }
        save_intervals(h, interval)?;
    }
    Ok(())
}

/// Per-seed `G(h)` for each `h`, using saves at `0, Δ, 2Δ, ...` only.
pub fn attainment_values(traj: &Trajectory, xi: &GridField, h_list: &[f64]) -> Result<Vec<f64>> {
    let interval = traj.mesh.dt * traj.mesh.save_every as f64;
    let t_final = traj.mesh.t_final();
    let dist: Vec<f64> = traj.fields.iter().map(|u| u.l2_distance_sq(xi)).collect();
    h_list
        .iter()
        .map(|&h| {
            if h > t_final * (1.0 + 1e-12) {
                return Err(Error::param("h_list", format!("h = {h} exceeds T = {t_final}")));
            }
            let k = save_intervals(h, interval)?;
            Ok(trapezoid(&traj.times[..=k], &dist[..=k]) / h)
        })
        .collect()
}

/// Tests that `G` decreases along `h_list` (paired differences within
/// 3 SE) and that `G(min h) ≤ G(max h)/2`.
pub fn initial_attainment_probe(trajs: &[Trajectory], xi: &GridField, h_list: &[f64], hash: &str) -> Result<ProbeOutput> {
    if h_list.len() < 2 || h_list.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::param("h_list", "at least two strictly decreasing values required"));
    }
    if trajs.is_empty() {
        return Err(Error::param("ensemble.count", "initial attainment needs at least one run"));
    }
    let seeds: Vec<u64> = trajs.iter().map(|t| t.seed).collect();
    let per_seed = trajs
        .iter()
        .map(|t| attainment_values(t, xi, h_list))
        .collect::<Result<Vec<_>>>()?;
    let column = |k: usize| per_seed.iter().map(|g| g[k]).collect::<Vec<_>>();

    let mut table = Table::new(&["h", "G_mean", "G_se"]);
    for (k, &h) in h_list.iter().enumerate() {
        let (m, se) = mean_se(&column(k));
        table.push(vec![h, m, se]);
    }
    let mut trend = f64::NEG_INFINITY;
    for k in 1..h_list.len() {
        let diffs: Vec<f64> = per_seed.iter().map(|g| g[k] - g[k - 1]).collect();
        let (m, se) = mean_se(&diffs);
        trend = trend.max(m - SE_MULTIPLIER * se);
    }
    let last = h_list.len() - 1;
    let halving: Vec<f64> = per_seed.iter().map(|g| g[last] - 0.5 * g[0]).collect();
    let (hm, hse) = mean_se(&halving);
    let g_means = table.column("G_mean").unwrap();
    Ok(ProbeOutput {
        verdicts: vec![
            TestVerdict::new(
                "attainment: G(h) decreasing as h shrinks",
                trend,
                0.0,
                &seeds,
                hash,
                json!({ "G": g_means }),
            ),
            TestVerdict::new(
                "attainment: G(min h) <= G(max h)/2",
                hm,
                SE_MULTIPLIER * hse,
                &seeds,
                hash,
                json!({ "G_min_h": g_means[last], "G_max_h": g_means[0] }),
            ),
        ],
        table,
    })
}
