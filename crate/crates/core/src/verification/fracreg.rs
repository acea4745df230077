//! Spatial increments `S(ε) = E∫∫∫|u(t,x) - u(t,y)|ϱ_ε(x - y)` and the
//! fitted decay exponent.

use serde_json::json;

use super::stats::{linear_fit, mean_se, trapezoid, ProbeOutput, Table, TestVerdict, SE_MULTIPLIER};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::mollifier::unit_bump_cdf;
use crate::solver::Trajectory;

/// Smallest admissible `ε`, in lattice spacings.
pub const MIN_EPS_CELLS: f64 = 4.0;
/// Allowance below the reference exponent `2/(m+1)` on the fitted slope.
pub const SLOPE_ALLOWANCE: f64 = 0.15;

/// Lattice weights of `ϱ_ε` along one axis: cell averages of the bump of
/// width `θ`, indexed by offset `j ≥ 0`, summing to one.
fn axis_weights(theta: f64, h: f64) -> Vec<f64> {
    let cells = (theta / h).ceil() as usize + 1;
    (0..cells)
        .map(|j| {
            let hi = ((j as f64 + 0.5) * h / theta).min(1.0);
            let lo = ((j as f64 - 0.5) * h / theta).max(0.0);
            if hi <= lo {
                0.0
            } else {
                unit_bump_cdf(hi) - unit_bump_cdf(lo)
            }
        })
        .collect()
}

/// `∫∫|f(x) - f(y)|ϱ_ε(x - y)` for one field.
///
/// In two dimensions `ϱ_ε` is the product of axis kernels of width `ε/√2`,
/// so its support stays inside the ball of radius `ε`.
pub fn spatial_increment(f: &GridField, eps: f64) -> f64 {
    let grid = f.grid;
    let h = grid.h();
    let theta = if grid.dim() == 2 { eps / 2f64.sqrt() } else { eps };
    let w = axis_weights(theta, h);
    let mut acc = 0.0;
    match grid.dim() {
        1 => {
            for (j, &wj) in w.iter().enumerate() {
                if wj == 0.0 {
                    continue;
                }
                let s: f64 = (0..grid.len())
                    .map(|i| (f.values[i] - f.values[grid.shifted(i, [j as isize, 0])]).abs())
                    .sum();
                acc += wj * s;
            }
        }
        _ => {
            for (a, &wa) in w.iter().enumerate() {
                for (b, &wb) in w.iter().enumerate() {
                    let wab = wa * wb;
                    if wab == 0.0 {
                        continue;
                    }
                    let s: f64 = (0..grid.len())
                        .map(|i| (f.values[i] - f.values[grid.shifted(i, [a as isize, b as isize])]).abs())
                        .sum();
                    acc += wab * s;
                }
            }
        }
    }
    acc * grid.cell_volume()
}

/// Checks `ε ≥ 4h`, `ε < 1`, increasing order and a span of a decade.
pub fn check_eps_list(eps_list: &[f64], h: f64) -> Result<()> {
    if eps_list.len() < 2 {
        return Err(Error::param("eps_list", "at least two values of eps are required"));
    }
    if eps_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("eps_list", "eps values must be strictly increasing"));
    }
    if let Some(e) = eps_list.iter().find(|&&e| e < MIN_EPS_CELLS * h * (1.0 - 1e-12)) {
        return Err(Error::param(
            "eps_list",
            format!("eps = {e} is below {MIN_EPS_CELLS} lattice spacings ({}); the kernel is unresolved", MIN_EPS_CELLS * h),
        ));
    }
    if *eps_list.last().unwrap() >= 1.0 {
        return Err(Error::param("eps_list", "eps must be below 1"));
    }
    if eps_list.last().unwrap() / eps_list[0] < 10.0 * (1.0 - 1e-12) {
        return Err(Error::param("eps_list", "eps values must span at least one decade"));
    }
    Ok(())
}

/// `ε ∈ {4h, 8h, 16h, 32h, 40h}`.
pub fn default_eps_list(h: f64) -> Vec<f64> {
    [4.0, 8.0, 16.0, 32.0, 40.0].iter().map(|c| c * h).collect()
}

/// Fits `log S` against `log ε` and checks the slope against `2/(m+1)`,
/// then checks `S(ε) ≤ N̂ ε^{2/(m+1)}(1 + E‖∇Ψ(u)‖_{L1(Q_T)})` with `N̂`
/// fitted at the largest `ε`.
pub fn frac_regularity_probe(trajs: &[Trajectory], m: f64, eps_list: &[f64], hash: &str) -> Result<ProbeOutput> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::param("ensemble.count", "fractional regularity needs at least one run"))?;
    check_eps_list(eps_list, first.fields[0].grid.h())?;
    let seeds: Vec<u64> = trajs.iter().map(|t| t.seed).collect();
    let per_seed: Vec<Vec<f64>> = trajs
        .iter()
        .map(|t| {
            eps_list
                .iter()
                .map(|&e| {
                    let s: Vec<f64> = t.fields.iter().map(|f| spatial_increment(f, e)).collect();
                    trapezoid(&t.times, &s)
                })
                .collect()
        })
        .collect();
    let grad: Vec<f64> = trajs
        .iter()
        .map(|t| trapezoid(&t.times, &t.records.iter().map(|r| r.grad_psi_l1).collect::<Vec<_>>()))
        .collect();
    let (grad_mean, _) = mean_se(&grad);
    let stats: Vec<(f64, f64)> = (0..eps_list.len())
        .map(|k| mean_se(&per_seed.iter().map(|s| s[k]).collect::<Vec<_>>()))
        .collect();

    let exponent = 2.0 / (m + 1.0);
    let lx: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = stats.iter().map(|(s, _)| s.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    let required = exponent - SLOPE_ALLOWANCE;

    let scale = |e: f64| e.powf(exponent) * (1.0 + grad_mean);
    let last = eps_list.len() - 1;
    let n_hat = stats[last].0 / scale(eps_list[last]);
    let mut table = Table::new(&["eps", "S_mean", "S_se", "bound"]);
    let mut worst = f64::NEG_INFINITY;
    for (k, &e) in eps_list.iter().enumerate() {
        let bound = n_hat * scale(e);
        table.push(vec![e, stats[k].0, stats[k].1, bound]);
        worst = worst.max(stats[k].0 - bound - SE_MULTIPLIER * stats[k].1);
    }

    // Slope condition written as `required - slope ≤ 0`.
    let slope_verdict = TestVerdict::new(
        format!("fracreg: fitted slope >= 2/(m+1) - {SLOPE_ALLOWANCE}"),
        required - slope,
        0.0,
        &seeds,
        hash,
        json!({ "slope": slope, "intercept": intercept, "reference_slope": exponent, "m": m }),
    );
    let bound_verdict = TestVerdict::new(
        "fracreg: S(eps) <= N eps^(2/(m+1)) (1 + E|grad Psi(u)|_L1) with N fitted at the largest eps",
        worst,
        0.0,
        &seeds,
        hash,
        json!({ "n_hat": n_hat, "grad_psi_l1": grad_mean }),
    );
    Ok(ProbeOutput {
        verdicts: vec![slope_verdict, bound_verdict],
        table,
    })
}
