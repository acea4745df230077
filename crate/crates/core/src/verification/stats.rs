//! Ensemble execution and the statistical plumbing shared by the probes.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Setup};
use crate::error::{Error, Result};
use crate::noise::{sample_wiener, WienerPath};
use crate::solver::Trajectory;

/// Multiplier on the standard error in every statistical tolerance.
pub const SE_MULTIPLIER: f64 = 3.0;

/// Fewest seeds for which a standard error is reported as meaningful.
pub const MIN_SEEDS: usize = 8;

/// Sample mean and standard error (`s / √n`, unbiased `s`), reduced in
/// input order.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Outcome of one statistical comparison; `margin = tolerance - statistic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub margin: f64,
    pub passed: bool,
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub witness: serde_json::Value,
}

impl TestVerdict {
    pub fn new(
        name: impl Into<String>,
        statistic: f64,
        tolerance: f64,
        seeds: &[u64],
        config_hash: &str,
        witness: serde_json::Value,
    ) -> Self {
        let margin = tolerance - statistic;
        Self {
            name: name.into(),
            statistic,
            tolerance,
            margin,
            passed: margin >= 0.0,
            seeds: seeds.to_vec(),
            config_hash: config_hash.to_string(),
            witness,
        }
    }
}

/// A table of per-time or per-level values exported next to the verdicts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// CSV with a leading `# config_hash=` comment line.
    pub fn write_csv(&self, config_hash: &str, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "# config_hash={config_hash}")?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header)?;
        for r in &self.rows {
            csv.write_record(r.iter().map(|v| v.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Verdicts and the underlying series of one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutput {
    pub verdicts: Vec<TestVerdict>,
    pub table: Table,
}

/// Discretization slack fitted from a `(dt, h) → (dt/2, h/2)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscSlack {
    pub stat_coarse: f64,
    pub stat_fine: f64,
    pub c_disc: f64,
    /// `C_disc (dt + h²)` at the coarse resolution.
    pub tol: f64,
}

impl DiscSlack {
    pub fn fit(stat_coarse: f64, stat_fine: f64, dt: f64, h: f64) -> Self {
        let scale = (dt + h * h) - (0.5 * dt + 0.25 * h * h);
        let c_disc = (stat_coarse - stat_fine).abs() / scale;
        Self {
            stat_coarse,
            stat_fine,
            c_disc,
            tol: c_disc * (dt + h * h),
        }
    }

    pub fn none() -> Self {
        Self {
            stat_coarse: 0.0,
            stat_fine: 0.0,
            c_disc: 0.0,
            tol: 0.0,
        }
    }
}

/// Halves `dt` and `h`, keeping the save times.
pub fn refined(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.grid.n *= 2;
    c.time.steps = Some(cfg.steps() * 2);
    c.time.dt = None;
    c.time.save_every = cfg.time.save_every * 2;
    c
}

/// Maps `f` over the seeds in parallel, keeping seed order in the output.
pub fn par_seeds<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    seeds.par_iter().map(|&s| f(s)).collect()
}

/// Runs every seed of `setup`.
pub fn run_ensemble(setup: &Setup, seeds: &[u64]) -> Result<Vec<Trajectory>> {
    par_seeds(seeds, |s| setup.run(s))
}

/// Builds `cfg` relative to `base_dir` and runs its ensemble.
pub fn build_and_run(cfg: &RunConfig, base_dir: &Path) -> Result<(Setup, Vec<Trajectory>)> {
    let setup = cfg.build(base_dir)?;
    let seeds = cfg.seeds();
    let trajs = run_ensemble(&setup, &seeds)?;
    Ok((setup, trajs))
}

/// Trapezoid rule on a possibly non-uniform mesh.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Evaluates `f(is_fine, path)` for every seed on the mesh of `fine` and on
/// the doubled mesh, whose path sums pairs of fine increments.
pub fn refinement_pair<T: Send>(
    fine: &Setup,
    seeds: &[u64],
    f: impl Fn(bool, &WienerPath) -> Result<T> + Sync,
) -> Result<(Vec<T>, Vec<T>)> {
    let modes = fine.problem.sigma.mode_count();
    let pairs = par_seeds(seeds, |seed| {
        let fine_path = sample_wiener(seed, fine.mesh.dt, fine.mesh.steps, modes)?;
        let coarse_path = fine_path.coarsen(2)?;
        Ok((f(false, &coarse_path)?, f(true, &fine_path)?))
    })?;
    Ok(pairs.into_iter().unzip())
}

pub(crate) fn require_seeds(seeds: usize, min: usize, what: &str) -> Result<()> {
    if seeds < min {
        return Err(Error::param("ensemble.count", format!("{what} needs at least {min} seeds, got {seeds}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_basic() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn verdict_margin_sign() {
        let v = TestVerdict::new("x", 1.0, 0.5, &[], "", serde_json::Value::Null);
        assert!(!v.passed);
        assert_eq!(v.margin, -0.5);
    }

    #[test]
    fn slack_fit() {
        let s = DiscSlack::fit(1.0, 0.9, 0.01, 0.1);
        assert!((s.c_disc - 0.1 / 0.0125).abs() < 1e-9);
        assert!((s.tol - s.c_disc * 0.02).abs() < 1e-15);
    }

    #[test]
    fn fit_and_trapezoid() {
        let (s, c) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14);
        assert!((trapezoid(&[0.0, 0.5, 2.0], &[0.0, 1.0, 4.0]) - (0.25 + 3.75)).abs() < 1e-15);
    }
}
