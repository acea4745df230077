//! Run configuration: parsing, canonical hashing, validation and assembly
//! of the regularized problem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{mollify_xi, GridField, InitialData, TorusGrid};
use crate::noise::{
    derive_seed, mollify_sigma, sample_wiener, validate_assumption_noise, DiffusionCoefficient, NoiseSamples,
    NoiseVariant,
};
use crate::nonlinearity::{make_power_law, regularize_a, standard_samples, validate_assumption_a, Nonlinearity};
use crate::report::{CheckOutcome, ValidationReport};
use crate::solver::{solve, Problem, TimeMesh, Trajectory};

/// Step count used when the time block gives neither `steps` nor `dt`.
pub const DEFAULT_STEPS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKindConfig {
    PowerLaw,
    Linear,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub kind: NonlinearityKindConfig,
    pub m: f64,
    #[serde(rename = "K")]
    pub k: f64,
    /// Regularization level; also the default mollification level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    /// One expression per mode over `x`, `y`, `u`.
    pub modes: Vec<String>,
    #[serde(rename = "K")]
    pub k: f64,
    pub kappa: f64,
    pub kappa_bar: f64,
    pub variant: NoiseVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    /// Binary field dump (see [`GridField::write_to`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub save_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub seed_base: u64,
    pub count: usize,
}

/// A complete description of `ℰ(A_n, σ_n, ξ_n)` plus discretization and
/// ensemble parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub nonlinearity: NonlinearityConfig,
    pub diffusion: DiffusionConfig,
    pub initial: InitialConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub ensemble: EnsembleConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON form (object keys sorted), hex encoded.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn steps(&self) -> usize {
        match (self.time.steps, self.time.dt) {
            (Some(s), _) => s,
            (None, Some(dt)) if dt > 0.0 => (self.time.t / dt).round() as usize,
            _ => DEFAULT_STEPS,
        }
    }

    pub fn mesh(&self) -> Result<TimeMesh> {
        TimeMesh::new(self.time.t, self.steps(), self.time.save_every)
    }

    pub fn sigma_n(&self) -> Option<u32> {
        self.diffusion.n.or(self.nonlinearity.n)
    }

    pub fn xi_n(&self) -> Option<u32> {
        self.initial.n.or(self.nonlinearity.n)
    }

    /// Seeds of the ensemble members, `base ⊕ splitmix64(i)`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.ensemble.count as u64)
            .map(|i| derive_seed(self.ensemble.seed_base, i))
            .collect()
    }

    /// Parameter-range checks with field paths, then the structural
    /// validators of the nonlinearity and the diffusion coefficient.
    pub fn validate(&self, base_dir: &Path) -> Vec<ValidationReport> {
        let mut params = ValidationReport::new("configuration parameters");
        let mut require = |ok: bool, name: &str, witness: &[f64]| {
            if ok {
                let mut c = CheckOutcome::new(name);
                c.record(0.0, 0.0, witness);
                params.push(c);
            } else {
                params.push(CheckOutcome::fail_with(name, witness));
            }
        };
        let nl = &self.nonlinearity;
        require(nl.m > 1.0 && nl.m.is_finite(), "nonlinearity.m: m > 1 required", &[nl.m]);
        require(nl.k >= 1.0 && nl.k.is_finite(), "nonlinearity.K: K >= 1 required", &[nl.k]);
        match nl.kind {
            NonlinearityKindConfig::Linear => require(
                nl.slope.is_some_and(|s| s > 0.0),
                "nonlinearity.slope: positive slope required for kind = linear",
                &[nl.slope.unwrap_or(f64::NAN)],
            ),
            _ => require(
                nl.n.is_some_and(|n| n > 0),
                "nonlinearity.n: positive regularization level required",
                &[nl.n.map_or(f64::NAN, f64::from)],
            ),
        }
        if nl.kind == NonlinearityKindConfig::Tabulated {
            require(nl.csv.is_some(), "nonlinearity.csv: table path required for kind = tabulated", &[]);
        }
        let df = &self.diffusion;
        require(!df.modes.is_empty(), "diffusion.modes: at least one mode required", &[]);
        require(df.k >= 1.0, "diffusion.K: K >= 1 required", &[df.k]);
        if df.variant == NoiseVariant::A {
            require(df.kappa > 0.0 && df.kappa <= 0.5, "diffusion.kappa: kappa in (0, 1/2] required", &[df.kappa]);
            let lower = 1.0 / nl.m.min(2.0);
            require(
                df.kappa_bar > lower && df.kappa_bar <= 1.0,
                &format!("diffusion.kappa_bar: kappa_bar must exceed (min(m,2))^-1 = {lower} and be <= 1"),
                &[df.kappa_bar, lower],
            );
        }
        require(
            self.initial.expr.is_some() != self.initial.field.is_some(),
            "initial: exactly one of expr or field required",
            &[],
        );
        require(self.grid.d == 1 || self.grid.d == 2, "grid.d: d in {1, 2} required", &[self.grid.d as f64]);
        require(self.grid.n >= 8, "grid.N: N >= 8 required", &[self.grid.n as f64]);
        require(self.time.t > 0.0 && self.time.t.is_finite(), "time.T: T > 0 required", &[self.time.t]);
        require(
            !(self.time.steps.is_some() && self.time.dt.is_some()),
            "time: give steps or dt, not both",
            &[],
        );
        if let Some(dt) = self.time.dt {
            let steps = self.time.t / dt;
            require(
                dt > 0.0 && (steps - steps.round()).abs() < 1e-9 * steps.max(1.0),
                "time.dt: dt must divide T",
                &[dt],
            );
        }
        require(self.time.save_every >= 1, "time.save_every: must be >= 1", &[]);
        require(self.ensemble.count >= 1, "ensemble.count: at least one seed required", &[0.0]);

        let mut out = vec![params];
        match self.raw_nonlinearity(base_dir) {
            Ok(raw) => out.push(validate_assumption_a(&raw, &standard_samples())),
            Err(e) => {
                let mut r = ValidationReport::new("structural checks for A");
                r.push(CheckOutcome::fail_with(&format!("nonlinearity: {e}"), &[]));
                out.push(r);
            }
        }
        match self.raw_sigma() {
            Ok(sc) => out.push(validate_assumption_noise(&sc, nl.m, &NoiseSamples::standard(sc.dim()))),
            Err(e) => {
                let mut r = ValidationReport::new("structural checks for sigma");
                r.push(CheckOutcome::fail_with(&format!("diffusion: {e}"), &[]));
                out.push(r);
            }
        }
        out
    }

    pub fn raw_nonlinearity(&self, base_dir: &Path) -> Result<Nonlinearity> {
        let c = &self.nonlinearity;
        match c.kind {
            NonlinearityKindConfig::PowerLaw => make_power_law(c.m, c.k),
            NonlinearityKindConfig::Linear => Nonlinearity::linear(c.slope.unwrap_or(f64::NAN), c.m, c.k),
            NonlinearityKindConfig::Tabulated => {
                let path = c
                    .csv
                    .as_ref()
                    .ok_or_else(|| Error::config("nonlinearity.csv", "missing table path"))?;
                Nonlinearity::tabulated_from_csv(&base_dir.join(path), c.m, c.k)
            }
        }
    }

    pub fn raw_sigma(&self) -> Result<DiffusionCoefficient> {
        let c = &self.diffusion;
        DiffusionCoefficient::from_exprs(&c.modes, self.grid.d, c.k, c.kappa, c.kappa_bar, c.variant)
    }

    pub fn raw_xi(&self, base_dir: &Path) -> Result<InitialData> {
        match (&self.initial.expr, &self.initial.field) {
            (Some(e), None) => InitialData::parse(e),
            (None, Some(p)) => {
                let path = base_dir.join(p);
                let file = std::fs::File::open(&path).map_err(|source| Error::File { path, source })?;
                let (field, _) = GridField::read_from(std::io::BufReader::new(file))?;
                Ok(InitialData::Field(field))
            }
            _ => Err(Error::config("initial", "exactly one of expr or field required")),
        }
    }

    /// Validates and assembles the regularized problem.
    pub fn build(&self, base_dir: &Path) -> Result<Setup> {
        let reports = self.validate(base_dir);
        let failures: Vec<String> = reports
            .iter()
            .flat_map(|r| r.failures().map(|c| c.name.clone()))
            .collect();
        if !failures.is_empty() {
            return Err(Error::Validation(failures.join("; ")));
        }
        let raw_nl = self.raw_nonlinearity(base_dir)?;
        let nl = match (self.nonlinearity.kind, self.nonlinearity.n) {
            (NonlinearityKindConfig::Linear, _) => raw_nl.clone(),
            (_, Some(n)) => regularize_a(&raw_nl, n)?,
            (_, None) => return Err(Error::config("nonlinearity.n", "missing regularization level")),
        };
        let raw_sigma = self.raw_sigma()?;
        let sigma = match self.sigma_n() {
            Some(n) => mollify_sigma(&raw_sigma, n)?,
            None => raw_sigma.clone(),
        };
        let grid = TorusGrid::new(self.grid.d, self.grid.n)?;
        let raw_xi = self.raw_xi(base_dir)?;
        let xi = match self.xi_n() {
            Some(n) => mollify_xi(&raw_xi, n, &grid)?,
            None => raw_xi.sample(&grid),
        };
        let problem = Problem::new(nl, sigma, xi)?;
        Ok(Setup {
            config: self.clone(),
            hash: self.hash(),
            raw_nl,
            raw_sigma,
            raw_xi,
            mesh: self.mesh()?,
            problem,
        })
    }
}

/// A validated configuration with its assembled problem.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: RunConfig,
    pub hash: String,
    pub raw_nl: Nonlinearity,
    pub raw_sigma: DiffusionCoefficient,
    pub raw_xi: InitialData,
    pub mesh: TimeMesh,
    pub problem: Problem,
}

impl Setup {
    /// Runs one ensemble member driven by the Wiener path of `seed`.
    pub fn run(&self, seed: u64) -> Result<Trajectory> {
        let modes = self.problem.sigma.mode_count();
        let path = sample_wiener(seed, self.mesh.dt, self.mesh.steps, modes)?;
        solve(&self.problem, &self.mesh, &path, &self.hash)
    }

    pub fn run_with_path(&self, path: &crate::noise::WienerPath) -> Result<Trajectory> {
        solve(&self.problem, &self.mesh, path, &self.hash)
    }
}

/// Applies `edit` to a copy of `cfg`.
pub fn with_edit(cfg: &RunConfig, edit: impl FnOnce(&mut RunConfig)) -> RunConfig {
    let mut c = cfg.clone();
    edit(&mut c);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [nonlinearity]
        kind = "power_law"
        m = 2.0
        K = 2.0
        n = 10
        [diffusion]
        modes = ["0.5*u"]
        K = 1.0
        kappa = 0.5
        kappa_bar = 1.0
        variant = "a"
        [initial]
        expr = "sin(2*pi*x)"
        [grid]
        d = 1
        N = 16
        [time]
        T = 0.1
        steps = 10
        [ensemble]
        seed_base = 1
        count = 2
    "#;

    #[test]
    fn hash_ignores_field_order() {
        let a = RunConfig::from_toml_str(BASE).unwrap();
        let reordered = BASE.replace("m = 2.0\n        K = 2.0", "K = 2.0\n        m = 2.0");
        assert_ne!(reordered, BASE);
        let b = RunConfig::from_toml_str(&reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = with_edit(&a, |c| c.grid.n = 32);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_small_m_and_kappa_bar() {
        let base = RunConfig::from_toml_str(BASE).unwrap();
        let bad = with_edit(&base, |c| c.nonlinearity.m = 0.5);
        let err = bad.build(Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("m > 1 required"), "{err}");
        let bad = with_edit(&base, |c| c.diffusion.kappa_bar = 0.4);
        let err = bad.build(Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("kappa_bar must exceed (min(m,2))^-1 = 0.5"), "{err}");
        let bad = with_edit(&base, |c| c.ensemble.count = 0);
        let err = bad.build(Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("ensemble.count"), "{err}");
    }

    #[test]
    fn baseline_validates() {
        let base = RunConfig::from_toml_str(BASE).unwrap();
        assert!(base.validate(Path::new(".")).iter().all(|r| r.all_passed()));
        let setup = base.build(Path::new(".")).unwrap();
        let t = setup.run(base.seeds()[0]).unwrap();
        assert_eq!(t.records.len(), 11);
    }
}
