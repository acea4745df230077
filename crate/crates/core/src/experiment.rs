//! Experiment manifests: parsing, validation and orchestration of solver
//! and verification runs, with all artifacts written under one directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{with_edit, RunConfig, Setup};
use crate::entropy::{EntropyFamily, EntropyFunction};
use crate::error::{Error, Result};
use crate::report::{CheckOutcome, ValidationReport};
use crate::solver::Trajectory;
use crate::verification::attainment::{check_h_list, default_h_list, initial_attainment_probe};
use crate::verification::contraction::contraction_test;
use crate::verification::entropy::{entropy_residual, TestFunction};
use crate::verification::fracreg::{check_eps_list, frac_regularity_probe};
use crate::verification::moments::{moment_report, moment_uniformity};
use crate::verification::stability::{stability_probe, Perturbation};
use crate::verification::stats::{run_ensemble, ProbeOutput, TestVerdict};

/// Test function given as closed-form time and space factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    pub phi_time: String,
    pub phi_space: String,
}

fn default_family() -> EntropyFamily {
    EntropyFamily::Standard
}

fn yes() -> bool {
    true
}

/// One experiment of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Runs the ensemble and exports norms and saved fields.
    Solve {
        #[serde(default = "yes")]
        save_fields: bool,
    },
    /// Pairs the base configuration with one whose initial condition is `xi2`.
    Contraction {
        xi2: String,
        #[serde(default)]
        refine_seeds: usize,
    },
    Entropy {
        #[serde(default = "default_family")]
        family: EntropyFamily,
        delta: f64,
        test_functions: Vec<TestFunctionSpec>,
        #[serde(default = "yes")]
        weak_form: bool,
        #[serde(default)]
        refine_seeds: usize,
    },
    Stability {
        perturbation: Perturbation,
    },
    /// `ε` given directly or in lattice spacings.
    Fracreg {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps_cells: Option<Vec<f64>>,
    },
    /// `h` as fractions of `T`.
    Attainment {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h_fractions: Option<Vec<f64>>,
    },
    Moments {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        levels: Option<Vec<u32>>,
    },
}

impl ExperimentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Solve { .. } => "solve",
            Self::Contraction { .. } => "contraction",
            Self::Entropy { .. } => "entropy",
            Self::Stability { .. } => "stability",
            Self::Fracreg { .. } => "fracreg",
            Self::Attainment { .. } => "attainment",
            Self::Moments { .. } => "moments",
        }
    }
}

/// An experiment with its output name and optional seed-count override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Uses the first `seeds` members of the ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(flatten)]
    pub spec: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    /// Relative paths resolve against the manifest's directory.
    pub output_dir: PathBuf,
    pub config: RunConfig,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Experiment>,
    /// Directory against which relative paths resolve; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Scale of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// At most [`QUICK_SEEDS`] seeds and [`QUICK_REFINE_SEEDS`] refinement seeds.
    Quick,
    #[default]
    Full,
}

pub const QUICK_SEEDS: usize = 8;
pub const QUICK_REFINE_SEEDS: usize = 2;

impl ExperimentManifest {
    pub fn from_toml_str(s: &str, base_dir: &Path) -> Result<Self> {
        let mut m: Self = toml::from_str(s)?;
        m.base_dir = base_dir.to_path_buf();
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::File {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    /// Applies the profile and an optional seed-base override.
    pub fn adjusted(&self, profile: Profile, seed_base: Option<u64>) -> Self {
        let mut m = self.clone();
        if let Some(b) = seed_base {
            m.config.ensemble.seed_base = b;
        }
        if profile == Profile::Quick {
            m.config.ensemble.count = m.config.ensemble.count.min(QUICK_SEEDS);
            for e in &mut m.experiments {
                e.seeds = e.seeds.map(|s| s.min(QUICK_SEEDS));
                match &mut e.spec {
                    ExperimentSpec::Contraction { refine_seeds, .. } | ExperimentSpec::Entropy { refine_seeds, .. } => {
                        *refine_seeds = (*refine_seeds).min(QUICK_REFINE_SEEDS)
                    }
                    _ => {}
                }
            }
        }
        m
    }

    /// Hash of the run configuration.
    pub fn config_hash(&self) -> String {
        self.config.hash()
    }

    fn seeds_for(&self, e: &Experiment) -> Vec<u64> {
        let all = self.config.seeds();
        match e.seeds {
            Some(k) => all.into_iter().take(k).collect(),
            None => all,
        }
    }

    fn names(&self) -> Vec<String> {
        self.experiments
            .iter()
            .enumerate()
            .map(|(i, e)| e.name.clone().unwrap_or_else(|| format!("{:02}-{}", i, e.spec.kind())))
            .collect()
    }
}

/// Aggregates the configuration validators with the experiment parameter
/// checks. Never touches the file system beyond reading referenced inputs.
pub fn validate(manifest: &ExperimentManifest) -> Vec<ValidationReport> {
    let mut reports = manifest.config.validate(&manifest.base_dir);
    let mut exp = ValidationReport::new("experiment parameters");
    let mut require = |ok: bool, name: String| {
        if ok {
            let mut c = CheckOutcome::new(&name);
            c.record(0.0, 0.0, &[]);
            exp.push(c);
        } else {
            exp.push(CheckOutcome::fail_with(&name, &[]));
        }
    };
    let cfg = &manifest.config;
    for (path, label) in [
        (cfg.initial.field.as_ref(), "initial.field"),
        (cfg.nonlinearity.csv.as_ref(), "nonlinearity.csv"),
    ] {
        if let Some(p) = path {
            require(manifest.base_dir.join(p).is_file(), format!("{label}: file {} exists", p.display()));
        }
    }
    let h = 1.0 / cfg.grid.n.max(1) as f64;
    let names = manifest.names();
    for (i, e) in manifest.experiments.iter().enumerate() {
        let at = format!("experiment[{i}] ({})", names[i]);
        if let Some(k) = e.seeds {
            require(
                k >= 1 && k <= cfg.ensemble.count,
                format!("{at}.seeds: between 1 and ensemble.count"),
            );
        }
        match &e.spec {
            ExperimentSpec::Solve { .. } => {}
            ExperimentSpec::Contraction { xi2, refine_seeds } => {
                require(
                    crate::grid::InitialData::parse(xi2).is_ok(),
                    format!("{at}.xi2: expression parses"),
                );
                require(*refine_seeds <= cfg.ensemble.count, format!("{at}.refine_seeds: at most ensemble.count"));
            }
            ExperimentSpec::Entropy {
                family,
                delta,
                test_functions,
                refine_seeds,
                ..
            } => {
                require(
                    EntropyFunction::from_family(*family, *delta).is_ok(),
                    format!("{at}.delta: admissible for the entropy family"),
                );
                require(!test_functions.is_empty(), format!("{at}.test_functions: at least one"));
                for (j, tf) in test_functions.iter().enumerate() {
                    let ok = TestFunction::parse(&tf.phi_time, &tf.phi_space).is_ok_and(|t| {
                        let end = t.phi_time.eval(&[cfg.time.t, cfg.time.t]);
                        end.abs() <= 1e-12
                    });
                    require(ok, format!("{at}.test_functions[{j}]: parses and phi_time(T) = 0"));
                }
                require(*refine_seeds <= cfg.ensemble.count, format!("{at}.refine_seeds: at most ensemble.count"));
            }
            ExperimentSpec::Stability { perturbation } => {
                let r = perturbation.validate();
                require(
                    r.is_ok(),
                    format!("{at}.perturbation: {}", r.err().map_or("well-ordered".into(), |e| e.to_string())),
                );
            }
            ExperimentSpec::Fracreg { eps, eps_cells } => {
                let list = fracreg_eps(eps, eps_cells, h);
                let r = list.and_then(|l| check_eps_list(&l, h));
                require(
                    r.is_ok(),
                    format!("{at}.eps: {}", r.err().map_or("well-ordered".into(), |e| e.to_string())),
                );
            }
            ExperimentSpec::Attainment { h_fractions } => {
                let ok = h_fractions
                    .as_ref()
                    .map_or(true, |f| f.len() >= 2 && f.windows(2).all(|w| w[0] > w[1]) && f[0] <= 1.0 && f[f.len() - 1] > 0.0);
                require(ok, format!("{at}.h_fractions: strictly decreasing in (0, 1]"));
                let t_final = cfg.time.t;
                let interval = t_final / cfg.steps().max(1) as f64 * cfg.time.save_every as f64;
                let h_list = match h_fractions {
                    Some(f) => f.iter().map(|c| c * t_final).collect(),
                    None => default_h_list(t_final),
                };
                let msg = match check_h_list(&h_list, interval, t_final) {
                    Ok(()) => "every h is a multiple of the save interval".to_owned(),
                    Err(e) => e.to_string(),
                };
                require(msg.starts_with("every"), format!("{at}.h_fractions: {msg}"));
            }
            ExperimentSpec::Moments { levels } => {
                let ok = levels
                    .as_ref()
                    .map_or(true, |l| l.len() >= 2 && !l.contains(&0) && l.windows(2).all(|w| w[0] < w[1]));
                require(ok, format!("{at}.levels: strictly increasing positive levels"));
            }
        }
    }
    reports.push(exp);
    reports
}

fn fracreg_eps(eps: &Option<Vec<f64>>, eps_cells: &Option<Vec<f64>>, h: f64) -> Result<Vec<f64>> {
    match (eps, eps_cells) {
        (Some(_), Some(_)) => Err(Error::param("eps", "give eps or eps_cells, not both")),
        (Some(e), None) => Ok(e.clone()),
        (None, Some(c)) => Ok(c.iter().map(|c| c * h).collect()),
        (None, None) => Ok(crate::verification::fracreg::default_eps_list(h)),
    }
}

/// Verdict line of `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub experiment: String,
    #[serde(flatten)]
    pub verdict: TestVerdict,
}

/// Reproducibility record written next to the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub profile: Profile,
    pub experiments: Vec<String>,
}

/// Summary returned by [`run`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub verdicts: Vec<VerdictRecord>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.verdict.passed)
    }

    /// Process exit status: nonzero iff any verdict failed.
    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(f))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Base ensemble shared by the experiments that only read trajectories.
struct Shared<'a> {
    manifest: &'a ExperimentManifest,
    setup: Option<Setup>,
    trajs: Vec<Trajectory>,
}

impl<'a> Shared<'a> {
    fn setup(&mut self) -> Result<&Setup> {
        if self.setup.is_none() {
            self.setup = Some(self.manifest.config.build(&self.manifest.base_dir)?);
        }
        Ok(self.setup.as_ref().unwrap())
    }

    /// The first `count` runs of the base ensemble, computing any missing.
    fn trajectories(&mut self, count: usize) -> Result<&[Trajectory]> {
        if self.trajs.len() < count {
            let seeds = self.manifest.config.seeds();
            let have = self.trajs.len();
            let setup = self.setup()?.clone();
            let more = run_ensemble(&setup, &seeds[have..count])?;
            self.trajs.extend(more);
        }
        Ok(&self.trajs[..count])
    }
}

/// Validates the manifest and runs its experiments, writing into
/// `output_dir`:
///
/// - `manifest-echo.toml`: the effective manifest, headed by its hash
/// - `reproducibility.json`: hash, seeds, code version and profile
/// - `verdicts.jsonl`: one line per verdict
/// - `<experiment>.csv`: the series behind each probe
/// - `<experiment>/seed_XXXX.csv` and `fields/<experiment>_seed_XXXX.bin`
///   for solve experiments
pub fn run(manifest: &ExperimentManifest, output_dir: &Path, profile: Profile) -> Result<RunSummary> {
    let failures: Vec<String> = validate(manifest)
        .iter()
        .flat_map(|r| r.failures().map(|c| c.name.clone()).collect::<Vec<_>>())
        .collect();
    if !failures.is_empty() {
        return Err(Error::Validation(failures.join("; ")));
    }
    create_dir(output_dir)?;
    let hash = manifest.config_hash();
    let cfg = &manifest.config;
    let base_dir = &manifest.base_dir;
    let names = manifest.names();

    let mut echo = create(&output_dir.join("manifest-echo.toml"))?;
    writeln!(echo, "# config_hash={hash}")?;
    echo.write_all(toml::to_string(manifest).map_err(|e| Error::param("manifest", e.to_string()))?.as_bytes())?;
    echo.flush()?;

    let record = RunRecord {
        config_hash: hash.clone(),
        seeds: cfg.seeds(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        profile,
        experiments: names.clone(),
    };
    let mut rec = create(&output_dir.join("reproducibility.json"))?;
    serde_json::to_writer_pretty(&mut rec, &record)?;
    writeln!(rec)?;
    rec.flush()?;

    let mut shared = Shared {
        manifest,
        setup: None,
        trajs: Vec::new(),
    };
    let mut verdicts = Vec::new();
    for (e, name) in manifest.experiments.iter().zip(&names) {
        log::info!("running experiment {name}");
        let seeds = manifest.seeds_for(e);
        let output: Option<ProbeOutput> = match &e.spec {
            ExperimentSpec::Solve { save_fields } => {
                let trajs = shared.trajectories(seeds.len())?;
                let dir = output_dir.join(name);
                create_dir(&dir)?;
                if *save_fields {
                    create_dir(&output_dir.join("fields"))?;
                }
                for (i, t) in trajs.iter().enumerate() {
                    t.write_csv(create(&dir.join(format!("seed_{i:04}.csv")))?)?;
                    if *save_fields {
                        let mut w = create(&output_dir.join("fields").join(format!("{name}_seed_{i:04}.bin")))?;
                        for (f, &t) in t.fields.iter().zip(&t.times) {
                            f.write_to(t, &mut w)?;
                        }
                        w.flush()?;
                    }
                }
                None
            }
            ExperimentSpec::Contraction { xi2, refine_seeds } => {
                let cfg2 = with_edit(cfg, |c| {
                    c.initial.expr = Some(xi2.clone());
                    c.initial.field = None;
                });
                Some(contraction_test(cfg, &cfg2, base_dir, &seeds, *refine_seeds)?)
            }
            ExperimentSpec::Entropy {
                family,
                delta,
                test_functions,
                weak_form,
                refine_seeds,
            } => {
                let eta = EntropyFunction::from_family(*family, *delta)?;
                let tests = test_functions
                    .iter()
                    .map(|t| TestFunction::parse(&t.phi_time, &t.phi_space))
                    .collect::<Result<Vec<_>>>()?;
                Some(entropy_residual(cfg, base_dir, &[eta], &tests, &seeds, *refine_seeds, *weak_form)?)
            }
            ExperimentSpec::Stability { perturbation } => Some(stability_probe(cfg, base_dir, perturbation, &seeds)?),
            ExperimentSpec::Fracreg { eps, eps_cells } => {
                let h = 1.0 / cfg.grid.n as f64;
                let list = fracreg_eps(eps, eps_cells, h)?;
                let m = shared.setup()?.raw_nl.m();
                let trajs = shared.trajectories(seeds.len())?;
                Some(frac_regularity_probe(trajs, m, &list, &hash)?)
            }
            ExperimentSpec::Attainment { h_fractions } => {
                let setup = shared.setup()?.clone();
                let t_final = setup.mesh.t_final();
                let h_list = match h_fractions {
                    Some(f) => f.iter().map(|c| c * t_final).collect(),
                    None => default_h_list(t_final),
                };
                let trajs = shared.trajectories(seeds.len())?;
                Some(initial_attainment_probe(trajs, &setup.problem.xi, &h_list, &hash)?)
            }
            ExperimentSpec::Moments { levels } => Some(match levels {
                Some(l) => moment_uniformity(cfg, base_dir, l, &seeds)?,
                None => {
                    let nl = shared.setup()?.problem.nl.clone();
                    moment_report(shared.trajectories(seeds.len())?, &nl, &hash)?
                }
            }),
        };
        if let Some(out) = output {
            out.table.write_csv(&hash, create(&output_dir.join(format!("{name}.csv")))?)?;
            verdicts.extend(out.verdicts.into_iter().map(|v| VerdictRecord {
                experiment: name.clone(),
                verdict: v,
            }));
        }
    }

    let mut w = create(&output_dir.join("verdicts.jsonl"))?;
    for v in &verdicts {
        serde_json::to_writer(&mut w, v)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(RunSummary {
        output_dir: output_dir.to_path_buf(),
        verdicts,
    })
}

/// Reads `verdicts.jsonl` from a finished run.
pub fn read_verdicts(output_dir: &Path) -> Result<Vec<VerdictRecord>> {
    let path = output_dir.join("verdicts.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::File { path, source: e })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
