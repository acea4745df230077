use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spmlab::experiment::{self, ExperimentManifest, ExperimentSpec, Profile};

#[derive(Parser)]
#[command(name = "spmlab", version, about = "Stochastic porous-medium equations on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; defaults to the manifest's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensemble runs (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    profile: Profile,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and experiment parameters.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run only the solve experiments (or a plain solve if none is listed).
    Solve(Common),
    /// Run every experiment of the manifest.
    Test(Common),
    /// Summarize the verdicts of a finished run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common, solve_only: bool) -> spmlab::Result<(ExperimentManifest, PathBuf)> {
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| spmlab::Error::InvalidParameter {
                name: "threads".into(),
                reason: e.to_string(),
            })?;
    }
    let mut m = ExperimentManifest::load(&common.manifest)?.adjusted(common.profile, common.seed_base);
    if solve_only {
        m.experiments.retain(|e| matches!(e.spec, ExperimentSpec::Solve { .. }));
        if m.experiments.is_empty() {
            m.experiments.push(experiment::Experiment {
                name: Some("solve".into()),
                seeds: None,
                spec: ExperimentSpec::Solve { save_fields: true },
            });
        }
    }
    let out = common.out.clone().unwrap_or_else(|| m.resolved_output_dir());
    Ok((m, out))
}

fn print_verdicts(verdicts: &[experiment::VerdictRecord]) {
    for v in verdicts {
        println!(
            "{} [{}] {}: statistic {:.6e}, tolerance {:.6e}, margin {:.6e}",
            if v.verdict.passed { "PASS" } else { "FAIL" },
            v.experiment,
            v.verdict.name,
            v.verdict.statistic,
            v.verdict.tolerance,
            v.verdict.margin
        );
    }
}

fn execute(cli: Cli) -> spmlab::Result<ExitCode> {
    match cli.command {
        Command::Validate { manifest } => {
            let m = ExperimentManifest::load(&manifest)?;
            let reports = experiment::validate(&m);
            for r in &reports {
                print!("{r}");
            }
            let ok = reports.iter().all(|r| r.all_passed());
            println!("config_hash={}", m.config_hash());
            println!("{}", if ok { "validation passed" } else { "validation failed" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Solve(common) => {
            let (m, out) = load(&common, true)?;
            experiment::run(&m, &out, common.profile)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Test(common) => {
            let (m, out) = load(&common, false)?;
            let summary = experiment::run(&m, &out, common.profile)?;
            print_verdicts(&summary.verdicts);
            Ok(ExitCode::from(summary.exit_code() as u8))
        }
        Command::Report { out } => {
            let verdicts = experiment::read_verdicts(&out)?;
            print_verdicts(&verdicts);
            let failed = verdicts.iter().filter(|v| !v.verdict.passed).count();
            println!("{} verdicts, {} failed", verdicts.len(), failed);
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
