use std::path::Path;

use proptest::prelude::*;
use spmlab::config::{with_edit, RunConfig};
use spmlab::experiment::{self, ExperimentManifest};
use spmlab::report::ValidationReport;

const BASE: &str = r#"
[nonlinearity]
kind = "power_law"
m = 2.0
K = 2.0
n = 40
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
N = 64
[time]
T = 0.1
steps = 100
[ensemble]
seed_base = 1
count = 8
"#;

const REORDERED: &str = r#"
[ensemble]
count = 8
seed_base = 1
[time]
steps = 100
T = 0.1
[grid]
N = 64
d = 1
[initial]
expr = "sin(2*pi*x)"
[diffusion]
variant = "a"
kappa_bar = 1.0
kappa = 0.5
K = 1.0
modes = ["0.5*u"]
[nonlinearity]
n = 40
K = 2.0
m = 2.0
kind = "power_law"
"#;

fn failing(reports: &[ValidationReport]) -> Vec<String> {
    reports.iter().flat_map(|r| r.failures().map(|c| c.name.clone())).collect()
}

#[test]
fn hash_ignores_key_order() {
    let a = RunConfig::from_toml_str(BASE).unwrap();
    let b = RunConfig::from_toml_str(REORDERED).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    assert_ne!(a.hash(), with_edit(&a, |c| c.grid.n = 128).hash());
}

#[test]
fn baseline_validates() {
    let cfg = RunConfig::from_toml_str(BASE).unwrap();
    assert!(failing(&cfg.validate(Path::new("."))).is_empty());
}

#[test]
fn rejects_sublinear_exponent() {
    let cfg = with_edit(&RunConfig::from_toml_str(BASE).unwrap(), |c| c.nonlinearity.m = 0.5);
    let fails = failing(&cfg.validate(Path::new(".")));
    assert!(fails.iter().any(|f| f.contains("nonlinearity.m")), "{fails:?}");
}

#[test]
fn rejects_small_kappa_bar() {
    let cfg = with_edit(&RunConfig::from_toml_str(BASE).unwrap(), |c| c.diffusion.kappa_bar = 0.4);
    let fails = failing(&cfg.validate(Path::new(".")));
    assert!(fails.iter().any(|f| f.contains("kappa_bar")), "{fails:?}");
}

#[test]
fn rejects_unknown_fields() {
    let text = BASE.replace("N = 64", "N = 64\nspacing = 0.1");
    assert!(RunConfig::from_toml_str(&text).is_err());
}

#[test]
fn empty_ensemble_is_a_validation_error() {
    let text = format!("output_dir = \"out\"\n[config]\n{}", BASE.replace("count = 8", "count = 0"))
        .replace("\n[", "\n[config.")
        .replace("[config.config]", "[config]");
    let manifest = ExperimentManifest::from_toml_str(&text, Path::new(".")).unwrap();
    let fails = failing(&experiment::validate(&manifest));
    assert!(fails.iter().any(|f| f.contains("ensemble")), "{fails:?}");
}

proptest! {
    #[test]
    fn hash_survives_toml_round_trip(m in 1.1f64..4.0, n in 1u32..200, count in 1usize..100) {
        let cfg = with_edit(&RunConfig::from_toml_str(BASE).unwrap(), |c| {
            c.nonlinearity.m = m;
            c.nonlinearity.n = Some(n);
            c.ensemble.count = count;
        });
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
