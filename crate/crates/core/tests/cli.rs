use std::fs;
use std::path::Path;
use std::process::Command;

const MANIFEST: &str = r#"
output_dir = "out"

[config.nonlinearity]
kind = "power_law"
m = 2.0
K = 2.0
n = 10
[config.diffusion]
modes = ["0.5*u"]
K = 1.0
kappa = 0.5
kappa_bar = 1.0
variant = "a"
[config.initial]
expr = "sin(2*pi*x)"
[config.grid]
d = 1
N = 32
[config.time]
T = 0.05
steps = 80
save_every = 1
[config.ensemble]
seed_base = 7
count = 8

[[experiment]]
kind = "solve"

[[experiment]]
kind = "contraction"
xi2 = "0.5*sin(2*pi*x)"
refine_seeds = 2

[[experiment]]
kind = "attainment"
"#;

fn spmlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_spmlab")).args(args).output().unwrap()
}

fn write_manifest(dir: &Path, text: &str) -> String {
    let p = dir.join("m.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn validate_accepts_and_rejects() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_manifest(tmp.path(), MANIFEST);
    assert!(spmlab(&["validate", "--manifest", &good]).status.success());

    let bad = write_manifest(tmp.path(), &MANIFEST.replace("m = 2.0", "m = 0.5"));
    let out = spmlab(&["validate", "--manifest", &bad]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("nonlinearity.m"), "{text}");
}

#[test]
fn quick_run_writes_artifacts_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_manifest(tmp.path(), MANIFEST);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = spmlab(&["test", "--manifest", &manifest, "--profile", "quick", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["manifest-echo.toml", "reproducibility.json", "verdicts.jsonl", "01-contraction.csv", "02-attainment.csv"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    let text = fs::read_to_string(a.join("01-contraction.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "t,D_mean,D_se,D0");
    assert!(fs::read_dir(a.join("00-solve")).unwrap().count() == 8);
    for line in fs::read_to_string(a.join("verdicts.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["experiment", "name", "statistic", "tolerance", "passed", "seeds", "config_hash"] {
            assert!(v.get(key).is_some(), "{key} missing in {line}");
        }
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(fa.len() > 3);
    assert_eq!(fa, fb);

    let report = spmlab(&["report", "--out", a.to_str().unwrap()]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("PASS"));
}

#[test]
fn seed_base_override_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_manifest(tmp.path(), MANIFEST);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    spmlab(&["solve", "--manifest", &manifest, "--profile", "quick", "--out", a.to_str().unwrap()]);
    spmlab(&["solve", "--manifest", &manifest, "--profile", "quick", "--seed-base", "8", "--out", b.to_str().unwrap()]);
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(!fa.is_empty());
    assert_ne!(fa, fb);
}
