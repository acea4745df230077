use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use spmlab_ffi::*;

const CONFIG: &str = r#"
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
N = 32
[time]
T = 0.05
steps = 40
save_every = 10
[ensemble]
seed_base = 7
count = 2
"#;

fn last_error() -> String {
    let p = spm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn nonlinearity_round_trip() {
    unsafe {
        let mut nl = ptr::null_mut();
        assert_eq!(spm_nonlinearity_power_law(2.0, 2.0, &mut nl), SpmStatus::Ok);
        let mut v = 0.0;
        assert_eq!(spm_nonlinearity_eval(nl, SpmNonlinearityFn::SqrtDiffusivity, 4.0, &mut v), SpmStatus::Ok);
        assert!((v - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        let mut reg = ptr::null_mut();
        assert_eq!(spm_nonlinearity_regularize(nl, 10, &mut reg), SpmStatus::Ok);
        assert_eq!(spm_nonlinearity_eval(reg, SpmNonlinearityFn::SqrtDiffusivity, 0.0, &mut v), SpmStatus::Ok);
        assert!(v >= 0.2);
        spm_nonlinearity_free(reg);
        spm_nonlinearity_free(nl);
        spm_nonlinearity_free(ptr::null_mut());
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut nl = ptr::null_mut();
        assert_eq!(spm_nonlinearity_power_law(0.5, 2.0, &mut nl), SpmStatus::InvalidParameter);
        assert!(nl.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(spm_nonlinearity_power_law(2.0, 2.0, ptr::null_mut()), SpmStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(
            spm_nonlinearity_eval(ptr::null(), SpmNonlinearityFn::A, 1.0, &mut v),
            SpmStatus::NullPointer
        );

        let bad = CString::new(CONFIG.replace("kappa_bar = 1.0", "kappa_bar = 0.4")).unwrap();
        let mut setup = ptr::null_mut();
        assert_eq!(spm_setup_from_toml(bad.as_ptr(), ptr::null(), &mut setup), SpmStatus::Validation);
        assert!(last_error().contains("kappa_bar"));
        let garbage = CString::new("[grid\n").unwrap();
        assert_eq!(spm_setup_from_toml(garbage.as_ptr(), ptr::null(), &mut setup), SpmStatus::Config);
    }
}

#[test]
fn setup_run_and_export() {
    unsafe {
        let src = CString::new(CONFIG).unwrap();
        let mut setup = ptr::null_mut();
        assert_eq!(spm_setup_from_toml(src.as_ptr(), ptr::null(), &mut setup), SpmStatus::Ok, "{}", "setup");

        let mut buf = [0 as std::ffi::c_char; 65];
        assert_eq!(spm_setup_config_hash(setup, buf.as_mut_ptr(), 10), SpmStatus::BufferTooSmall);
        assert_eq!(spm_setup_config_hash(setup, buf.as_mut_ptr(), buf.len()), SpmStatus::Ok);
        let hash = CStr::from_ptr(buf.as_ptr()).to_str().unwrap().to_owned();
        assert_eq!(hash.len(), 64);

        let mut count = 0;
        assert_eq!(spm_setup_seed_count(setup, &mut count), SpmStatus::Ok);
        assert_eq!(count, 2);
        let mut seed = 0;
        assert_eq!(spm_setup_seed(setup, 2, &mut seed), SpmStatus::OutOfRange);
        assert_eq!(spm_setup_seed(setup, 1, &mut seed), SpmStatus::Ok);

        let mut traj = ptr::null_mut();
        assert_eq!(spm_setup_run(setup, seed, &mut traj), SpmStatus::Ok);
        let (mut saves, mut len) = (0, 0);
        assert_eq!(spm_trajectory_save_count(traj, &mut saves), SpmStatus::Ok);
        assert_eq!(spm_trajectory_field_len(traj, &mut len), SpmStatus::Ok);
        assert_eq!((saves, len), (5, 32));
        let mut values = vec![0.0; len];
        let mut t = -1.0;
        assert_eq!(
            spm_trajectory_field(traj, saves - 1, &mut t, values.as_mut_ptr(), len - 1),
            SpmStatus::BufferTooSmall
        );
        assert_eq!(spm_trajectory_field(traj, saves - 1, &mut t, values.as_mut_ptr(), len), SpmStatus::Ok);
        assert!((t - 0.05).abs() < 1e-12);
        assert!(values.iter().all(|v| v.is_finite()));
        assert_eq!(spm_trajectory_field(traj, saves, &mut t, values.as_mut_ptr(), len), SpmStatus::OutOfRange);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("run.csv").to_str().unwrap()).unwrap();
        assert_eq!(spm_trajectory_write_csv(traj, path.as_ptr()), SpmStatus::Ok);
        let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert!(csv.starts_with(&format!("# config_hash={hash}")));

        spm_trajectory_free(traj);
        spm_setup_free(setup);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(spm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/spmlab.h")).unwrap();
    for name in [
        "spm_last_error_message",
        "spm_version",
        "spm_nonlinearity_power_law",
        "spm_nonlinearity_regularize",
        "spm_nonlinearity_eval",
        "spm_nonlinearity_free",
        "spm_setup_from_toml",
        "spm_setup_config_hash",
        "spm_setup_seed_count",
        "spm_setup_seed",
        "spm_setup_free",
        "spm_setup_run",
        "spm_trajectory_save_count",
        "spm_trajectory_field_len",
        "spm_trajectory_field",
        "spm_trajectory_write_csv",
        "spm_trajectory_free",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    // Syntax check with the system C compiler when one is installed.
    if let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/spmlab.h"))
        .status()
    {
        assert!(status.success());
    }
}
