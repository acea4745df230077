use std::f64::consts::PI;
use std::path::Path;

use spmlab::config::{with_edit, RunConfig};
use spmlab::entropy::{make_standard_eta, EntropyFunction};
use spmlab::grid::{GridField, TorusGrid};
use spmlab::mollifier::unit_bump_cdf;
use spmlab::noise::sample_wiener;
use spmlab::nonlinearity::make_q_eta;
use spmlab::verification::attainment::{attainment_values, initial_attainment_probe};
use spmlab::verification::contraction::contraction_test;
use spmlab::verification::entropy::{entropy_residual, entropy_terms, TestFunction};
use spmlab::verification::fracreg::{frac_regularity_probe, spatial_increment};
use spmlab::verification::moments::{moment_report, moment_summary};
use spmlab::verification::stability::{stability_probe, Perturbation};
use spmlab::verification::stats::{mean_se, run_ensemble};
use spmlab::Error;

const SMALL: &str = r#"
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
steps = 64
save_every = 4
[ensemble]
seed_base = 11
count = 8
"#;

fn small() -> RunConfig {
    RunConfig::from_toml_str(SMALL).unwrap()
}

fn deterministic(cfg: &RunConfig) -> RunConfig {
    with_edit(cfg, |c| {
        c.diffusion.modes = vec!["0".into()];
        c.diffusion.variant = spmlab::noise::NoiseVariant::B;
    })
}

fn here() -> &'static Path {
    Path::new(".")
}

#[test]
fn contraction_identical_inputs_give_zero_distance() {
    let cfg = small();
    let out = contraction_test(&cfg, &cfg, here(), &cfg.seeds(), 0).unwrap();
    assert!(out.table.column("D_mean").unwrap().iter().all(|&d| d == 0.0));
    assert!(out.verdicts[0].passed);
}

#[test]
fn contraction_constant_shift_without_noise() {
    let cfg = deterministic(&small());
    let shifted = with_edit(&cfg, |c| c.initial.expr = Some("sin(2*pi*x) + 0.3".into()));
    let out = contraction_test(&cfg, &shifted, here(), &cfg.seeds()[..1], 0).unwrap();
    let d = out.table.column("D_mean").unwrap();
    // A constant shift commutes with mollification; ‖ξ₁,n − ξ₂,n‖ = 0.3.
    assert!((d[0] - 0.3).abs() < 1e-12);
    // Mass conservation makes ‖u − ũ‖_{L1} ≥ |∫(u − ũ)| = 0.3, and the
    // comparison principle keeps u ≤ ũ, so D stays at 0.3 up to solver error.
    assert!(d.iter().all(|&x| (x - 0.3).abs() < 1e-8), "{d:?}");
    assert!(out.verdicts[0].passed);
}

#[test]
fn contraction_rejects_mismatched_configs() {
    let cfg = small();
    let other = with_edit(&cfg, |c| c.grid.n = 64);
    assert!(matches!(
        contraction_test(&cfg, &other, here(), &cfg.seeds(), 0),
        Err(Error::MismatchedConfigs(_))
    ));
}

#[test]
fn entropy_requires_vanishing_time_factor() {
    let cfg = small();
    let tf = TestFunction::parse("1", "1").unwrap();
    let eta = make_standard_eta(0.1).unwrap();
    assert!(matches!(
        entropy_residual(&cfg, here(), &[eta], &[tf], &cfg.seeds(), 0, false),
        Err(Error::InvalidParameter { .. })
    ));
}

#[test]
fn entropy_residual_vanishes_on_constant_solution() {
    let cfg = with_edit(&deterministic(&small()), |c| c.initial.expr = Some("0.4".into()));
    let setup = cfg.build(here()).unwrap();
    let tf = TestFunction::parse("max(0, 1 - t/(0.8*T))^2", "1 + 0.3*cos(2*pi*x)").unwrap();
    for eta in [make_standard_eta(0.5).unwrap(), make_standard_eta(0.05).unwrap(), EntropyFunction::identity()] {
        let flux = make_q_eta(&setup.problem.nl, &eta);
        let path = sample_wiener(1, setup.mesh.dt, setup.mesh.steps, 1).unwrap();
        let terms = entropy_terms(&setup, &path, &[flux], &[tf.clone()]).unwrap()[0][0];
        assert!(terms.residual().abs() < 1e-12, "{terms:?}");
        assert_eq!(terms.diss, 0.0);
    }
}

#[test]
fn entropy_linear_pair_residuals_are_opposite() {
    let cfg = small();
    let setup = cfg.build(here()).unwrap();
    let tf = TestFunction::parse("max(0, 1 - (t/(0.8*T))^2)^3", "1 + 0.5*cos(2*pi*x)").unwrap();
    let fluxes = [
        make_q_eta(&setup.problem.nl, &EntropyFunction::identity()),
        make_q_eta(&setup.problem.nl, &EntropyFunction::neg_identity()),
    ];
    let path = sample_wiener(5, setup.mesh.dt, setup.mesh.steps, 1).unwrap();
    let t = entropy_terms(&setup, &path, &fluxes, &[tf]).unwrap();
    let (plus, minus) = (t[0][0].residual(), t[1][0].residual());
    assert!((plus + minus).abs() < 1e-12 * (1.0 + plus.abs()));
}

/// Independent evaluation of the same terms from saved states: analytic
/// `∂_tϕ` and `Δϱ`, centred differences for `|∇Ψ(u)|²`, trapezoid in time.
#[test]
fn entropy_terms_match_independent_quadrature() {
    let cfg = with_edit(&small(), |c| {
        c.grid.n = 64;
        c.time.steps = Some(400);
        c.time.save_every = 1;
    });
    let setup = cfg.build(here()).unwrap();
    let nl = &setup.problem.nl;
    let t_final = setup.mesh.t_final();
    let phi = |t: f64| (1.0 - (t / (0.8 * t_final)).powi(2)).max(0.0).powi(3);
    let dphi = |t: f64| {
        let s = t / (0.8 * t_final);
        if s >= 1.0 {
            0.0
        } else {
            -3.0 * (1.0 - s * s).powi(2) * 2.0 * s / (0.8 * t_final)
        }
    };
    let rho = |x: f64| 1.0 + 0.5 * (2.0 * PI * x).cos();
    let lap_rho = |x: f64| -0.5 * 4.0 * PI * PI * (2.0 * PI * x).cos();
    let tf = TestFunction::parse("max(0, 1 - (t/(0.8*T))^2)^3", "1 + 0.5*cos(2*pi*x)").unwrap();
    let eta = make_standard_eta(0.2).unwrap();
    let flux = make_q_eta(nl, &eta);
    let path = sample_wiener(9, setup.mesh.dt, setup.mesh.steps, 1).unwrap();
    let terms = entropy_terms(&setup, &path, &[flux.clone()], &[tf]).unwrap()[0][0];
    let traj = setup.run_with_path(&path).unwrap();

    let grid = setup.problem.grid;
    let h = grid.h();
    let space = |u: &GridField, f: &dyn Fn(usize, &GridField) -> f64| (0..grid.len()).map(|i| f(i, u)).sum::<f64>() * h;
    let integrate = |g: &dyn Fn(usize) -> f64| {
        let v: Vec<f64> = (0..traj.times.len()).map(g).collect();
        spmlab::verification::stats::trapezoid(&traj.times, &v)
    };
    let x = |i: usize| grid.coords(i)[0];
    let time = -integrate(&|k| dphi(traj.times[k]) * space(&traj.fields[k], &|i, u| eta.eval(u.values[i]) * rho(x(i))));
    let init = phi(0.0) * space(&traj.fields[0], &|i, u| eta.eval(u.values[i]) * rho(x(i)));
    let flux_t = integrate(&|k| phi(traj.times[k]) * space(&traj.fields[k], &|i, u| flux.eval(u.values[i]) * lap_rho(x(i))));
    let ito = integrate(&|k| {
        phi(traj.times[k])
            * space(&traj.fields[k], &|i, u| {
                0.5 * eta.eval_d2(u.values[i]) * setup.problem.sigma.l2_norm(grid.coords(i), u.values[i]).powi(2) * rho(x(i))
            })
    });
    let diss = integrate(&|k| {
        phi(traj.times[k])
            * space(&traj.fields[k], &|i, u| {
                let (l, r) = (u.values[grid.backward(i, 0)], u.values[grid.forward(i, 0)]);
                let g = (nl.eval_psi(r) - nl.eval_psi(l)) / (2.0 * h);
                eta.eval_d2(u.values[i]) * g * g * rho(x(i))
            })
    });
    let close = |a: f64, b: f64, what: &str| {
        assert!((a - b).abs() <= 0.05 * b.abs().max(1e-3), "{what}: scheme {a} vs oracle {b}");
    };
    close(terms.time, time, "time");
    close(terms.init, init, "init");
    close(terms.flux, flux_t, "flux");
    close(terms.ito, ito, "ito");
    close(terms.diss, diss, "diss");
}

#[test]
fn stability_zero_perturbation_and_sigma_shift() {
    let cfg = small();
    let seeds = &cfg.seeds()[..2];
    let zero = Perturbation::SigmaShift { shifts: vec![0.0; 3] };
    let out = stability_probe(&cfg, here(), &zero, seeds).unwrap();
    assert!(out.table.column("lhs_mean").unwrap().iter().all(|&d| d == 0.0));
    assert!(out.table.column("sigma_sup").unwrap().iter().all(|&d| d == 0.0));

    let shift = Perturbation::SigmaShift { shifts: vec![0.1, 0.05, 0.0] };
    let out = stability_probe(&cfg, here(), &shift, seeds).unwrap();
    let sup = out.table.column("sigma_sup").unwrap();
    assert!((sup[0] - 0.1).abs() < 1e-12 && (sup[1] - 0.05).abs() < 1e-12, "{sup:?}");
    assert_eq!(out.table.column("lhs_mean").unwrap()[2], 0.0);
}

#[test]
fn stability_requires_three_levels() {
    let cfg = small();
    let short = Perturbation::RegularizationLevel { levels: vec![5, 10], reference: 40 };
    assert!(stability_probe(&cfg, here(), &short, &cfg.seeds()).is_err());
    let unordered = Perturbation::RegularizationLevel { levels: vec![10, 5, 20], reference: 40 };
    assert!(unordered.validate().is_err());
}

#[test]
fn xi_shift_reports_exact_initial_distance() {
    let cfg = deterministic(&small());
    let p = Perturbation::XiShift { shifts: vec![0.2, 0.1, 0.05] };
    let out = stability_probe(&cfg, here(), &p, &cfg.seeds()[..1]).unwrap();
    let xi = out.table.column("xi_l1").unwrap();
    for (d, c) in xi.iter().zip([0.2, 0.1, 0.05]) {
        assert!((d - c).abs() < 1e-12);
    }
    // Mass is conserved, so the L1(Q_T) distance is at least T·c.
    let lhs = out.table.column("lhs_mean").unwrap();
    assert!(lhs.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.verdicts[0].passed);
}

/// Brute force: cell weights by quadrature of the scaled kernel, double sum.
fn increment_oracle(u: &GridField, eps: f64) -> f64 {
    let n = u.grid.points_per_axis();
    let h = u.grid.h();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let off = (j + n - i) % n;
            let lo = ((off as f64 - 0.5) * h / eps).clamp(0.0, 1.0);
            let hi = ((off as f64 + 0.5) * h / eps).clamp(0.0, 1.0);
            let w = unit_bump_cdf(hi) - unit_bump_cdf(lo);
            acc += w * (u.values[i] - u.values[j]).abs();
        }
    }
    acc * h
}

#[test]
fn spatial_increment_matches_direct_summation() {
    let grid = TorusGrid::new(1, 128).unwrap();
    let saw = grid.sample(|x| x[0]);
    for cells in [4.0, 10.0, 40.0] {
        let eps = cells * grid.h();
        let s = spatial_increment(&saw, eps);
        let oracle = increment_oracle(&saw, eps);
        assert!((s - oracle).abs() < 1e-12, "{s} vs {oracle}");
    }
    let c = GridField::constant(grid, 2.0);
    assert_eq!(spatial_increment(&c, 0.1), 0.0);
    let shifted = GridField::new(grid, (0..128).map(|i| saw.values[grid.shifted(i, [37, 0])]).collect()).unwrap();
    assert!((spatial_increment(&shifted, 0.2) - spatial_increment(&saw, 0.2)).abs() < 1e-13);
}

#[test]
fn fracreg_step_field_has_unit_slope() {
    // Two unit jumps: S(ε) = 2·E_ϱ|offset| ∝ ε exactly.
    let cfg = deterministic(&small());
    let setup = with_edit(&cfg, |c| c.grid.n = 128).build(here()).unwrap();
    let mut traj = setup.run(0).unwrap();
    let grid = traj.fields[0].grid;
    let step = grid.sample(|x| if x[0] < 0.5 { 0.0 } else { 1.0 });
    for f in &mut traj.fields {
        *f = step.clone();
    }
    let eps: Vec<f64> = [4.0, 8.0, 16.0, 32.0, 40.0].iter().map(|c| c * grid.h()).collect();
    let out = frac_regularity_probe(&[traj], 2.0, &eps, "").unwrap();
    let slope = out.verdicts[0].witness["slope"].as_f64().unwrap();
    assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn fracreg_rejects_unresolved_or_narrow_eps() {
    let cfg = small();
    let setup = cfg.build(here()).unwrap();
    let traj = setup.run(cfg.seeds()[0]).unwrap();
    let h = 1.0 / 32.0;
    assert!(frac_regularity_probe(&[traj.clone()], 2.0, &[2.0 * h, 8.0 * h, 30.0 * h], "").is_err());
    assert!(frac_regularity_probe(&[traj], 2.0, &[4.0 * h, 8.0 * h, 16.0 * h], "").is_err());
}

#[test]
fn attainment_stationary_is_zero() {
    let cfg = with_edit(&deterministic(&small()), |c| c.initial.expr = Some("0.7".into()));
    let setup = cfg.build(here()).unwrap();
    let traj = setup.run(0).unwrap();
    let g = attainment_values(&traj, &setup.problem.xi, &[0.05, 0.025, 0.0125]).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn attainment_matches_heat_flow_closed_form() {
    let cfg = RunConfig::from_toml_str(
        &SMALL
            .replace("kind = \"power_law\"", "kind = \"linear\"\nslope = 1.0")
            .replace("n = 10\n", "")
            .replace("\"0.5*u\"", "\"0\"")
            .replace("variant = \"a\"", "variant = \"b\"")
            .replace("sin(2*pi*x)", "cos(2*pi*x)")
            .replace("N = 32", "N = 128")
            .replace("steps = 64", "steps = 3200")
            .replace("save_every = 4", "save_every = 10"),
    )
    .unwrap();
    let setup = cfg.build(here()).unwrap();
    let traj = setup.run(0).unwrap();
    let a = 4.0 * PI * PI;
    let exact = |h: f64| {
        let integral = h - 2.0 * (1.0 - (-a * h).exp()) / a + (1.0 - (-2.0 * a * h).exp()) / (2.0 * a);
        0.5 * integral / h
    };
    let h_list = [0.05, 0.025, 0.0125, 0.00625];
    let g = attainment_values(&traj, &setup.problem.xi, &h_list).unwrap();
    for (v, h) in g.iter().zip(h_list) {
        assert!((v - exact(h)).abs() <= 0.03 * exact(h), "h {h}: {v} vs {}", exact(h));
    }
}

#[test]
fn attainment_rejects_off_grid_h() {
    let cfg = small();
    let setup = cfg.build(here()).unwrap();
    let traj = setup.run(0).unwrap();
    let interval = setup.mesh.dt * 4.0;
    assert!(attainment_values(&traj, &setup.problem.xi, &[0.5 * interval]).is_err());
    assert!(attainment_values(&traj, &setup.problem.xi, &[1.5 * interval]).is_err());
    assert!(initial_attainment_probe(&[traj], &setup.problem.xi, &[interval, 2.0 * interval], "").is_err());
}

#[test]
fn moments_of_zero_solution_vanish() {
    let cfg = with_edit(&deterministic(&small()), |c| c.initial.expr = Some("0".into()));
    let setup = cfg.build(here()).unwrap();
    let trajs = run_ensemble(&setup, &cfg.seeds()).unwrap();
    let summary = moment_summary(&trajs, &setup.problem.nl).unwrap();
    assert!(summary.iter().all(|&(m, se)| m == 0.0 && se == 0.0));
    assert!(moment_report(&trajs[..4], &setup.problem.nl, "").is_err());
}

#[test]
fn moments_stable_under_ensemble_doubling() {
    let cfg = with_edit(&small(), |c| c.ensemble.count = 32);
    let setup = cfg.build(here()).unwrap();
    let trajs = run_ensemble(&setup, &cfg.seeds()).unwrap();
    let a = moment_summary(&trajs[..16], &setup.problem.nl).unwrap();
    let b = moment_summary(&trajs, &setup.problem.nl).unwrap();
    for ((ma, sa), (mb, sb)) in a.iter().zip(&b) {
        assert!((ma - mb).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "{ma} vs {mb}");
    }
}

#[test]
fn ensemble_statistics_are_order_independent() {
    let xs: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
    let (m, _) = mean_se(&xs);
    assert_eq!(m, xs.iter().sum::<f64>() / 64.0);
}
