use proptest::prelude::*;
use spmlab::entropy::make_standard_eta;
use spmlab::nonlinearity::{
    compute_eps_n, compute_r_lambda, make_power_law, make_q_eta, regularize_a, standard_samples,
    validate_assumption_a, Nonlinearity,
};
use spmlab::quadrature::{adaptive_simpson, bisect};

#[test]
fn regularization_floor_and_closeness() {
    for m in [1.5, 2.0, 3.0] {
        let nl = make_power_law(m, 3.0).unwrap();
        for n in [5u32, 10, 40] {
            let reg = regularize_a(&nl, n).unwrap();
            let nf = n as f64;
            let mut sup: f64 = 0.0;
            let mut min = f64::INFINITY;
            for i in 0..=10_000 {
                let r = -nf + 2.0 * nf * i as f64 / 10_000.0;
                sup = sup.max((nl.eval_a(r) - reg.eval_a(r)).abs());
                min = min.min(reg.eval_a(r));
            }
            assert!(sup <= 4.0 / nf, "m={m} n={n} sup={sup}");
            assert!(min >= 2.0 / nf, "m={m} n={n} min={min}");
        }
    }
}

#[test]
fn psi_matches_quadrature() {
    let nl = make_power_law(2.0, 2.0).unwrap();
    let oracle = adaptive_simpson(|z| (2.0 * z).sqrt(), 0.0, 1.0, 1e-12).unwrap();
    assert!((nl.eval_psi(1.0) - oracle).abs() < 1e-9);
    assert!((nl.eval_psi(1.0) - 0.94281).abs() < 1e-5);
    let f = nl.eval_psi_f(|z| z, 1.0).unwrap();
    assert!((f - 0.56569).abs() < 1e-5);
}

#[test]
fn q_eta_matches_direct_quadrature() {
    let nl = make_power_law(2.0, 2.0).unwrap();
    let eta = make_standard_eta(0.1).unwrap();
    let q = make_q_eta(&nl, &eta);
    let oracle = adaptive_simpson(|z| eta.eval_d1(z) * 2.0 * z.abs(), 0.0, 1.0, 1e-12).unwrap();
    assert!((q.eval(1.0) - oracle).abs() < 1e-8, "{} vs {oracle}", q.eval(1.0));
    let oracle_neg = -adaptive_simpson(|z| eta.eval_d1(z) * 2.0 * z.abs(), -0.4, 0.0, 1e-12).unwrap();
    assert!((q.eval(-0.4) - oracle_neg).abs() < 1e-8);
}

#[test]
fn validator_cases() {
    let s = standard_samples();
    // At r = -z = 1/2 the two-regime Ψ bound needs K ≥ 2^{(m+1)/2} / (2·Ψ(1)).
    let m3 = validate_assumption_a(&make_power_law(3.0, 2.0).unwrap(), &s);
    assert!(!m3.check("K |Psi(r) - Psi(z)| lower bound").unwrap().passed);
    assert!(validate_assumption_a(&make_power_law(3.0, 2.4).unwrap(), &s).all_passed());
    assert!(validate_assumption_a(&make_power_law(2.0, 2.0).unwrap(), &s).all_passed());
    // A linear A declared with m = 2 passes every necessary condition.
    let lin = Nonlinearity::linear(1.0, 2.0, 2.0).unwrap();
    assert!(validate_assumption_a(&lin, &s).all_passed());
}

#[test]
fn eps_n_cases() {
    let constant = Nonlinearity::linear(1.0, 2.0, 2.0).unwrap();
    assert_eq!(compute_eps_n(&constant, 7).value, 1.0);
    let m3 = make_power_law(3.0, 2.0).unwrap();
    for n in [1u32, 4, 20] {
        let eps = compute_eps_n(&m3, n);
        let exact = (1.0f64).min(1.0 / (3.0 * 3f64.sqrt() * n as f64));
        assert!(eps.certified);
        assert!(eps.value <= exact && eps.value > exact / 2.0, "n={n} {}", eps.value);
    }
    let m2 = make_power_law(2.0, 2.0).unwrap();
    assert!(compute_eps_n(&m2, 1).value >= compute_eps_n(&m2, 10).value);
}

#[test]
fn r_lambda_against_bisection() {
    let a = make_power_law(2.0, 2.0).unwrap();
    let b = make_power_law(3.0, 2.0).unwrap();
    let r = compute_r_lambda(|r| a.eval_a(r), |r| b.eval_a(r), 0.1, 100.0);
    // The square-root branch dominates first, near r ≈ 0.005.
    let g = |r: f64| (2f64.sqrt() * r.sqrt() - 3f64.sqrt() * r).abs() - 0.1;
    let root = bisect(g, 0.0, 0.1, 1e-14).unwrap();
    assert!(r >= root);
    assert!((r - root).abs() <= 100.0 / 1e5 + 1e-9, "{r} vs {root}");
}

proptest! {
    #[test]
    fn power_law_odd_and_chain_consistent(m in 1.1f64..4.0, r in 0.05f64..5.0) {
        let nl = make_power_law(m, 4.0).unwrap();
        prop_assert_eq!(nl.eval_a_fn(-r), -nl.eval_a_fn(r));
        prop_assert_eq!(nl.eval_psi(-r), -nl.eval_psi(r));
        let h = 1e-6;
        let fd = (nl.eval_psi(r + h) - nl.eval_psi(r - h)) / (2.0 * h);
        prop_assert!((fd - nl.eval_a(r)).abs() < 1e-5 * (1.0 + nl.eval_a(r)));
        let fd_a = (nl.eval_a_fn(r + h) - nl.eval_a_fn(r - h)) / (2.0 * h);
        prop_assert!((fd_a - nl.eval_a(r).powi(2)).abs() < 1e-5 * (1.0 + fd_a));
    }

    #[test]
    fn r_lambda_monotone_in_lambda(l1 in 0.0f64..1.0, l2 in 0.0f64..1.0) {
        let a = make_power_law(2.0, 2.0).unwrap();
        let b = make_power_law(2.5, 2.0).unwrap();
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let r_lo = compute_r_lambda(|r| a.eval_a(r), |r| b.eval_a(r), lo, 20.0);
        let r_hi = compute_r_lambda(|r| a.eval_a(r), |r| b.eval_a(r), hi, 20.0);
        prop_assert!(r_lo <= r_hi);
    }

    #[test]
    fn regularized_is_odd_increasing(r in 0.0f64..12.0, s in 0.0f64..12.0) {
        let reg = regularized();
        prop_assert_eq!(reg.eval_a_fn(-r), -reg.eval_a_fn(r));
        if r < s {
            prop_assert!(reg.eval_a_fn(r) < reg.eval_a_fn(s));
        }
        prop_assert!(reg.eval_a(r) >= 0.2);
    }
}

fn regularized() -> &'static Nonlinearity {
    static REG: std::sync::OnceLock<Nonlinearity> = std::sync::OnceLock::new();
    REG.get_or_init(|| regularize_a(&make_power_law(2.0, 2.0).unwrap(), 10).unwrap())
}
