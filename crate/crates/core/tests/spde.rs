use std::f64::consts::PI;

use dasep_core::rng::from_seed;
use dasep_core::spde::{
    martingale_problem_residual, mode_stationary_variance, periodic_residual, solve_ou_line, solve_ou_periodic,
    synthesize, Bump, NoiseCoef, SpdeConfig,
};
use dasep_core::stats::ks_two_sample;
use proptest::prelude::*;

#[test]
fn closed_form_mode_variances() {
    assert!((mode_stationary_variance(0.0, 1.0, 1).unwrap() - 1.0 / (8.0 * PI * PI)).abs() < 1e-15);
    assert_eq!(mode_stationary_variance(-0.25, 1.0, 0).unwrap(), 2.0);
    assert_eq!(mode_stationary_variance(-0.25, 0.0, 3).unwrap(), 0.0);
    assert!(mode_stationary_variance(0.0, 1.0, 0).is_err());
}

#[test]
fn line_and_periodic_backends_agree_in_the_bulk() {
    let t = 0.02;
    let n = 2000;
    let periodic = SpdeConfig::periodic(0.0, NoiseCoef::Constant(1.0), 256, t, t);
    let z0p = vec![0.0; periodic.grid().len()];
    let line = SpdeConfig::line(0.0, NoiseCoef::Constant(1.0), -1.0, 2.0, 0.01, 2e-4, t);
    let grid = line.grid();
    let mid = grid.iter().position(|&x| (x - 0.5).abs() < 1e-9).unwrap();
    let z0l = vec![0.0; grid.len()];
    let a: Vec<f64> = (0..n)
        .map(|i| {
            let f = solve_ou_periodic(&periodic, &z0p, &mut from_seed(i)).unwrap();
            synthesize(f.modes.unwrap().last().unwrap(), &[0.5])[0]
        })
        .collect();
    let b: Vec<f64> = (0..n)
        .map(|i| solve_ou_line(&line, &z0l, &mut from_seed(10_000 + i)).unwrap().values[0][mid])
        .collect();
    let (d, p) = ks_two_sample(&a, &b);
    assert!(p > 0.01, "KS {d}, p {p}");
}

#[test]
fn compensator_has_a_continuous_zero_rate_limit() {
    let mut cfg = SpdeConfig::periodic(0.0, NoiseCoef::Constant(1.0), 8, 0.05, 1.0);
    cfg.sample_times = vec![0.0, 0.5, 1.0];
    let z0: Vec<f64> = cfg.grid().iter().map(|x| (2.0 * PI * x).sin()).collect();
    let f = solve_ou_periodic(&cfg, &z0, &mut from_seed(3)).unwrap();
    let bump = Bump {
        center: 0.5,
        radius: 0.25,
    };
    let (m0, n0) = martingale_problem_residual(&f, &bump, 0.0, 0.0, 1.0).unwrap();
    let (m1, n1) = martingale_problem_residual(&f, &bump, 0.0, 1e-9, 1.0).unwrap();
    let (m2, n2) = periodic_residual(&f, &bump.modes(8), 0.0, 0.0, 1.0).unwrap();
    assert_eq!(m0, m1);
    assert_eq!(m0, m2);
    assert_eq!(n0, n2);
    for (a, b) in n0.iter().zip(&n1) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn noiseless_line_solution_decays_like_its_mode() {
    let t = 0.05;
    let cfg = SpdeConfig::line(0.0, NoiseCoef::Constant(0.0), 0.0, 1.0, 0.005, 0.0005, t);
    let z0: Vec<f64> = cfg.grid().iter().map(|x| (PI * x).sin()).collect();
    let f = solve_ou_line(&cfg, &z0, &mut from_seed(0)).unwrap();
    let decay = (-PI * PI * t).exp();
    for (x, v) in cfg.grid().iter().zip(&f.values[0]) {
        assert!((v - decay * (PI * x).sin()).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noiseless_periodic_mode_decays_exactly(k in 1usize..6, t in 0.001f64..0.2, a in -1.0f64..0.0) {
        let cfg = SpdeConfig::periodic(a, NoiseCoef::Constant(0.0), 8, t / 7.0, t);
        let z0: Vec<f64> = cfg.grid().iter().map(|x| (2.0 * PI * k as f64 * x).cos()).collect();
        let f = solve_ou_periodic(&cfg, &z0, &mut from_seed(0)).unwrap();
        let lam = (2.0 * PI * k as f64).powi(2) - a;
        for (x, v) in cfg.grid().iter().zip(&f.values[0]) {
            let want = (-lam * t).exp() * (2.0 * PI * k as f64 * x).cos();
            prop_assert!((v - want).abs() < 1e-12);
        }
    }
}
