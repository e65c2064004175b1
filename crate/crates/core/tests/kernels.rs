mod common;

use dasep_core::heat_kernel::{
    bound_stability, gradient_kernel_report, gradient_window, heat_kernel, kernel_bound_report, KernelFlavor,
};
use dasep_core::model::theta2;
use proptest::prelude::*;

#[test]
fn bessel_kernel_matches_rk4_walk() {
    for (eps, t) in [(0.1, 5.0), (0.5, 2.0), (1.0, 10.0)] {
        let width = 80;
        let rk = common::rk4_walk_kernel(theta2(eps) / 2.0, t, width, 4000);
        let table = heat_kernel(eps, &[t], width, KernelFlavor::Microscopic).unwrap();
        for x in 0..=40 {
            let d = (table.value(0, x as i64) - rk[x]).abs();
            assert!(d <= 1e-8, "eps {eps} t {t} x {x}: {d:e}");
        }
    }
}

#[test]
fn rescaled_kernel_starts_as_scaled_delta() {
    for eps in [0.5, 0.1, 0.01] {
        let t = heat_kernel(eps, &[0.0], 5, KernelFlavor::Rescaled).unwrap();
        assert_eq!(t.value(0, 0), 1.0 / eps);
        assert_eq!(t.value(0, 1), 0.0);
        assert_eq!(t.value(0, -3), 0.0);
    }
}

#[test]
fn ring_and_line_masses_are_one() {
    let times = [0.0, 0.5, 3.0, 40.0];
    for flavor in [KernelFlavor::Microscopic, KernelFlavor::RingSpectral { period: 16 }] {
        let t = heat_kernel(0.2, &times, 200, flavor).unwrap();
        for ti in 0..times.len() {
            assert!((t.mass(ti) - 1.0).abs() < 1e-10, "{flavor:?} t {}", times[ti]);
        }
    }
}

#[test]
fn bound_constants_are_finite_and_eps_stable() {
    let times: Vec<f64> = std::iter::once(0.0).chain((0..12).map(|k| 0.1 * 2f64.powi(k))).collect();
    let reports: Vec<_> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&eps| {
            let tab = heat_kernel(eps, &times, 2000, KernelFlavor::Microscopic).unwrap();
            kernel_bound_report(&tab, 1.0, 0.25, 0.5).unwrap()
        })
        .collect();
    for r in &reports {
        assert!(r.sup_c.is_finite() && r.sup_c > 0.0);
        assert!(r.gradient_c.is_finite() && r.gradient_c > 0.0);
        assert!(r.moment_c.is_finite());
        assert!(r.holder_space_c.is_finite());
    }
    let st = bound_stability(&reports);
    assert!(st.sup <= 2.0, "{st:?}");
}

#[test]
fn gradient_kernel_sum_decays_like_inverse_root() {
    let eps = 0.1;
    let grid: Vec<f64> = (0..=6).map(|k| 10f64.powf(k as f64 * 0.5)).collect();
    let r = gradient_kernel_report(eps, &grid, 0.0, gradient_window(eps, 1000.0)).unwrap();
    assert!((r.decay_slope + 0.5).abs() < 0.1, "{}", r.decay_slope);
    let ratio = r.s.last().unwrap().abs() / r.s[0].abs();
    assert!(ratio < 0.05, "S(1000)/S(1) = {ratio}");
    assert!(r.c1.iter().all(|&c| c < 1.0));
    assert!(r.c0.iter().all(|c| c.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_is_symmetric_and_unimodal(eps in 0.02f64..1.0, t in 0.01f64..50.0) {
        let tab = heat_kernel(eps, &[t], 400, KernelFlavor::Microscopic).unwrap();
        for x in 0..60i64 {
            prop_assert_eq!(tab.value(0, x), tab.value(0, -x));
            prop_assert!(tab.value(0, x + 1) <= tab.value(0, x));
        }
    }
}
