use num_complex::Complex64;
use proptest::prelude::*;

use levylab::numerics::{integrate, QuadOptions};
use levylab::stats::{
    eig_count, empirical_cdf, gap_probability, gap_sandwich_report, lsv_limit_cdf, smoothed_count, smoothing_q,
    CountingConfig, GapEnsemble,
};
use levylab::stable::EnsembleParams;

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 0..40)
}

proptest! {
    #[test]
    fn smoothed_count_bounded(l in spectrum(), w in 1e-4f64..2.0, eta in 1e-4f64..2.0) {
        let v = smoothed_count(&l, w, eta).unwrap();
        prop_assert!(v >= 0.0 && v <= l.len() as f64 + 1e-12);
    }

    #[test]
    fn smoothed_count_monotone_in_window(l in spectrum(), w in 1e-3f64..1.0, dw in 0.0f64..1.0, eta in 1e-3f64..1.0) {
        prop_assert!(smoothed_count(&l, w + dw, eta).unwrap() >= smoothed_count(&l, w, eta).unwrap() - 1e-12);
    }

    #[test]
    fn smoothed_count_decreases_with_distance(d in 0.0f64..2.0, dd in 0.0f64..2.0, w in 1e-3f64..0.5, eta in 1e-3f64..0.5) {
        let near = [w + d, -(w + d) - 0.3];
        let far = [w + d + dd, -(w + d + dd) - 0.3];
        prop_assert!(smoothed_count(&far, w, eta).unwrap() <= smoothed_count(&near, w, eta).unwrap() + 1e-12);
    }

    #[test]
    fn smoothed_count_matches_quadrature(l in prop::collection::vec(-1.0f64..1.0, 1..12), w in 0.05f64..1.0, eta in 0.05f64..0.5) {
        let kernel = |x: f64| {
            let s: f64 = l.iter().map(|&li| eta / ((li - x).powi(2) + eta * eta)).sum();
            Complex64::new(s / std::f64::consts::PI, 0.0)
        };
        let mut breaks = vec![-w, w];
        breaks.extend(l.iter().copied().filter(|x| x.abs() < w));
        breaks.sort_by(f64::total_cmp);
        let q = integrate(kernel, &breaks, QuadOptions { rel_tol: 1e-13, abs_tol: 1e-15, max_subdivisions: 20_000 });
        prop_assert!((q.value.re - smoothed_count(&l, w, eta).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn smoothed_count_converges_to_count(l in prop::collection::vec(0.05f64..0.95, 1..10)) {
        // Spectrum separated from the window edges ±0.5 by at least 0.05.
        let l: Vec<f64> = l.into_iter().map(|x| if (x - 0.5).abs() < 0.05 { x + 0.1 } else { x }).collect();
        let exact = eig_count(&l, -0.5, 0.5).unwrap() as f64;
        prop_assert!((smoothed_count(&l, 0.5, 1e-6).unwrap() - exact).abs() <= 0.01);
    }

    #[test]
    fn q_certificate(x in -1.0f64..1.0) {
        let q = smoothing_q(x);
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert_eq!(q, smoothing_q(-x));
    }

    #[test]
    fn empirical_cdf_nondecreasing(v in prop::collection::vec(-5.0f64..5.0, 1..50)) {
        let cdf = empirical_cdf(&v);
        prop_assert!(cdf.windows(2).all(|p| p[0].0 <= p[1].0 && p[0].1 <= p[1].1));
        prop_assert_eq!(cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn sandwich_report_consistent(l in spectrum(), n in 16usize..512) {
        let cfg = CountingConfig::new(n, 1.0, 0.01).unwrap();
        let r = gap_sandwich_report(&l, &cfg).unwrap();
        prop_assert_eq!(r.exact, eig_count(&l, -cfg.window, cfg.window).unwrap());
        prop_assert!(r.lower >= 0.0 && r.upper <= l.len() as f64 + 1e-12);
        prop_assert!(r.required_c >= 0.0);
    }
}

#[test]
fn q_plateau_and_support_on_grid() {
    let mut prev = 1.0;
    for k in 0..=1000 {
        let x = k as f64 * 1e-3;
        let q = smoothing_q(x);
        if x <= 1.0 / 9.0 {
            assert_eq!(q, 1.0, "x = {x}");
        } else if x >= 2.0 / 9.0 {
            assert_eq!(q, 0.0, "x = {x}");
        }
        assert!(q <= prev, "x = {x}");
        prev = q;
    }
    assert!((smoothing_q(0.5 / 3.0) - 0.5).abs() < 1e-15);
}

#[test]
fn far_spectrum_gives_empty_window() {
    let cfg = CountingConfig::new(128, 1.0, 0.01).unwrap();
    let r = gap_sandwich_report(&[-3.0, -2.0, 2.0, 3.0], &cfg).unwrap();
    assert_eq!(r.exact, 0);
    assert!(r.upper < 1e-3 && r.required_c < 1e-3);
}

#[test]
fn tiny_window_gap_probability_is_one() {
    let p = EnsembleParams::feasible(32, 1.5).unwrap().with_seed(4);
    let cfg = CountingConfig::new(32, 1.0, 0.01).unwrap();
    let est = gap_probability(&p, GapEnsemble::GaussianSymmetric, 1e-12, &cfg, 20).unwrap();
    assert_eq!(est.p, 1.0);
    assert_eq!(est.records.len(), 20);
}

#[test]
fn limit_cdf_endpoints() {
    assert_eq!(lsv_limit_cdf(0.0).unwrap(), 0.0);
    assert!((lsv_limit_cdf(1.0).unwrap() - 0.776_869_839_851_570_2).abs() < 1e-12);
}
