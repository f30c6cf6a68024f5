//! Property-based checks of invariants that hold for every input.

use pamclt::chaos::ell_r;
use pamclt::clt::{overlap_integral, spatial_average};
use pamclt::covariance::{inner_gagliardo, inner_spectral, TestFunction};
use pamclt::feynman_kac::SolutionSample;
use pamclt::field::synthesize;
use pamclt::heat_kernel::{delta_incr, fourier_p, p, rect_incr};
use pamclt::runner::output::{cell, json_document, Meta};
use pamclt::seed::seed_derive;
use pamclt::stats::{kendall_tau, ks_normal, loglog_slope};
use pamclt::{CovarianceModel, Execution, GridSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn model_strategy() -> impl Strategy<Value = CovarianceModel> {
    prop_oneof![
        Just(CovarianceModel::white()),
        Just(CovarianceModel::integrable()),
        (0.05f64..0.95).prop_map(|b| CovarianceModel::riesz(1, b).unwrap()),
        (0.26f64..0.49).prop_map(|h| CovarianceModel::rough(h).unwrap()),
    ]
}

fn sample_of(values: Vec<f64>) -> SolutionSample {
    let grid = GridSpec::new(8.0, 64).unwrap();
    SolutionSample {
        t: 1.0,
        grid,
        window: 0..64,
        values,
        n_paths: 1,
        eps: 0.1,
        noise_seed: 0,
        path_seed: 0,
        max_exponent: 0.0,
        overflow: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn seed_derivation_is_pure_and_label_sensitive(master in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let x = seed_derive(master, &["field".into(), a.into()]);
        prop_assert_eq!(x, seed_derive(master, &["field".into(), a.into()]));
        if a != b {
            prop_assert_ne!(x, seed_derive(master, &["field".into(), b.into()]));
        }
        prop_assert_ne!(x, seed_derive(master, &["paths".into(), a.into()]));
    }

    #[test]
    fn spectral_density_is_even_and_nonnegative(m in model_strategy(), xi in 0.01f64..50.0) {
        let g = m.spectral_density(&[xi]).unwrap();
        prop_assert!(g >= 0.0);
        prop_assert_eq!(g, m.spectral_density(&[-xi]).unwrap());
    }

    #[test]
    fn mollified_covariance_is_even_and_peaks_at_zero(m in model_strategy(), eps in 0.01f64..1.0, lag in 0.0f64..5.0) {
        let c0 = m.mollified_cov(eps, 0.0).unwrap();
        let c = m.mollified_cov(eps, lag).unwrap();
        let cm = m.mollified_cov(eps, -lag).unwrap();
        prop_assert!((c - cm).abs() <= 1e-12 * c0);
        prop_assert!(c.abs() <= c0 * (1.0 + 1e-9));
    }

    #[test]
    fn heat_kernel_identities(t in 0.01f64..10.0, x in -5.0f64..5.0, y in -5.0f64..5.0, xi in -10.0f64..10.0) {
        let v = p(t, &[x]).unwrap();
        prop_assert!(v >= 0.0);
        if x * x / t < 1000.0 {
            prop_assert!(v > 0.0);
        }
        prop_assert_eq!(p(t, &[x]).unwrap(), p(t, &[-x]).unwrap());
        let f = fourier_p(t, &[xi]).unwrap();
        prop_assert!(f > 0.0 && f <= 1.0);
        prop_assert_eq!(delta_incr(t, &[x], &[0.0]).unwrap(), 0.0);
        prop_assert!(rect_incr(t, &[x], &[0.0], &[y]).unwrap().abs() < 1e-15);
        prop_assert!(rect_incr(t, &[x], &[y], &[0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn fejer_kernel_is_bounded_by_its_peak(r in 0.1f64..100.0, xi in -10.0f64..10.0) {
        let v = ell_r(r, xi);
        prop_assert!(v >= 0.0);
        prop_assert!(v <= r / std::f64::consts::PI * (1.0 + 1e-12));
    }

    #[test]
    fn spatial_average_is_linear(
        a in prop::collection::vec(-1.0f64..1.0, 64),
        b in prop::collection::vec(-1.0f64..1.0, 64),
        c in -3.0f64..3.0,
        r in 0.5f64..7.5,
    ) {
        let fa = spatial_average(&sample_of(a.iter().map(|v| 1.0 + v).collect()), r).unwrap();
        let fb = spatial_average(&sample_of(b.iter().map(|v| 1.0 + v).collect()), r).unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.0 + c * x + y).collect();
        let fm = spatial_average(&sample_of(mix), r).unwrap();
        prop_assert!((fm - (c * fa + fb)).abs() <= 1e-10 * (1.0 + fm.abs()));
    }

    #[test]
    fn overlap_integral_is_reflection_invariant_and_linear(
        half in prop::collection::vec(0.0f64..2.0, 1..40),
        scale in 0.1f64..10.0,
        r in 0.1f64..5.0,
    ) {
        // symmetric table on z = m/4
        let mut rho: Vec<f64> = half.iter().rev().copied().collect();
        rho.extend(half.iter().skip(1));
        let m = (rho.len() as i64 - 1) / 2;
        let z: Vec<f64> = (-m..=m).map(|k| k as f64 * 0.25).collect();
        let base = overlap_integral(&z, &rho, r);
        let refl: Vec<f64> = rho.iter().rev().copied().collect();
        prop_assert!((base - overlap_integral(&z, &refl, r)).abs() <= 1e-12 * (1.0 + base.abs()));
        let scaled: Vec<f64> = rho.iter().map(|v| v * scale).collect();
        prop_assert!((overlap_integral(&z, &scaled, r) - scale * base).abs() <= 1e-10 * (1.0 + base.abs() * scale));
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn exact_power_laws_are_recovered(c in 0.1f64..100.0, k in 0.2f64..2.5, r0 in 1.0f64..10.0) {
        let r: Vec<f64> = (0..5).map(|i| r0 * 2f64.powi(i)).collect();
        let s2: Vec<f64> = r.iter().map(|x| c * x.powf(k)).collect();
        let se: Vec<f64> = s2.iter().map(|v| 0.03 * v).collect();
        let fit = loglog_slope(&r, &s2, &se, None).unwrap();
        prop_assert!((fit.slope - k).abs() < 1e-10);
        prop_assert!(fit.ci_lo <= fit.slope && fit.slope <= fit.ci_hi);
    }

    #[test]
    fn ks_and_tau_ranges(xs in prop::collection::vec(-5.0f64..5.0, 2..200)) {
        let d = ks_normal(&xs);
        prop_assert!((0.0..=1.0).contains(&d));
        let idx: Vec<f64> = (0..xs.len()).map(|i| i as f64).collect();
        let tau = kendall_tau(&idx, &xs);
        prop_assert!((-1.0..=1.0).contains(&tau));
        let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
        prop_assert!((kendall_tau(&idx, &neg) + tau).abs() < 1e-12);
    }

    #[test]
    fn json_documents_sort_keys(keys in prop::collection::hash_set("[a-z]{1,8}", 1..12)) {
        let map: std::collections::HashMap<String, u32> = keys.iter().cloned().zip(0..).collect();
        let meta = Meta { command: "x".into(), config_hash: "h".into(), seed: 1 };
        let text = json_document(&meta, "ok", &map, None).unwrap();
        let sorted: BTreeMap<_, _> = map.iter().collect();
        let mut last = 0;
        for k in sorted.keys() {
            let pos = text.find(&format!("\"{k}\":")).unwrap();
            prop_assert!(pos >= last);
            last = pos;
        }
    }

    #[test]
    fn csv_cells_round_trip(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(cell(Some(x)).parse::<f64>().unwrap(), x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn field_pairing_is_linear(
        m in model_strategy(),
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        re in prop::collection::vec(-1.0f64..1.0, 65),
        im in prop::collection::vec(-1.0f64..1.0, 65),
    ) {
        let grid = GridSpec::new(8.0, 128).unwrap();
        let field = synthesize(&m, grid, 0.05, seed, false, Execution::Sequential).unwrap();
        let mut c1: Vec<Complex64> = re.iter().zip(&im).map(|(x, y)| Complex64::new(*x, *y)).collect();
        c1[0].im = 0.0;
        c1[64].im = 0.0;
        let c2: Vec<Complex64> = c1.iter().rev().copied().collect();
        let mut c2 = c2;
        c2[0].im = 0.0;
        c2[64].im = 0.0;
        let mix: Vec<Complex64> = c1.iter().zip(&c2).map(|(x, y)| x * a + y).collect();
        let lhs = field.pair(&mix).unwrap();
        let rhs = a * field.pair(&c1).unwrap() + field.pair(&c2).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        prop_assert_eq!(field.pair(&vec![Complex64::new(0.0, 0.0); 65]).unwrap(), 0.0);
    }

    #[test]
    fn inner_products_are_symmetric_and_positive(
        h in 0.26f64..0.49,
        c1 in -2.0f64..2.0, s1 in 0.4f64..1.5,
        c2 in -2.0f64..2.0, s2 in 0.4f64..1.5,
    ) {
        let grid = GridSpec::new(16.0, 1024).unwrap();
        let bump = |c: f64, s: f64| TestFunction::sample(grid, move |x| (-(x - c) * (x - c) / (2.0 * s * s)).exp()).unwrap();
        let (f, g) = (bump(c1, s1), bump(c2, s2));
        let m = CovarianceModel::rough(h).unwrap();
        prop_assert_eq!(inner_spectral(&f, &g, &m).unwrap(), inner_spectral(&g, &f, &m).unwrap());
        prop_assert_eq!(inner_gagliardo(&f, &g, h).unwrap(), inner_gagliardo(&g, &f, h).unwrap());
        prop_assert!(inner_spectral(&f, &f, &m).unwrap() > 0.0);
        // Cauchy–Schwarz
        let fg = inner_spectral(&f, &g, &m).unwrap();
        let ff = inner_spectral(&f, &f, &m).unwrap();
        let gg = inner_spectral(&g, &g, &m).unwrap();
        prop_assert!(fg * fg <= ff * gg * (1.0 + 1e-9));
    }
}
