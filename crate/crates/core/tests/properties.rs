//! Property tests for the algebraic invariants of the core operations.

use capshare::calendar::{DateRange, Frequency, Month, Units};
use capshare::io::Table;
use capshare::regression::ols;
use capshare::series::{descriptive_stats, TimeSeries};
use capshare::{factors, fmb};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ols_residuals_orthogonal_to_design(
        xs in finite_vec(40),
        zs in finite_vec(40),
        noise in finite_vec(40),
    ) {
        let n = 40;
        let mut x = DMatrix::zeros(n, 2);
        for i in 0..n {
            x[(i, 0)] = xs[i];
            x[(i, 1)] = zs[i];
        }
        let y: Vec<f64> = (0..n).map(|i| 0.7 * xs[i] - 0.2 * zs[i] + noise[i] * 0.01).collect();
        if let Ok(fit) = ols(&y, &x, true) {
            let scale = y.iter().map(|v| v.abs()).fold(1.0f64, f64::max) * n as f64;
            for j in 0..2 {
                let dot: f64 = (0..n).map(|i| x[(i, j)] * fit.residuals[i]).sum();
                prop_assert!(dot.abs() <= 1e-8 * scale * x.column(j).amax().max(1.0));
            }
            let sum: f64 = fit.residuals.iter().sum();
            prop_assert!(sum.abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn ols_fit_invariant_to_reparameterization(
        xs in finite_vec(30),
        zs in finite_vec(30),
        a in 0.1..5.0f64,
        b in -3.0..3.0f64,
    ) {
        // Invertible column mixing: (x, z) -> (a x, z + b x).
        let n = 30;
        let mut x1 = DMatrix::zeros(n, 2);
        let mut x2 = DMatrix::zeros(n, 2);
        for i in 0..n {
            x1[(i, 0)] = xs[i];
            x1[(i, 1)] = zs[i];
            x2[(i, 0)] = a * xs[i];
            x2[(i, 1)] = zs[i] + b * xs[i];
        }
        let y: Vec<f64> = (0..n).map(|i| 1.0 + xs[i] - zs[i]).collect();
        match (ols(&y, &x1, true), ols(&y, &x2, true)) {
            (Ok(f1), Ok(f2)) => {
                let scale = y.iter().map(|v| v.abs()).fold(1.0f64, f64::max);
                for i in 0..n {
                    prop_assert!((f1.fitted[i] - f2.fitted[i]).abs() <= 1e-8 * scale);
                }
            }
            _ => {}
        }
    }

    #[test]
    fn ar1_fit_scale_invariant(vals in finite_vec(25), c in prop::sample::select(vec![-7.5, -1.0, 0.3, 12.0])) {
        let scaled: Vec<f64> = vals.iter().map(|v| c * v).collect();
        let a = capshare::regression::ar1_fit_values(&vals, false);
        let b = capshare::regression::ar1_fit_values(&scaled, false);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.rho - b.rho).abs() < 1e-8);
        }
    }

    #[test]
    fn growth_stats_commute_with_truncation(
        raw in prop::collection::vec(0.2..0.8f64, 40..60),
        cut in 0usize..10,
    ) {
        // Stats of a sub-window of the factor equal stats of the factor of
        // the truncated input over the same window.
        let ks = TimeSeries::new(Month::new(2000, 1), Frequency::Monthly, Units::Ratio, raw.clone()).unwrap();
        let horizon = 12;
        let f_full = factors::ks_growth_factor(&ks, horizon).unwrap();
        let trunc = ks.slice(cut, ks.len() - 1).unwrap();
        let f_trunc = factors::ks_growth_factor(&trunc, horizon).unwrap();
        let window = DateRange::new(f_trunc.start(), f_trunc.end());
        let full_stats = &descriptive_stats(&f_full, &[window]).unwrap()[0];
        let trunc_stats = &descriptive_stats(&f_trunc, &[window]).unwrap()[0];
        prop_assert!((full_stats.mean - trunc_stats.mean).abs() < 1e-12);
        prop_assert!((full_stats.std - trunc_stats.std).abs() < 1e-12);
        prop_assert!((full_stats.median - trunc_stats.median).abs() < 1e-12);
    }

    #[test]
    fn block_resample_preserves_length_and_support(
        vals in finite_vec(37),
        block in 1usize..37,
        seed in 0u64..1000,
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let out = fmb::block_resample(&vals, block, &mut rng).unwrap();
        prop_assert_eq!(out.len(), vals.len());
        for v in &out {
            prop_assert!(vals.contains(v));
        }
    }

    #[test]
    fn table_csv_roundtrip(vals in finite_vec(12)) {
        let mut t = Table::new("prop", "ratio");
        t.push_column("v", vals.clone());
        let back = Table::from_csv(&t.to_csv()).unwrap();
        prop_assert_eq!(back.column("v").unwrap(), vals.as_slice());
    }
}
