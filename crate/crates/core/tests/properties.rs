//! Property tests for the kernel invariants.

use mfl_core::herding::{self, HerdingTest};
use mfl_core::panel;
use mfl_core::stats::{self, Matrix};
use proptest::prelude::*;

fn finite_series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1e3..1e3f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pearson_is_symmetric_and_affine_equivariant(
        x in finite_series(25),
        y in finite_series(25),
        a in prop_oneof![-50.0..-0.1f64, 0.1..50.0f64],
        b in -100.0..100.0f64,
    ) {
        let (rxy, ryx) = match (stats::pearson(&x, &y), stats::pearson(&y, &x)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Ok(()),
        };
        prop_assert!((rxy - ryx).abs() < 1e-12);
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let raxy = stats::pearson(&ax, &y).unwrap();
        prop_assert!((raxy - a.signum() * rxy).abs() < 1e-9);
    }

    #[test]
    fn partial_with_no_controls_is_pearson(
        x in finite_series(20),
        y in finite_series(20),
    ) {
        match (stats::partial_correlation(&x, &y, &[]), stats::pearson(&x, &y)) {
            (Ok(p), Ok(r)) => prop_assert!((p - r).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "disagree: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn eigen_preserves_trace_and_reconstructs(
        seed in proptest::collection::vec(-10.0..10.0f64, 36),
    ) {
        let n = 6;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = seed[i * n + j];
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let (vals, vecs) = stats::symmetric_eigen(&m).unwrap();
        let trace: f64 = (0..n).map(|i| m.get(i, i)).sum();
        prop_assert!((vals.iter().sum::<f64>() - trace).abs() < 1e-8);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += vecs.get(i, k) * vals[k] * vecs.get(j, k);
                }
                prop_assert!((s - m.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn herding_flag_symmetric_signed_antisymmetric(
        a in 0u32..200,
        b in 0u32..200,
        alpha in 0.001..0.3f64,
    ) {
        prop_assume!(a + b > 0);
        let ab = herding::herding_day(a, b, alpha, HerdingTest::PmfAtObserved).unwrap();
        let ba = herding::herding_day(b, a, alpha, HerdingTest::PmfAtObserved).unwrap();
        prop_assert_eq!(ab.herds, ba.herds);
        prop_assert_eq!(ab.signed, -ba.signed);
    }

    #[test]
    fn pmf_flag_monotone_off_center(n in 2u64..120) {
        // once the flag fires for some k >= n/2 it stays on up to n
        let mut fired = false;
        for k in n.div_ceil(2)..=n {
            let h = herding::binom_pmf(k, n, 0.5).unwrap() <= 0.05;
            if fired {
                prop_assert!(h);
            }
            fired = fired || h;
        }
    }

    #[test]
    fn decile_assignment_is_permutation_invariant(
        caps in proptest::collection::vec(0.1..1e9f64, 10..60),
        seed in any::<u64>(),
    ) {
        let named: Vec<(String, f64)> = caps
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("S{:03}", i), c))
            .collect();
        let base = panel::assign_deciles(&named).unwrap();
        let mut shuffled = named.clone();
        // deterministic Fisher-Yates from the seed
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let again = panel::assign_deciles(&shuffled).unwrap();
        prop_assert_eq!(base, again);
    }

    #[test]
    fn ols_r2_monotone_under_column_addition(
        data in proptest::collection::vec(-5.0..5.0f64, 40 * 4),
    ) {
        let n = 40;
        let rows_small: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![1.0, data[i * 4], data[i * 4 + 1]])
            .collect();
        let rows_wide: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![1.0, data[i * 4], data[i * 4 + 1], data[i * 4 + 2]])
            .collect();
        let y: Vec<f64> = (0..n).map(|i| data[i * 4 + 3]).collect();
        let small = Matrix::from_rows(&rows_small).unwrap();
        let wide = Matrix::from_rows(&rows_wide).unwrap();
        match (stats::ols(&small, &y), stats::ols(&wide, &y)) {
            (Ok(fs), Ok(fw)) => prop_assert!(fw.r_squared >= fs.r_squared - 1e-10),
            _ => {} // rank-deficient draws are fine to skip
        }
    }
}
