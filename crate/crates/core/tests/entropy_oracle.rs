mod common;

use clickslice_core::features::{entropy_weights, fit_normalization, Row, FEATURE_COUNT};
use common::{entropy_weights_oracle, random_matrix};
use proptest::prelude::*;

fn rows(m: &[Vec<f64>]) -> Vec<Row> {
    m.iter().map(|r| r.as_slice().try_into().unwrap()).collect()
}

#[test]
fn weights_match_the_oracle_on_random_matrices() {
    for seed in 0..50 {
        let m = random_matrix(seed, 100, FEATURE_COUNT, 12);
        let got = fit_normalization(&rows(&m)).unwrap().weights;
        let want = entropy_weights_oracle(&m);
        for j in 0..FEATURE_COUNT {
            assert!(
                (got[j] - want[j]).abs() < 1e-9,
                "seed {seed} column {j}: {} vs {}",
                got[j],
                want[j]
            );
        }
    }
}

#[test]
fn sparse_columns_also_match() {
    // mostly zero columns exercise the 0 ln 0 convention
    for seed in 0..20 {
        let mut m = random_matrix(seed, 60, FEATURE_COUNT, 1);
        for (i, r) in m.iter_mut().enumerate() {
            if i % 7 != 0 {
                r[2] = 0.0;
            }
        }
        let got = fit_normalization(&rows(&m)).unwrap().weights;
        let want = entropy_weights_oracle(&m);
        for j in 0..FEATURE_COUNT {
            assert!((got[j] - want[j]).abs() < 1e-9);
        }
    }
}

#[test]
fn constant_column_gets_zero_weight() {
    let mut m = random_matrix(3, 80, FEATURE_COUNT, 9);
    for r in &mut m {
        r[4] = 6.0;
    }
    let w = fit_normalization(&rows(&m)).unwrap().weights;
    assert_eq!(w[4], 0.0);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn all_constant_matrix_falls_back_to_uniform() {
    let m = vec![vec![2.0; FEATURE_COUNT]; 10];
    let w = fit_normalization(&rows(&m)).unwrap().weights;
    for x in w {
        assert!((x - 1.0 / FEATURE_COUNT as f64).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn weights_sum_to_one(seed in any::<u64>(), n in 2usize..60, max in 0u32..20) {
        let m = random_matrix(seed, n, FEATURE_COUNT, max);
        let w = fit_normalization(&rows(&m)).unwrap().weights;
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn positive_column_scaling_leaves_weights(seed in any::<u64>(), col in 0usize..FEATURE_COUNT, k in 0.01f64..100.0) {
        let m = random_matrix(seed, 40, FEATURE_COUNT, 10);
        let mut scaled = m.clone();
        for r in &mut scaled {
            r[col] *= k;
        }
        let a = fit_normalization(&rows(&m)).unwrap().weights;
        let b = fit_normalization(&rows(&scaled)).unwrap().weights;
        for j in 0..FEATURE_COUNT {
            prop_assert!((a[j] - b[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn scaled_entry_point_agrees_with_fit(seed in any::<u64>()) {
        let m = random_matrix(seed, 30, FEATURE_COUNT, 5);
        let p = fit_normalization(&rows(&m)).unwrap();
        let scaled: Vec<Row> = rows(&m)
            .iter()
            .map(|r| {
                let mut out = [0.0; FEATURE_COUNT];
                for j in 0..FEATURE_COUNT {
                    let span = p.max[j] - p.min[j];
                    out[j] = if span > 0.0 { (r[j] - p.min[j]) / span } else { 0.0 };
                }
                out
            })
            .collect();
        prop_assert_eq!(entropy_weights(&scaled), p.weights);
    }
}
