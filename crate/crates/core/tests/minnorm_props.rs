mod common;

use gsls::minnorm::{average_fallback, min_norm_point, GradientSet, DEFAULT_TOL};
use proptest::prelude::*;

fn vector_set() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=3).prop_flat_map(|dim| prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), 1..=5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn never_worse_than_the_grid(vs in vector_set()) {
        let r = min_norm_point(&GradientSet::new(vs.clone()).unwrap(), DEFAULT_TOL).unwrap();
        let steps = if vs.len() <= 3 { 300 } else { 30 };
        prop_assert!(r.norm <= common::grid_min_norm(&vs, steps) + 1e-6);
    }

    #[test]
    fn weights_are_barycentric_and_reproduce_the_point(vs in vector_set()) {
        let set = GradientSet::new(vs.clone()).unwrap();
        let r = min_norm_point(&set, DEFAULT_TOL).unwrap();
        prop_assert!(r.weights.iter().all(|w| *w >= -1e-12));
        prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut p = vec![0.0; set.dim()];
        for (w, v) in r.weights.iter().zip(&vs) {
            for (pi, vi) in p.iter_mut().zip(v) {
                *pi += w * vi;
            }
        }
        for (a, b) in p.iter().zip(&r.point) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn permutation_invariant(vs in vector_set(), rot in 0usize..5) {
        let a = min_norm_point(&GradientSet::new(vs.clone()).unwrap(), DEFAULT_TOL).unwrap();
        let mut w = vs.clone();
        let k = w.len();
        w.rotate_left(rot % k);
        w.reverse();
        let b = min_norm_point(&GradientSet::new(w).unwrap(), DEFAULT_TOL).unwrap();
        prop_assert!((a.norm - b.norm).abs() < 1e-8);
    }

    #[test]
    fn no_larger_than_the_average(vs in vector_set()) {
        let set = GradientSet::new(vs).unwrap();
        let r = min_norm_point(&set, DEFAULT_TOL).unwrap();
        prop_assert!(r.norm <= average_fallback(&set).unwrap().norm + 1e-12);
    }
}
