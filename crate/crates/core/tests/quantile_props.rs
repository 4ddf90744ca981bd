use gsls::engine::GsParams;
use gsls::quantile::{fit_quantile_additive, pinball_grad, pinball_loss, predict_quantile};
use gsls::smoothing::{Covariate, Factor, SmootherSpec};
use proptest::prelude::*;

proptest! {
    #[test]
    fn pinball_gradient_matches_differences(
        alpha in 0.01f64..0.99,
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20),
    ) {
        let (q, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().filter(|(a, b)| (a - b).abs() > 1e-3).unzip();
        prop_assume!(!q.is_empty());
        let g = pinball_grad(&q, &y, alpha);
        let h = 1e-6;
        for i in 0..q.len() {
            let (mut up, mut dn) = (q.clone(), q.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (pinball_loss(&up, &y, alpha) - pinball_loss(&dn, &y, alpha)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn loss_is_nonnegative_and_zero_at_the_data(
        alpha in 0.01f64..0.99,
        y in prop::collection::vec(-5.0f64..5.0, 1..30),
        shift in -2.0f64..2.0,
    ) {
        prop_assert_eq!(pinball_loss(&y, &y, alpha), 0.0);
        let q: Vec<f64> = y.iter().map(|v| v + shift).collect();
        prop_assert!(pinball_loss(&q, &y, alpha) >= 0.0);
    }
}

/// Cell smoother fits per-cell quantiles; coverage in every cell is close to
/// the level, counted directly.
#[test]
fn cell_fit_covers_each_cell() {
    let labels: Vec<&str> = (0..300).map(|i| ["a", "b", "c"][i % 3]).collect();
    let y: Vec<f64> = (0..300)
        .map(|i| {
            let base = [0.0, 5.0, -3.0][i % 3];
            base + ((i * 7919) % 101) as f64 / 100.0
        })
        .collect();
    let f = Factor::from_labels(&labels);
    let covs = [Covariate::Factor(f.clone())];
    let m = fit_quantile_additive(&y, &covs, 0.8, &[SmootherSpec::cell_factor(0)], &GsParams::additive().with_seed(3)).unwrap();
    assert!(m.trace.converged);
    m.trace.check_invariants(0.1).unwrap();
    for cell in 0..3 {
        let idx: Vec<usize> = (0..300).filter(|i| f.codes[*i] == cell).collect();
        let hits = idx.iter().filter(|&&i| y[i] <= m.q[i]).count();
        let cov = hits as f64 / idx.len() as f64;
        assert!((cov - 0.8).abs() <= 0.02, "cell {cell}: {cov}");
    }
    assert!(m.decomposition.max_component_mean() <= 1e-6);
    let p = predict_quantile(&m, &[Covariate::Factor(Factor::from_labels(&["b"]))]).unwrap();
    let some_b = (0..300).find(|i| f.codes[*i] == 1).unwrap();
    assert!((p.values[0] - m.q[some_b]).abs() < 1e-9);
}
