mod common;

use gsls::engine::GsParams;
use gsls::io;
use gsls::pot::{self, FunctionalSpec, JacobianMode, Lambda, PotOptions, PotState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{gpd_mle_oracle, rel_err};

/// Numerical inverse of the functional map for one observation: Newton's
/// method on `Theta(eta, kappa) = target` with a difference Jacobian.
fn invert(target: [f64; 2], start: [f64; 2], spec: &FunctionalSpec) -> [f64; 2] {
    let map = |p: [f64; 2]| {
        let t = pot::functional_map(&Lambda { eta: vec![p[0]], kappa: vec![p[1]] }, spec).unwrap();
        [t[0][0], t[1][0]]
    };
    let mut p = start;
    for _ in 0..50 {
        let v = map(p);
        let r = [v[0] - target[0], v[1] - target[1]];
        if r[0].abs().max(r[1].abs()) < 1e-14 * target[0].abs().max(1.0) {
            break;
        }
        let h = 1e-7;
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let (mut a, mut b) = (p, p);
            a[c] += h;
            b[c] -= h;
            let (fa, fb) = (map(a), map(b));
            for row in 0..2 {
                j[row][c] = (fa[row] - fb[row]) / (2.0 * h);
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        p[0] -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        p[1] -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
    }
    p
}

#[test]
fn chain_rule_against_numerical_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..30 {
        let sigma: f64 = rng.random_range(0.5..3.0);
        let kappa = rng.random_range(-0.3..0.6);
        let y = rng.random_range(0.1..2.0) * sigma;
        let spec = if case % 2 == 0 {
            FunctionalSpec::var_es_c(0.1)
        } else {
            FunctionalSpec::var_var_c(0.1, 0.02)
        };
        let lam = Lambda { eta: vec![sigma.ln()], kappa: vec![kappa] };
        let t = pot::functional_map(&lam, &spec).unwrap();
        let theta = [t[0][0], t[1][0]];
        let g = pot::gpd_loglik_grad(&lam, &[y]).unwrap();
        let b = pot::jacobian_blocks(&lam, &spec).unwrap()[0];
        let analytic = b.pull_gradient([g[0], g[1]]);
        for c in 0..2 {
            let h = 1e-5 * theta[c].abs();
            let (mut up, mut dn) = (theta, theta);
            up[c] += h;
            dn[c] -= h;
            let ll = |th: [f64; 2]| {
                let p = invert(th, [lam.eta[0], kappa], &spec);
                pot::gpd_loglik(&Lambda { eta: vec![p[0]], kappa: vec![p[1]] }, &[y])
            };
            let fd = (ll(up) - ll(dn)) / (2.0 * h);
            assert!(rel_err(analytic[c], fd) < 1e-3, "case {case} coord {c}: {} vs {fd}", analytic[c]);
        }
    }
}

#[test]
fn zero_radius_limit_of_the_sampled_gradient() {
    let y = [0.4, 1.3, 2.2, 0.7];
    let lam = Lambda { eta: vec![0.1, 0.0, 0.3, -0.2], kappa: vec![0.1, 0.25, -0.1, 0.0] };
    let spec = FunctionalSpec::var_es_c(0.05);
    let state = PotState::new(lam.clone(), spec).unwrap();
    let g = pot::gpd_loglik_grad(&lam, &y).unwrap();
    let expect: Vec<f64> = state
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(i, b)| {
            let v = b.pull_gradient([g[i], g[4 + i]]);
            [(i, v[0]), (4 + i, v[1])]
        })
        .fold(vec![0.0; 8], |mut acc, (i, v)| {
            acc[i] = v;
            acc
        });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let got = pot::approx_subgradient_theta(&state, &y, 1e-12, &GsParams::additive(), &mut rng).unwrap();
    for (a, b) in got.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn stationary_at_the_oracle_mle() {
    let y = io::simulate_gpd(400, |_| 2.0, |_| 0.2, 21).unwrap().y;
    let (s, k) = gpd_mle_oracle(&y);
    let lam = Lambda::constant(y.len(), s, k);
    let g = pot::gpd_loglik_grad(&lam, &y).unwrap();
    let n = y.len();
    let (ge, gk): (f64, f64) = (g[..n].iter().sum(), g[n..].iter().sum());
    assert!(ge.abs() < 1e-3 && gk.abs() < 1e-3, "{ge} {gk}");

    let state = PotState::new(lam, FunctionalSpec::var_es_c(0.1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gt = pot::approx_subgradient_theta(&state, &y, 1e-4, &GsParams::additive(), &mut rng).unwrap();
    // per-observation entries stay O(1) at the MLE; the part seen by the
    // constant model, its projection onto constants, vanishes
    let proj = gsls::smoothing::AdditiveProjector::new(n, &[], &[]).unwrap();
    let mut s = proj.project(&gt[..n]).unwrap().fitted;
    s.extend(proj.project(&gt[n..]).unwrap().fitted);
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm <= 1e-2 * n as f64, "{norm}");
}

#[test]
fn exponential_data_level_matches_the_exponential_mle() {
    let y = io::simulate_gpd(600, |_| 3.0, |_| 0.0, 4).unwrap().y;
    let c = 0.1;
    let m = pot::fit_pot_additive(&y, &[], &FunctionalSpec::var_es_c(c), &[], &GsParams::additive().with_seed(4), &PotOptions::default()).unwrap();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let expect = -mean * c.ln();
    assert!(rel_err(m.state.theta[0][0], expect) < 0.05, "{} vs {expect}", m.state.theta[0][0]);
    m.trace.check_invariants(0.1).unwrap();
    assert!(m.loglik(&y).is_finite());
}

#[test]
fn per_sample_jacobian_variant_also_descends() {
    let y = io::simulate_gpd(150, |_| 1.5, |_| 0.1, 9).unwrap().y;
    let gs = GsParams { max_iter: 60, ..GsParams::additive().with_seed(9) };
    let opts = PotOptions { jacobian: JacobianMode::PerSample, start: None };
    let m = pot::fit_pot_additive(&y, &[], &FunctionalSpec::var_es_c(0.1), &[], &gs, &opts).unwrap();
    assert!(m.trace.steps() > 0);
    assert!(m.trace.final_objective() < m.trace.f0);
    m.trace.check_invariants(0.1).unwrap();
}

#[test]
fn equal_levels_abort_with_a_singular_block() {
    let y = [1.0, 2.0, 0.5, 0.3];
    let r = pot::fit_pot_additive(&y, &[], &FunctionalSpec::var_var_c(0.1, 0.1), &[], &GsParams::additive(), &PotOptions::default());
    assert!(matches!(r, Err(gsls::Error::SingularBlock { .. })));
}

#[test]
fn infeasible_start_is_rejected() {
    let y = [1.0, 2.0, 5.0];
    let opts = PotOptions { start: Some((1.0, -0.5)), ..Default::default() };
    assert!(pot::fit_pot_additive(&y, &[], &FunctionalSpec::var_es_c(0.1), &[], &GsParams::additive(), &opts).is_err());
}
