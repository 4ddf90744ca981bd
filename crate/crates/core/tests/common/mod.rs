//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

/// Relative error with a floor on the scale so entries near zero are
/// compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Smallest norm over barycentric combinations with weights on the grid
/// `{0, 1/steps, ..., 1}`.
pub fn grid_min_norm(vectors: &[Vec<f64>], steps: usize) -> f64 {
    let k = vectors.len();
    let dim = vectors[0].len();
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; k];
    fn rec(
        j: usize,
        left: usize,
        counts: &mut Vec<usize>,
        vectors: &[Vec<f64>],
        dim: usize,
        steps: usize,
        best: &mut f64,
    ) {
        let k = vectors.len();
        if j == k - 1 {
            counts[j] = left;
            let mut p = vec![0.0; dim];
            for (c, v) in counts.iter().zip(vectors) {
                let w = *c as f64 / steps as f64;
                for (pi, vi) in p.iter_mut().zip(v) {
                    *pi += w * vi;
                }
            }
            let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < *best {
                *best = n;
            }
            return;
        }
        for c in 0..=left {
            counts[j] = c;
            rec(j + 1, left - c, counts, vectors, dim, steps, best);
        }
    }
    rec(0, steps, &mut counts, vectors, dim, steps, &mut best);
    best
}

/// GPD log-likelihood of constant parameters, written out directly.
pub fn gpd_ll(sigma: f64, kappa: f64, y: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in y {
        let z = v / sigma;
        if kappa.abs() < 1e-12 {
            s += -sigma.ln() - z;
        } else {
            let a = 1.0 + kappa * z;
            if a <= 0.0 {
                return f64::NEG_INFINITY;
            }
            s += -sigma.ln() - (1.0 + 1.0 / kappa) * a.ln();
        }
    }
    s
}

/// Bivariate maximum likelihood by a coarse grid followed by repeated
/// local grids of shrinking span. Returns `(sigma, kappa)`.
pub fn gpd_mle_oracle(y: &[f64]) -> (f64, f64) {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let (mut le, mut k) = (m.ln(), 0.0);
    let mut best = f64::NEG_INFINITY;
    let (lo_e, hi_e, lo_k, hi_k) = ((0.1 * m).ln(), (10.0 * m).ln(), -0.9, 1.5);
    let g = 80;
    for i in 0..=g {
        for j in 0..=g {
            let e = lo_e + (hi_e - lo_e) * i as f64 / g as f64;
            let kk = lo_k + (hi_k - lo_k) * j as f64 / g as f64;
            let v = gpd_ll(e.exp(), kk, y);
            if v > best {
                best = v;
                le = e;
                k = kk;
            }
        }
    }
    // local grids; the span shrinks only once the centre stops moving
    let (mut se, mut sk) = ((hi_e - lo_e) / g as f64, (hi_k - lo_k) / g as f64);
    for _ in 0..2000 {
        if se < 1e-13 && sk < 1e-13 {
            break;
        }
        let (ce, ck) = (le, k);
        for i in -5..=5 {
            for j in -5..=5 {
                let e = ce + se * i as f64 / 5.0;
                let kk = ck + sk * j as f64 / 5.0;
                let v = gpd_ll(e.exp(), kk, y);
                if v > best {
                    best = v;
                    le = e;
                    k = kk;
                }
            }
        }
        if le == ce && k == ck {
            se *= 0.5;
            sk *= 0.5;
        }
    }
    (le.exp(), k)
}

/// Return level written out from its definition.
pub fn theta_direct(sigma: f64, kappa: f64, c: f64) -> f64 {
    if kappa == 0.0 {
        -sigma * c.ln()
    } else {
        sigma * (c.powf(-kappa) - 1.0) / kappa
    }
}

pub fn zeta_direct(sigma: f64, kappa: f64, c: f64) -> f64 {
    (theta_direct(sigma, kappa, c) + sigma) / (1.0 - kappa)
}
