//! Minimum-norm element of the convex hull of a finite set of gradients.
//!
//! The hull has no need of vertex enumeration: the minimizer over the hull of
//! all points equals the minimizer over the hull of its vertices, so every
//! sampled gradient goes straight into Wolfe's min-norm-point iteration.

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, solve_dense};

/// Default KKT tolerance for [`min_norm_point`].
pub const DEFAULT_TOL: f64 = 1e-10;

/// The gradient at an iterate plus the gradients at its sampled neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

impl GradientSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| invalid("gradient set is empty"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(invalid("gradient vectors have dimension 0"));
        }
        for (j, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(invalid(format!(
                    "gradient {j} has dimension {} (expected {dim})",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("gradient {j} has a non-finite entry")));
            }
        }
        Ok(Self { vectors, dim })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of vectors (m + 1).
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn combine(&self, support: &[usize], weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&j, &w) in support.iter().zip(weights) {
            for (o, v) in out.iter_mut().zip(&self.vectors[j]) {
                *o += w * v;
            }
        }
        out
    }
}

/// Which route produced a subgradient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubgradientMethod {
    Qp,
    Average,
}

impl SubgradientMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SubgradientMethod::Qp => "qp",
            SubgradientMethod::Average => "average",
        }
    }
}

impl std::str::FromStr for SubgradientMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qp" => Ok(SubgradientMethod::Qp),
            "average" => Ok(SubgradientMethod::Average),
            other => Err(invalid(format!("unknown subgradient mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormResult {
    pub point: Vec<f64>,
    /// Convex-combination coefficients, one per input vector.
    pub weights: Vec<f64>,
    pub norm: f64,
    pub method: SubgradientMethod,
}

/// Arithmetic mean of the set; a cheap stand-in for the min-norm element.
pub fn average_fallback(set: &GradientSet) -> Result<MinNormResult> {
    if set.is_empty() {
        return Err(invalid("gradient set is empty"));
    }
    let k = set.len();
    let mut point = vec![0.0; set.dim()];
    for v in set.vectors() {
        for (p, x) in point.iter_mut().zip(v) {
            *p += x;
        }
    }
    let inv = 1.0 / k as f64;
    point.iter_mut().for_each(|p| *p *= inv);
    let norm = norm(&point);
    Ok(MinNormResult {
        point,
        weights: vec![inv; k],
        norm,
        method: SubgradientMethod::Average,
    })
}

/// Minimizes `|Z r|` over the probability simplex with Wolfe's algorithm.
///
/// `tol` bounds the KKT gap `|x|^2 - min_j <x, z_j>`, relative to the largest
/// squared norm in the set. Fails with [`Error::NumericalFailure`] when the
/// iteration cap `100 (m + 1)` is reached or an affine sub-solve breaks down.
pub fn min_norm_point(set: &GradientSet, tol: f64) -> Result<MinNormResult> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let k = set.len();
    let pts = set.vectors();
    let sq: Vec<f64> = pts.iter().map(|p| dot(p, p)).collect();
    let scale = sq.iter().cloned().fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);

    let start = argmin(&sq);
    let mut support = vec![start];
    let mut lambda = vec![1.0];
    let mut x = pts[start].clone();
    let cap = 100 * k;
    let mut iters = 0usize;
    let zero_cut = 1e-14;

    loop {
        iters += 1;
        if iters > cap {
            return Err(Error::NumericalFailure(format!(
                "min-norm iteration cap {cap} reached"
            )));
        }
        let xx = dot(&x, &x);
        let proj: Vec<f64> = pts.iter().map(|p| dot(&x, p)).collect();
        let j = argmin(&proj);
        if xx - proj[j] <= tol * scale || xx <= tol * tol * scale {
            break;
        }
        if support.contains(&j) {
            // the gap is above tolerance yet the best vertex is already in the corral
            break;
        }
        support.push(j);
        lambda.push(0.0);

        loop {
            iters += 1;
            if iters > cap {
                return Err(Error::NumericalFailure(format!(
                    "min-norm iteration cap {cap} reached"
                )));
            }
            let alpha = affine_minimizer(pts, &support)?;
            if alpha.iter().all(|&a| a > zero_cut) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0_f64;
            for (&l, &a) in lambda.iter().zip(&alpha) {
                if a <= zero_cut && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = (1.0 - theta) * *l + theta * a;
            }
            let mut keep = 0;
            for i in 0..support.len() {
                if lambda[i] > zero_cut {
                    support[keep] = support[i];
                    lambda[keep] = lambda[i];
                    keep += 1;
                }
            }
            if keep == 0 {
                return Err(Error::NumericalFailure("corral collapsed".into()));
            }
            support.truncate(keep);
            lambda.truncate(keep);
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        x = set.combine(&support, &lambda);
    }

    let mut weights = vec![0.0; k];
    for (&j, &l) in support.iter().zip(&lambda) {
        weights[j] = l;
    }
    let norm = norm(&x);
    Ok(MinNormResult {
        point: x,
        weights,
        norm,
        method: SubgradientMethod::Qp,
    })
}

/// Min-norm point of the affine hull of the supported points, as weights
/// summing to one (not necessarily nonnegative).
fn affine_minimizer(pts: &[Vec<f64>], support: &[usize]) -> Result<Vec<f64>> {
    let s = support.len();
    if s == 1 {
        return Ok(vec![1.0]);
    }
    // bordered system [G 1; 1' 0] [a; -mu] = [0; 1]
    let dim = s + 1;
    let mut a = vec![0.0; dim * dim];
    let mut scale = 0.0_f64;
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate().skip(r) {
            let g = dot(&pts[i], &pts[j]);
            a[r * dim + c] = g;
            a[c * dim + r] = g;
            scale = scale.max(g.abs());
        }
        a[r * dim + s] = 1.0;
        a[s * dim + r] = 1.0;
    }
    // unit border entries against a Gram block of size `scale`
    let norm_scale = if scale > 0.0 { scale } else { 1.0 };
    for r in 0..s {
        for c in 0..s {
            a[r * dim + c] /= norm_scale;
        }
    }
    let mut rhs = vec![0.0; dim];
    rhs[s] = 1.0;
    let sol = solve_dense(&mut a, &mut rhs, dim)
        .ok_or_else(|| Error::NumericalFailure("singular affine sub-problem".into()))?;
    let alpha = sol[..s].to_vec();
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite affine weights".into()));
    }
    Ok(alpha)
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}
