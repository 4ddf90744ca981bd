//! Projection of a working vector onto an additive, centered function space.
//!
//! Three linear smoothers are available per covariate: a Gaussian-kernel
//! local-linear smoother, a straight-line least-squares fit, and per-level
//! means for factors. [`AdditiveProjector::project`] combines them by
//! backfitting. Every component is re-centered after each sweep so the
//! intercept stays identifiable.
//!
//! Fits carry a [`ComponentRep`] per component, a description of the
//! component as a function of its covariate. Because all smoothers are
//! linear, representations can be scaled and summed, which lets iterative
//! fits accumulate their additive decomposition step by step.

use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::linalg::mean;

const BACKFIT_TOL: f64 = 1e-8;
const BACKFIT_MAX_CYCLES: usize = 100;

/// A factor: labels in first-appearance order plus one code per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub levels: Vec<String>,
    pub codes: Vec<usize>,
}

impl Factor {
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut levels = Vec::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l.to_string()).or_insert_with(|| {
                    levels.push(l.to_string());
                    levels.len() - 1
                })
            })
            .collect();
        Self { levels, codes }
    }

    /// Interaction of two factors, labelled `a:b`.
    pub fn interaction(a: &Factor, b: &Factor) -> Result<Self> {
        if a.codes.len() != b.codes.len() {
            return Err(invalid("interaction of factors with different lengths"));
        }
        let labels: Vec<String> = a
            .codes
            .iter()
            .zip(&b.codes)
            .map(|(&i, &j)| format!("{}:{}", a.levels[i], b.levels[j]))
            .collect();
        Ok(Self::from_labels(&labels))
    }

    pub fn label(&self, i: usize) -> &str {
        &self.levels[self.codes[i]]
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// One covariate column.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariate {
    Numeric(Vec<f64>),
    Factor(Factor),
}

impl Covariate {
    pub fn len(&self) -> usize {
        match self {
            Covariate::Numeric(v) => v.len(),
            Covariate::Factor(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How the local-linear bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Bandwidth whose smoother has this trace.
    TargetDf(f64),
    /// `1.06 sd(w) n^(-1/5)`.
    RuleOfThumb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmootherKind {
    LocalLinear(Bandwidth),
    Linear,
    CellFactor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherSpec {
    pub kind: SmootherKind,
    pub covariate_index: usize,
}

impl SmootherSpec {
    pub fn local_linear(covariate_index: usize, bandwidth: f64) -> Self {
        Self {
            kind: SmootherKind::LocalLinear(Bandwidth::Fixed(bandwidth)),
            covariate_index,
        }
    }

    pub fn local_linear_df(covariate_index: usize, df: f64) -> Self {
        Self {
            kind: SmootherKind::LocalLinear(Bandwidth::TargetDf(df)),
            covariate_index,
        }
    }

    pub fn local_linear_default(covariate_index: usize) -> Self {
        Self {
            kind: SmootherKind::LocalLinear(Bandwidth::RuleOfThumb),
            covariate_index,
        }
    }

    pub fn linear(covariate_index: usize) -> Self {
        Self { kind: SmootherKind::Linear, covariate_index }
    }

    pub fn cell_factor(covariate_index: usize) -> Self {
        Self { kind: SmootherKind::CellFactor, covariate_index }
    }
}

/// Kernel smoother over a fixed design, compressed to its distinct values.
///
/// The fit at a design value `x0` is `sum_i l_i(x0) g_i` with local-linear
/// weights `l_i`; observations sharing a value share a weight, so the operator
/// stores one row per distinct value and acts on per-value sums of `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLinearOperator {
    values: Vec<f64>,
    counts: Vec<f64>,
    index: Vec<usize>,
    bandwidth: f64,
    /// `rows[a * u + b]`: weight of one observation at value `b` in the fit at value `a`.
    rows: Vec<f64>,
}

impl LocalLinearOperator {
    pub fn new(w: &[f64], bandwidth: f64) -> Result<Self> {
        if w.len() < 2 {
            return Err(invalid("local-linear smoothing needs at least two observations"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(invalid("covariate has non-finite values"));
        }
        let (values, counts, index) = distinct(w);
        if values.len() < 2 {
            return Err(Error::DegenerateDesign);
        }
        let u = values.len();
        let mut rows = vec![0.0; u * u];
        for a in 0..u {
            let wts = kernel_weights(&values, &counts, values[a], bandwidth);
            rows[a * u..(a + 1) * u].copy_from_slice(&wts);
        }
        Ok(Self { values, counts, index, bandwidth, rows })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.index.len()
    }

    fn aggregate(&self, g: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.values.len()];
        for (&a, &v) in self.index.iter().zip(g) {
            sums[a] += v;
        }
        sums
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let u = self.values.len();
        let sums = self.aggregate(g);
        let fit: Vec<f64> = (0..u)
            .map(|a| self.rows[a * u..(a + 1) * u].iter().zip(&sums).map(|(l, s)| l * s).sum())
            .collect();
        self.index.iter().map(|&a| fit[a]).collect()
    }

    /// Evaluates the smooth of `g` at an arbitrary covariate value.
    pub fn eval_at(&self, g: &[f64], x0: f64) -> f64 {
        let sums = self.aggregate(g);
        kernel_weights(&self.values, &self.counts, x0, self.bandwidth)
            .iter()
            .zip(&sums)
            .map(|(l, s)| l * s)
            .sum()
    }

    /// Trace of the hat operator.
    pub fn trace(&self) -> f64 {
        let u = self.values.len();
        (0..u).map(|a| self.counts[a] * self.rows[a * u + a]).sum()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.values[0], *self.values.last().unwrap())
    }
}

/// Sorted distinct values, their multiplicities, and each observation's slot.
fn distinct(w: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
    let mut values: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut index = vec![0; w.len()];
    for &i in &order {
        if values.last() != Some(&w[i]) {
            values.push(w[i]);
            counts.push(0.0);
        }
        *counts.last_mut().unwrap() += 1.0;
        index[i] = values.len() - 1;
    }
    (values, counts, index)
}

/// Per-observation local-linear weights at `x0` for distinct design values.
fn kernel_weights(values: &[f64], counts: &[f64], x0: f64, h: f64) -> Vec<f64> {
    // shift exponents by the nearest point so the largest kernel weight is one
    let dmin = values.iter().map(|v| (v - x0).abs()).fold(f64::INFINITY, f64::min);
    let z0 = dmin / h;
    let k: Vec<f64> = values
        .iter()
        .map(|v| {
            let z = (v - x0) / h;
            (-0.5 * (z * z - z0 * z0)).exp()
        })
        .collect();
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for ((&kv, &c), &v) in k.iter().zip(counts).zip(values) {
        let d = v - x0;
        s0 += c * kv;
        s1 += c * kv * d;
        s2 += c * kv * d * d;
    }
    let det = s0 * s2 - s1 * s1;
    if det > 1e-10 * s0 * s2 && det > 0.0 {
        k.iter()
            .zip(values)
            .map(|(&kv, &v)| kv * (s2 - (v - x0) * s1) / det)
            .collect()
    } else {
        // too few effective points for a slope: local constant
        k.iter().map(|&kv| kv / s0).collect()
    }
}

/// Local-linear Gaussian-kernel fit of `g` on `w`, evaluated at every `w_i`.
pub fn local_linear_smooth(w: &[f64], g: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if w.len() != g.len() {
        return Err(invalid("covariate and response lengths differ"));
    }
    Ok(LocalLinearOperator::new(w, bandwidth)?.apply(g))
}

/// Trace of the local-linear hat operator.
pub fn effective_df(w: &[f64], bandwidth: f64) -> Result<f64> {
    Ok(LocalLinearOperator::new(w, bandwidth)?.trace())
}

/// Bandwidth whose local-linear smoother has trace `target` (bisection in log-bandwidth).
pub fn bandwidth_for_df(w: &[f64], target: f64) -> Result<f64> {
    let (values, _, _) = distinct(w);
    if values.len() < 2 {
        return Err(Error::DegenerateDesign);
    }
    let u = values.len() as f64;
    if !(target > 2.0 && target < u) {
        return Err(invalid(format!(
            "target df {target} must lie strictly between 2 and the number of distinct values {u}"
        )));
    }
    let span = values[values.len() - 1] - values[0];
    let min_gap = values.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = ((min_gap * 1e-2).ln(), (span * 1e3).ln());
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let df = effective_df(w, mid.exp())?;
        if df > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

pub fn rule_of_thumb_bandwidth(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let m = mean(w);
    let sd = (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    1.06 * sd * n.powf(-0.2)
}

/// Per-level means of `g`.
pub fn cell_factor_smooth(codes: &[usize], g: &[f64]) -> Vec<f64> {
    let means = level_means(codes, g);
    codes.iter().map(|&c| means[c]).collect()
}

fn level_means(codes: &[usize], g: &[f64]) -> Vec<f64> {
    let levels = codes.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; levels];
    let mut counts = vec![0usize; levels];
    for (&c, &v) in codes.iter().zip(g) {
        sums[c] += v;
        counts[c] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Least-squares line through `(w, g)`, evaluated at every `w_i`.
pub fn linear_smooth(w: &[f64], g: &[f64]) -> Vec<f64> {
    let (wbar, sxx) = centered_moments(w);
    let slope = if sxx > 0.0 { slope(w, wbar, sxx, g) } else { 0.0 };
    let gbar = mean(g);
    w.iter().map(|x| gbar + slope * (x - wbar)).collect()
}

fn centered_moments(w: &[f64]) -> (f64, f64) {
    let wbar = mean(w);
    (wbar, w.iter().map(|x| (x - wbar).powi(2)).sum())
}

fn slope(w: &[f64], wbar: f64, sxx: f64, g: &[f64]) -> f64 {
    w.iter().zip(g).map(|(x, y)| (x - wbar) * y).sum::<f64>() / sxx
}

#[derive(Debug, Clone, PartialEq)]
enum Smoother {
    LocalLinear(LocalLinearOperator),
    Linear { w: Vec<f64>, wbar: f64, sxx: f64 },
    Cell { factor: Factor },
    /// Degenerate design: component pinned at zero.
    Zero,
}

/// Per-component function description, `base(x) - offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentRep {
    pub kind: RepKind,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepKind {
    /// Local-linear smooth of this per-observation input vector.
    LocalLinear { input: Vec<f64> },
    /// `slope (x - mean(w))`.
    Linear { slope: f64 },
    /// One value per training level.
    Cell { effects: Vec<f64> },
    Zero,
}

impl ComponentRep {
    fn axpy(&mut self, alpha: f64, other: &ComponentRep) {
        self.offset += alpha * other.offset;
        match (&mut self.kind, &other.kind) {
            (RepKind::LocalLinear { input }, RepKind::LocalLinear { input: o }) => {
                input.iter_mut().zip(o).for_each(|(a, b)| *a += alpha * b)
            }
            (RepKind::Linear { slope }, RepKind::Linear { slope: o }) => *slope += alpha * o,
            (RepKind::Cell { effects }, RepKind::Cell { effects: o }) => {
                effects.iter_mut().zip(o).for_each(|(a, b)| *a += alpha * b)
            }
            (RepKind::Zero, RepKind::Zero) => {}
            _ => panic!("component representations of different kinds"),
        }
    }

    fn scale(&mut self, alpha: f64) {
        self.offset *= alpha;
        match &mut self.kind {
            RepKind::LocalLinear { input } => input.iter_mut().for_each(|a| *a *= alpha),
            RepKind::Linear { slope } => *slope *= alpha,
            RepKind::Cell { effects } => effects.iter_mut().for_each(|a| *a *= alpha),
            RepKind::Zero => {}
        }
    }
}

/// Additive decomposition `intercept + sum_j components[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveFit {
    pub intercept: f64,
    /// Per-observation component values, each centered.
    pub components: Vec<Vec<f64>>,
    pub fitted: Vec<f64>,
    pub reps: Vec<ComponentRep>,
    /// Backfitting reached its tolerance.
    pub converged: bool,
    pub cycles: usize,
}

impl AdditiveFit {
    /// `self += alpha * other`, componentwise.
    pub fn axpy(&mut self, alpha: f64, other: &AdditiveFit) {
        self.intercept += alpha * other.intercept;
        for (c, o) in self.components.iter_mut().zip(&other.components) {
            c.iter_mut().zip(o).for_each(|(a, b)| *a += alpha * b);
        }
        for (r, o) in self.reps.iter_mut().zip(&other.reps) {
            r.axpy(alpha, o);
        }
        self.refresh_fitted();
    }

    pub fn scale(&mut self, alpha: f64) {
        self.intercept *= alpha;
        for c in &mut self.components {
            c.iter_mut().for_each(|a| *a *= alpha);
        }
        for r in &mut self.reps {
            r.scale(alpha);
        }
        self.refresh_fitted();
    }

    fn refresh_fitted(&mut self) {
        let n = self.fitted.len();
        for i in 0..n {
            self.fitted[i] = self.intercept + self.components.iter().map(|c| c[i]).sum::<f64>();
        }
    }

    pub fn max_component_mean(&self) -> f64 {
        self.components.iter().map(|c| mean(c).abs()).fold(0.0, f64::max)
    }
}

/// Prediction with a flag for covariate values outside the training design.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub extrapolated: Vec<bool>,
}

impl Prediction {
    pub fn any_extrapolated(&self) -> bool {
        self.extrapolated.iter().any(|&e| e)
    }
}

/// The smoothing projection: one smoother per listed covariate plus a
/// free intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveProjector {
    n: usize,
    specs: Vec<SmootherSpec>,
    smoothers: Vec<Smoother>,
    pub warnings: Vec<String>,
}

impl AdditiveProjector {
    pub fn new(n: usize, covariates: &[Covariate], specs: &[SmootherSpec]) -> Result<Self> {
        let k = specs.len();
        if n < k + 1 {
            return Err(invalid(format!("{n} observations cannot support {k} components")));
        }
        let mut seen = vec![false; covariates.len()];
        let mut smoothers = Vec::with_capacity(k);
        let mut warnings = Vec::new();
        for spec in specs {
            let j = spec.covariate_index;
            let cov = covariates
                .get(j)
                .ok_or_else(|| invalid(format!("smoother refers to missing covariate {j}")))?;
            if std::mem::replace(&mut seen[j], true) {
                return Err(invalid(format!("covariate {j} has more than one smoother")));
            }
            if cov.len() != n {
                return Err(invalid(format!("covariate {j} has {} rows, expected {n}", cov.len())));
            }
            let sm = match (spec.kind, cov) {
                (SmootherKind::LocalLinear(bw), Covariate::Numeric(w)) => {
                    let h = match bw {
                        Bandwidth::Fixed(h) => Ok(h),
                        Bandwidth::TargetDf(df) => bandwidth_for_df(w, df),
                        Bandwidth::RuleOfThumb => Ok(rule_of_thumb_bandwidth(w)),
                    };
                    match h.and_then(|h| LocalLinearOperator::new(w, h)) {
                        Ok(op) => Smoother::LocalLinear(op),
                        Err(Error::DegenerateDesign) => {
                            warnings.push(format!("covariate {j} is constant; its component is fixed at zero"));
                            Smoother::Zero
                        }
                        Err(e) => return Err(e),
                    }
                }
                (SmootherKind::Linear, Covariate::Numeric(w)) => {
                    let (wbar, sxx) = centered_moments(w);
                    if sxx > 0.0 {
                        Smoother::Linear { w: w.clone(), wbar, sxx }
                    } else {
                        warnings.push(format!("covariate {j} is constant; its component is fixed at zero"));
                        Smoother::Zero
                    }
                }
                (SmootherKind::CellFactor, Covariate::Factor(f)) => Smoother::Cell { factor: f.clone() },
                (SmootherKind::CellFactor, Covariate::Numeric(_)) => {
                    return Err(invalid(format!("cell_factor smoother needs a factor covariate (column {j})")))
                }
                (_, Covariate::Factor(_)) => {
                    return Err(invalid(format!("covariate {j} is a factor; use a cell_factor smoother")))
                }
            };
            smoothers.push(sm);
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Self { n, specs: specs.to_vec(), smoothers, warnings })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn specs(&self) -> &[SmootherSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.smoothers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smoothers.is_empty()
    }

    /// Bandwidth of component `j` if it is a local-linear smoother.
    pub fn bandwidth(&self, j: usize) -> Option<f64> {
        match &self.smoothers[j] {
            Smoother::LocalLinear(op) => Some(op.bandwidth()),
            _ => None,
        }
    }

    /// Trace of component `j`'s smoother.
    pub fn component_df(&self, j: usize) -> f64 {
        match &self.smoothers[j] {
            Smoother::LocalLinear(op) => op.trace(),
            Smoother::Linear { .. } => 2.0,
            Smoother::Cell { factor } => factor.levels.len() as f64,
            Smoother::Zero => 0.0,
        }
    }

    /// Intercept `c` and all components zero.
    pub fn constant(&self, c: f64) -> AdditiveFit {
        let reps = self
            .smoothers
            .iter()
            .map(|s| ComponentRep {
                kind: match s {
                    Smoother::LocalLinear(_) => RepKind::LocalLinear { input: vec![0.0; self.n] },
                    Smoother::Linear { .. } => RepKind::Linear { slope: 0.0 },
                    Smoother::Cell { factor } => RepKind::Cell { effects: vec![0.0; factor.levels.len()] },
                    Smoother::Zero => RepKind::Zero,
                },
                offset: 0.0,
            })
            .collect();
        AdditiveFit {
            intercept: c,
            components: vec![vec![0.0; self.n]; self.smoothers.len()],
            fitted: vec![c; self.n],
            reps,
            converged: true,
            cycles: 0,
        }
    }

    /// Smooths `r` with component `j`, returning centered values and their representation.
    fn smooth_component(&self, j: usize, r: &[f64]) -> (Vec<f64>, ComponentRep) {
        let (base, kind) = match &self.smoothers[j] {
            Smoother::LocalLinear(op) => (op.apply(r), RepKind::LocalLinear { input: r.to_vec() }),
            Smoother::Linear { w, wbar, sxx } => {
                let b = slope(w, *wbar, *sxx, r);
                (w.iter().map(|x| b * (x - wbar)).collect(), RepKind::Linear { slope: b })
            }
            Smoother::Cell { factor } => {
                let mut effects = level_means(&factor.codes, r);
                effects.resize(factor.levels.len(), 0.0);
                (factor.codes.iter().map(|&c| effects[c]).collect(), RepKind::Cell { effects })
            }
            Smoother::Zero => (vec![0.0; self.n], RepKind::Zero),
        };
        let offset = mean(&base);
        let values = base.iter().map(|b| b - offset).collect();
        (values, ComponentRep { kind, offset })
    }

    /// Backfits `g` onto the additive space.
    pub fn project(&self, g: &[f64]) -> Result<AdditiveFit> {
        if g.len() != self.n {
            return Err(invalid(format!("vector has length {}, expected {}", g.len(), self.n)));
        }
        let intercept = mean(g);
        let mut fit = self.constant(intercept);
        let k = self.smoothers.len();
        if k == 0 {
            return Ok(fit);
        }
        let centered: Vec<f64> = g.iter().map(|v| v - intercept).collect();
        let mut total = vec![0.0; self.n];
        let mut converged = false;
        let mut cycles = 0;
        while cycles < BACKFIT_MAX_CYCLES {
            cycles += 1;
            let mut change = 0.0_f64;
            for j in 0..k {
                let partial: Vec<f64> = centered
                    .iter()
                    .zip(&total)
                    .zip(&fit.components[j])
                    .map(|((c, t), f)| c - (t - f))
                    .collect();
                let (values, rep) = self.smooth_component(j, &partial);
                for i in 0..self.n {
                    let delta = values[i] - fit.components[j][i];
                    change = change.max(delta.abs());
                    total[i] += delta;
                }
                fit.components[j] = values;
                fit.reps[j] = rep;
            }
            // a single smoother reaches its fixed point in one sweep
            if change < BACKFIT_TOL || k == 1 {
                converged = true;
                break;
            }
        }
        fit.converged = converged;
        fit.cycles = cycles;
        fit.refresh_fitted();
        if !converged {
            log::warn!("backfitting stopped after {cycles} cycles without reaching tolerance");
        }
        Ok(fit)
    }

    /// Evaluates `fit` at new covariate rows. `covariates` must be indexed
    /// like the columns the projector was built from.
    pub fn predict(&self, fit: &AdditiveFit, covariates: &[Covariate]) -> Result<Prediction> {
        let rows = if self.specs.is_empty() {
            covariates.first().map_or(0, |c| c.len())
        } else {
            covariates
                .get(self.specs[0].covariate_index)
                .ok_or_else(|| invalid("prediction covariates are missing a column"))?
                .len()
        };
        let mut values = vec![fit.intercept; rows];
        let mut extrapolated = vec![false; rows];
        for (j, spec) in self.specs.iter().enumerate() {
            let cov = covariates
                .get(spec.covariate_index)
                .ok_or_else(|| invalid("prediction covariates are missing a column"))?;
            if cov.len() != rows {
                return Err(invalid("prediction covariates have unequal lengths"));
            }
            let rep = &fit.reps[j];
            match (&self.smoothers[j], &rep.kind, cov) {
                (Smoother::LocalLinear(op), RepKind::LocalLinear { input }, Covariate::Numeric(w)) => {
                    let (lo, hi) = op.range();
                    for (i, &x) in w.iter().enumerate() {
                        values[i] += op.eval_at(input, x) - rep.offset;
                        extrapolated[i] |= x < lo || x > hi;
                    }
                }
                (Smoother::Linear { w: train, wbar, .. }, RepKind::Linear { slope }, Covariate::Numeric(w)) => {
                    let lo = train.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = train.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    for (i, &x) in w.iter().enumerate() {
                        values[i] += slope * (x - wbar) - rep.offset;
                        extrapolated[i] |= x < lo || x > hi;
                    }
                }
                (Smoother::Cell { factor }, RepKind::Cell { effects }, Covariate::Factor(f)) => {
                    for i in 0..rows {
                        match factor.levels.iter().position(|l| l == f.label(i)) {
                            Some(c) => values[i] += effects[c] - rep.offset,
                            None => {
                                values[i] -= rep.offset;
                                extrapolated[i] = true;
                            }
                        }
                    }
                }
                (Smoother::Zero, _, _) => {}
                _ => return Err(invalid(format!("prediction column for component {j} has the wrong type"))),
            }
        }
        if extrapolated.iter().any(|&e| e) {
            log::warn!("prediction outside the training design");
        }
        Ok(Prediction { values, extrapolated })
    }
}
