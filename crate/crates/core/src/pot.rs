//! Generalized Pareto peaks-over-threshold fits with additive return levels.
//!
//! The likelihood is parameterized per observation by `eta = log(sigma)` and
//! the shape `kappa`. The additive structure is imposed on a pair of
//! functionals of `(sigma, kappa)` instead: either a return level and the
//! matching expected shortfall, or return levels at two tail levels. Moves
//! are planned in functional space and carried out in `(eta, kappa)` space
//! through the inverse of each observation's 2x2 Jacobian.
//!
//! Conventions: `J_i = d(theta1_i, theta2_i) / d(eta_i, kappa_i)` with rows
//! indexed by functionals. The functional-space gradient of the
//! log-likelihood is `J_i^-T grad_lambda l`, and a functional-space move `d`
//! maps to `J_i^-1 d` to first order.

use rand::Rng;

use crate::engine::{backtrack, reduce_gradients, sample_gradients, Event, FitTrace, GsParams, Objective, Schedule, TraceRecord};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, mean, norm, Mat2};
use crate::minnorm::{GradientSet, SubgradientMethod};
use crate::smoothing::{AdditiveFit, AdditiveProjector, Covariate, SmootherSpec};

/// Below this `|kappa|` the exponential limit formulas are used.
pub const KAPPA_ZERO: f64 = 1e-8;
/// Smallest admissible `|det J_i|`.
pub const MIN_BLOCK_DET: f64 = 1e-12;

/// Scale and shape vectors, `sigma_i = exp(eta_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda {
    pub eta: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl Lambda {
    pub fn constant(n: usize, sigma: f64, kappa: f64) -> Self {
        Self { eta: vec![sigma.ln(); n], kappa: vec![kappa; n] }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.eta.iter().map(|e| e.exp()).collect()
    }

    /// `[eta..., kappa...]`
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.eta.clone();
        v.extend_from_slice(&self.kappa);
        v
    }

    pub fn from_flat(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self { eta: v[..n].to_vec(), kappa: v[n..].to_vec() }
    }
}

/// Which pair of functionals carries the additive structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionalPair {
    /// Return level and expected shortfall at one tail level.
    VarEs { level: f64 },
    /// Return levels at two tail levels.
    VarVar { level1: f64, level2: f64 },
}

/// Functional pair plus the threshold exceedance probability used in
/// `c = level / exceed_prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalSpec {
    pub pair: FunctionalPair,
    pub exceed_prob: f64,
}

impl FunctionalSpec {
    pub fn var_es(level: f64, exceed_prob: f64) -> Self {
        Self { pair: FunctionalPair::VarEs { level }, exceed_prob }
    }

    pub fn var_var(level1: f64, level2: f64, exceed_prob: f64) -> Self {
        Self { pair: FunctionalPair::VarVar { level1, level2 }, exceed_prob }
    }

    /// Same pairs expressed through the scale factors `c` directly.
    pub fn var_es_c(c: f64) -> Self {
        Self::var_es(c, 1.0)
    }

    pub fn var_var_c(c1: f64, c2: f64) -> Self {
        Self::var_var(c1, c2, 1.0)
    }

    /// Scale factors `c = level / exceed_prob`; the second is `None` for `VarEs`.
    pub fn scale_factors(&self) -> (f64, Option<f64>) {
        match self.pair {
            FunctionalPair::VarEs { level } => (level / self.exceed_prob, None),
            FunctionalPair::VarVar { level1, level2 } => {
                (level1 / self.exceed_prob, Some(level2 / self.exceed_prob))
            }
        }
    }

    pub fn names(&self) -> [&'static str; 2] {
        match self.pair {
            FunctionalPair::VarEs { .. } => ["theta", "zeta"],
            FunctionalPair::VarVar { .. } => ["theta1", "theta2"],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exceed_prob > 0.0 && self.exceed_prob <= 1.0) {
            return Err(Error::Config {
                field: "exceed_prob".into(),
                message: format!("must lie in (0, 1], got {}", self.exceed_prob),
            });
        }
        let (c1, c2) = self.scale_factors();
        for c in std::iter::once(c1).chain(c2) {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config {
                    field: "levels".into(),
                    message: format!("scale factor {c} must be positive"),
                });
            }
        }
        Ok(())
    }

    fn requires_kappa_below_one(&self) -> bool {
        matches!(self.pair, FunctionalPair::VarEs { .. })
    }
}

// ---------------------------------------------------------------------------
// per-observation pieces

/// `expm1(x) / x`
fn phi1(x: f64) -> f64 {
    if x.abs() < KAPPA_ZERO {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Derivative of [`phi1`].
fn phi1_prime(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // sum_k k / (k+1)! x^(k-1)
        let mut acc = 0.0;
        let mut fact = 1.0;
        let mut pow = 1.0;
        for k in 1..=8 {
            fact *= (k + 1) as f64;
            acc += k as f64 / fact * pow;
            pow *= x;
        }
        acc
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

/// `(log1p(x) - x / (1 + x)) / x^2`
fn psi(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for k in 0..8 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (k + 1) as f64 / (k + 2) as f64 * pow;
            pow *= x;
        }
        acc
    } else {
        (x.ln_1p() - x / (1.0 + x)) / (x * x)
    }
}

/// Log-density of one excess; `-inf` outside the support.
pub fn obs_loglik(eta: f64, kappa: f64, y: f64) -> f64 {
    if !eta.is_finite() || !kappa.is_finite() {
        return f64::NEG_INFINITY;
    }
    let z = y * (-eta).exp();
    let x = kappa * z;
    if !(1.0 + x > 0.0) {
        return f64::NEG_INFINITY;
    }
    if kappa.abs() < KAPPA_ZERO {
        -eta - z - kappa * (z - z * z / 2.0) - kappa * kappa * (z * z * z / 3.0 - z * z / 2.0)
    } else {
        -eta - (1.0 + 1.0 / kappa) * x.ln_1p()
    }
}

/// `(dl/deta, dl/dkappa)` for one excess; `None` outside the support.
pub fn obs_loglik_grad(eta: f64, kappa: f64, y: f64) -> Option<[f64; 2]> {
    if !eta.is_finite() || !kappa.is_finite() {
        return None;
    }
    let z = y * (-eta).exp();
    let x = kappa * z;
    if !(1.0 + x > 0.0) {
        return None;
    }
    let d_eta = -1.0 + (1.0 + kappa) * z / (1.0 + x);
    let d_kappa = z * z * psi(x) - z / (1.0 + x);
    Some([d_eta, d_kappa])
}

/// Return level `sigma (c^-kappa - 1) / kappa` (`-sigma log c` at `kappa = 0`).
pub fn return_level(sigma: f64, kappa: f64, c: f64) -> f64 {
    let l = -c.ln();
    sigma * l * phi1(kappa * l)
}

/// `(theta + sigma) / (1 - kappa)`; defined for `kappa < 1`.
pub fn expected_shortfall(sigma: f64, kappa: f64, c: f64) -> Option<f64> {
    if kappa >= 1.0 {
        return None;
    }
    Some((return_level(sigma, kappa, c) + sigma) / (1.0 - kappa))
}

/// Functionals and Jacobian block of one observation.
fn obs_functionals(eta: f64, kappa: f64, spec: &FunctionalSpec) -> std::result::Result<([f64; 2], Mat2), f64> {
    let sigma = eta.exp();
    let (c1, c2) = spec.scale_factors();
    let level = |c: f64| {
        let l = -c.ln();
        let x = kappa * l;
        let theta = sigma * l * phi1(x);
        let d_kappa = sigma * l * l * phi1_prime(x);
        (theta, d_kappa)
    };
    let (t1, t1k) = level(c1);
    match c2 {
        None => {
            if kappa >= 1.0 {
                return Err(kappa);
            }
            let r = 1.0 / (1.0 - kappa);
            let zeta = (t1 + sigma) * r;
            let zk = t1k * r + (t1 + sigma) * r * r;
            Ok(([t1, zeta], Mat2([[t1, t1k], [zeta, zk]])))
        }
        Some(c2) => {
            let (t2, t2k) = level(c2);
            Ok(([t1, t2], Mat2([[t1, t1k], [t2, t2k]])))
        }
    }
}

// ---------------------------------------------------------------------------
// vectorized operations

fn check_lengths(lambda: &Lambda, y: &[f64]) -> Result<()> {
    if lambda.eta.len() != lambda.kappa.len() || lambda.eta.len() != y.len() {
        return Err(invalid("lambda and excess vectors have different lengths"));
    }
    Ok(())
}

/// GPD log-likelihood of the excesses; `-inf` when any support constraint fails.
pub fn gpd_loglik(lambda: &Lambda, y: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((&e, &k), &yi) in lambda.eta.iter().zip(&lambda.kappa).zip(y) {
        let l = obs_loglik(e, k, yi);
        if l == f64::NEG_INFINITY {
            return l;
        }
        total += l;
    }
    total
}

/// Gradient `[dl/deta..., dl/dkappa...]` of [`gpd_loglik`].
pub fn gpd_loglik_grad(lambda: &Lambda, y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(lambda, y)?;
    flat_grad(&lambda.eta, &lambda.kappa, y).ok_or(Error::InfeasiblePoint)
}

fn flat_grad(eta: &[f64], kappa: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let n = y.len();
    let mut g = vec![0.0; 2 * n];
    for i in 0..n {
        let [a, b] = obs_loglik_grad(eta[i], kappa[i], y[i])?;
        g[i] = a;
        g[n + i] = b;
    }
    Some(g)
}

/// The two functionals at every observation.
pub fn functional_map(lambda: &Lambda, spec: &FunctionalSpec) -> Result<[Vec<f64>; 2]> {
    let n = lambda.len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for (i, (&e, &k)) in lambda.eta.iter().zip(&lambda.kappa).enumerate() {
        let (v, _) = obs_functionals(e, k, spec).map_err(|kappa| Error::FunctionalUndefined { index: i, kappa })?;
        a.push(v[0]);
        b.push(v[1]);
    }
    Ok([a, b])
}

/// Jacobian block `d(Theta_i)/d(eta_i, kappa_i)` and its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianBlock {
    pub jac: Mat2,
    pub inv: Mat2,
}

impl JacobianBlock {
    /// Functional-space gradient `J^-T g` from a `(eta, kappa)` gradient.
    pub fn pull_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        self.inv.transpose().mul_vec(g)
    }

    /// First-order `(eta, kappa)` move `J^-1 d` for a functional-space move.
    pub fn push_move(&self, d: [f64; 2]) -> [f64; 2] {
        self.inv.mul_vec(d)
    }
}

pub fn jacobian_blocks(lambda: &Lambda, spec: &FunctionalSpec) -> Result<Vec<JacobianBlock>> {
    lambda
        .eta
        .iter()
        .zip(&lambda.kappa)
        .enumerate()
        .map(|(i, (&e, &k))| block_at(i, e, k, spec))
        .collect()
}

fn block_at(index: usize, eta: f64, kappa: f64, spec: &FunctionalSpec) -> Result<JacobianBlock> {
    let (_, jac) = obs_functionals(eta, kappa, spec).map_err(|kappa| Error::FunctionalUndefined { index, kappa })?;
    let det = jac.det();
    if !(det.abs() > MIN_BLOCK_DET) {
        return Err(Error::SingularBlock { index, det });
    }
    let inv = jac.inverse().ok_or(Error::SingularBlock { index, det })?;
    Ok(JacobianBlock { jac, inv })
}

/// Current iterate of a POT fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PotState {
    pub lambda: Lambda,
    pub theta: [Vec<f64>; 2],
    pub blocks: Vec<JacobianBlock>,
    pub spec: FunctionalSpec,
}

impl PotState {
    pub fn new(lambda: Lambda, spec: FunctionalSpec) -> Result<Self> {
        let theta = functional_map(&lambda, &spec)?;
        let blocks = jacobian_blocks(&lambda, &spec)?;
        Ok(Self { lambda, theta, blocks, spec })
    }
}

/// Where the functional-space gradient of a sampled point is pulled back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    /// One Jacobian at the iterate for every sample, samples drawn directly in
    /// `(eta, kappa)` space.
    #[default]
    Common,
    /// Samples are mapped through `J^-1` and each one uses its own Jacobian.
    PerSample,
}

fn pull_back(blocks: &[JacobianBlock], g: &[f64]) -> Vec<f64> {
    let n = blocks.len();
    let mut out = vec![0.0; 2 * n];
    for (i, b) in blocks.iter().enumerate() {
        let [a, c] = b.pull_gradient([g[i], g[n + i]]);
        out[i] = a;
        out[n + i] = c;
    }
    out
}

fn push_forward(blocks: &[JacobianBlock], d: &[f64]) -> Vec<f64> {
    let n = blocks.len();
    let mut out = vec![0.0; 2 * n];
    for (i, b) in blocks.iter().enumerate() {
        let [a, c] = b.push_move([d[i], d[n + i]]);
        out[i] = a;
        out[n + i] = c;
    }
    out
}

/// Sampled functional-space gradient of the log-likelihood,
/// `J^-T {grad l(Lambda) + sum_k grad l(Lambda + eps u_k)} / (m + 1)`.
pub fn approx_subgradient_theta<R: Rng + ?Sized>(
    state: &PotState,
    y: &[f64],
    eps: f64,
    gs: &GsParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    approx_subgradient_theta_with(state, y, eps, gs, JacobianMode::Common, rng).map(|(g, _)| g)
}

fn approx_subgradient_theta_with<R: Rng + ?Sized>(
    state: &PotState,
    y: &[f64],
    eps: f64,
    gs: &GsParams,
    mode: JacobianMode,
    rng: &mut R,
) -> Result<(Vec<f64>, SubgradientMethod)> {
    let n = y.len();
    let center = state.lambda.to_flat();
    if gpd_loglik(&state.lambda, y) == f64::NEG_INFINITY {
        return Err(Error::InfeasiblePoint);
    }
    let (m, _) = gs.sample_size(2 * n);
    let nan = || vec![f64::NAN; 2 * n];
    let spec = state.spec;
    let grads = match mode {
        JacobianMode::Common => sample_gradients(&center, eps, m, gs.parallel, rng, |_| true, |p| {
            let pulled = flat_grad(&p[..n], &p[n..], y);
            match pulled {
                Some(g) if gs.subgradient_mode == SubgradientMethod::Qp => pull_back(&state.blocks, &g),
                Some(g) => g,
                None => nan(),
            }
        })?,
        JacobianMode::PerSample => {
            // sample in functional space: Lambda + eps J^-1 u
            let origin = vec![0.0; 2 * n];
            let mut g = sample_gradients(&origin, eps, m, gs.parallel, rng, |_| true, |u| {
                if u.iter().all(|v| *v == 0.0) {
                    return vec![0.0; 2 * n];
                }
                let mv = push_forward(&state.blocks, u);
                let p: Vec<f64> = center.iter().zip(&mv).map(|(a, b)| a + b).collect();
                let blocks: Option<Vec<JacobianBlock>> = (0..n)
                    .map(|i| block_at(i, p[i], p[n + i], &spec).ok())
                    .collect();
                match (flat_grad(&p[..n], &p[n..], y), blocks) {
                    (Some(g), Some(b)) => pull_back(&b, &g),
                    _ => nan(),
                }
            })?;
            // the first entry is the gradient at u = 0
            let g0 = flat_grad(&center[..n], &center[n..], y).ok_or(Error::InfeasiblePoint)?;
            g[0] = pull_back(&state.blocks, &g0);
            g
        }
    };
    let set = GradientSet::new(grads)?;
    let pulled_each = mode == JacobianMode::PerSample || gs.subgradient_mode == SubgradientMethod::Qp;
    let r = reduce_gradients(&set, gs.subgradient_mode, gs.qp_tol)?;
    let g = if pulled_each { r.point } else { pull_back(&state.blocks, &r.point) };
    Ok((g, r.method))
}

/// `-l` over the flat `(eta, kappa)` vector, `+inf` where infeasible.
pub struct NegLogLik<'a> {
    y: &'a [f64],
    spec: Option<FunctionalSpec>,
}

impl Objective for NegLogLik<'_> {
    fn dim(&self) -> usize {
        2 * self.y.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let n = self.y.len();
        if let Some(spec) = &self.spec {
            if spec.requires_kappa_below_one() && x[n..].iter().any(|&k| k >= 1.0) {
                return f64::INFINITY;
            }
        }
        let mut total = 0.0;
        for i in 0..n {
            let l = obs_loglik(x[i], x[n + i], self.y[i]);
            if l == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            total -= l;
        }
        total
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.y.len();
        match flat_grad(&x[..n], &x[n..], self.y) {
            Some(g) => g.into_iter().map(|v| -v).collect(),
            None => vec![f64::NAN; 2 * n],
        }
    }
}

pub fn negative_loglik_objective<'a>(y: &'a [f64], spec: Option<FunctionalSpec>) -> NegLogLik<'a> {
    NegLogLik { y, spec }
}

/// Method-of-moments GPD start, clamped to `kappa in [-0.4, 0.9]` and
/// widened if needed so every excess lies inside the support.
pub fn moment_start(y: &[f64]) -> (f64, f64) {
    let m = mean(y);
    let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() as f64 - 1.0).max(1.0);
    let ratio = if var > 0.0 { m * m / var } else { 1.0 };
    let kappa = (0.5 * (1.0 - ratio)).clamp(-0.4, 0.9);
    let mut sigma = 0.5 * m * (ratio + 1.0);
    if kappa < 0.0 {
        let ymax = y.iter().cloned().fold(0.0, f64::max);
        sigma = sigma.max(-kappa * ymax * 1.05);
    }
    (sigma, kappa)
}

/// Options beyond the shared descent parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PotOptions {
    pub jacobian: JacobianMode,
    /// Constant `(sigma, kappa)` start; method of moments when `None`.
    pub start: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PotModel {
    pub state: PotState,
    pub decompositions: [AdditiveFit; 2],
    pub projector: AdditiveProjector,
    pub trace: FitTrace,
}

impl PotModel {
    pub fn loglik(&self, y: &[f64]) -> f64 {
        gpd_loglik(&self.state.lambda, y)
    }
}

/// Fits the additive functional pair to positive excesses `y`.
pub fn fit_pot_additive(
    y: &[f64],
    covariates: &[Covariate],
    spec: &FunctionalSpec,
    specs: &[SmootherSpec],
    gs: &GsParams,
    opts: &PotOptions,
) -> Result<PotModel> {
    gs.validate()?;
    spec.validate()?;
    let n = y.len();
    if n < specs.len() + 2 {
        return Err(invalid(format!("{n} excesses are too few for {} components", specs.len())));
    }
    if y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid("excesses must be positive and finite"));
    }
    let projector = AdditiveProjector::new(n, covariates, specs)?;
    let (sigma0, kappa0) = opts.start.unwrap_or_else(|| moment_start(y));
    let mut lambda = Lambda::constant(n, sigma0, kappa0);
    let objective = negative_loglik_objective(y, Some(*spec));
    let mut x = lambda.to_flat();
    let mut f = objective.eval(&x);
    if !f.is_finite() {
        return Err(invalid(format!("starting point sigma = {sigma0}, kappa = {kappa0} is infeasible")));
    }

    let mut trace = FitTrace::new(f);
    for w in &projector.warnings {
        trace.warnings.push(w.clone());
    }
    if let (_, Some(w)) = gs.sample_size(2 * n) {
        trace.warn(w);
    }
    let mut rng = gs.rng();
    let mut sched = Schedule::new(gs);
    let mut trial = vec![0.0; 2 * n];

    for iter in 0..gs.max_iter {
        if sched.done() {
            break;
        }
        let mut rec = TraceRecord {
            iter,
            f_prev: f,
            f,
            g_norm: 0.0,
            decrease: 0.0,
            eps: sched.eps,
            tau: sched.tau,
            t: 0.0,
            method: gs.subgradient_mode,
            backtracks: 0,
            event: Event::Shrink,
        };
        let state = PotState::new(lambda.clone(), *spec)?;
        let (g_ll, method) = match approx_subgradient_theta_with(&state, y, sched.eps, gs, opts.jacobian, &mut rng) {
            Ok(v) => v,
            Err(Error::SamplingExhausted { .. }) => {
                rec.event = Event::SamplingExhausted;
                sched.shrink_radius();
                trace.records.push(rec);
                continue;
            }
            Err(e) => return Err(e),
        };
        rec.method = method;
        // gradient of the objective -l in functional space
        let g: Vec<f64> = g_ll.iter().map(|v| -v).collect();
        let s1 = projector.project(&g[..n])?;
        let s2 = projector.project(&g[n..])?;
        let mut s = s1.fitted;
        s.extend_from_slice(&s2.fitted);
        let s_norm = norm(&s);
        rec.g_norm = s_norm;
        if s_norm <= sched.tau {
            sched.shrink();
            trace.records.push(rec);
            continue;
        }
        let decrease = dot(&s, &g) / s_norm;
        rec.decrease = decrease;
        let d: Vec<f64> = s.iter().map(|v| -v / s_norm).collect();
        let step_dir = push_forward(&state.blocks, &d);
        let step = if decrease > 0.0 {
            backtrack(
                |t| {
                    for ((p, a), b) in trial.iter_mut().zip(&x).zip(&step_dir) {
                        *p = a + t * b;
                    }
                    let v = objective.eval(&trial);
                    // the next iterate must admit invertible blocks
                    if v.is_finite() && (0..n).any(|i| block_at(i, trial[i], trial[n + i], spec).is_err()) {
                        return f64::INFINITY;
                    }
                    v
                },
                f,
                decrease,
                gs.beta,
                gs.max_backtracks,
            )
        } else {
            None
        };
        match step {
            Some(st) => {
                for (xi, di) in x.iter_mut().zip(&step_dir) {
                    *xi += st.t * di;
                }
                lambda = Lambda::from_flat(&x);
                f = st.f_new;
                rec.f = f;
                rec.t = st.t;
                rec.backtracks = st.backtracks;
                rec.event = Event::Step;
            }
            None => {
                rec.backtracks = gs.max_backtracks;
                rec.event = Event::LineSearchFailed;
                sched.shrink();
            }
        }
        trace.records.push(rec);
    }
    trace.converged = sched.done();
    if !trace.converged {
        trace.warn(format!("POT fit stopped at max_iter = {} before convergence", gs.max_iter));
    }
    let state = PotState::new(lambda, *spec)?;
    let decompositions = [projector.project(&state.theta[0])?, projector.project(&state.theta[1])?];
    Ok(PotModel { state, decompositions, projector, trace })
}

/// Largest relative error between analytic and central-difference
/// derivatives of the per-observation log-likelihood and Jacobian blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub loglik: f64,
    pub jacobian: f64,
}

impl GradCheck {
    pub fn max(&self) -> f64 {
        self.loglik.max(self.jacobian)
    }
}

pub(crate) fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Finite-difference check at `lambda` with step `h`. The log-likelihood is
/// a sum of per-observation terms, so each coordinate is differenced on its
/// own term.
pub fn gradcheck(lambda: &Lambda, y: &[f64], spec: &FunctionalSpec, h: f64) -> Result<GradCheck> {
    check_lengths(lambda, y)?;
    let mut worst = GradCheck { loglik: 0.0, jacobian: 0.0 };
    for i in 0..y.len() {
        let (e, k) = (lambda.eta[i], lambda.kappa[i]);
        let g = obs_loglik_grad(e, k, y[i]).ok_or(Error::InfeasiblePoint)?;
        let fd_e = (obs_loglik(e + h, k, y[i]) - obs_loglik(e - h, k, y[i])) / (2.0 * h);
        let fd_k = (obs_loglik(e, k + h, y[i]) - obs_loglik(e, k - h, y[i])) / (2.0 * h);
        worst.loglik = worst.loglik.max(relative_error(g[0], fd_e)).max(relative_error(g[1], fd_k));

        let (_, jac) = obs_functionals(e, k, spec).map_err(|kappa| Error::FunctionalUndefined { index: i, kappa })?;
        let f = |e: f64, k: f64| obs_functionals(e, k, spec).map(|(v, _)| v);
        let (pe, me) = (f(e + h, k), f(e - h, k));
        let (pk, mk) = (f(e, k + h), f(e, k - h));
        if let (Ok(pe), Ok(me), Ok(pk), Ok(mk)) = (pe, me, pk, mk) {
            for r in 0..2 {
                let fde = (pe[r] - me[r]) / (2.0 * h);
                let fdk = (pk[r] - mk[r]) / (2.0 * h);
                worst.jacobian = worst
                    .jacobian
                    .max(relative_error(jac.0[r][0], fde))
                    .max(relative_error(jac.0[r][1], fdk));
            }
        }
    }
    Ok(worst)
}
