//! Gradient-sampling descent for locally Lipschitz objectives.
//!
//! Each iteration samples `m` points in the ball of radius `eps` around the
//! iterate, estimates the min-norm element of the hull of their gradients and
//! line-searches along its negative. When the estimate is shorter than `tau`
//! (or the line search fails) both radius and tolerance shrink.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::norm;
use crate::minnorm::{average_fallback, min_norm_point, GradientSet, MinNormResult, SubgradientMethod};

pub use crate::minnorm::SubgradientMethod as Mode;

/// Hyperparameters of the descent loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GsParams {
    /// Sample size. `None` uses `dim + 1`.
    pub m: Option<usize>,
    pub beta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub eps0: f64,
    pub tau0: f64,
    pub eps_min: f64,
    pub tau_min: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub subgradient_mode: SubgradientMethod,
    pub seed: u64,
    /// Evaluate the sampled gradients on the rayon pool.
    pub parallel: bool,
    /// KKT tolerance for the min-norm sub-problem.
    pub qp_tol: f64,
}

impl Default for GsParams {
    fn default() -> Self {
        Self {
            m: None,
            beta: 0.1,
            mu: 0.5,
            lambda: 0.5,
            eps0: 0.1,
            tau0: 1e-2,
            eps_min: 1e-6,
            tau_min: 1e-6,
            max_iter: 5000,
            max_backtracks: 30,
            subgradient_mode: SubgradientMethod::Qp,
            seed: 0,
            parallel: false,
            qp_tol: crate::minnorm::DEFAULT_TOL,
        }
    }
}

impl GsParams {
    /// Defaults used by the additive fits, which average the sampled gradients.
    pub fn additive() -> Self {
        Self {
            subgradient_mode: SubgradientMethod::Average,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn with_mode(mut self, mode: SubgradientMethod) -> Self {
        self.subgradient_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config {
                    field: name.into(),
                    message: format!("must lie in (0, 1), got {v}"),
                })
            }
        };
        unit("beta", self.beta)?;
        unit("mu", self.mu)?;
        unit("lambda", self.lambda)?;
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config {
                    field: name.into(),
                    message: format!("must be positive, got {v}"),
                })
            }
        };
        pos("eps0", self.eps0)?;
        pos("tau0", self.tau0)?;
        pos("eps_min", self.eps_min)?;
        pos("tau_min", self.tau_min)?;
        if self.eps_min >= self.eps0 {
            return Err(Error::Config {
                field: "eps_min".into(),
                message: "must be below eps0".into(),
            });
        }
        if self.tau_min >= self.tau0 {
            return Err(Error::Config {
                field: "tau_min".into(),
                message: "must be below tau0".into(),
            });
        }
        if self.max_iter == 0 {
            return Err(Error::Config {
                field: "max_iter".into(),
                message: "must be positive".into(),
            });
        }
        if self.max_backtracks == 0 {
            return Err(Error::Config {
                field: "max_backtracks".into(),
                message: "must be positive".into(),
            });
        }
        if self.m == Some(0) {
            return Err(Error::Config {
                field: "m".into(),
                message: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Resolves the sample size for a problem of dimension `dim`, returning a
    /// warning when an explicit `m` undercuts `dim + 1`.
    pub fn sample_size(&self, dim: usize) -> (usize, Option<String>) {
        match self.m {
            None => (dim + 1, None),
            Some(m) if m < dim + 1 => (
                m,
                Some(format!(
                    "sample size m = {m} is below dimension + 1 = {}; convergence theory does not apply",
                    dim + 1
                )),
            ),
            Some(m) => (m, None),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// A locally Lipschitz function with a gradient on an open dense set.
///
/// `eval` may return `+inf` to mark points outside the domain.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
}

/// Objective assembled from two closures.
pub struct FnObjective<F, G> {
    dim: usize,
    f: F,
    g: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, f: F, g: G) -> Self {
        Self { dim, f, g }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.g)(x)
    }
}

/// Draws `m` points uniformly from the solid unit ball in `n` dimensions:
/// a Gaussian direction scaled to radius `U^(1/n)`.
pub fn sample_unit_ball<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..m).map(|_| sample_one(n, rng)).collect()
}

fn sample_one<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let len = norm(&v);
        if len == 0.0 || !len.is_finite() {
            continue;
        }
        let u: f64 = rng.random();
        let r = u.powf(1.0 / n as f64);
        let s = r / len;
        v.iter_mut().for_each(|x| *x *= s);
        return v;
    }
}

/// Reduces a gradient set to one subgradient estimate, falling back to the
/// average when the QP route breaks down.
pub fn reduce_gradients(set: &GradientSet, mode: SubgradientMethod, qp_tol: f64) -> Result<MinNormResult> {
    match mode {
        SubgradientMethod::Average => average_fallback(set),
        SubgradientMethod::Qp => match min_norm_point(set, qp_tol) {
            Ok(r) => Ok(r),
            Err(Error::NumericalFailure(msg)) => {
                log::debug!("min-norm sub-problem failed ({msg}); averaging instead");
                average_fallback(set)
            }
            Err(e) => Err(e),
        },
    }
}

/// Gradients at `x` and at `m` feasible points of the ball `B(x, eps)`.
///
/// All first-round draws happen before any gradient is evaluated, and
/// replacements for rejected draws are taken in index order, so serial and
/// parallel evaluation consume the same random stream.
pub fn sample_gradients<R, P, A>(
    x: &[f64],
    eps: f64,
    m: usize,
    parallel: bool,
    rng: &mut R,
    accept: A,
    gradient: P,
) -> Result<Vec<Vec<f64>>>
where
    R: Rng + ?Sized,
    A: Fn(&[f64]) -> bool + Sync,
    P: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let n = x.len();
    let shift = |u: &[f64]| -> Vec<f64> { x.iter().zip(u).map(|(a, b)| a + eps * b).collect() };
    let probe = |u: &Vec<f64>| -> Option<Vec<f64>> {
        let p = shift(u);
        if !accept(&p) {
            return None;
        }
        let g = gradient(&p);
        if g.iter().all(|v| v.is_finite()) {
            Some(g)
        } else {
            None
        }
    };

    let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(m);
    let draws = sample_unit_ball(n, m, rng);
    if parallel {
        grads.par_extend(draws.par_iter().map(probe));
    } else {
        grads.extend(draws.iter().map(probe));
    }

    let cap = 10 * m;
    let mut rejected = 0usize;
    for slot in grads.iter_mut() {
        while slot.is_none() {
            rejected += 1;
            if rejected > cap {
                return Err(Error::SamplingExhausted { attempts: rejected - 1, eps });
            }
            let u = sample_one(n, rng);
            *slot = probe(&u);
        }
    }

    let mut out = Vec::with_capacity(m + 1);
    out.push(gradient(x));
    out.extend(grads.into_iter().flatten());
    Ok(out)
}

/// Approximates the min-norm element of the Clarke eps-subdifferential at `x`.
pub fn approx_subgradient<O: Objective + ?Sized, R: Rng + ?Sized>(
    obj: &O,
    x: &[f64],
    eps: f64,
    params: &GsParams,
    rng: &mut R,
) -> Result<MinNormResult> {
    if !obj.eval(x).is_finite() {
        return Err(Error::InfeasiblePoint);
    }
    let (m, _) = params.sample_size(obj.dim());
    let grads = sample_gradients(
        x,
        eps,
        m,
        params.parallel,
        rng,
        |p| obj.eval(p).is_finite(),
        |p| obj.grad(p),
    )?;
    let set = GradientSet::new(grads)?;
    reduce_gradients(&set, params.subgradient_mode, params.qp_tol)
}

/// Result of a successful backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub t: f64,
    pub f_new: f64,
    pub backtracks: usize,
}

/// Backtracks `t = 1, 1/2, 1/4, ...` until `phi(t) < f0 - beta t decrease`
/// with `phi(t)` finite. At most `max_backtracks` halvings are tried.
pub fn backtrack<F: FnMut(f64) -> f64>(
    mut phi: F,
    f0: f64,
    decrease: f64,
    beta: f64,
    max_backtracks: usize,
) -> Option<StepOutcome> {
    let mut t = 1.0;
    for backtracks in 0..=max_backtracks {
        let f = phi(t);
        if f.is_finite() && f < f0 - beta * t * decrease {
            return Some(StepOutcome { t, f_new: f, backtracks });
        }
        t *= 0.5;
    }
    None
}

/// Armijo search along a unit direction with the `|g|` decrease rule.
pub fn armijo_search<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    d: &[f64],
    g_norm: f64,
    beta: f64,
    max_backtracks: usize,
) -> Result<Option<StepOutcome>> {
    if (norm(d) - 1.0).abs() > 1e-10 {
        return Err(invalid("search direction must have unit length"));
    }
    if !(g_norm > 0.0) {
        return Err(invalid("g_norm must be positive"));
    }
    let f0 = obj.eval(x);
    let mut trial = vec![0.0; x.len()];
    Ok(backtrack(
        |t| {
            for ((p, a), b) in trial.iter_mut().zip(x).zip(d) {
                *p = a + t * b;
            }
            obj.eval(&trial)
        },
        f0,
        g_norm,
        beta,
        max_backtracks,
    ))
}

/// What an iteration did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// Accepted a descent step.
    Step,
    /// The estimate fell under `tau`; eps and tau shrank.
    Shrink,
    /// The line search failed; eps and tau shrank.
    LineSearchFailed,
    /// No feasible sample could be drawn; eps shrank.
    SamplingExhausted,
}

impl Event {
    pub fn as_str(self) -> &'static str {
        match self {
            Event::Step => "step",
            Event::Shrink => "shrink",
            Event::LineSearchFailed => "linesearch_failed",
            Event::SamplingExhausted => "sampling_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Objective before the iteration.
    pub f_prev: f64,
    /// Objective after the iteration.
    pub f: f64,
    pub g_norm: f64,
    /// Decrease rate used by the sufficient-decrease test.
    pub decrease: f64,
    pub eps: f64,
    pub tau: f64,
    pub t: f64,
    pub method: SubgradientMethod,
    pub backtracks: usize,
    pub event: Event,
}

impl TraceRecord {
    pub fn accepted(&self) -> bool {
        self.event == Event::Step
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    pub f0: f64,
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitTrace {
    pub fn new(f0: f64) -> Self {
        Self { f0, ..Default::default() }
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(self.f0, |r| r.f)
    }

    pub fn steps(&self) -> usize {
        self.records.iter().filter(|r| r.accepted()).count()
    }

    pub fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    /// Checks the descent bookkeeping: every accepted step satisfies the
    /// sufficient-decrease rule it was tested with, rejected iterations leave
    /// the objective unchanged and eps, tau never grow.
    pub fn check_invariants(&self, beta: f64) -> std::result::Result<(), String> {
        let mut prev_f = self.f0;
        let mut prev: Option<&TraceRecord> = None;
        for r in &self.records {
            if r.f_prev != prev_f {
                return Err(format!("iteration {}: objective jumped from {prev_f} to {}", r.iter, r.f_prev));
            }
            if r.accepted() {
                if !(r.f < r.f_prev - beta * r.t * r.decrease) {
                    return Err(format!("iteration {}: insufficient decrease", r.iter));
                }
                if !(r.f < r.f_prev) {
                    return Err(format!("iteration {}: objective did not decrease", r.iter));
                }
            } else if r.f != r.f_prev {
                return Err(format!("iteration {}: objective moved without a step", r.iter));
            }
            if let Some(p) = prev {
                if r.eps > p.eps || r.tau > p.tau {
                    return Err(format!("iteration {}: eps or tau increased", r.iter));
                }
            }
            prev_f = r.f;
            prev = Some(r);
        }
        Ok(())
    }
}

/// Radius/tolerance schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub eps: f64,
    pub tau: f64,
    mu: f64,
    lambda: f64,
    eps_min: f64,
    tau_min: f64,
}

impl Schedule {
    pub fn new(p: &GsParams) -> Self {
        Self {
            eps: p.eps0,
            tau: p.tau0,
            mu: p.mu,
            lambda: p.lambda,
            eps_min: p.eps_min,
            tau_min: p.tau_min,
        }
    }

    pub fn shrink(&mut self) {
        self.eps *= self.mu;
        self.tau *= self.lambda;
    }

    pub fn shrink_radius(&mut self) {
        self.eps *= self.mu;
    }

    pub fn done(&self) -> bool {
        self.eps <= self.eps_min && self.tau <= self.tau_min
    }
}

/// Output of [`gsda_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct GsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub trace: FitTrace,
}

/// Minimizes `obj` from `x0` by gradient sampling.
pub fn gsda_minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], params: &GsParams) -> Result<GsResult> {
    params.validate()?;
    if x0.len() != obj.dim() {
        return Err(invalid(format!(
            "starting point has dimension {} (objective has {})",
            x0.len(),
            obj.dim()
        )));
    }
    let mut x = x0.to_vec();
    let mut f = obj.eval(&x);
    if !f.is_finite() {
        return Err(Error::InfeasiblePoint);
    }
    let mut trace = FitTrace::new(f);
    if let (_, Some(w)) = params.sample_size(obj.dim()) {
        trace.warn(w);
    }
    let mut rng = params.rng();
    let mut sched = Schedule::new(params);

    for iter in 0..params.max_iter {
        if sched.done() {
            break;
        }
        let (eps, tau) = (sched.eps, sched.tau);
        let mut rec = TraceRecord {
            iter,
            f_prev: f,
            f,
            g_norm: 0.0,
            decrease: 0.0,
            eps,
            tau,
            t: 0.0,
            method: params.subgradient_mode,
            backtracks: 0,
            event: Event::Shrink,
        };
        let g = match approx_subgradient(obj, &x, eps, params, &mut rng) {
            Ok(g) => g,
            Err(Error::SamplingExhausted { .. }) => {
                rec.event = Event::SamplingExhausted;
                sched.shrink_radius();
                trace.records.push(rec);
                continue;
            }
            Err(e) => return Err(e),
        };
        rec.g_norm = g.norm;
        rec.method = g.method;
        if g.norm <= tau {
            sched.shrink();
            trace.records.push(rec);
            continue;
        }
        let d: Vec<f64> = g.point.iter().map(|v| -v / g.norm).collect();
        rec.decrease = g.norm;
        match armijo_search(obj, &x, &d, g.norm, params.beta, params.max_backtracks)? {
            Some(step) => {
                for (xi, di) in x.iter_mut().zip(&d) {
                    *xi += step.t * di;
                }
                f = step.f_new;
                rec.f = f;
                rec.t = step.t;
                rec.backtracks = step.backtracks;
                rec.event = Event::Step;
            }
            None => {
                rec.backtracks = params.max_backtracks;
                rec.event = Event::LineSearchFailed;
                sched.shrink();
            }
        }
        trace.records.push(rec);
    }
    trace.converged = sched.done();
    Ok(GsResult { x, f, trace })
}

/// Built-in test objectives.
pub mod testfns {
    use super::Objective;

    /// `10 |x2 - x1^2| + (1 - x1)^2`, nonsmooth on the parabola `x2 = x1^2`.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct NsRosenbrock;

    impl Objective for NsRosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64]) -> f64 {
            10.0 * (x[1] - x[0] * x[0]).abs() + (1.0 - x[0]).powi(2)
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            let s = if x[1] - x[0] * x[0] >= 0.0 { 1.0 } else { -1.0 };
            vec![-20.0 * s * x[0] - 2.0 * (1.0 - x[0]), 10.0 * s]
        }
    }

    /// `|x - a|^2`
    #[derive(Debug, Clone)]
    pub struct Quadratic {
        pub center: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn eval(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum()
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.center).map(|(a, b)| 2.0 * (a - b)).collect()
        }
    }

    /// `sum |x_i|`
    #[derive(Debug, Clone, Copy)]
    pub struct L1Norm {
        pub dim: usize,
    }

    impl Objective for L1Norm {
        fn dim(&self) -> usize {
            self.dim
        }
        fn eval(&self, x: &[f64]) -> f64 {
            x.iter().map(|v| v.abs()).sum()
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            x.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testfns::*;
    use super::*;

    #[test]
    fn ball_samples_are_inside_and_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a = sample_unit_ball(2, 3, &mut r1);
        let b = sample_unit_ball(2, 3, &mut r2);
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|u| norm(u) <= 1.0));
        assert_eq!(a, b);
    }

    #[test]
    fn ball_mean_in_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 10_000;
        let s = sample_unit_ball(1, m, &mut rng);
        let mean: f64 = s.iter().map(|u| u[0]).sum::<f64>() / m as f64;
        // uniform on [-1, 1] has variance 1/3
        assert!(mean.abs() <= 3.0 * (1.0 / (3.0 * m as f64)).sqrt());
        assert!(s.iter().all(|u| u[0].abs() <= 1.0));
    }

    #[test]
    fn smooth_subgradient_approaches_gradient() {
        let obj = Quadratic { center: vec![0.0, 0.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = approx_subgradient(&obj, &[1.0, 0.0], 1e-6, &GsParams::default(), &mut rng).unwrap();
        assert!((g.point[0] - 2.0).abs() < 1e-4 && g.point[1].abs() < 1e-4);
    }

    #[test]
    fn abs_kink_balances() {
        let obj = L1Norm { dim: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = GsParams::default().with_m(200);
        let g = approx_subgradient(&obj, &[0.0], 0.1, &p, &mut rng).unwrap();
        assert!(g.norm <= 0.2);
        let g = approx_subgradient(&obj, &[1.0], 0.1, &p, &mut rng).unwrap();
        assert_eq!(g.point, vec![1.0]);
        let pa = p.clone().with_mode(Mode::Average);
        let g = approx_subgradient(&obj, &[0.0], 0.1, &pa, &mut rng).unwrap();
        assert!(g.norm <= 0.2, "{}", g.norm);
    }

    #[test]
    fn armijo_examples() {
        let sq = FnObjective::new(1, |x: &[f64]| x[0] * x[0], |x: &[f64]| vec![2.0 * x[0]]);
        // f(0) = 0 < 1 - 0.1 * 1 * 2
        let s = armijo_search(&sq, &[1.0], &[-1.0], 2.0, 0.1, 30).unwrap().unwrap();
        assert_eq!(s.t, 1.0);
        assert_eq!(s.backtracks, 0);
        assert!(armijo_search(&sq, &[1.0], &[1.0], 2.0, 0.1, 30).unwrap().is_none());

        let wall = FnObjective::new(
            1,
            |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { x[0] },
            |_: &[f64]| vec![1.0],
        );
        let s = armijo_search(&wall, &[0.1], &[-1.0], 1.0, 0.1, 30).unwrap().unwrap();
        assert!(s.t <= 1.0 / 16.0);
        assert!(0.1 - s.t >= 0.0 && s.f_new.is_finite());

        assert!(armijo_search(&sq, &[1.0], &[-2.0], 2.0, 0.1, 30).is_err());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let obj = Quadratic { center: vec![2.0, -1.0] };
        let r = gsda_minimize(&obj, &[0.0, 0.0], &GsParams::default()).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-2 && (r.x[1] + 1.0).abs() < 1e-2, "{:?}", r.x);
        r.trace.check_invariants(0.1).unwrap();
    }

    #[test]
    fn minimizes_l1() {
        let obj = L1Norm { dim: 2 };
        let r = gsda_minimize(&obj, &[3.0, 4.0], &GsParams::default()).unwrap();
        assert!(norm(&r.x) < 1e-2, "{:?}", r.x);
        r.trace.check_invariants(0.1).unwrap();
    }

    #[test]
    fn minimizes_nonsmooth_rosenbrock() {
        let r = gsda_minimize(&NsRosenbrock, &[-1.0, 1.0], &GsParams::default()).unwrap();
        let dist = ((r.x[0] - 1.0).powi(2) + (r.x[1] - 1.0).powi(2)).sqrt();
        assert!(dist <= 1e-2, "x = {:?}, dist = {dist}", r.x);
        assert!(r.trace.converged);
    }

    #[test]
    fn schedule_shrinks_geometrically() {
        let r = gsda_minimize(&L1Norm { dim: 2 }, &[1.0, -2.0], &GsParams::default()).unwrap();
        let p = GsParams::default();
        for w in r.trace.records.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            match a.event {
                Event::Step => assert!(b.eps == a.eps && b.tau == a.tau),
                Event::Shrink | Event::LineSearchFailed => {
                    assert_eq!(b.eps, a.eps * p.mu);
                    assert_eq!(b.tau, a.tau * p.lambda);
                }
                Event::SamplingExhausted => assert_eq!(b.eps, a.eps * p.mu),
            }
        }
    }

    #[test]
    fn parallel_matches_serial() {
        let p = GsParams::default().with_seed(9);
        let a = gsda_minimize(&NsRosenbrock, &[-1.0, 1.0], &p).unwrap();
        let b = gsda_minimize(&NsRosenbrock, &[-1.0, 1.0], &GsParams { parallel: true, ..p }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smooth_estimate_tracks_gradient() {
        // |g - grad f| <= 10 eps L on a quadratic with L = 2
        let obj = Quadratic { center: vec![0.5, -0.25, 1.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = GsParams::default().with_mode(Mode::Average);
        for x in [[0.0, 0.0, 0.0], [1.0, 2.0, -3.0], [0.4, -0.2, 0.9]] {
            let eps = 1e-8;
            let g = approx_subgradient(&obj, &x, eps, &p, &mut rng).unwrap();
            let exact = obj.grad(&x);
            let err: f64 = g.point.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= 10.0 * eps * 2.0, "{err}");
        }
    }

    #[test]
    fn rejects_infeasible_samples() {
        // f = +inf left of zero
        let wall = FnObjective::new(
            1,
            |x: &[f64]| if x[0] < 0.0 { f64::INFINITY } else { x[0] },
            |_: &[f64]| vec![1.0],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GsParams::default().with_m(20);
        let g = approx_subgradient(&wall, &[0.05], 0.1, &p, &mut rng).unwrap();
        assert_eq!(g.point, vec![1.0]);
        // a domain that is a single point cannot be sampled
        let pin = FnObjective::new(
            1,
            |x: &[f64]| if x[0] == 0.0 { 0.0 } else { f64::INFINITY },
            |_: &[f64]| vec![0.0],
        );
        let e = approx_subgradient(&pin, &[0.0], 0.1, &p, &mut rng).unwrap_err();
        assert!(matches!(e, Error::SamplingExhausted { .. }));
    }

    #[test]
    fn params_validation() {
        assert!(GsParams::default().validate().is_ok());
        let bad = GsParams { beta: 1.0, ..GsParams::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "beta"));
        let bad = GsParams { eps_min: 1.0, ..GsParams::default() };
        assert!(bad.validate().is_err());
        let (m, w) = GsParams::default().with_m(2).sample_size(5);
        assert_eq!(m, 2);
        assert!(w.is_some());
        assert_eq!(GsParams::default().sample_size(5), (6, None));
    }
}
