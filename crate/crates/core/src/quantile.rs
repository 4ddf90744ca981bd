//! Additive quantile regression by gradient sampling and local scoring.
//!
//! The iterate is the vector of fitted quantiles, one per observation. Each
//! iteration averages pinball subgradients sampled around it, smooths the
//! average onto the additive space and line-searches along the negative of
//! the smoothed direction. The additive decomposition is accumulated along
//! the way, so the reported components sum to the fitted quantiles exactly.

use crate::engine::{backtrack, reduce_gradients, sample_gradients, Event, FitTrace, GsParams, Schedule, TraceRecord};
use crate::error::{invalid, Result};
use crate::linalg::{dot, norm};
use crate::minnorm::GradientSet;
use crate::smoothing::{AdditiveFit, AdditiveProjector, Covariate, Prediction, SmootherSpec};

/// Sum of the check losses `(1 - alpha)(y - q)^- + alpha (y - q)^+`.
pub fn pinball_loss(q: &[f64], y: &[f64], alpha: f64) -> f64 {
    q.iter()
        .zip(y)
        .map(|(&qi, &yi)| {
            let r = yi - qi;
            if r < 0.0 {
                -(1.0 - alpha) * r
            } else {
                alpha * r
            }
        })
        .sum()
}

/// Elementwise derivative of the check loss in `q`; ties take the `1 - alpha` branch.
pub fn pinball_grad(q: &[f64], y: &[f64], alpha: f64) -> Vec<f64> {
    q.iter()
        .zip(y)
        .map(|(&qi, &yi)| if yi - qi > 0.0 { -alpha } else { 1.0 - alpha })
        .collect()
}

/// Lower sample quantile: the `ceil(n alpha)`-th order statistic, a minimizer
/// of the pinball loss over constants.
pub fn sample_quantile(y: &[f64], alpha: f64) -> f64 {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((s.len() as f64 * alpha).ceil() as usize).clamp(1, s.len());
    s[k - 1]
}

#[derive(Debug, Clone)]
pub struct QuantileModel {
    pub alpha: f64,
    pub q: Vec<f64>,
    pub projector: AdditiveProjector,
    pub decomposition: AdditiveFit,
    pub trace: FitTrace,
}

impl QuantileModel {
    /// Fraction of observations at or below their fitted quantile.
    pub fn coverage(&self, y: &[f64]) -> f64 {
        let hits = self.q.iter().zip(y).filter(|(q, y)| y <= q).count();
        hits as f64 / y.len() as f64
    }

    pub fn objective(&self) -> f64 {
        self.trace.final_objective()
    }
}

/// Fits `q_alpha(w) = a0 + sum_j f_j(w_j)` minimizing the pinball risk.
///
/// `covariates` are indexed by the smoother specs; an empty spec list fits
/// the intercept alone.
pub fn fit_quantile_additive(
    y: &[f64],
    covariates: &[Covariate],
    alpha: f64,
    specs: &[SmootherSpec],
    gs: &GsParams,
) -> Result<QuantileModel> {
    fit_quantile_additive_from(y, covariates, alpha, specs, gs, None)
}

/// As [`fit_quantile_additive`], starting from the constant `start` instead
/// of the sample quantile when given.
pub fn fit_quantile_additive_from(
    y: &[f64],
    covariates: &[Covariate],
    alpha: f64,
    specs: &[SmootherSpec],
    gs: &GsParams,
    start: Option<f64>,
) -> Result<QuantileModel> {
    gs.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("quantile level must lie in (0, 1), got {alpha}")));
    }
    let n = y.len();
    if n < specs.len() + 2 {
        return Err(invalid(format!("{n} observations are too few for {} components", specs.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("response has non-finite values"));
    }
    let projector = AdditiveProjector::new(n, covariates, specs)?;

    let mut fit = projector.constant(start.unwrap_or_else(|| sample_quantile(y, alpha)));
    let mut q = fit.fitted.clone();
    let mut f = pinball_loss(&q, y, alpha);
    let mut trace = FitTrace::new(f);
    for w in &projector.warnings {
        trace.warnings.push(w.clone());
    }
    let (m, warn) = gs.sample_size(n);
    if let Some(w) = warn {
        trace.warn(w);
    }
    let mut rng = gs.rng();
    let mut sched = Schedule::new(gs);
    let mut trial = vec![0.0; n];

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
        let grads = sample_gradients(&q, sched.eps, m, gs.parallel, &mut rng, |_| true, |p| {
            pinball_grad(p, y, alpha)
        })?;
        let g = reduce_gradients(&GradientSet::new(grads)?, gs.subgradient_mode, gs.qp_tol)?;
        rec.method = g.method;

        let smoothed = projector.project(&g.point)?;
        let s_norm = norm(&smoothed.fitted);
        rec.g_norm = s_norm;
        if s_norm <= sched.tau {
            sched.shrink();
            trace.records.push(rec);
            continue;
        }
        // d = -s(g)/|s(g)|; the decrease rate is -d'g
        let decrease = dot(&smoothed.fitted, &g.point) / s_norm;
        rec.decrease = decrease;
        let step = if decrease > 0.0 {
            backtrack(
                |t| {
                    for ((p, qi), si) in trial.iter_mut().zip(&q).zip(&smoothed.fitted) {
                        *p = qi - t * si / s_norm;
                    }
                    pinball_loss(&trial, y, alpha)
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
            Some(s) => {
                let scale = -s.t / s_norm;
                for (qi, si) in q.iter_mut().zip(&smoothed.fitted) {
                    *qi += scale * si;
                }
                fit.axpy(scale, &smoothed);
                f = s.f_new;
                rec.f = f;
                rec.t = s.t;
                rec.backtracks = s.backtracks;
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
        trace.warn(format!("quantile fit stopped at max_iter = {} before convergence", gs.max_iter));
    }
    Ok(QuantileModel { alpha, q, projector, decomposition: fit, trace })
}

/// Evaluates a fitted model at new covariate rows.
pub fn predict_quantile(model: &QuantileModel, covariates: &[Covariate]) -> Result<Prediction> {
    model.projector.predict(&model.decomposition, covariates)
}
