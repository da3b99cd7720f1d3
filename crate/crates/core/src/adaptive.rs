//! The accept/reject loop shared by every adaptive single-step method.

use std::sync::Arc;

use crate::control::{wrms_two, StepController, ToleranceSpec};
use crate::diagnostics::{Level, LogRecord, Logger};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::system::OdeSystem;

/// One embedded step: write the solution into `y_next` and the local error
/// estimate into `err`. `h` may be negative.
pub trait AdaptiveMethod {
    /// Order seen by the controller (the estimate scales like `h^(order+1)`).
    fn controller_order(&self) -> usize;

    /// Called before each attempt; may shorten the step (never lengthen it).
    fn prepare(&mut self, _sys: &dyn OdeSystem, _t: f64, _y: &[f64], h: f64) -> Result<f64> {
        Ok(h)
    }

    fn attempt(
        &mut self,
        sys: &dyn OdeSystem,
        t: f64,
        y: &[f64],
        h: f64,
        y_next: &mut [f64],
        err: &mut [f64],
    ) -> Result<()>;

    fn on_accept(&mut self, _t_new: f64, _y_new: &[f64]) {}

    fn on_reject(&mut self) {}

    /// Total right-hand-side evaluations so far.
    fn rhs_evals(&self) -> usize;

    /// Label used in log records.
    fn scope(&self) -> &'static str {
        "AdaptiveEvolve"
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveOptions {
    pub tol: ToleranceSpec,
    pub controller: StepController,
    /// Initial step; defaults to `1e-4 · |tf − t0|`.
    pub h0: Option<f64>,
    /// Smallest allowed step; defaults to `10 · eps · |tf − t0|`.
    pub h_min: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    pub logger: Option<Arc<Logger>>,
}

impl AdaptiveOptions {
    pub fn new(tol: ToleranceSpec) -> Self {
        Self {
            tol,
            controller: StepController::default(),
            h0: None,
            h_min: None,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            logger: None,
        }
    }

    pub fn with_h0(mut self, h0: f64) -> Self {
        self.h0 = Some(h0);
        self
    }

    pub fn with_logger(mut self, logger: Arc<Logger>) -> Self {
        self.logger = Some(logger);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub steps: usize,
    pub attempts: usize,
    pub rejections: usize,
    pub rhs_evals: usize,
    pub h_min_used: f64,
    pub h_max_used: f64,
    /// Last accepted step size (magnitude).
    pub h_last: f64,
    /// Controller proposal for the step after the last one.
    pub h_next: f64,
    /// WRMS estimate of the last accepted step.
    pub last_estimate: f64,
    pub largest_accepted_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub y: Vec<f64>,
    pub stats: StepStats,
    /// Component-wise sum of |error estimate| over accepted steps.
    pub accumulated_error: Vec<f64>,
}

/// Integrates from `t0` to `tf` with error control.
///
/// A step is accepted only if its WRMS estimate is at most 1; the final step
/// is shortened to land exactly on `tf`.
pub fn evolve_adaptive(
    method: &mut dyn AdaptiveMethod,
    sys: &dyn OdeSystem,
    opts: &AdaptiveOptions,
    t0: f64,
    tf: f64,
    y0: &[f64],
) -> Result<AdaptiveOutcome> {
    let n = sys.dimension();
    check_dim(n, y0.len())?;
    check_finite(y0, "initial state")?;
    opts.controller.validate()?;
    let span = tf - t0;
    let mut stats = StepStats {
        h_min_used: f64::INFINITY,
        ..Default::default()
    };
    let mut y = y0.to_vec();
    let mut accumulated = vec![0.0; n];
    if span == 0.0 {
        stats.h_min_used = 0.0;
        return Ok(AdaptiveOutcome {
            y,
            stats,
            accumulated_error: accumulated,
        });
    }
    let dir = span.signum();
    let h_min = opts
        .h_min
        .unwrap_or(10.0 * f64::EPSILON * span.abs())
        .max(f64::MIN_POSITIVE);
    let mut h = opts.h0.map(f64::abs).unwrap_or(1e-4 * span.abs()).min(opts.h_max);
    let order = method.controller_order();
    let evals_start = method.rhs_evals();

    let mut y_next = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut t = t0;
    let mut first = true;
    let mut after_reject = false;
    let mut prev_est: Option<f64> = None;
    let log = opts.logger.as_deref().filter(|l| l.enabled(Level::Info));

    while (tf - t) * dir > 0.0 {
        if stats.steps >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        let remaining = (tf - t).abs();
        let mut landing = false;
        if h >= remaining * (1.0 - 4.0 * f64::EPSILON) {
            h = remaining;
            landing = true;
        }
        let prepared = method.prepare(sys, t, &y, h)?;
        if prepared < h {
            h = prepared;
            landing = false;
        }
        if h < h_min {
            return Err(Error::StepSizeTooSmall { t, h });
        }
        stats.attempts += 1;
        if let Some(l) = log {
            l.log(
                &LogRecord::new(Level::Info, method.scope(), "begin-step-attempt")
                    .with("step", stats.steps + 1)
                    .with("tn", t)
                    .with("h", dir * h),
            );
        }
        method.attempt(sys, t, &y, dir * h, &mut y_next, &mut err)?;
        let finite = y_next.iter().all(|v| v.is_finite()) && err.iter().all(|v| v.is_finite());
        let est = if finite {
            wrms_two(&err, &y, &y_next, &opts.tol)
        } else {
            f64::INFINITY
        };
        let accepted = est <= 1.0;
        if let Some(l) = log {
            l.log(
                &LogRecord::new(Level::Info, method.scope(), "end-step-attempt")
                    .with("step", stats.steps + 1)
                    .with("tn", t)
                    .with("h", dir * h)
                    .with("dsm", est)
                    .with("status", if accepted { "success" } else { "failed error test" }),
            );
        }
        if accepted {
            t = if landing { tf } else { t + dir * h };
            std::mem::swap(&mut y, &mut y_next);
            for (a, e) in accumulated.iter_mut().zip(&err) {
                *a += e.abs();
            }
            method.on_accept(t, &y);
            stats.steps += 1;
            stats.h_min_used = stats.h_min_used.min(h);
            stats.h_max_used = stats.h_max_used.max(h);
            stats.h_last = h;
            stats.last_estimate = est;
            stats.largest_accepted_estimate = stats.largest_accepted_estimate.max(est);
            let cap = if first {
                opts.controller.growth_first
            } else if after_reject {
                1.0
            } else {
                opts.controller.growth_max
            };
            h = opts.controller.propose(h, est, prev_est, order, cap);
            prev_est = Some(est.max(1e-10));
            first = false;
            after_reject = false;
        } else {
            stats.rejections += 1;
            method.on_reject();
            h = opts.controller.propose(h, est, None, order, 1.0);
            after_reject = true;
        }
        h = h.min(opts.h_max);
    }
    check_finite(&y, "adaptive solution")?;
    stats.h_next = h;
    stats.rhs_evals = method.rhs_evals() - evals_start;
    if stats.steps == 0 {
        stats.h_min_used = 0.0;
    }
    Ok(AdaptiveOutcome {
        y,
        stats,
        accumulated_error: accumulated,
    })
}
