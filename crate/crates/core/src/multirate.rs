//! Multirate step-size control over a slow/fast operator splitting.
//!
//! A slow step of size `H` composes one explicit Runge–Kutta step of the
//! slow right-hand side with an adaptive inner integration of the fast
//! partition, as Lie–Trotter (slow, then fast) or Strang (half fast, slow,
//! half fast). The slow error estimate is a step-doubling difference.
//!
//! Two controller families:
//!
//! * decoupled: `H' = slow(H, est_slow, q)` and `h' = fast(h, est_fast, p)`
//!   with no cross terms; the inner tolerance stays fixed.
//! * stepsize-tolerance: `H` as above, and the inner tolerance factor
//!   follows `tolfac' = safety · tolfac · est_fast^(−1/k)`, growth-capped and
//!   clamped to `[tolfac_min, 1]`. Here `est_fast` is the WRMS of the inner
//!   integrator's accumulated error estimates over the slow step, divided by
//!   the fast share of the outer tolerance.
//!
//! [`MultirateStepper`] implements [`AdaptiveStepper`] itself, so a
//! multirate integrator can serve as the fast partition of another one.

use std::sync::Arc;

use crate::control::{wrms_two, StepController, ToleranceSpec};
use crate::diagnostics::{Level, LogRecord, Logger};
use crate::erk::{builtin_table, ButcherTable, ErkWorkspace};
use crate::error::{check_dim, Error, Result};
use crate::stepper::{AdaptiveStepper, InnerReport, Stepper};
use crate::system::OdeSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultirateKind {
    Decoupled,
    StepsizeTolerance,
}

/// How the slow step and the fast flow are composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlowSplit {
    LieTrotter,
    Strang,
}

impl SlowSplit {
    pub fn order(self) -> usize {
        match self {
            SlowSplit::LieTrotter => 1,
            SlowSplit::Strang => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultirateConfig {
    pub kind: MultirateKind,
    pub split: SlowSplit,
    /// Table for the single slow step; its order should be at least the split order.
    pub slow_table: ButcherTable,
    pub slow_controller: StepController,
    /// Decoupled family only.
    pub fast_controller: StepController,
    /// Stepsize-tolerance family only; uses `safety` and `growth_max`.
    pub tolfac_controller: StepController,
    /// Fixed inner tolerance of the decoupled family; `None` uses the outer
    /// tolerance scaled by `tolfac`.
    pub inner_tol: Option<ToleranceSpec>,
    /// Exponent denominator `k` of the tolfac law (accumulated fast error ∝ tolfac^k).
    pub tolfac_order: usize,
    /// Initial inner tolerance factor.
    pub tolfac: f64,
    pub tolfac_min: f64,
    /// Fraction of the outer tolerance granted to accumulated fast error.
    pub fast_share: f64,
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
    /// Retries with a quartered `H` after an inner integration failure.
    pub max_inner_retries: usize,
    pub logger: Option<Arc<Logger>>,
}

impl Default for MultirateConfig {
    fn default() -> Self {
        Self {
            kind: MultirateKind::Decoupled,
            split: SlowSplit::Strang,
            slow_table: builtin_table("rk4").expect("built-in table"),
            slow_controller: StepController::default(),
            fast_controller: StepController::default(),
            tolfac_controller: StepController::default(),
            inner_tol: None,
            tolfac_order: 1,
            tolfac: 1.0,
            tolfac_min: 1e-5,
            fast_share: 0.5,
            h0: None,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            max_inner_retries: 3,
            logger: None,
        }
    }
}

impl MultirateConfig {
    pub fn new(kind: MultirateKind, split: SlowSplit) -> Self {
        Self {
            kind,
            split,
            ..Self::default()
        }
    }

    pub fn with_logger(mut self, logger: Arc<Logger>) -> Self {
        self.logger = Some(logger);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.slow_controller.validate()?;
        self.fast_controller.validate()?;
        self.tolfac_controller.validate()?;
        if !(self.tolfac_min > 0.0 && self.tolfac_min <= 1.0) {
            return Err(Error::invalid("tolfac_min must lie in (0, 1]"));
        }
        if !(self.tolfac >= self.tolfac_min && self.tolfac <= 1.0) {
            return Err(Error::invalid("tolfac must lie in [tolfac_min, 1]"));
        }
        if self.tolfac_order == 0 {
            return Err(Error::invalid("tolfac_order must be positive"));
        }
        if !(self.fast_share > 0.0) {
            return Err(Error::invalid("fast_share must be positive"));
        }
        if !(self.h_max > 0.0) {
            return Err(Error::invalid("h_max must be positive"));
        }
        Ok(())
    }
}

/// `y_n − ỹ_n` from step doubling, with its WRMS under the outer tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowErrorEstimate {
    pub est_vector: Vec<f64>,
    pub est_wrms: f64,
}

/// Decoupled update: `(H_next, h_next)` from two independent controllers.
/// `orders` are the slow split order and the fast method order.
pub fn decoupled_update(
    cfg: &MultirateConfig,
    h_slow: f64,
    h_fast: f64,
    est_slow_wrms: f64,
    est_fast_wrms: f64,
    orders: (usize, usize),
) -> (f64, f64) {
    (
        cfg.slow_controller.next_step(h_slow, est_slow_wrms, orders.0),
        cfg.fast_controller.next_step(h_fast, est_fast_wrms, orders.1),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtolUpdate {
    pub h_slow: f64,
    pub tolfac: f64,
    /// The lower clamp engaged.
    pub clamped: bool,
}

/// Stepsize-tolerance update. Logs a warning when `tolfac` hits `tolfac_min`.
pub fn htol_update(
    cfg: &MultirateConfig,
    h_slow: f64,
    tolfac: f64,
    est_slow_wrms: f64,
    est_fast_accum_wrms: f64,
) -> HtolUpdate {
    let h_next = cfg.slow_controller.next_step(h_slow, est_slow_wrms, cfg.split.order());
    let ctrl = &cfg.tolfac_controller;
    let cap = ctrl.growth_max * tolfac;
    let raw = if est_fast_accum_wrms > 0.0 {
        let k = cfg.tolfac_order as f64;
        (ctrl.safety * tolfac * est_fast_accum_wrms.powf(-1.0 / k)).min(cap)
    } else {
        cap
    };
    let clamped = !(raw >= cfg.tolfac_min);
    let next = if clamped { cfg.tolfac_min } else { raw.min(1.0) };
    if clamped {
        if let Some(l) = cfg.logger.as_deref() {
            l.log(
                &LogRecord::new(Level::Warning, "MultirateStep", "tolfac-clamped")
                    .with("requested", raw)
                    .with("tolfac", next),
            );
        }
    }
    HtolUpdate {
        h_slow: h_next,
        tolfac: next,
        clamped,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultirateStats {
    pub slow_steps: usize,
    pub slow_attempts: usize,
    pub slow_rejections: usize,
    /// Accepted slow step sizes, in order.
    pub slow_step_sizes: Vec<f64>,
    /// WRMS slow estimates of accepted steps.
    pub slow_estimates: Vec<f64>,
    pub inner_steps: usize,
    pub inner_rejections: usize,
    /// Total time covered by inner integrations, including step-doubling work.
    pub inner_span: f64,
    /// Inner tolerance factor in force after each accepted slow step.
    pub tolfac_history: Vec<f64>,
    pub tolfac_clamps: usize,
    pub inner_retries: usize,
}

impl MultirateStats {
    pub fn mean_slow_step(&self) -> f64 {
        if self.slow_step_sizes.is_empty() {
            return 0.0;
        }
        self.slow_step_sizes.iter().sum::<f64>() / self.slow_step_sizes.len() as f64
    }

    pub fn mean_inner_step(&self) -> f64 {
        if self.inner_steps == 0 {
            return 0.0;
        }
        self.inner_span / self.inner_steps as f64
    }
}

/// Inner statistics gathered over the fine half of a doubled step.
#[derive(Debug, Clone, Default)]
struct FastAccum {
    accumulated: Vec<f64>,
    last_step: f64,
    last_estimate: f64,
}

pub struct MultirateStepper<S, F> {
    cfg: MultirateConfig,
    slow: S,
    fast: F,
    tol: ToleranceSpec,
    h_slow: Option<f64>,
    h_fast: Option<f64>,
    tolfac: f64,
    stats: MultirateStats,
    report: InnerReport,
    ws: ErkWorkspace,
    tmp: Vec<f64>,
}

impl<S: OdeSystem, F: AdaptiveStepper> MultirateStepper<S, F> {
    pub fn new(cfg: MultirateConfig, slow: S, fast: F, tol: ToleranceSpec) -> Result<Self> {
        cfg.validate()?;
        let tolfac = cfg.tolfac;
        Ok(Self {
            cfg,
            slow,
            fast,
            tol,
            h_slow: None,
            h_fast: None,
            tolfac,
            stats: MultirateStats::default(),
            report: InnerReport::default(),
            ws: ErkWorkspace::default(),
            tmp: Vec::new(),
        })
    }

    pub fn config(&self) -> &MultirateConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &MultirateStats {
        &self.stats
    }

    pub fn fast(&self) -> &F {
        &self.fast
    }

    pub fn fast_mut(&mut self) -> &mut F {
        &mut self.fast
    }

    pub fn tolfac(&self) -> f64 {
        self.tolfac
    }

    pub fn into_parts(self) -> (S, F, MultirateStats) {
        (self.slow, self.fast, self.stats)
    }

    fn inner_tol(&self) -> ToleranceSpec {
        match (&self.cfg.kind, &self.cfg.inner_tol) {
            (MultirateKind::Decoupled, Some(t)) => t.clone(),
            _ => self.tol.scaled(self.tolfac),
        }
    }

    fn slow_piece(&mut self, t: f64, y: &mut [f64], h: f64) -> Result<()> {
        self.tmp.resize(y.len(), 0.0);
        self.ws
            .step(&self.cfg.slow_table, &self.slow, t, y, h, &mut self.tmp, None)?;
        y.copy_from_slice(&self.tmp);
        Ok(())
    }

    fn fast_piece(&mut self, t0: f64, t1: f64, y: &mut [f64], acc: Option<&mut FastAccum>) -> Result<()> {
        if t0 == t1 {
            return Ok(());
        }
        if let Some(h) = self.h_fast {
            self.fast.set_step_hint(h);
        }
        let res = self.fast.evolve(t0, t1, y);
        let r = self.fast.take_report();
        self.stats.inner_steps += r.steps;
        self.stats.inner_rejections += r.rejections;
        self.stats.inner_span += r.total_step;
        res?;
        if let Some(acc) = acc {
            if acc.accumulated.len() != y.len() {
                acc.accumulated = vec![0.0; y.len()];
            }
            for (a, e) in acc.accumulated.iter_mut().zip(&r.accumulated_error) {
                *a += e;
            }
            acc.last_step = r.last_step;
            acc.last_estimate = r.last_estimate;
        }
        Ok(())
    }

    fn split_step(&mut self, t: f64, y: &mut [f64], h: f64, mut acc: Option<&mut FastAccum>) -> Result<()> {
        match self.cfg.split {
            SlowSplit::LieTrotter => {
                self.slow_piece(t, y, h)?;
                self.fast_piece(t, t + h, y, acc)
            }
            SlowSplit::Strang => {
                let mid = t + 0.5 * h;
                self.fast_piece(t, mid, y, acc.as_deref_mut())?;
                self.slow_piece(t, y, h)?;
                self.fast_piece(mid, t + h, y, acc)
            }
        }
    }

    /// Step doubling from `(t, y)`: returns the two-half-step solution and
    /// the difference to the single-step solution.
    pub fn slow_error_estimate(&mut self, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, SlowErrorEstimate)> {
        let (fine, est, _) = self.doubled(t, y, h)?;
        Ok((fine, est))
    }

    fn doubled(&mut self, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, SlowErrorEstimate, FastAccum)> {
        check_dim(self.slow.dimension(), y.len())?;
        self.fast.set_tolerance(self.inner_tol());
        let mut coarse = y.to_vec();
        self.split_step(t, &mut coarse, h, None)?;
        let mut acc = FastAccum::default();
        let mut fine = y.to_vec();
        let half = 0.5 * h;
        self.split_step(t, &mut fine, half, Some(&mut acc))?;
        self.split_step(t + half, &mut fine, half, Some(&mut acc))?;
        let est_vector: Vec<f64> = fine.iter().zip(&coarse).map(|(a, b)| a - b).collect();
        let est_wrms = if est_vector.iter().all(|v| v.is_finite()) {
            wrms_two(&est_vector, y, &fine, &self.tol)
        } else {
            f64::INFINITY
        };
        Ok((
            fine,
            SlowErrorEstimate {
                est_vector,
                est_wrms,
            },
            acc,
        ))
    }

    fn advance(&mut self, t0: f64, t1: f64, y: &mut [f64]) -> Result<()> {
        check_dim(self.slow.dimension(), y.len())?;
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(());
        }
        if span < 0.0 {
            return Err(Error::invalid("multirate integration runs forward in time only"));
        }
        let q = self.cfg.split.order();
        let h_min = 10.0 * f64::EPSILON * t0.abs().max(t1.abs()).max(span);
        let mut h = self
            .h_slow
            .or(self.cfg.h0)
            .unwrap_or(1e-2 * span)
            .min(self.cfg.h_max);
        let log = self.cfg.logger.clone().filter(|l| l.enabled(Level::Info));
        let mut t = t0;
        let mut steps = 0usize;
        let mut after_reject = false;
        let mut retries = 0usize;
        while t < t1 {
            if steps >= self.cfg.max_steps {
                return Err(Error::TooManySteps(self.cfg.max_steps));
            }
            let remaining = t1 - t;
            let landing = h >= remaining * (1.0 - 4.0 * f64::EPSILON);
            if landing {
                h = remaining;
            }
            if h < h_min {
                return Err(Error::StepSizeTooSmall { t, h });
            }
            self.stats.slow_attempts += 1;
            if let Some(l) = log.as_deref() {
                l.log(
                    &LogRecord::new(Level::Info, "MultirateStep", "begin-step-attempt")
                        .with("step", self.stats.slow_steps + 1)
                        .with("tn", t)
                        .with("H", h)
                        .with("tolfac", self.tolfac),
                );
            }
            let (fine, est, acc) = match self.doubled(t, y, h) {
                Ok(v) => {
                    retries = 0;
                    v
                }
                Err(e) if retries < self.cfg.max_inner_retries => {
                    if let Some(l) = log.as_deref() {
                        l.log(
                            &LogRecord::new(Level::Info, "MultirateStep", "inner-failure")
                                .with("tn", t)
                                .with("H", h)
                                .with("error", e.to_string()),
                        );
                    }
                    retries += 1;
                    self.stats.inner_retries += 1;
                    h *= 0.25;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let accepted = est.est_wrms <= 1.0;
            if let Some(l) = log.as_deref() {
                l.log(
                    &LogRecord::new(Level::Info, "MultirateStep", "end-step-attempt")
                        .with("step", self.stats.slow_steps + 1)
                        .with("tn", t)
                        .with("H", h)
                        .with("dsm", est.est_wrms)
                        .with("status", if accepted { "success" } else { "failed error test" }),
                );
            }
            if !accepted {
                self.stats.slow_rejections += 1;
                self.report.rejections += 1;
                h = self.cfg.slow_controller.propose(h, est.est_wrms, None, q, 1.0);
                after_reject = true;
                continue;
            }
            t = if landing { t1 } else { t + h };
            y.copy_from_slice(&fine);
            steps += 1;
            self.stats.slow_steps += 1;
            self.stats.slow_step_sizes.push(h);
            self.stats.slow_estimates.push(est.est_wrms);
            self.report_accept(h, &est);

            let h_next = match self.cfg.kind {
                MultirateKind::Decoupled => {
                    let (hs, hf) = decoupled_update(
                        &self.cfg,
                        h,
                        acc.last_step,
                        est.est_wrms,
                        acc.last_estimate,
                        (q, self.fast.order()),
                    );
                    if acc.last_step > 0.0 {
                        self.h_fast = Some(hf);
                    }
                    hs
                }
                MultirateKind::StepsizeTolerance => {
                    let fast_est = if acc.accumulated.is_empty() {
                        0.0
                    } else {
                        wrms_two(&acc.accumulated, y, y, &self.tol) / self.cfg.fast_share
                    };
                    let upd = htol_update(&self.cfg, h, self.tolfac, est.est_wrms, fast_est);
                    self.tolfac = upd.tolfac;
                    if upd.clamped {
                        self.stats.tolfac_clamps += 1;
                    }
                    upd.h_slow
                }
            };
            self.stats.tolfac_history.push(self.tolfac);
            h = if after_reject { h_next.min(h) } else { h_next };
            h = h.min(self.cfg.h_max);
            after_reject = false;
        }
        self.h_slow = Some(h);
        Ok(())
    }

    fn report_accept(&mut self, h: f64, est: &SlowErrorEstimate) {
        let r = &mut self.report;
        r.steps += 1;
        r.total_step += h;
        r.last_step = h;
        r.last_estimate = est.est_wrms;
        if r.accumulated_error.len() != est.est_vector.len() {
            r.accumulated_error = vec![0.0; est.est_vector.len()];
        }
        for (a, e) in r.accumulated_error.iter_mut().zip(&est.est_vector) {
            *a += e.abs();
        }
    }
}

impl<S: OdeSystem, F: AdaptiveStepper> Stepper for MultirateStepper<S, F> {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        self.advance(t_start, t_end, y)
    }

    fn reset(&mut self, t: f64, y: &[f64]) {
        self.h_slow = None;
        self.h_fast = None;
        self.tolfac = self.cfg.tolfac;
        self.report = InnerReport::default();
        self.fast.reset(t, y);
    }
}

impl<S: OdeSystem, F: AdaptiveStepper> AdaptiveStepper for MultirateStepper<S, F> {
    fn set_tolerance(&mut self, tol: ToleranceSpec) {
        self.tol = tol;
    }

    fn tolerance(&self) -> &ToleranceSpec {
        &self.tol
    }

    fn set_step_hint(&mut self, h: f64) {
        if h > 0.0 {
            self.h_slow = Some(h);
        }
    }

    fn order(&self) -> usize {
        self.cfg.split.order()
    }

    fn take_report(&mut self) -> InnerReport {
        std::mem::take(&mut self.report)
    }
}

#[derive(Debug, Clone)]
pub struct MultirateOutcome {
    pub y: Vec<f64>,
    pub stats: MultirateStats,
}

/// Integrates `y' = f_slow + f_fast` from `t0` to `tf`, where `fast` is an
/// adaptive integrator of the fast partition.
#[allow(clippy::too_many_arguments)]
pub fn multirate_evolve<S: OdeSystem, F: AdaptiveStepper>(
    cfg: &MultirateConfig,
    slow_rhs: S,
    fast: F,
    t0: f64,
    tf: f64,
    y0: &[f64],
    tol: ToleranceSpec,
) -> Result<MultirateOutcome> {
    let mut m = MultirateStepper::new(cfg.clone(), slow_rhs, fast, tol)?;
    let mut y = y0.to_vec();
    m.evolve(t0, tf, &mut y)?;
    Ok(MultirateOutcome {
        y,
        stats: m.stats,
    })
}
