//! Operator splitting over per-partition [`Stepper`]s, and the forcing
//! method for two partitions.
//!
//! Within a stage, partitions run in ascending order; the flow listed last
//! in a composition is the one applied first.

mod coefficients;

use std::sync::Arc;

pub use coefficients::{
    compose, default_methods, lie_trotter, parallel, splitting_by_name, strang, third_order, CompositionScheme,
    SplittingCoefficients,
};

use crate::diagnostics::{Level, LogRecord, Logger};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::stepper::Stepper;

fn substep_error(i: usize, j: usize, k: usize, source: Error) -> Error {
    Error::Substep {
        i,
        j,
        k,
        source: Box::new(source),
    }
}

/// Runs one sequential method from `y` in place.
fn run_sequence<S: Stepper>(coeffs: &SplittingCoefficients, steppers: &mut [S], i: usize, t: f64, y: &mut [f64], h: f64) -> Result<()> {
    for j in 0..coeffs.stages() {
        for (k, stepper) in steppers.iter_mut().enumerate() {
            let (b0, b1) = (coeffs.beta(i, j, k), coeffs.beta(i, j + 1, k));
            if b0 == b1 {
                continue;
            }
            stepper
                .evolve(t + b0 * h, t + b1 * h, y)
                .map_err(|e| substep_error(i, j, k, e))?;
        }
    }
    Ok(())
}

/// One splitting step of size `h` from `(t, y)`, in place. Zero-width
/// subintegrations are skipped. On failure the error names the sequential
/// method, stage and partition (all 0-based) and `y` is unspecified.
pub fn splitting_step<S: Stepper>(coeffs: &SplittingCoefficients, steppers: &mut [S], t: f64, y: &mut [f64], h: f64) -> Result<()> {
    check_dim(coeffs.partitions(), steppers.len())?;
    if coeffs.sequential_methods() == 1 {
        run_sequence(coeffs, steppers, 0, t, y, h)?;
        return Ok(());
    }
    let y0 = y.to_vec();
    let mut acc = vec![0.0; y.len()];
    let mut work = vec![0.0; y.len()];
    for (i, &a) in coeffs.alpha().iter().enumerate() {
        work.copy_from_slice(&y0);
        run_sequence(coeffs, steppers, i, t, &mut work, h)?;
        crate::vector::axpy(a, &work, &mut acc);
    }
    y.copy_from_slice(&acc);
    Ok(())
}

/// A splitting method with its partition steppers, taking fixed steps.
///
/// As a [`Stepper`] it covers `[t_start, t_end]` with equal steps no larger
/// than the configured step size.
pub struct SplittingStepper<S> {
    coeffs: SplittingCoefficients,
    steppers: Vec<S>,
    h: f64,
    logger: Option<Arc<Logger>>,
    steps: usize,
}

impl<S: Stepper> SplittingStepper<S> {
    pub fn new(coeffs: SplittingCoefficients, steppers: Vec<S>, h: f64) -> Result<Self> {
        check_dim(coeffs.partitions(), steppers.len())?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("step size must be positive"));
        }
        Ok(Self {
            coeffs,
            steppers,
            h,
            logger: None,
            steps: 0,
        })
    }

    pub fn with_logger(mut self, logger: Arc<Logger>) -> Self {
        self.logger = Some(logger);
        self
    }

    pub fn coefficients(&self) -> &SplittingCoefficients {
        &self.coeffs
    }

    pub fn steppers(&self) -> &[S] {
        &self.steppers
    }

    pub fn steppers_mut(&mut self) -> &mut [S] {
        &mut self.steppers
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn set_step_size(&mut self, h: f64) -> Result<()> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("step size must be positive"));
        }
        self.h = h;
        Ok(())
    }

    /// Steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One step of size `h` with begin/end records at INFO level.
    pub fn step(&mut self, t: f64, y: &mut [f64], h: f64) -> Result<()> {
        let log = self.logger.clone().filter(|l| l.enabled(Level::Info));
        let record = |label: &str| {
            LogRecord::new(Level::Info, "SplittingStep", label)
                .with("step", self.steps + 1)
                .with("tn", t)
                .with("h", h)
        };
        if let Some(l) = &log {
            l.log(&record("begin-step-attempt"));
        }
        let result = splitting_step(&self.coeffs, &mut self.steppers, t, y, h);
        if let Some(l) = &log {
            let status = match &result {
                Ok(()) => "success".to_string(),
                Err(e) => format!("failed: {e}"),
            };
            l.log(&record("end-step-attempt").with("status", status));
        }
        result?;
        self.steps += 1;
        Ok(())
    }

    /// Integrates from `t0` to `tf` with `ceil(|tf − t0| / h)` equal steps.
    pub fn evolve_to(&mut self, t0: f64, tf: f64, y: &mut [f64]) -> Result<()> {
        let span = tf - t0;
        if span == 0.0 {
            return Ok(());
        }
        let n = ((span.abs() / self.h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for m in 0..n {
            self.step(t0 + m as f64 * h, y, h)?;
        }
        check_finite(y, "splitting solution")
    }
}

impl<S: Stepper> Stepper for SplittingStepper<S> {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        self.evolve_to(t_start, t_end, y)
    }

    fn reset(&mut self, t: f64, y: &[f64]) {
        for s in &mut self.steppers {
            s.reset(t, y);
        }
    }
}

/// One forcing-method step, in place: partition 1 is evolved over the step,
/// its mean tendency `f₁* = (v₁(t+h) − y)/h` is added as a constant forcing
/// to partition 2, and partition 2 is evolved from the original `y`.
pub fn forcing_step<S1: Stepper, S2: Stepper>(s1: &mut S1, s2: &mut S2, t: f64, y: &mut [f64], h: f64) -> Result<()> {
    if !s2.supports_forcing() {
        return Err(Error::ForcingUnsupported);
    }
    if h == 0.0 {
        return Ok(());
    }
    let mut v1 = y.to_vec();
    s1.evolve(t, t + h, &mut v1).map_err(|e| substep_error(0, 0, 0, e))?;
    let forcing: Vec<f64> = v1.iter().zip(y.iter()).map(|(a, b)| (a - b) / h).collect();
    s2.set_forcing(&forcing)?;
    let r = s2.evolve(t, t + h, y);
    s2.clear_forcing();
    r.map_err(|e| substep_error(0, 0, 1, e))
}

/// The forcing method with fixed steps. Construction fails if the second
/// stepper cannot take a forcing term.
pub struct ForcingStepper<S1, S2> {
    s1: S1,
    s2: S2,
    h: f64,
    logger: Option<Arc<Logger>>,
    steps: usize,
}

impl<S1: Stepper, S2: Stepper> ForcingStepper<S1, S2> {
    pub fn new(s1: S1, s2: S2, h: f64) -> Result<Self> {
        if !s2.supports_forcing() {
            return Err(Error::ForcingUnsupported);
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("step size must be positive"));
        }
        Ok(Self {
            s1,
            s2,
            h,
            logger: None,
            steps: 0,
        })
    }

    pub fn with_logger(mut self, logger: Arc<Logger>) -> Self {
        self.logger = Some(logger);
        self
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, t: f64, y: &mut [f64], h: f64) -> Result<()> {
        let log = self.logger.clone().filter(|l| l.enabled(Level::Info));
        if let Some(l) = &log {
            l.log(
                &LogRecord::new(Level::Info, "ForcingStep", "begin-step-attempt")
                    .with("step", self.steps + 1)
                    .with("tn", t)
                    .with("h", h),
            );
        }
        forcing_step(&mut self.s1, &mut self.s2, t, y, h)?;
        self.steps += 1;
        if let Some(l) = &log {
            l.log(
                &LogRecord::new(Level::Info, "ForcingStep", "end-step-attempt")
                    .with("step", self.steps)
                    .with("tn", t)
                    .with("h", h)
                    .with("status", "success"),
            );
        }
        Ok(())
    }

    pub fn evolve_to(&mut self, t0: f64, tf: f64, y: &mut [f64]) -> Result<()> {
        let span = tf - t0;
        if span == 0.0 {
            return Ok(());
        }
        let n = ((span.abs() / self.h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for m in 0..n {
            self.step(t0 + m as f64 * h, y, h)?;
        }
        check_finite(y, "forcing-method solution")
    }
}

impl<S1: Stepper, S2: Stepper> Stepper for ForcingStepper<S1, S2> {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        self.evolve_to(t_start, t_end, y)
    }

    fn reset(&mut self, t: f64, y: &[f64]) {
        self.s1.reset(t, y);
        self.s2.reset(t, y);
    }
}
