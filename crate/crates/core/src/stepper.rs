//! The `Stepper` contract: "advance this state from `t_start` to `t_end`".
//!
//! Splitting, forcing, multirate, and adjoint drivers only talk to
//! partitions through this trait, so a partition can be integrated by any
//! method, or solved exactly.

use crate::control::ToleranceSpec;
use crate::error::{Error, Result};

pub trait Stepper {
    /// Advances `y` in place from `t_start` to `t_end`. The interval may be
    /// empty (identity) or reversed (integrate backwards).
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()>;

    /// Drops any history carried between calls.
    fn reset(&mut self, _t: f64, _y: &[f64]) {}

    /// Adds a constant vector to the right-hand side for subsequent calls.
    fn set_forcing(&mut self, _forcing: &[f64]) -> Result<()> {
        Err(Error::ForcingUnsupported)
    }

    fn clear_forcing(&mut self) {}

    fn supports_forcing(&self) -> bool {
        false
    }
}

impl<S: Stepper + ?Sized> Stepper for Box<S> {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        (**self).evolve(t_start, t_end, y)
    }
    fn reset(&mut self, t: f64, y: &[f64]) {
        (**self).reset(t, y)
    }
    fn set_forcing(&mut self, forcing: &[f64]) -> Result<()> {
        (**self).set_forcing(forcing)
    }
    fn clear_forcing(&mut self) {
        (**self).clear_forcing()
    }
    fn supports_forcing(&self) -> bool {
        (**self).supports_forcing()
    }
}

impl<S: Stepper + ?Sized> Stepper for &mut S {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        (**self).evolve(t_start, t_end, y)
    }
    fn reset(&mut self, t: f64, y: &[f64]) {
        (**self).reset(t, y)
    }
    fn set_forcing(&mut self, forcing: &[f64]) -> Result<()> {
        (**self).set_forcing(forcing)
    }
    fn clear_forcing(&mut self) {
        (**self).clear_forcing()
    }
    fn supports_forcing(&self) -> bool {
        (**self).supports_forcing()
    }
}

/// What an adaptive inner integrator reports back after an `evolve` call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InnerReport {
    pub steps: usize,
    pub rejections: usize,
    /// Component-wise sum of |local error estimate| over accepted steps.
    pub accumulated_error: Vec<f64>,
    /// WRMS of the last accepted step's estimate under the inner tolerance.
    pub last_estimate: f64,
    /// Sum of accepted step sizes (for mean-step statistics).
    pub total_step: f64,
    /// Size of the last accepted step.
    pub last_step: f64,
}

/// A stepper that controls its own error and accepts a tolerance per call.
pub trait AdaptiveStepper: Stepper {
    fn set_tolerance(&mut self, tol: ToleranceSpec);
    fn tolerance(&self) -> &ToleranceSpec;
    /// Suggested first step for the next `evolve`.
    fn set_step_hint(&mut self, h: f64);
    /// The method's order, as seen by a step controller driving it.
    fn order(&self) -> usize;
    /// Statistics since the previous call to `take_report`.
    fn take_report(&mut self) -> InnerReport;
}

impl<S: AdaptiveStepper + ?Sized> AdaptiveStepper for Box<S> {
    fn set_tolerance(&mut self, tol: ToleranceSpec) {
        (**self).set_tolerance(tol)
    }
    fn tolerance(&self) -> &ToleranceSpec {
        (**self).tolerance()
    }
    fn set_step_hint(&mut self, h: f64) {
        (**self).set_step_hint(h)
    }
    fn order(&self) -> usize {
        (**self).order()
    }
    fn take_report(&mut self) -> InnerReport {
        (**self).take_report()
    }
}

impl<S: AdaptiveStepper + ?Sized> AdaptiveStepper for &mut S {
    fn set_tolerance(&mut self, tol: ToleranceSpec) {
        (**self).set_tolerance(tol)
    }
    fn tolerance(&self) -> &ToleranceSpec {
        (**self).tolerance()
    }
    fn set_step_hint(&mut self, h: f64) {
        (**self).set_step_hint(h)
    }
    fn order(&self) -> usize {
        (**self).order()
    }
    fn take_report(&mut self) -> InnerReport {
        (**self).take_report()
    }
}

/// Exact flow of `y' = 0`.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityStepper;

impl Stepper for IdentityStepper {
    fn evolve(&mut self, _t_start: f64, _t_end: f64, _y: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

/// Exact flow of `y' = A y` for a small dense `A`, via the matrix exponential.
pub struct LinearExactStepper {
    a: nalgebra::DMatrix<f64>,
    forcing: Option<Vec<f64>>,
}

impl LinearExactStepper {
    pub fn new(a: nalgebra::DMatrix<f64>) -> Self {
        Self { a, forcing: None }
    }
}

impl Stepper for LinearExactStepper {
    fn evolve(&mut self, t_start: f64, t_end: f64, y: &mut [f64]) -> Result<()> {
        let dt = t_end - t_start;
        if dt == 0.0 {
            return Ok(());
        }
        let n = y.len();
        crate::error::check_dim(self.a.nrows(), n)?;
        let y0 = nalgebra::DVector::from_column_slice(y);
        let out = match &self.forcing {
            None => (&self.a * dt).exp() * y0,
            Some(f) => {
                // Augment with the constant forcing: d/dt [y; 1] = [[A, f]; [0, 0]] [y; 1].
                let mut aug = nalgebra::DMatrix::zeros(n + 1, n + 1);
                aug.view_mut((0, 0), (n, n)).copy_from(&self.a);
                for i in 0..n {
                    aug[(i, n)] = f[i];
                }
                let mut z = nalgebra::DVector::zeros(n + 1);
                z.rows_mut(0, n).copy_from(&y0);
                z[n] = 1.0;
                let r = (aug * dt).exp() * z;
                r.rows(0, n).into_owned()
            }
        };
        y.copy_from_slice(out.as_slice());
        Ok(())
    }

    fn set_forcing(&mut self, forcing: &[f64]) -> Result<()> {
        crate::error::check_dim(self.a.nrows(), forcing.len())?;
        self.forcing = Some(forcing.to_vec());
        Ok(())
    }

    fn clear_forcing(&mut self) {
        self.forcing = None;
    }

    fn supports_forcing(&self) -> bool {
        true
    }
}
