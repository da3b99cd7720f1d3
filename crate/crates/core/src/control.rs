//! Tolerances, the weighted RMS norm, and single-rate step-size controllers.

use crate::error::{check_dim, Error, Result};

/// Absolute tolerance, either one value for every component or one per component.
#[derive(Debug, Clone, PartialEq)]
pub enum AbsTol {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceSpec {
    pub reltol: f64,
    pub abstol: AbsTol,
}

impl Default for ToleranceSpec {
    /// `reltol = 1e-6`, `abstol = 1e-9`.
    fn default() -> Self {
        Self {
            reltol: 1e-6,
            abstol: AbsTol::Scalar(1e-9),
        }
    }
}

impl ToleranceSpec {
    pub fn new(reltol: f64, abstol: f64) -> Result<Self> {
        if !(reltol > 0.0) || !(abstol > 0.0) {
            return Err(Error::invalid("tolerances must be strictly positive"));
        }
        Ok(Self {
            reltol,
            abstol: AbsTol::Scalar(abstol),
        })
    }

    pub fn with_vector_abstol(reltol: f64, abstol: Vec<f64>) -> Result<Self> {
        if !(reltol > 0.0) || abstol.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::invalid("tolerances must be strictly positive"));
        }
        Ok(Self {
            reltol,
            abstol: AbsTol::Vector(abstol),
        })
    }

    #[inline]
    fn abstol_at(&self, i: usize) -> f64 {
        match &self.abstol {
            AbsTol::Scalar(a) => *a,
            AbsTol::Vector(v) => v[i],
        }
    }

    /// Same tolerance with the relative part scaled; used for inner solves.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |a: f64| a * factor;
        Self {
            reltol: self.reltol * factor,
            abstol: match &self.abstol {
                AbsTol::Scalar(a) => AbsTol::Scalar(scale(*a)),
                AbsTol::Vector(v) => AbsTol::Vector(v.iter().map(|a| scale(*a)).collect()),
            },
        }
    }
}

/// `sqrt( (1/n) Σ (e_i / (reltol |y_i| + abstol_i))² )`
///
/// A value of at most 1 means the error is within tolerance.
pub fn wrms_norm(e: &[f64], y: &[f64], tol: &ToleranceSpec) -> Result<f64> {
    check_dim(y.len(), e.len())?;
    if let AbsTol::Vector(v) = &tol.abstol {
        check_dim(y.len(), v.len())?;
    }
    Ok(wrms_unchecked(e, y, tol))
}

pub(crate) fn wrms_unchecked(e: &[f64], y: &[f64], tol: &ToleranceSpec) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let sum: f64 = e
        .iter()
        .zip(y)
        .enumerate()
        .map(|(i, (ei, yi))| {
            let w = ei / (tol.reltol * yi.abs() + tol.abstol_at(i));
            w * w
        })
        .sum();
    (sum / e.len() as f64).sqrt()
}

/// Weighted RMS with weights taken from the larger of two states, so a
/// step is judged against both its start and its end.
pub(crate) fn wrms_two(e: &[f64], y0: &[f64], y1: &[f64], tol: &ToleranceSpec) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let sum: f64 = e
        .iter()
        .enumerate()
        .map(|(i, ei)| {
            let w = ei / (tol.reltol * y0[i].abs().max(y1[i].abs()) + tol.abstol_at(i));
            w * w
        })
        .sum();
    (sum / e.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    /// `h' = safety · h · est^(-1/(q+1))`
    I,
    /// `h' = safety · h · est^(-k1/(q+1)) · est_prev^(k2/(q+1))`
    PI,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepController {
    pub kind: ControllerKind,
    pub safety: f64,
    pub growth_max: f64,
    /// Growth cap applied on the very first step only.
    pub growth_first: f64,
    pub shrink_min: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            kind: ControllerKind::I,
            safety: 0.9,
            growth_max: 10.0,
            growth_first: 1.0e4,
            shrink_min: 0.1,
            k1: 0.8,
            k2: 0.31,
        }
    }
}

impl StepController {
    pub fn i_controller(safety: f64) -> Self {
        Self {
            safety,
            ..Self::default()
        }
    }

    pub fn pi_controller(safety: f64) -> Self {
        Self {
            kind: ControllerKind::PI,
            safety,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::invalid("controller safety must lie in (0, 1]"));
        }
        if !(self.growth_max > 1.0) || !(self.growth_first >= 1.0) {
            return Err(Error::invalid("controller growth bound must exceed 1"));
        }
        if !(self.shrink_min > 0.0 && self.shrink_min < 1.0) {
            return Err(Error::invalid("controller shrink bound must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Next step from a normalized error estimate (target 1) for a method
    /// whose estimate behaves like `h^(order+1)`.
    pub fn next_step(&self, h: f64, est: f64, order: usize) -> f64 {
        self.propose(h, est, None, order, self.growth_max)
    }

    /// General form: optional previous estimate (PI) and an explicit growth cap.
    pub fn propose(
        &self,
        h: f64,
        est: f64,
        prev_est: Option<f64>,
        order: usize,
        growth_cap: f64,
    ) -> f64 {
        let lo = self.shrink_min * h;
        let hi = growth_cap * h;
        if est <= 0.0 {
            return hi;
        }
        let q = (order.max(1) + 1) as f64;
        let factor = match (self.kind, prev_est) {
            (ControllerKind::PI, Some(prev)) if prev > 0.0 => {
                est.powf(-self.k1 / q) * prev.powf(self.k2 / q)
            }
            _ => est.powf(-1.0 / q),
        };
        let proposal = self.safety * h * factor;
        if proposal.is_nan() {
            return lo;
        }
        proposal.clamp(lo.min(hi), hi.max(lo))
    }
}

/// Free-function form of [`StepController::next_step`].
pub fn controller_next_step(ctrl: &StepController, h: f64, est: f64, order: usize) -> f64 {
    ctrl.next_step(h, est, order)
}
