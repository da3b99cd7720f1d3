//! Lower-triangular linear systems with well-separated decay rates, used to
//! exercise multirate control against matrix-exponential solutions.
//!
//! Two scales: `y_f' = −100 y_f`, `y_s' = κ y_f − y_s`.
//! Three scales: `y₃' = −1000 y₃`, `y₂' = κ y₃ − 30 y₂`, `y₁' = κ y₂ − y₁`.
//! Each faster mode drives the next slower one, so the slow/fast splitting
//! error is confined to the fast transients.

use nalgebra::{DMatrix, DVector};

use crate::control::ToleranceSpec;
use crate::erk::{builtin_table, ErkStepper};
use crate::error::Result;
use crate::multirate::{multirate_evolve, MultirateConfig, MultirateKind, MultirateStats, MultirateStepper, SlowSplit};
use crate::system::OdeSystem;

/// `y' = M y` restricted to the rows in `rows`; other rows are zero.
#[derive(Debug, Clone)]
pub struct RowSystem {
    m: DMatrix<f64>,
    rows: Vec<usize>,
}

impl RowSystem {
    pub fn new(m: DMatrix<f64>, rows: Vec<usize>) -> Self {
        Self { m, rows }
    }
}

impl OdeSystem for RowSystem {
    fn dimension(&self) -> usize {
        self.m.nrows()
    }

    fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) -> Result<()> {
        d.fill(0.0);
        for &i in &self.rows {
            d[i] = (0..y.len()).map(|j| self.m[(i, j)] * y[j]).sum();
        }
        Ok(())
    }
}

pub const TWO_SCALE_COUPLING: f64 = 10.0;
pub const THREE_SCALE_COUPLING: f64 = 10.0;

/// Rows `[fast, slow]`.
pub fn two_scale_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-100.0, 0.0, TWO_SCALE_COUPLING, -1.0])
}

/// Rows `[slow, medium, fast]`.
pub fn three_scale_matrix() -> DMatrix<f64> {
    let k = THREE_SCALE_COUPLING;
    DMatrix::from_row_slice(3, 3, &[-1.0, k, 0.0, 0.0, -30.0, k, 0.0, 0.0, -1000.0])
}

pub fn exact(m: &DMatrix<f64>, y0: &[f64], t: f64) -> Vec<f64> {
    ((m * t).exp() * DVector::from_column_slice(y0)).as_slice().to_vec()
}

/// `‖y − y_ref‖ / (reltol ‖y_ref‖ + abstol)`; at most 1 means within tolerance.
pub fn tolerance_ratio(y: &[f64], reference: &[f64], tol: &ToleranceSpec) -> f64 {
    let n = |v: &mut dyn Iterator<Item = f64>| v.map(|a| a * a).sum::<f64>().sqrt();
    let err = n(&mut y.iter().zip(reference).map(|(a, b)| a - b));
    let abstol = match &tol.abstol {
        crate::control::AbsTol::Scalar(a) => *a,
        crate::control::AbsTol::Vector(v) => v.iter().cloned().fold(0.0, f64::max),
    };
    err / (tol.reltol * n(&mut reference.iter().cloned()) + abstol)
}

#[derive(Debug, Clone)]
pub struct ScaleRun {
    pub y: Vec<f64>,
    pub reference: Vec<f64>,
    /// Final error over the requested tolerance.
    pub tolerance_ratio: f64,
    pub stats: MultirateStats,
}

/// Decoupled runs fix the inner tolerance to this fraction of the outer one.
pub const DECOUPLED_INNER_FACTOR: f64 = 0.01;

pub fn scale_config(kind: MultirateKind, tol: &ToleranceSpec) -> MultirateConfig {
    let mut cfg = MultirateConfig::new(kind, SlowSplit::Strang);
    if kind == MultirateKind::Decoupled {
        cfg.inner_tol = Some(tol.scaled(DECOUPLED_INNER_FACTOR));
    }
    cfg
}

/// Two-scale problem on `[0, t_end]` from `y = [1, 1]`; the fast row is
/// integrated by adaptive Bogacki–Shampine.
pub fn run_two_scale(kind: MultirateKind, tol: ToleranceSpec, t_end: f64) -> Result<ScaleRun> {
    let m = two_scale_matrix();
    let y0 = [1.0, 1.0];
    let inner_tol = tol.clone();
    let fast = ErkStepper::adaptive(builtin_table("bs3")?, RowSystem::new(m.clone(), vec![0]), inner_tol)?;
    let slow = RowSystem::new(m.clone(), vec![1]);
    let cfg = scale_config(kind, &tol);
    let out = multirate_evolve(&cfg, slow, fast, 0.0, t_end, &y0, tol.clone())?;
    let reference = exact(&m, &y0, t_end);
    Ok(ScaleRun {
        tolerance_ratio: tolerance_ratio(&out.y, &reference, &tol),
        y: out.y,
        reference,
        stats: out.stats,
    })
}

/// Three-scale problem with a multirate integrator nested as the fast
/// partition of another. Returns the outer run and the nested statistics.
pub fn run_three_scale(kind: MultirateKind, tol: ToleranceSpec, t_end: f64) -> Result<(ScaleRun, MultirateStats)> {
    let m = three_scale_matrix();
    let y0 = [1.0, 1.0, 1.0];
    let fastest = ErkStepper::adaptive(builtin_table("bs3")?, RowSystem::new(m.clone(), vec![2]), tol.clone())?;
    let middle = MultirateStepper::new(
        scale_config(kind, &tol),
        RowSystem::new(m.clone(), vec![1]),
        fastest,
        tol.clone(),
    )?;
    let mut outer = MultirateStepper::new(
        scale_config(kind, &tol),
        RowSystem::new(m.clone(), vec![0]),
        middle,
        tol.clone(),
    )?;
    let mut y = y0.to_vec();
    crate::stepper::Stepper::evolve(&mut outer, 0.0, t_end, &mut y)?;
    let reference = exact(&m, &y0, t_end);
    let (_, middle, stats) = outer.into_parts();
    Ok((
        ScaleRun {
            tolerance_ratio: tolerance_ratio(&y, &reference, &tol),
            y,
            reference,
            stats,
        },
        middle.stats().clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_systems_partition_the_matrix() {
        let m = three_scale_matrix();
        let y = [0.3, -1.2, 2.0];
        let mut total = [0.0; 3];
        for r in 0..3 {
            let mut d = [0.0; 3];
            RowSystem::new(m.clone(), vec![r]).rhs(0.0, &y, &mut d).unwrap();
            for i in 0..3 {
                total[i] += d[i];
            }
        }
        let full = &m * DVector::from_column_slice(&y);
        for i in 0..3 {
            assert!((total[i] - full[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn two_scale_exact_solution_closed_form() {
        // y_f = e^{-100t}, y_s = e^{-t} + κ/99 (e^{-t} − e^{-100t})
        let t: f64 = 0.7;
        let e = exact(&two_scale_matrix(), &[1.0, 1.0], t);
        let k = TWO_SCALE_COUPLING;
        assert!((e[0] - (-100.0 * t).exp()).abs() < 1e-15);
        let ys = (-t).exp() + k / 99.0 * ((-t).exp() - (-100.0 * t).exp());
        assert!((e[1] - ys).abs() < 1e-13);
    }
}
