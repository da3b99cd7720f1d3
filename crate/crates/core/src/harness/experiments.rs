//! Gray–Scott splitting convergence, stabilized-explicit work-precision, and
//! the symplectic long-run demo.

use std::time::Instant;

use crate::adaptive::AdaptiveOptions;
use crate::control::ToleranceSpec;
use crate::erk::{builtin_table, erk_evolve, table_of_order, ErkStepper};
use crate::error::{Error, Result};
use crate::harness::gray_scott::{relative_l2_error, GrayScott, LinearReactionExact, RiccatiReactionExact};
use crate::harness::report::{csv_float, fit_slope, Table};
use crate::lsrk::{sts_evolve, StsConfig, StsKind};
use crate::splitting::{SplittingCoefficients, SplittingStepper};
use crate::sprk::{builtin_sprk, invariant_form, oscillator_step_matrix, sprk_evolve, HarmonicOscillator, SeparableHamiltonian, SprkForm};
use crate::stepper::Stepper;

pub const GS_SPLITTING_GRID: usize = 64;
pub const GS_SPLITTING_T_END: f64 = 10.0;
pub const GS_LSRK_GRID: usize = 256;
pub const GS_LSRK_T_END: f64 = 100.0;
pub const GS_LSRK_ABSTOL: f64 = 1e-13;
pub const GS_LSRK_TOLERANCES: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
/// Reference tolerance for the splitting study.
pub const GS_REFERENCE_TOL: f64 = 1e-14;

/// `2^-i` for `i = 0..count`.
pub fn dyadic_steps(count: usize) -> Vec<f64> {
    (0..count).map(|i| 0.5f64.powi(i as i32)).collect()
}

/// Adaptive order-5 solution of the unsplit problem.
pub fn gray_scott_reference(gs: &GrayScott, t_end: f64, reltol: f64, abstol: f64) -> Result<Vec<f64>> {
    let opts = AdaptiveOptions::new(ToleranceSpec::new(reltol, abstol)?);
    Ok(erk_evolve(&builtin_table("dp5")?, &gs.full(), &opts, 0.0, t_end, &gs.initial_condition())?.y)
}

fn is_blow_up(e: &Error) -> bool {
    match e {
        Error::BlowUp { .. } => true,
        Error::Substep { source, .. } => is_blow_up(source),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplittingRow {
    pub method: String,
    pub order: usize,
    pub h: f64,
    /// Relative ℓ² error at `t_end`; NaN when the run blew up.
    pub error: f64,
    pub blow_up: bool,
}

/// Each method with exact reaction flows and one ERK step of the method's
/// order for diffusion, at every step size.
pub fn run_gray_scott_splitting(
    gs: &GrayScott,
    t_end: f64,
    steps: &[f64],
    methods: &[SplittingCoefficients],
    reference: &[f64],
) -> Result<Vec<SplittingRow>> {
    let y0 = gs.initial_condition();
    let mut rows = Vec::with_capacity(steps.len() * methods.len());
    for m in methods {
        let diffusion_table = table_of_order(m.order())?;
        for &h in steps {
            let steppers: Vec<Box<dyn Stepper + '_>> = vec![
                Box::new(LinearReactionExact { a: gs.a }),
                Box::new(RiccatiReactionExact { a: gs.a, b: gs.b }),
                Box::new(ErkStepper::fixed(diffusion_table.clone(), gs.diffusion(), 1)?),
            ];
            let mut s = SplittingStepper::new(m.clone(), steppers, h)?;
            let mut y = y0.clone();
            let (error, blow_up) = match s.evolve_to(0.0, t_end, &mut y) {
                Ok(()) => (relative_l2_error(&y, reference)?, false),
                Err(e) if is_blow_up(&e) => (f64::NAN, true),
                Err(e) => return Err(e),
            };
            rows.push(SplittingRow {
                method: m.name().to_string(),
                order: m.order(),
                h,
                error,
                blow_up,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope for one method. The smallest step is dropped when
/// the last two points rise by less than one order, which only happens at
/// the roundoff floor.
pub fn splitting_slope(rows: &[SplittingRow], method: &str) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.method == method && !r.blow_up)
        .map(|r| (r.h, r.error))
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    if let [.., a, b] = pts[..] {
        if fit_slope(&[a, b]).is_some_and(|s| s < 1.0) {
            pts.pop();
        }
    }
    fit_slope(&pts)
}

pub fn splitting_table_csv(rows: &[SplittingRow]) -> Table {
    let mut t = Table::new(&["method", "order", "h", "error", "blow_up"]);
    for r in rows {
        t.push(vec![
            r.method.clone(),
            r.order.to_string(),
            csv_float(r.h),
            csv_float(r.error),
            r.blow_up.to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsrkRow {
    pub method: String,
    pub reltol: f64,
    pub abstol: f64,
    pub error: f64,
    pub seconds: f64,
    pub steps: usize,
    pub rejections: usize,
    pub rhs_evals: usize,
    /// Largest stage count used in one step (3 for the ERK pair).
    pub max_stages: usize,
}

/// RKC with the Gershgorin bound of the diffusion operator against the
/// 3-stage order-2 ERK pair, both on the unsplit problem.
pub fn run_gray_scott_lsrk(
    gs: &GrayScott,
    t_end: f64,
    tolerances: &[f64],
    abstol: f64,
    rho_scale: f64,
    reference: &[f64],
) -> Result<Vec<LsrkRow>> {
    let y0 = gs.initial_condition();
    let bound = rho_scale * gs.diffusion_spectral_bound();
    let erk2 = builtin_table("erk2-3stage")?;
    let mut rows = Vec::with_capacity(2 * tolerances.len());
    for &reltol in tolerances {
        let opts = AdaptiveOptions::new(ToleranceSpec::new(reltol, abstol)?);
        let clock = Instant::now();
        let mut rho = |_t: f64, _y: &[f64]| Ok(bound);
        let r = sts_evolve(&StsConfig::new(StsKind::Rkc), &mut rho, &gs.full(), &opts, 0.0, t_end, &y0)?;
        let seconds = clock.elapsed().as_secs_f64();
        rows.push(LsrkRow {
            method: "rkc".into(),
            reltol,
            abstol,
            error: relative_l2_error(&r.y, reference)?,
            seconds,
            steps: r.stats.steps,
            rejections: r.stats.rejections,
            rhs_evals: r.stats.rhs_evals,
            max_stages: r.max_stages_used,
        });
        let clock = Instant::now();
        let e = erk_evolve(&erk2, &gs.full(), &opts, 0.0, t_end, &y0)?;
        let seconds = clock.elapsed().as_secs_f64();
        rows.push(LsrkRow {
            method: erk2.name().to_string(),
            reltol,
            abstol,
            error: relative_l2_error(&e.y, reference)?,
            seconds,
            steps: e.stats.steps,
            rejections: e.stats.rejections,
            rhs_evals: e.stats.rhs_evals,
            max_stages: erk2.stages(),
        });
    }
    Ok(rows)
}

pub fn lsrk_table_csv(rows: &[LsrkRow]) -> Table {
    let mut t = Table::new(&[
        "method", "reltol", "abstol", "error", "steps", "rejections", "rhs_evals", "max_stages", "seconds",
    ]);
    for r in rows {
        t.push(vec![
            r.method.clone(),
            csv_float(r.reltol),
            csv_float(r.abstol),
            csv_float(r.error),
            r.steps.to_string(),
            r.rejections.to_string(),
            r.rhs_evals.to_string(),
            r.max_stages.to_string(),
            csv_float(r.seconds),
        ]);
    }
    t
}

pub const SPRK_DEMO_STEP: f64 = 0.1;
pub const SPRK_DEMO_T_END: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SprkRow {
    pub order: usize,
    pub form: SprkForm,
    pub h: f64,
    pub steps: usize,
    pub max_energy_error: f64,
    pub final_energy_error: f64,
    /// Relative change of the method's exactly conserved quadratic form.
    pub modified_energy_drift: f64,
}

/// Every built-in symplectic method, in both formulations, on the unit
/// harmonic oscillator from `(p, q) = (1, 0)`.
pub fn run_sprk_demo(h: f64, t_end: f64) -> Result<Vec<SprkRow>> {
    if !(h > 0.0) || !(t_end > 0.0) {
        return Err(Error::invalid("step and end time must be positive"));
    }
    let steps = (t_end / h).round() as usize;
    let sys = HarmonicOscillator::default();
    let mut rows = Vec::new();
    for order in 1..=4 {
        let c = builtin_sprk(order)?;
        let m = oscillator_step_matrix(&c, h)?;
        let start = invariant_form(&m, 1.0, 0.0);
        for form in [SprkForm::Standard, SprkForm::Increment] {
            let mut max_err = 0.0f64;
            let (p, q) = sprk_evolve(&c, &sys, form, 0.0, h, steps, &[1.0], &[0.0], |_, _, p, q| {
                max_err = max_err.max((sys.energy(p, q).unwrap_or(f64::NAN) - 0.5).abs());
            })?;
            rows.push(SprkRow {
                order,
                form,
                h,
                steps,
                max_energy_error: max_err,
                final_energy_error: sys.energy(&p, &q).unwrap_or(f64::NAN) - 0.5,
                modified_energy_drift: (invariant_form(&m, p[0], q[0]) - start) / start.abs(),
            });
        }
    }
    Ok(rows)
}

pub fn sprk_table_csv(rows: &[SprkRow]) -> Table {
    let mut t = Table::new(&[
        "order", "form", "h", "steps", "max_energy_error", "final_energy_error", "modified_energy_drift",
    ]);
    for r in rows {
        t.push(vec![
            r.order.to_string(),
            match r.form {
                SprkForm::Standard => "standard".into(),
                SprkForm::Increment => "increment".into(),
            },
            csv_float(r.h),
            r.steps.to_string(),
            csv_float(r.max_energy_error),
            csv_float(r.final_energy_error),
            csv_float(r.modified_energy_drift),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splitting::default_methods;

    #[test]
    fn dyadic_sequence() {
        assert_eq!(dyadic_steps(4), vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn small_splitting_study_has_one_row_per_pair() {
        let gs = GrayScott::new(8).unwrap();
        let reference = gray_scott_reference(&gs, 1.0, 1e-12, 1e-12).unwrap();
        let methods = default_methods(3).unwrap();
        let rows = run_gray_scott_splitting(&gs, 1.0, &dyadic_steps(3), &methods, &reference).unwrap();
        assert_eq!(rows.len(), 15);
        assert!(rows.iter().all(|r| !r.blow_up && r.error < 1e-2));
        let csv = splitting_table_csv(&rows).to_csv_string().unwrap();
        assert_eq!(csv.lines().count(), 16);
        assert!(csv.starts_with("method,order,h,error,blow_up\n"));
    }

    #[test]
    fn slope_drops_floor_point() {
        let row = |h: f64, e: f64| SplittingRow { method: "m".into(), order: 2, h, error: e, blow_up: false };
        let rows = vec![row(1.0, 1.0), row(0.5, 0.25), row(0.25, 0.0625), row(0.125, 0.06)];
        assert!((splitting_slope(&rows, "m").unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sprk_demo_rows() {
        let rows = run_sprk_demo(0.1, 10.0).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.steps == 100 && r.max_energy_error < 0.1));
        assert!(run_sprk_demo(0.0, 1.0).is_err());
    }
}
