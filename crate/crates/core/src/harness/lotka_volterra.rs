//! Lotka–Volterra predator–prey model with parameter sensitivities:
//! `y₁' = p₀ y₁ − p₁ y₁ y₂`, `y₂' = −p₂ y₂ + p₃ y₁ y₂`.

use std::time::Instant;

use crate::adjoint::{adjoint_solve, AdjointResult, DistanceCost, ParameterizedSystem};
use crate::erk::{builtin_table, ButcherTable, ErkStepper};
use crate::error::{Error, Result};
use crate::harness::report::{csv_float, fit_slope, Table};
use crate::splitting::ForcingStepper;
use crate::system::OdeSystem;

pub const LV_PARAMS: [f64; 4] = [1.5, 1.0, 3.0, 1.0];
pub const LV_Y0: [f64; 2] = [1.0, 1.0];
pub const LV_T_END: f64 = 10.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct LotkaVolterra;

impl LotkaVolterra {
    /// `g = ½ ‖1 − y(t_f)‖²`.
    pub fn cost() -> DistanceCost {
        DistanceCost {
            target: vec![1.0, 1.0],
            num_params: 4,
        }
    }

    /// The model with fixed parameters.
    pub fn with_params(p: [f64; 4]) -> LvSystem {
        LvSystem { p, part: LvPart::Full }
    }

    /// The linear terms `[p₀ y₁, −p₂ y₂]`.
    pub fn linear_part(p: [f64; 4]) -> LvSystem {
        LvSystem { p, part: LvPart::Linear }
    }

    /// The interaction terms `[−p₁ y₁ y₂, p₃ y₁ y₂]`.
    pub fn nonlinear_part(p: [f64; 4]) -> LvSystem {
        LvSystem { p, part: LvPart::Nonlinear }
    }
}

impl ParameterizedSystem for LotkaVolterra {
    fn dimension(&self) -> usize {
        2
    }

    fn num_params(&self) -> usize {
        4
    }

    fn rhs(&self, _t: f64, y: &[f64], p: &[f64], d: &mut [f64]) -> Result<()> {
        d[0] = p[0] * y[0] - p[1] * y[0] * y[1];
        d[1] = -p[2] * y[1] + p[3] * y[0] * y[1];
        Ok(())
    }

    fn vjp_y(&self, _t: f64, y: &[f64], p: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        // J = [[p0 − p1 y2, −p1 y1], [p3 y2, −p2 + p3 y1]]
        out[0] = (p[0] - p[1] * y[1]) * v[0] + p[3] * y[1] * v[1];
        out[1] = -p[1] * y[0] * v[0] + (-p[2] + p[3] * y[0]) * v[1];
        Ok(())
    }

    fn vjp_p(&self, _t: f64, y: &[f64], _p: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let yy = y[0] * y[1];
        out[0] = y[0] * v[0];
        out[1] = -yy * v[0];
        out[2] = -y[1] * v[1];
        out[3] = yy * v[1];
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LvPart {
    Full,
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy)]
pub struct LvSystem {
    p: [f64; 4],
    part: LvPart,
}

impl OdeSystem for LvSystem {
    fn dimension(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], d: &mut [f64]) -> Result<()> {
        let p = &self.p;
        let yy = y[0] * y[1];
        let (lin, non) = match self.part {
            LvPart::Full => (1.0, 1.0),
            LvPart::Linear => (1.0, 0.0),
            LvPart::Nonlinear => (0.0, 1.0),
        };
        d[0] = lin * p[0] * y[0] - non * p[1] * yy;
        d[1] = -lin * p[2] * y[1] + non * p[3] * yy;
        Ok(())
    }
}

/// `(‖x‖ − ‖x_ref‖) / ‖x_ref‖`, the signed relative difference of norms.
pub fn norm_error(x: &[f64], reference: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (n(x) - n(reference)) / n(reference)
}

/// Fixed step sizes of the convergence study.
pub const LV_STEP_SIZES: [f64; 4] = [0.5, 0.05, 0.005, 0.0005];
/// Every other step is stored as a checkpoint.
pub const LV_CHECKPOINT_INTERVAL: usize = 2;
/// Largest step inside the asymptotic window used for slope fits.
pub const LV_FIT_MAX_STEP: f64 = 0.05;
/// Accumulated roundoff level of the forward and adjoint sweeps.
pub const LV_ROUNDOFF: f64 = 1e-14;

/// The explicit table of each order used in the convergence study.
pub fn lv_table(order: usize) -> Result<ButcherTable> {
    match order {
        3 => builtin_table("bs3"),
        4 => builtin_table("zonneveld4"),
        5 => builtin_table("cash-karp5"),
        _ => Err(Error::invalid(format!("no Lotka-Volterra table of order {order}"))),
    }
}

fn lv_adjoint(table: &ButcherTable, p: &[f64], y0: &[f64], h: f64, interval: usize) -> Result<AdjointResult> {
    adjoint_solve(table, &LotkaVolterra, p, &LotkaVolterra::cost(), 0.0, LV_T_END, h, y0, interval)
}

/// Sixth-order discrete adjoint at a small step, with its own error gauge.
#[derive(Debug, Clone)]
pub struct LvReference {
    pub y_final: Vec<f64>,
    pub dg_dy0: Vec<f64>,
    pub dg_dp: Vec<f64>,
    /// `|norm_error|` of the same computation at twice the step, per quantity.
    pub self_difference: [f64; 3],
}

impl LvReference {
    pub const STEP: f64 = 1e-4;

    pub fn compute() -> Result<Self> {
        let table = builtin_table("butcher6")?;
        let fine = lv_adjoint(&table, &LV_PARAMS, &LV_Y0, Self::STEP, 1)?;
        let coarse = lv_adjoint(&table, &LV_PARAMS, &LV_Y0, 2.0 * Self::STEP, 1)?;
        Ok(Self {
            self_difference: [
                norm_error(&coarse.y_final, &fine.y_final).abs(),
                norm_error(&coarse.dg_dy0, &fine.dg_dy0).abs(),
                norm_error(&coarse.dg_dp, &fine.dg_dp).abs(),
            ],
            y_final: fine.y_final,
            dg_dy0: fine.dg_dy0,
            dg_dp: fine.dg_dp,
        })
    }

    /// Errors below these levels are not resolved by the comparison.
    pub fn noise_floor(&self) -> [f64; 3] {
        self.self_difference.map(|d| 10.0 * d.max(LV_ROUNDOFF))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LvRow {
    pub order: usize,
    pub method: String,
    pub h: f64,
    pub steps: usize,
    pub g: f64,
    /// Signed norm errors of `y(t_f)`, `dg/dy₀`, `dg/dp`.
    pub errors: [f64; 3],
    pub recomputed_steps: usize,
    pub seconds: f64,
}

/// Forward and adjoint solves for every order and step size.
pub fn run_lotka_volterra(orders: &[usize], steps: &[f64], reference: &LvReference) -> Result<Vec<LvRow>> {
    let mut rows = Vec::with_capacity(orders.len() * steps.len());
    for &order in orders {
        let table = lv_table(order)?;
        for &h in steps {
            let clock = Instant::now();
            let r = lv_adjoint(&table, &LV_PARAMS, &LV_Y0, h, LV_CHECKPOINT_INTERVAL)?;
            rows.push(LvRow {
                order,
                method: table.name().to_string(),
                h,
                steps: r.steps,
                g: r.g,
                errors: [
                    norm_error(&r.y_final, &reference.y_final),
                    norm_error(&r.dg_dy0, &reference.dg_dy0),
                    norm_error(&r.dg_dp, &reference.dg_dp),
                ],
                recomputed_steps: r.recomputed_steps,
                seconds: clock.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

/// Least-squares slopes of `|error|` for one order over the asymptotic
/// window (`h ≤ LV_FIT_MAX_STEP`, error above the reference noise floor).
pub fn lv_slopes(rows: &[LvRow], order: usize, reference: &LvReference) -> [Option<f64>; 3] {
    let floor = reference.noise_floor();
    let mut out = [None; 3];
    for (q, slot) in out.iter_mut().enumerate() {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.order == order && r.h <= LV_FIT_MAX_STEP && r.errors[q].abs() > floor[q])
            .map(|r| (r.h, r.errors[q]))
            .collect();
        *slot = fit_slope(&pts);
    }
    out
}

pub fn lv_table_csv(rows: &[LvRow]) -> Table {
    let mut t = Table::new(&[
        "order",
        "method",
        "h",
        "steps",
        "g",
        "err_y",
        "err_dgdy0",
        "err_dgdp",
        "recomputed_steps",
    ]);
    for r in rows {
        t.push(vec![
            r.order.to_string(),
            r.method.clone(),
            csv_float(r.h),
            r.steps.to_string(),
            csv_float(r.g),
            csv_float(r.errors[0]),
            csv_float(r.errors[1]),
            csv_float(r.errors[2]),
            r.recomputed_steps.to_string(),
        ]);
    }
    t
}

/// Adjoint gradients against central differences of the discrete forward map.
#[derive(Debug, Clone)]
pub struct FdCheck {
    pub adjoint_dy0: Vec<f64>,
    pub adjoint_dp: Vec<f64>,
    pub fd_dy0: Vec<f64>,
    pub fd_dp: Vec<f64>,
}

impl FdCheck {
    /// `‖adjoint − fd‖ / ‖fd‖` for `dg/dy₀` and `dg/dp`.
    pub fn relative_errors(&self) -> (f64, f64) {
        let rel = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            d / b.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        (rel(&self.adjoint_dy0, &self.fd_dy0), rel(&self.adjoint_dp, &self.fd_dp))
    }
}

pub fn fd_gradient_check(table: &ButcherTable, h: f64, delta: f64, interval: usize) -> Result<FdCheck> {
    let base = lv_adjoint(table, &LV_PARAMS, &LV_Y0, h, interval)?;
    let g = |p: &[f64], y0: &[f64]| lv_adjoint(table, p, y0, h, interval).map(|r| r.g);
    let mut fd_dy0 = Vec::new();
    for k in 0..2 {
        let (mut a, mut b) = (LV_Y0, LV_Y0);
        a[k] += delta;
        b[k] -= delta;
        fd_dy0.push((g(&LV_PARAMS, &a)? - g(&LV_PARAMS, &b)?) / (2.0 * delta));
    }
    let mut fd_dp = Vec::new();
    for k in 0..4 {
        let (mut a, mut b) = (LV_PARAMS, LV_PARAMS);
        a[k] += delta;
        b[k] -= delta;
        fd_dp.push((g(&a, &LV_Y0)? - g(&b, &LV_Y0)?) / (2.0 * delta));
    }
    Ok(FdCheck {
        adjoint_dy0: base.dg_dy0,
        adjoint_dp: base.dg_dp,
        fd_dy0,
        fd_dp,
    })
}

/// Forcing method on the linear/nonlinear split with one step of
/// `inner` per partition: `(h, relative state error at t_f)` per step size.
pub fn forcing_convergence(inner: &str, steps: &[f64], reference: &[f64]) -> Result<Vec<(f64, f64)>> {
    let table = builtin_table(inner)?;
    let mut out = Vec::with_capacity(steps.len());
    for &h in steps {
        let s1 = ErkStepper::fixed(table.clone(), LotkaVolterra::linear_part(LV_PARAMS), 1)?;
        let s2 = ErkStepper::fixed(table.clone(), LotkaVolterra::nonlinear_part(LV_PARAMS), 1)?;
        let mut f = ForcingStepper::new(s1, s2, h)?;
        let mut y = LV_Y0.to_vec();
        f.evolve_to(0.0, LV_T_END, &mut y)?;
        let d: f64 = y.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let n: f64 = reference.iter().map(|a| a * a).sum::<f64>().sqrt();
        out.push((h, d / n));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian_check(y: [f64; 2], p: [f64; 4]) {
        let lv = LotkaVolterra;
        let f = |y: &[f64], p: &[f64]| {
            let mut d = [0.0; 2];
            lv.rhs(0.0, y, p, &mut d).unwrap();
            d
        };
        let v = [0.3, -0.7];
        let mut out = [0.0; 2];
        lv.vjp_y(0.0, &y, &p, &v, &mut out).unwrap();
        let d = 1e-6;
        for k in 0..2 {
            let (mut a, mut b) = (y, y);
            a[k] += d;
            b[k] -= d;
            let (fa, fb) = (f(&a, &p), f(&b, &p));
            let jv = ((fa[0] - fb[0]) * v[0] + (fa[1] - fb[1]) * v[1]) / (2.0 * d);
            assert!((jv - out[k]).abs() < 1e-8);
        }
        let mut outp = [0.0; 4];
        lv.vjp_p(0.0, &y, &p, &v, &mut outp).unwrap();
        for k in 0..4 {
            let (mut a, mut b) = (p, p);
            a[k] += d;
            b[k] -= d;
            let (fa, fb) = (f(&y, &a), f(&y, &b));
            let jv = ((fa[0] - fb[0]) * v[0] + (fa[1] - fb[1]) * v[1]) / (2.0 * d);
            assert!((jv - outp[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn transposed_products_match_finite_differences() {
        fd_jacobian_check([1.0, 1.0], LV_PARAMS);
        fd_jacobian_check([0.3, 2.7], [0.4, 1.9, 0.8, 2.2]);
    }

    #[test]
    fn parts_sum_to_full() {
        let y = [0.8, 1.7];
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        let mut c = [0.0; 2];
        LotkaVolterra::with_params(LV_PARAMS).rhs(0.0, &y, &mut a).unwrap();
        LotkaVolterra::linear_part(LV_PARAMS).rhs(0.0, &y, &mut b).unwrap();
        LotkaVolterra::nonlinear_part(LV_PARAMS).rhs(0.0, &y, &mut c).unwrap();
        assert!((a[0] - b[0] - c[0]).abs() < 1e-15 && (a[1] - b[1] - c[1]).abs() < 1e-15);
    }

    #[test]
    fn norm_error_sign() {
        assert_eq!(norm_error(&[3.0, 4.0], &[0.0, 5.0]), 0.0);
        assert!(norm_error(&[6.0, 8.0], &[3.0, 4.0]) == 1.0);
    }
}
