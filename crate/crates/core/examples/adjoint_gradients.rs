//! Discrete adjoint gradients of a terminal cost on Lotka-Volterra, checked
//! against central differences.

use chronos::adjoint::{adjoint_solve, CostFunction};
use chronos::erk::builtin_table;
use chronos::harness::lotka_volterra::{LotkaVolterra, LV_PARAMS, LV_T_END, LV_Y0};

fn main() -> chronos::Result<()> {
    let table = builtin_table("rk4")?;
    let cost = LotkaVolterra::cost();
    let h = 0.01;
    let res = adjoint_solve(&table, &LotkaVolterra, &LV_PARAMS, &cost, 0.0, LV_T_END, h, &LV_Y0, 10)?;
    println!("g = {:.10}", res.g);
    println!("dg/dy0 = {:?}", res.dg_dy0);
    println!("dg/dp  = {:?}", res.dg_dp);
    println!("{} steps, {} checkpoints, {} recomputed", res.steps, res.checkpoints, res.recomputed_steps);

    let g = |y0: &[f64], p: &[f64]| -> chronos::Result<f64> {
        let r = adjoint_solve(&table, &LotkaVolterra, p, &cost, 0.0, LV_T_END, h, y0, 10)?;
        Ok(cost.value(LV_T_END, &r.y_final, p))
    };
    let delta = 1e-6;
    for k in 0..4 {
        let (mut up, mut down) = (LV_PARAMS, LV_PARAMS);
        up[k] += delta;
        down[k] -= delta;
        let fd = (g(&LV_Y0, &up)? - g(&LV_Y0, &down)?) / (2.0 * delta);
        println!("dg/dp[{k}]: adjoint {:+.8e}, difference {:+.8e}", res.dg_dp[k], fd);
    }
    Ok(())
}
