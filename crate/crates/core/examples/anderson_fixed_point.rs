//! Anderson acceleration of `u = cos(u)` component-wise in 4-D, with and
//! without a damping callback.

use chronos::anderson::{fixed_point_solve, AndersonConfig, FixedPointProblem};
use chronos::harness::aa_demo::{filtering_depth, gain_damping};

fn main() -> chronos::Result<()> {
    let g = |u: &[f64], out: &mut [f64]| {
        for i in 0..u.len() {
            out[i] = (u[i] + 0.1 * u[(i + 1) % u.len()]).cos();
        }
    };
    let u0 = [1.0, 0.0, -1.0, 0.5];
    let configs = [
        ("plain iteration", AndersonConfig::new(0)),
        ("depth 3", AndersonConfig::new(3)),
        ("depth 3, gain damping", AndersonConfig::new(3).with_damping_fn(gain_damping(0.5))),
        ("depth 3, filtering", AndersonConfig::new(3).with_depth_fn(filtering_depth(1e-4))),
        ("depth 3, delay 2", AndersonConfig { delay: 2, ..AndersonConfig::new(3) }),
    ];
    for (name, mut cfg) in configs {
        cfg.stop_tol = 1e-12;
        cfg.max_iters = 500;
        let mut p = FixedPointProblem::new(4, g);
        let s = fixed_point_solve(&mut p, &u0, &mut cfg)?;
        println!("{name:>22}: {:2} iterations, u[0] = {:.12}", s.iterations, s.u[0]);
    }
    Ok(())
}
