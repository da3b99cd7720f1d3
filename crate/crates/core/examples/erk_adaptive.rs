//! Fixed-step and adaptive explicit Runge-Kutta on `y' = -y + sin t`.

use chronos::adaptive::AdaptiveOptions;
use chronos::erk::{builtin_table, erk_evolve, ErkStepper};
use chronos::{FnSystem, Stepper, ToleranceSpec};

fn exact(t: f64) -> f64 {
    // y(0) = 1
    1.5 * (-t).exp() + 0.5 * (t.sin() - t.cos())
}

fn main() -> chronos::Result<()> {
    let sys = || FnSystem::new(1, |t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0] + t.sin());
    let tf = 5.0;

    for n in [10, 20, 40, 80] {
        let mut y = [1.0];
        ErkStepper::fixed(builtin_table("rk4")?, sys(), n)?.evolve(0.0, tf, &mut y)?;
        println!("rk4, {n:3} steps: error {:.3e}", (y[0] - exact(tf)).abs());
    }

    for tol in [1e-4, 1e-6, 1e-8] {
        let opts = AdaptiveOptions::new(ToleranceSpec::new(tol, tol)?);
        let out = erk_evolve(&builtin_table("dp5")?, &sys(), &opts, 0.0, tf, &[1.0])?;
        println!(
            "dp5, tol {tol:.0e}: error {:.3e} in {} steps ({} rejected)",
            (out.y[0] - exact(tf)).abs(),
            out.stats.steps,
            out.stats.rejections
        );
    }
    Ok(())
}
