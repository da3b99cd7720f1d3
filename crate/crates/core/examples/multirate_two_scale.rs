//! Multirate time-step control on a linear two-scale problem.

use chronos::harness::linear_scales::run_two_scale;
use chronos::multirate::MultirateKind;
use chronos::ToleranceSpec;

fn main() -> chronos::Result<()> {
    for kind in [MultirateKind::Decoupled, MultirateKind::StepsizeTolerance] {
        for tol in [1e-3, 1e-5] {
            let run = run_two_scale(kind, ToleranceSpec::new(tol, tol)?, 10.0)?;
            println!(
                "{kind:?}, tol {tol:.0e}: error/tol {:.3}, {} slow steps, mean H/h {:.1}",
                run.tolerance_ratio,
                run.stats.slow_steps,
                run.stats.mean_slow_step() / run.stats.mean_inner_step()
            );
        }
    }
    Ok(())
}
