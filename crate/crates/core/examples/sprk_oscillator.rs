//! Symplectic partitioned Runge-Kutta on the harmonic oscillator: the energy
//! error stays bounded over long runs.

use chronos::sprk::{builtin_sprk, oscillator_step_matrix, sprk_evolve, HarmonicOscillator, SeparableHamiltonian, SprkForm};

fn main() -> chronos::Result<()> {
    let sys = HarmonicOscillator::default();
    let h = 0.1;
    let steps = 100_000;
    for order in 1..=4 {
        let c = builtin_sprk(order)?;
        let mut worst = 0.0f64;
        let (p, q) = sprk_evolve(&c, &sys, SprkForm::Increment, 0.0, h, steps, &[1.0], &[0.0], |_, _, p, q| {
            worst = worst.max((sys.energy(p, q).unwrap() - 0.5).abs());
        })?;
        let m = oscillator_step_matrix(&c, h)?;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        println!(
            "order {order}: max energy error {worst:.2e} over {steps} steps, final (p, q) = ({:.4}, {:.4}), det {det:.15}",
            p[0], q[0]
        );
    }
    Ok(())
}
