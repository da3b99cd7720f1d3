//! Super-time-stepping and SSP methods on the 1-D heat equation.

use chronos::adaptive::AdaptiveOptions;
use chronos::lsrk::{ssp_evolve, sts_evolve, SspConfig, SspFamily, StsConfig, StsKind};
use chronos::{FnSystem, ToleranceSpec};

const N: usize = 100;

fn main() -> chronos::Result<()> {
    let dx = 1.0 / (N + 1) as f64;
    let heat = FnSystem::new(N, move |_t: f64, u: &[f64], d: &mut [f64]| {
        for i in 0..N {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < N { u[i + 1] } else { 0.0 };
            d[i] = (left - 2.0 * u[i] + right) / (dx * dx);
        }
    });
    let u0: Vec<f64> = (1..=N).map(|i| (std::f64::consts::PI * i as f64 * dx).sin()).collect();
    let tf = 0.1;
    // the sine mode decays at rate pi^2 up to discretization error
    let decay = (-std::f64::consts::PI.powi(2) * tf).exp();
    let rho_bound = 4.0 / (dx * dx);
    let opts = AdaptiveOptions::new(ToleranceSpec::new(1e-5, 1e-8)?);

    for kind in [StsKind::Rkc, StsKind::Rkl] {
        let mut rho = |_t: f64, _y: &[f64]| Ok(rho_bound);
        let out = sts_evolve(&StsConfig::new(kind), &mut rho, &heat, &opts, 0.0, tf, &u0)?;
        println!(
            "{kind:?}: peak {:.6} (mode decay {decay:.6}), {} steps, up to {} stages, {} RHS evaluations",
            out.y[N / 2],
            out.stats.steps,
            out.max_stages_used,
            out.stats.rhs_evals
        );
    }

    let out = ssp_evolve(&SspConfig::new(SspFamily::Ssp3, 9)?, &heat, &opts, 0.0, tf, &u0)?;
    println!("SSP(9,3): peak {:.6}, {} steps, {} RHS evaluations", out.y[N / 2], out.stats.steps, out.stats.rhs_evals);
    Ok(())
}
