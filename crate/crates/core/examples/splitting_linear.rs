//! Operator splitting and the forcing method on a linear two-partition
//! problem where each sub-flow is solved exactly.

use chronos::erk::{builtin_table, ErkStepper};
use chronos::splitting::{default_methods, ForcingStepper, SplittingStepper};
use chronos::stepper::LinearExactStepper;
use chronos::FnSystem;
use nalgebra::{DMatrix, DVector};

fn main() -> chronos::Result<()> {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -0.5]);
    let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -3.0, -0.2]);
    let y0 = [1.0, 0.5];
    let tf = 1.0;
    let exact = ((&a + &b) * tf).exp() * DVector::from_column_slice(&y0);
    let error = |y: &[f64]| (DVector::from_column_slice(y) - &exact).norm();

    for method in default_methods(2)? {
        let name = method.name().to_string();
        let errors: Vec<String> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let flows = vec![LinearExactStepper::new(a.clone()), LinearExactStepper::new(b.clone())];
                let mut s = SplittingStepper::new(method.clone(), flows, h)?;
                let mut y = y0.to_vec();
                s.evolve_to(0.0, tf, &mut y)?;
                Ok(format!("{:.2e}", error(&y)))
            })
            .collect::<chronos::Result<_>>()?;
        println!("{name:>16}: errors at h = 0.1, 0.05: {}", errors.join(", "));
    }

    // forcing method: the second partition sees the first one's tendency
    for h in [0.1, 0.05] {
        let (a, b) = (a.clone(), b.clone());
        let f1 = FnSystem::new(2, move |_t: f64, y: &[f64], d: &mut [f64]| {
            d.copy_from_slice((&a * DVector::from_column_slice(y)).as_slice())
        });
        let f2 = FnSystem::new(2, move |_t: f64, y: &[f64], d: &mut [f64]| {
            d.copy_from_slice((&b * DVector::from_column_slice(y)).as_slice())
        });
        let rk4 = builtin_table("rk4")?;
        let mut s = ForcingStepper::new(ErkStepper::fixed(rk4.clone(), f1, 1)?, ErkStepper::fixed(rk4, f2, 1)?, h)?;
        let mut y = y0.to_vec();
        s.evolve_to(0.0, tf, &mut y)?;
        println!("forcing method, h = {h}: error {:.2e}", error(&y));
    }
    Ok(())
}
