//! Structured logging and the last-error slot.

use std::sync::Arc;

use chronos::diagnostics::{linear_combination, ErrorContext, Level, LogRecord, Logger, SinkSpec};
use chronos::erk::{builtin_table, ErkStepper};
use chronos::{FnSystem, Stepper, ToleranceSpec};

fn main() -> chronos::Result<()> {
    let mut logger = Logger::silent();
    logger.set_max_level(Some(Level::Info));
    logger.set_sink(Level::Info, &SinkSpec::Stdout)?;
    logger.set_sink(Level::Warning, &SinkSpec::Stdout)?;
    logger.set_sink(Level::Error, &SinkSpec::Stderr)?;
    let logger = Arc::new(logger);

    logger.log(&LogRecord::new(Level::Info, "example", "start").with("tolerance", 1e-3));
    let sys = FnSystem::new(1, |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0]);
    let mut s = ErkStepper::adaptive(builtin_table("bs3")?, sys, ToleranceSpec::new(1e-3, 1e-3)?)?.with_logger(Arc::clone(&logger));
    let mut y = [1.0];
    s.evolve(0.0, 0.5, &mut y)?;

    let mut ctx = ErrorContext::new(logger);
    let _ = linear_combination(&mut ctx, &[1.0, 2.0], &[&[1.0, 2.0], &[1.0]]);
    let e = ctx.get_last_error();
    println!("last error: code {} ({})", e.code, e.message);
    println!("after reading: success = {}", ctx.get_last_error().is_success());
    Ok(())
}
