use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;

use chronos::diagnostics::{ErrCode, Level, LogRecord};
use chronos::harness::cli::{build_logger, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let logger = match build_logger(cli.common.log_level) {
        Ok(l) => Arc::new(l),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.code().unsigned_abs() as u8);
        }
    };
    if cli.common.out.is_none() {
        println!("no --out given; writing {}.csv", cli.command.name());
    }
    match run(&cli, &logger) {
        Ok(summary) => {
            for line in &summary.notes {
                println!("{line}");
            }
            println!("wrote {} rows to {}", summary.rows, summary.path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = ErrCode::from_error(&e, cli.command.name());
            logger.log(&LogRecord::new(Level::Error, "chronos", "run-failed").with("message", code.message.clone()));
            if !logger.enabled(Level::Error) {
                eprintln!("error: {e}");
            }
            ExitCode::from(code.code.unsigned_abs() as u8)
        }
    }
}
