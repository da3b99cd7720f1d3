use std::sync::Arc;

use chronos::diagnostics::{ErrorContext, Level, LogRecord, Logger, SinkSpec};
use chronos::Error;

fn excerpt_records() -> Vec<LogRecord> {
    vec![
        LogRecord::new(Level::Info, "ARKodeEvolve", "begin-step-attempt")
            .with("step", 1usize)
            .with("tn", 0.0)
            .with("h", 0.000102986025609508),
        LogRecord::new(Level::Info, "arkStep_TakeStep_Z", "begin-stage")
            .with("stage", 0usize)
            .with("implicit", 0usize)
            .with("tcur", 0.0),
        LogRecord::new(Level::Debug, "arkStep_TakeStep_Z", "explicit stage")
            .with("z_0", vec![1.224744871391589, 1.732050807568877]),
    ]
}

#[test]
fn log_lines_match_golden_file() {
    let golden = include_str!("golden/log_excerpt.txt");
    let dir = std::env::temp_dir().join(format!("chronos-golden-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("log.txt");
    let _ = std::fs::remove_file(&path);

    let mut logger = Logger::silent();
    logger.set_max_level(Some(Level::Debug));
    logger.set_sink(Level::Info, &SinkSpec::File(path.clone())).unwrap();
    logger.set_sink(Level::Debug, &SinkSpec::File(path.clone())).unwrap();
    for r in excerpt_records() {
        assert!(logger.log(&r).is_success());
    }
    drop(logger);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), golden);

    let rendered: String = excerpt_records().iter().map(|r| r.render(0) + "\n").collect();
    assert_eq!(rendered, golden);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn last_error_is_cleared_by_reading() {
    let mut logger = Logger::silent();
    logger.set_max_level(Some(Level::Error));
    logger.capture(Level::Error);
    let logger = Arc::new(logger);
    let mut ctx = ErrorContext::new(Arc::clone(&logger));
    assert!(ctx.get_last_error().is_success());
    ctx.record_error(&Error::InvalidArgument("bad input".into()), "caller");
    let e = ctx.get_last_error();
    assert_eq!(e.code, -2);
    assert!(ctx.get_last_error().is_success());
    assert!(logger.take_buffer(Level::Error).contains("[ERROR][rank 0][caller]"));
}
