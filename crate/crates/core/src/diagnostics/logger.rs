use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use super::ErrCode;
use crate::error::Error;

/// Message classes, most severe first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Error = 1,
    Warning = 2,
    Info = 3,
    Debug = 4,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Error, Level::Warning, Level::Info, Level::Debug];

    pub fn tag(self) -> &'static str {
        match self {
            Level::Error => "ERROR",
            Level::Warning => "WARNING",
            Level::Info => "INFO",
            Level::Debug => "DEBUG",
        }
    }

    fn index(self) -> usize {
        self as usize - 1
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "error" | "1" => Ok(Level::Error),
            "warning" | "warn" | "2" => Ok(Level::Warning),
            "info" | "3" => Ok(Level::Info),
            "debug" | "4" => Ok(Level::Debug),
            other => Err(Error::Parse(format!("unknown log level '{other}'"))),
        }
    }
}

/// A payload value: a scalar, an integer, text, or a vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
    Vector(Vec<f64>),
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}
impl From<i32> for Value {
    fn from(v: i32) -> Self {
        Value::Int(v as i64)
    }
}
impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}
impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}
impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}
impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}
impl From<Vec<f64>> for Value {
    fn from(v: Vec<f64>) -> Self {
        Value::Vector(v)
    }
}
impl From<&[f64]> for Value {
    fn from(v: &[f64]) -> Self {
        Value::Vector(v.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub level: Level,
    pub scope: String,
    pub label: String,
    pub payload: Vec<(String, Value)>,
}

impl LogRecord {
    pub fn new(level: Level, scope: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            level,
            scope: scope.into(),
            label: label.into(),
            payload: Vec::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.payload.push((key.into(), value.into()));
        self
    }

    /// The record's text, without a trailing newline.
    pub fn render(&self, rank: i32) -> String {
        let mut out = format!(
            "[{}][rank {}][{}][{}]",
            self.level.tag(),
            rank,
            self.scope,
            self.label
        );
        for (i, (key, value)) in self.payload.iter().enumerate() {
            out.push_str(if i == 0 { " " } else { ", " });
            match value {
                Value::Int(v) => {
                    let _ = write!(out, "{key} = {v}");
                }
                Value::Real(v) => {
                    let _ = write!(out, "{key} = {}", format_scalar(*v));
                }
                Value::Text(v) => {
                    let _ = write!(out, "{key} = {v}");
                }
                Value::Vector(v) => {
                    let _ = write!(out, "{key}(:) =");
                    for x in v {
                        out.push('\n');
                        out.push(' ');
                        out.push_str(&format_sci(*x, 15));
                    }
                }
            }
        }
        out
    }
}

/// Shortest decimal that survives rounding to 15 significant digits,
/// in `%g` layout (fixed for exponents in [-5, 15), scientific otherwise).
pub fn format_scalar(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{v:.14e}").parse().unwrap_or(v);
    // `{:e}` on f64 prints the shortest round-trip mantissa.
    let sci = format!("{rounded:e}");
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if (-5..15).contains(&exp) {
        let n = digits.len() as i32;
        let body = if exp < 0 {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        } else if exp + 1 >= n {
            format!("{}{}", digits, "0".repeat((exp + 1 - n) as usize))
        } else {
            let (int, frac) = digits.split_at((exp + 1) as usize);
            format!("{int}.{frac}")
        };
        format!("{sign}{body}")
    } else {
        let (first, rest) = digits.split_at(1);
        let mant = if rest.is_empty() {
            first.to_string()
        } else {
            format!("{first}.{rest}")
        };
        format!("{sign}{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// C-style `%.{frac}e`: mantissa with a fixed number of fractional digits and
/// a signed, at-least-two-digit exponent.
pub fn format_sci(v: f64, frac: usize) -> String {
    if !v.is_finite() {
        return format_scalar(v);
    }
    let s = format!("{v:.frac$e}");
    let (mantissa, exp) = s.split_once('e').unwrap_or((&s, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

/// Where a level's lines go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkSpec {
    Stdout,
    Stderr,
    File(PathBuf),
}

impl SinkSpec {
    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "stdout" => SinkSpec::Stdout,
            "stderr" => SinkSpec::Stderr,
            path => SinkSpec::File(PathBuf::from(path)),
        }
    }
}

enum Sink {
    Stdout,
    Stderr,
    File(File),
    Buffer(Vec<u8>),
}

impl Sink {
    fn write_line(&mut self, line: &str) -> std::io::Result<()> {
        let mut bytes = Vec::with_capacity(line.len() + 1);
        bytes.extend_from_slice(line.as_bytes());
        bytes.push(b'\n');
        match self {
            Sink::Stdout => std::io::stdout().lock().write_all(&bytes),
            Sink::Stderr => std::io::stderr().lock().write_all(&bytes),
            Sink::File(f) => f.write_all(&bytes),
            Sink::Buffer(b) => {
                b.extend_from_slice(&bytes);
                Ok(())
            }
        }
    }
}

/// Structured, level-routed logger. Shareable across threads; every record
/// is written with a single `write_all` under a lock.
pub struct Logger {
    rank: i32,
    max_level: Option<Level>,
    sinks: Mutex<[Option<Sink>; 4]>,
}

impl std::fmt::Debug for Logger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Logger")
            .field("rank", &self.rank)
            .field("max_level", &self.max_level)
            .finish()
    }
}

impl Default for Logger {
    /// ERROR records to standard error, nothing else.
    fn default() -> Self {
        let mut l = Self::silent();
        l.max_level = Some(Level::Error);
        l.sinks.get_mut().unwrap()[Level::Error.index()] = Some(Sink::Stderr);
        l
    }
}

impl Logger {
    pub fn silent() -> Self {
        Self {
            rank: 0,
            max_level: None,
            sinks: Mutex::new([None, None, None, None]),
        }
    }

    pub fn set_rank(&mut self, rank: i32) {
        self.rank = rank;
    }

    pub fn rank(&self) -> i32 {
        self.rank
    }

    /// Records above `level` are discarded; `None` disables everything.
    pub fn set_max_level(&mut self, level: Option<Level>) {
        self.max_level = level;
    }

    pub fn max_level(&self) -> Option<Level> {
        self.max_level
    }

    pub fn set_sink(&mut self, level: Level, spec: &SinkSpec) -> Result<(), Error> {
        let sink = match spec {
            SinkSpec::Stdout => Sink::Stdout,
            SinkSpec::Stderr => Sink::Stderr,
            SinkSpec::File(path) => Sink::File(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
            ),
        };
        self.sinks.get_mut().unwrap()[level.index()] = Some(sink);
        Ok(())
    }

    /// Routes `level` into an in-memory buffer, retrievable with [`Logger::take_buffer`].
    pub fn capture(&mut self, level: Level) {
        self.sinks.get_mut().unwrap()[level.index()] = Some(Sink::Buffer(Vec::new()));
    }

    pub fn take_buffer(&self, level: Level) -> String {
        let mut sinks = self.sinks.lock().unwrap();
        match &mut sinks[level.index()] {
            Some(Sink::Buffer(b)) => String::from_utf8(std::mem::take(b)).unwrap_or_default(),
            _ => String::new(),
        }
    }

    pub fn has_sink(&self, level: Level) -> bool {
        self.sinks.lock().map(|s| s[level.index()].is_some()).unwrap_or(false)
    }

    pub fn enabled(&self, level: Level) -> bool {
        match self.max_level {
            Some(max) if level <= max => {
                self.sinks.lock().map(|s| s[level.index()].is_some()).unwrap_or(false)
            }
            _ => false,
        }
    }

    /// Emits a record to its level's sink. Disabled levels succeed silently.
    pub fn log(&self, record: &LogRecord) -> ErrCode {
        match self.max_level {
            Some(max) if record.level <= max => {}
            _ => return ErrCode::success(),
        }
        let mut sinks = match self.sinks.lock() {
            Ok(s) => s,
            Err(poisoned) => poisoned.into_inner(),
        };
        let Some(sink) = sinks[record.level.index()].as_mut() else {
            return ErrCode::success();
        };
        match sink.write_line(&record.render(self.rank)) {
            Ok(()) => ErrCode::success(),
            Err(e) => ErrCode::new(
                Error::Io(e.to_string()).code(),
                format!("failed to write log record: {e}"),
                "Logger::log",
                "diagnostics",
            ),
        }
    }

    /// Builds a logger from `CHRONOS_LOG_{ERROR,WARNING,INFO,DEBUG}` (a file
    /// path, `stdout`, or `stderr`) and `CHRONOS_LOG_LEVEL`.
    pub fn from_environment() -> (Logger, ErrCode) {
        Self::from_vars(|k| std::env::var(k).ok())
    }

    /// [`Logger::from_environment`] with an explicit variable lookup.
    pub fn from_vars(lookup: impl Fn(&str) -> Option<String>) -> (Logger, ErrCode) {
        let mut status = ErrCode::success();
        let level = match lookup("CHRONOS_LOG_LEVEL") {
            None => Level::Error,
            Some(s) => match s.parse::<Level>() {
                Ok(l) => l,
                Err(e) => return (Logger::default(), ErrCode::from_error(&e, "Logger::from_environment")),
            },
        };
        let mut logger = Logger::default();
        logger.max_level = Some(level);
        let mut fallback_warnings = Vec::new();
        for lvl in Level::ALL {
            let var = format!("CHRONOS_LOG_{}", lvl.tag());
            if let Some(spec) = lookup(&var) {
                let spec = SinkSpec::parse(&spec);
                if let Err(e) = logger.set_sink(lvl, &spec) {
                    let _ = logger.set_sink(lvl, &SinkSpec::Stderr);
                    status = ErrCode::from_error(&e, "Logger::from_environment");
                    fallback_warnings.push(format!("{var}: {e}; using stderr"));
                }
            }
        }
        for msg in fallback_warnings {
            if logger.sinks.get_mut().unwrap()[Level::Warning.index()].is_none() {
                let _ = logger.set_sink(Level::Warning, &SinkSpec::Stderr);
            }
            let saved = logger.max_level;
            logger.max_level = Some(saved.unwrap_or(Level::Warning).max(Level::Warning));
            logger.log(&LogRecord::new(Level::Warning, "Logger", "sink-fallback").with("message", msg));
            logger.max_level = saved;
        }
        (logger, status)
    }
}
