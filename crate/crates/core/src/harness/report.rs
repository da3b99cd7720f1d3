//! CSV output and log-log slope fitting shared by the experiments.

use std::path::Path;

use crate::error::{Error, Result};

/// Shortest decimal that parses back to the same `f64`.
pub fn csv_float(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let a = v.abs();
    if a == 0.0 || (1e-5..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// A header and rows of already formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_into(&mut w)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write_into(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn write_into<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        Ok(())
    }
}

/// Least-squares slope of `log |e|` against `log h`; `None` with fewer than
/// two usable points (non-finite or zero errors are skipped).
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| *h > 0.0 && e.is_finite() && *e != 0.0)
        .map(|(h, e)| (h.ln(), e.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.powi(-7), 6.02e23, -1.234e-17, 5e-324, 0.0, 12345.678] {
            let s = csv_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(csv_float(0.5), "0.5");
        assert_eq!(csv_float(f64::NAN), "nan");
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| {
            let h = 0.5f64.powi(i);
            (h, 3.0 * h.powi(4))
        }).collect();
        assert!((fit_slope(&pts).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(fit_slope(&pts[..1]), None);
    }

    #[test]
    fn table_has_header_then_rows() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), csv_float(0.25)]);
        assert_eq!(t.to_csv_string().unwrap(), "a,b\n1,0.25\n");
    }
}
