//! Convergence CSV: header `iter,seconds,train_obj,valid_obj,valid_err_pct`,
//! one row per record, numbers with 9 significant digits, `nan` for a
//! missing error column, `\n` line endings.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{KsdError, Result};

pub const HEADER: &str = "iter,seconds,train_obj,valid_obj,valid_err_pct";

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub iter: usize,
    /// Cumulative optimizer wall-clock time.
    pub seconds: f64,
    pub train_obj: f64,
    pub valid_obj: f64,
    /// Classification error on the validation split, in percent.
    pub valid_err_pct: Option<f64>,
}

/// `x` with 9 significant digits; fixed notation for moderate magnitudes.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

pub fn render_csv(records: &[ConvergenceRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in records {
        let err = r.valid_err_pct.map_or_else(|| "nan".to_string(), format_sig9);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            format_sig9(r.seconds),
            format_sig9(r.train_obj),
            format_sig9(r.valid_obj),
            err
        );
    }
    out
}

pub fn write_csv(records: &[ConvergenceRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_csv(records))?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<ConvergenceRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(KsdError::Format("convergence CSV header mismatch".into()));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(KsdError::Format(format!("row {}: expected 5 columns, found {}", i + 1, fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| KsdError::Format(format!("row {}: bad number '{s}'", i + 1)))
        };
        let err = num(fields[4])?;
        records.push(ConvergenceRecord {
            iter: fields[0].parse().map_err(|_| KsdError::Format(format!("row {}: bad iteration", i + 1)))?,
            seconds: num(fields[1])?,
            train_obj: num(fields[2])?,
            valid_obj: num(fields[3])?,
            valid_err_pct: (!err.is_nan()).then_some(err),
        });
    }
    Ok(records)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ConvergenceRecord>> {
    parse_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(format_sig9(1.0), "1.00000000");
        assert_eq!(format_sig9(123.456), "123.456000");
        assert_eq!(format_sig9(0.0012345678912), "0.00123456789");
        assert_eq!(format_sig9(1.5e-7), "1.50000000e-7");
        assert_eq!(format_sig9(-2.5), "-2.50000000");
        assert_eq!(format_sig9(f64::NAN), "nan");
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(render_csv(&[]), format!("{HEADER}\n"));
    }

    #[test]
    fn round_trip_and_column_count() {
        let recs = vec![
            ConvergenceRecord { iter: 1, seconds: 0.25, train_obj: 1.5, valid_obj: 2.0, valid_err_pct: Some(12.5) },
            ConvergenceRecord { iter: 2, seconds: 0.5, train_obj: 1.25, valid_obj: 1.75, valid_err_pct: None },
        ];
        let text = render_csv(&recs);
        assert!(text.lines().all(|l| l.split(',').count() == 5));
        assert!(!text.contains('\r'));
        assert_eq!(parse_csv(&text).unwrap(), recs);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_csv(&recs[..1], &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), recs[..1].to_vec());
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(parse_csv("iter,seconds\n").is_err());
        assert!(parse_csv(&format!("{HEADER}\n1,2,3\n")).is_err());
    }
}
