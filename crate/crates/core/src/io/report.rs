//! JSON and CSV report output.
//!
//! JSON objects are emitted with sorted keys and shortest round-trip float
//! formatting; non-finite values become the strings `"inf"`, `"-inf"` and
//! `"NaN"`. CSV fields use 17 significant digits in scientific notation, so
//! every value parses back to the identical f64. Both are byte-deterministic.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Anything that can be written as a nested JSON document and as a flat CSV
/// table.
pub trait Report {
    fn to_json(&self) -> Value;
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

/// One row of a tabular report.
pub trait Record {
    const COLUMNS: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
    fn to_json(&self) -> Value;
}

impl<T: Record> Report for [T] {
    fn to_json(&self) -> Value {
        Value::Array(self.iter().map(Record::to_json).collect())
    }

    fn csv_header(&self) -> Vec<String> {
        T::COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.iter().map(Record::fields).collect()
    }
}

impl<T: Record> Report for Vec<T> {
    fn to_json(&self) -> Value {
        self.as_slice().to_json()
    }

    fn csv_header(&self) -> Vec<String> {
        self.as_slice().csv_header()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.as_slice().csv_rows()
    }
}

/// 17 significant digits, scientific notation.
pub fn format_sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        non_finite_label(x).to_owned()
    }
}

pub fn format_opt(x: Option<f64>, missing: &str) -> String {
    x.map(format_sig17).unwrap_or_else(|| missing.to_owned())
}

fn non_finite_label(x: f64) -> &'static str {
    if x.is_nan() {
        "NaN"
    } else if x > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

/// A JSON number, or a string label for non-finite values.
pub fn json_f64(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(non_finite_label(x).to_owned()))
}

pub fn json_opt(x: Option<f64>) -> Value {
    x.map(json_f64).unwrap_or(Value::Null)
}

/// Inverse of [`json_f64`].
pub fn f64_from_json(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

pub fn render_json(report: &(impl Report + ?Sized)) -> String {
    let mut s = serde_json::to_string_pretty(&report.to_json()).expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn render_csv(report: &(impl Report + ?Sized)) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(report.csv_header()).expect("in-memory write");
    for row in report.csv_rows() {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
}

pub fn render(report: &(impl Report + ?Sized), format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => render_json(report),
        ReportFormat::Csv => render_csv(report),
    }
}

/// Writes a report, creating parent directories as needed.
pub fn write_report(report: &(impl Report + ?Sized), path: &Path, format: ReportFormat) -> Result<()> {
    let write_err = |source| Error::Write {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(write_err)?;
        }
    }
    std::fs::write(path, render(report, format)).map_err(write_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    struct Row(f64, Option<f64>);

    impl Record for Row {
        const COLUMNS: &'static [&'static str] = &["a", "b"];
        fn fields(&self) -> Vec<String> {
            vec![format_sig17(self.0), format_opt(self.1, "NA")]
        }
        fn to_json(&self) -> Value {
            json!({"b": json_opt(self.1), "a": json_f64(self.0)})
        }
    }

    #[test]
    fn sig17_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-310, 1e308, 0.0, -0.0, f64::MIN_POSITIVE] {
            let s = format_sig17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(
            format_sig17(f64::NEG_INFINITY).parse::<f64>().unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn empty_report_has_header_only() {
        let rows: Vec<Row> = Vec::new();
        assert_eq!(render_csv(&rows), "a,b\n");
        assert_eq!(render_json(&rows), "[]\n");
    }

    #[test]
    fn json_keys_sorted_and_non_finite_labelled() {
        let rows = vec![Row(f64::NEG_INFINITY, None)];
        let s = render_json(&rows);
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(f64_from_json(&v[0]["a"]), Some(f64::NEG_INFINITY));
        assert!(v[0]["b"].is_null());
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = write_report(&Vec::<Row>::new(), &blocker.join("r.csv"), ReportFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Write { .. }));
    }
}
