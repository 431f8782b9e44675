//! Headerless comma-separated matrices.

use nalgebra::DMatrix;

use super::report::format_sig17;
use super::MatrixIoError;

/// Parses a headerless CSV matrix. Blank lines are ignored; every row must
/// have the same number of fields.
pub fn decode(bytes: &[u8]) -> Result<DMatrix<f64>, MatrixIoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| MatrixIoError::Csv {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows + 1);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *cols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(MatrixIoError::Ragged {
                line,
                expected,
                found: record.len(),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| MatrixIoError::Csv {
                line,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(MatrixIoError::NonFinite { row: rows, col });
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(MatrixIoError::Empty { rows, cols });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Writes a matrix with 17 significant digits per entry, enough to
/// round-trip every f64 exactly.
pub fn encode(data: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols()).map(|c| format_sig17(data[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_whitespace_and_trailing_newline() {
        let m = decode(b" 1, 2.5\n-3e2 ,4\n\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.5, -300.0, 4.0]));
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = decode(b"1,2\n3\n").unwrap_err();
        assert_eq!(err.code(), "csv-ragged");
    }

    #[test]
    fn garbage_rejected() {
        assert_eq!(decode(b"1,x\n").unwrap_err().code(), "csv-parse");
        assert_eq!(decode(b"1,inf\n").unwrap_err().code(), "non-finite");
        assert_eq!(decode(b"\n").unwrap_err().code(), "empty");
    }

    #[test]
    fn encode_round_trips_exactly() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -1.0 / 3.0, 1e-300, std::f64::consts::PI]);
        assert_eq!(decode(encode(&m).as_bytes()).unwrap(), m);
    }
}
