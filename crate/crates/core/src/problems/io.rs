//! Dense headerless CSV matrices: one row per line, comma-separated decimals.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Reads a rectangular numeric matrix. With `require_nonnegative`, negative entries are rejected.
pub fn load_matrix_csv(path: impl AsRef<Path>, require_nonnegative: bool) -> Result<Array2<f64>> {
    let file = File::open(path.as_ref())?;
    read_matrix(file, require_nonnegative)
}

pub fn read_matrix<R: std::io::Read>(reader: R, require_nonnegative: bool) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if i == 0 {
            cols = record.len();
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Parse(format!(
                    "row {}, column {}: not a number: {cell:?}",
                    i + 1,
                    j + 1
                ))
            })?;
            if v.is_nan() {
                return Err(Error::Parse(format!(
                    "row {}, column {}: NaN",
                    i + 1,
                    j + 1
                )));
            }
            if require_nonnegative && v < 0.0 {
                return Err(Error::Parse(format!(
                    "row {}, column {}: negative entry {v}",
                    i + 1,
                    j + 1
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Parse(e.to_string()))
}

/// Writes with shortest round-trip formatting so a reload is bit-exact.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    File::create(path.as_ref())?.write_all(&bytes)?;
    Ok(())
}
