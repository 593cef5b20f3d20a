//! CSV input: observation tables, plain matrices, and vectors.
//!
//! Data files are one row per observation, one column per feature. A header
//! row is detected rather than declared: if any field of the first row fails
//! to parse as a number, the row is treated as column names and skipped.
//! Errors carry the 1-based line number of the offending row.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mdqda::la::DataMatrix;
use nalgebra::{DMatrix, DVector};

/// Numeric rows of a CSV file, header auto-skipped; every row must have the
/// same width and every value must be finite.
fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        let mut row = Vec::with_capacity(record.len());
        let mut numeric = true;
        for field in record.iter() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                Ok(_) => bail!("{}: non-finite value at line {line}", path.display()),
                Err(_) => {
                    numeric = false;
                    break;
                }
            }
        }
        if !numeric {
            if i == 0 {
                continue; // header row
            }
            bail!("{}: non-numeric field at line {line}", path.display());
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                bail!(
                    "{}: line {line} has {} fields, expected {}",
                    path.display(),
                    row.len(),
                    first.len()
                );
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(rows)
}

/// Loads an observations file into the internal orientation (one column per
/// observation).
pub fn read_observations(path: &Path) -> Result<DataMatrix> {
    let rows = read_rows(path)?;
    let n = rows.len();
    let p = rows[0].len();
    let m = DMatrix::from_fn(p, n, |i, j| rows[j][i]);
    DataMatrix::new(m).with_context(|| format!("{}: invalid data", path.display()))
}

/// Loads a square numeric matrix, oriented exactly as written.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_rows(path)?;
    let r = rows.len();
    let c = rows[0].len();
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Loads a vector written either as a single row or a single column.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let rows = read_rows(path)?;
    if rows.len() == 1 {
        return Ok(DVector::from_vec(rows.into_iter().next().unwrap()));
    }
    if rows[0].len() != 1 {
        bail!(
            "{}: expected a single row or a single column, got {}x{}",
            path.display(),
            rows.len(),
            rows[0].len()
        );
    }
    Ok(DVector::from_iterator(
        rows.len(),
        rows.into_iter().map(|r| r[0]),
    ))
}
