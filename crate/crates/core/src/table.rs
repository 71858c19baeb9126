//! Square value grids on `[0,1]^2` and the whitespace matrix file format.
//!
//! The file format is shared by tabulated costs, tabulated kernels and
//! exported kernel matrices: the first token is the order `m`, followed by
//! `m * m` values in row-major order. Any whitespace separates tokens.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Parses the whitespace matrix format.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut tokens = text.split_whitespace();
    let order: usize = tokens
        .next()
        .ok_or_else(|| Error::MatrixFormat("empty input".into()))?
        .parse()
        .map_err(|e| Error::MatrixFormat(format!("bad order: {e}")))?;
    if order == 0 {
        return Err(Error::MatrixFormat("order must be positive".into()));
    }
    let mut values = Vec::with_capacity(order * order);
    for tok in tokens {
        let v: f64 = tok.parse().map_err(|e| Error::MatrixFormat(format!("bad value {tok:?}: {e}")))?;
        values.push(v);
    }
    if values.len() != order * order {
        return Err(Error::MatrixFormat(format!(
            "expected {} values for order {order}, found {}",
            order * order,
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(order, order, &values))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text)
}

/// Formats a square matrix with round-trip precision.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_matrix(m)).map_err(|e| Error::io(path, e))
}

/// Values on the uniform grid `k / (m - 1)`, `k = 0..m`, interpolated
/// bilinearly in between.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    values: DMatrix<f64>,
}

impl Table {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() || values.nrows() < 2 {
            return Err(Error::MatrixFormat("tabulated grid must be square with order >= 2".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_matrix(path)?)
    }

    pub fn order(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let last = (self.order() - 1) as f64;
        let (i, fx) = cell(x * last, self.order());
        let (j, fy) = cell(y * last, self.order());
        let v = &self.values;
        let top = v[(i, j)] * (1.0 - fy) + v[(i, j + 1)] * fy;
        let bottom = v[(i + 1, j)] * (1.0 - fy) + v[(i + 1, j + 1)] * fy;
        top * (1.0 - fx) + bottom * fx
    }
}

// Lower cell index and fractional offset for a scaled coordinate.
fn cell(s: f64, order: usize) -> (usize, f64) {
    let i = (s.floor() as usize).min(order - 2);
    (i, s - i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_agree() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0 / 3.0]);
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_short_file() {
        assert!(matches!(parse_matrix("3\n1 2 3"), Err(Error::MatrixFormat(_))));
        assert!(parse_matrix("").is_err());
    }

    #[test]
    fn bilinear_hits_nodes_and_midpoints() {
        let t = Table::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 2.0])).unwrap();
        assert_eq!(t.interpolate(0.0, 0.0), 0.0);
        assert_eq!(t.interpolate(1.0, 1.0), 2.0);
        assert_eq!(t.interpolate(0.5, 0.5), 1.0);
        assert!((t.interpolate(0.25, 1.0) - 1.25).abs() < 1e-15);
    }
}
