//! Dense preference parameter matrices and their text format.
//!
//! A `ParamMatrix` holds the m-by-n matrix Θ whose entry (i, j) is the disutility
//! of item j for consumer type i (choice probabilities are proportional to
//! e^{-Θ_ij} within an assortment). Adding a constant to a row changes nothing
//! observable, so estimates are reported row-centered: each row sums to zero.
//!
//! Text format:
//! ```text
//! m n
//! v11 v12 ... v1n
//! ...
//! ```
//! with values rendered to 17 significant digits so that reading and rewriting a
//! file is value-preserving.

use crate::error::{invalid, parse_err, Result};
use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Formats a float with 17 significant digits (value-preserving for f64).
pub(crate) fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    values: DMatrix<f64>,
    row_centered: bool,
}

impl ParamMatrix {
    /// Wraps a dense matrix. The result is not flagged row-centered.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(invalid("parameter matrix must have positive dimensions"));
        }
        Ok(Self {
            values,
            row_centered: false,
        })
    }

    /// The all-zero matrix (trivially row-centered).
    pub fn zeros(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid("parameter matrix must have positive dimensions"));
        }
        Ok(Self {
            values: DMatrix::zeros(m, n),
            row_centered: true,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn is_row_centered(&self) -> bool {
        self.row_centered
    }

    pub(crate) fn centered(values: DMatrix<f64>) -> Self {
        Self {
            values,
            row_centered: true,
        }
    }

    pub fn to_text(&self) -> String {
        let (m, n) = (self.nrows(), self.ncols());
        let mut out = String::new();
        let _ = writeln!(out, "{m} {n}");
        for i in 0..m {
            for j in 0..n {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(&format_float(self.values[(i, j)]));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the matrix text format, reporting 1-based line numbers on failure.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header line"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| parse_err(1, format!("invalid dimension `{tok}`")))
            })
            .collect::<Result<_>>()?;
        let [m, n] = dims[..] else {
            return Err(parse_err(1, format!("expected 2 header fields `m n`, found {}", dims.len())));
        };
        if m == 0 || n == 0 {
            return Err(parse_err(1, "dimensions must be positive"));
        }
        let mut values = DMatrix::zeros(m, n);
        for i in 0..m {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| parse_err(m + 1, format!("expected {m} value rows")))?;
            let lineno = idx + 1;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("invalid value `{tok}`")))
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(parse_err(
                    lineno,
                    format!("expected {n} values, found {}", row.len()),
                ));
            }
            for (j, v) in row.into_iter().enumerate() {
                values[(i, j)] = v;
            }
        }
        if let Some((idx, line)) = lines.next() {
            if !line.trim().is_empty() {
                return Err(parse_err(idx + 1, "trailing content after last row"));
            }
        }
        Self::from_matrix(values)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

/// Kahan-compensated sum.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Subtracts each row's mean from that row.
///
/// Centering repeats (at most a handful of passes) until the compensated row mean
/// is below 1e-12 relative to max(1, row max-magnitude), which makes the
/// operation exactly idempotent: a second application finds every row already
/// below the threshold and returns its input bitwise.
pub fn row_center(matrix: &DMatrix<f64>) -> ParamMatrix {
    let mut values = matrix.clone();
    let (m, n) = (values.nrows(), values.ncols());
    for i in 0..m {
        for _ in 0..8 {
            let inf = (0..n).fold(0.0_f64, |acc, j| acc.max(values[(i, j)].abs()));
            let mean = compensated_sum((0..n).map(|j| values[(i, j)])) / n as f64;
            if mean.abs() <= 1e-12 * inf.max(1.0) {
                break;
            }
            for j in 0..n {
                values[(i, j)] -= mean;
            }
        }
    }
    ParamMatrix::centered(values)
}

/// Root-mean-square difference: ‖a − b‖_F / √(mn).
pub fn rmse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let frob = (a - b).norm();
    Ok(frob / ((a.nrows() * a.ncols()) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn row_center_basic() {
        let m = dmatrix![1.0, 2.0, 3.0];
        let c = row_center(&m);
        assert_eq!(c.values().as_slice(), &[-1.0, 0.0, 1.0]);
        assert!(c.is_row_centered());
    }

    #[test]
    fn row_center_constant_rows_to_zero() {
        let m = DMatrix::from_element(3, 4, 7.5);
        let c = row_center(&m);
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn row_center_idempotent_exactly() {
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift, just to get varied bit patterns without pulling in rand here
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state as f64 / u64::MAX as f64) * 6.0 - 3.0
        };
        for trial in 0..20 {
            let m = DMatrix::from_fn(5 + trial % 3, 7, |_, _| next());
            let once = row_center(&m);
            let twice = row_center(once.values());
            assert_eq!(once.values(), twice.values(), "trial {trial}");
        }
    }

    #[test]
    fn row_center_tricky_mean() {
        let m = dmatrix![1.0, 2.0, 4.0];
        let once = row_center(&m);
        let twice = row_center(once.values());
        assert_eq!(once.values(), twice.values());
        let sum: f64 = once.values().iter().sum();
        assert!(sum.abs() <= 1e-9 * 3.0 * 4.0);
    }

    #[test]
    fn rmse_examples() {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::from_element(2, 2, 3.0);
        assert_relative_eq!(rmse(&a, &b).unwrap(), 3.0);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let c = dmatrix![1.0, 2.0; 3.0, 4.0];
        assert_relative_eq!(rmse(&c, &c).unwrap(), 0.0);
        assert!(rmse(&a, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn matrix_text_round_trip() {
        let m = dmatrix![1.0, -0.5; 1e-17, std::f64::consts::PI];
        let p = ParamMatrix::from_matrix(m).unwrap();
        let text = p.to_text();
        let back = ParamMatrix::from_text(&text).unwrap();
        assert_eq!(back.values(), p.values());
        // rewriting is byte-identical
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn matrix_text_errors() {
        assert!(ParamMatrix::from_text("").is_err());
        let err = ParamMatrix::from_text("2 2\n1 2\n3\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ParamMatrix::from_text("2 2\n1 2\n3 x\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ParamMatrix::from_text("2\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn format_float_17_digits() {
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
        assert_eq!(format_float(-0.25), "-2.5000000000000000e-1");
        let x = 0.1 + 0.2;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }
}
