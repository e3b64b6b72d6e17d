use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense real matrix, row-major storage, explicit dimensions.
///
/// The element type is `f64` throughout; entries are required to be finite.
/// The trace inner product `<y,x> = trace(y^T x)` makes the space of all
/// m-by-n matrices Euclidean, and every norm in this crate is the induced
/// Frobenius norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Matrix {
    /// Validating constructor: dimensions positive, length consistent,
    /// every entry finite.
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "entry count {} does not match {rows}x{cols}",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite entry {bad} in {rows}x{cols} matrix"
            )));
        }
        Ok(Matrix { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Matrix { rows, cols, entries }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("no rows supplied".into()));
        }
        let cols = rows[0].len();
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::InvalidParameter("ragged row lengths".into()));
            }
            entries.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, entries)
    }

    /// Rectangular diagonal embedding of `values` into an m-by-n matrix.
    pub fn diag_embed(rows: usize, cols: usize, values: &[f64]) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for (i, &v) in values.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = v;
        }
        m
    }

    /// Square diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        Matrix::diag_embed(values.len(), values.len(), values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    /// Row-major flattening; the coordinates of the matrix in the standard
    /// basis E_ij ordered by (i, j).
    pub fn vectorize(&self) -> Vec<f64> {
        self.entries.clone()
    }

    /// Inverse of [`Matrix::vectorize`].
    pub fn from_vectorized(rows: usize, cols: usize, v: Vec<f64>) -> Result<Self> {
        Matrix::new(rows, cols, v)
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn require_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(self.shape(), other.shape()))
        }
    }

    /// Trace inner product trace(y^T x) = sum of entrywise products.
    pub fn trace_inner(&self, other: &Matrix) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Frobenius norm, the norm induced by the trace inner product.
    pub fn fro_norm(&self) -> f64 {
        self.entries.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.require_same_shape(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.require_same_shape(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e * factor).collect(),
        }
    }

    /// self += factor * other, shapes must already agree.
    pub fn axpy(&mut self, factor: f64, other: &Matrix) -> Result<()> {
        self.require_same_shape(other)?;
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape((self.cols, other.rows), other.shape()));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self[(i, p)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(p, j)];
                }
            }
        }
        Ok(out)
    }

    /// Distance in Frobenius norm.
    pub fn distance(&self, other: &Matrix) -> Result<f64> {
        Ok(self.sub(other)?.fro_norm())
    }

    /// self * v for a coordinate vector of length `cols`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.entries[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// self^T * v for a coordinate vector of length `rows`.
    pub fn matvec_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = &self.entries[i * self.cols..(i + 1) * self.cols];
            let vi = v[i];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.is_finite())
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Matrix whose columns are the given equal-length vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Matrix> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter("no columns supplied".into()));
        }
        let rows = columns[0].len();
        let mut m = Matrix::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::InvalidParameter("ragged column lengths".into()));
            }
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    /// Text form: first line "m n", then m lines of n whitespace-separated
    /// reals. Floats are printed with the shortest representation that parses
    /// back to the identical bit pattern, so write/read round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                if j > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{}", fmt_f64(self[(i, j)]));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Matrix> {
        let mut lines = text.lines().enumerate();
        let (lineno, header) = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty matrix text".into(),
            })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad dimension token '{t}'"),
                })
            })
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: "header must be 'rows cols'".into(),
            });
        }
        let (rows, cols) = (dims[0], dims[1]);
        let mut entries = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                line: rows + 1,
                message: "matrix text ended early".into(),
            })?;
            for t in line.split_whitespace() {
                let v: f64 = t.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad real token '{t}'"),
                })?;
                entries.push(v);
            }
        }
        Matrix::new(rows, cols, entries)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// Shortest round-trip decimal form; `parse::<f64>` recovers the exact value.
pub fn fmt_f64(v: f64) -> String {
    // Avoid "-0" vs "0" drift between otherwise equal runs.
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v}")
}
