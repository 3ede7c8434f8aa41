//! Dense row-major embedding matrices and unit-sphere normalization.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};

/// Rows below this L2 norm cannot be projected onto the unit sphere.
pub const ZERO_ROW_NORM: f64 = 1e-12;

/// Tolerance on the unit-norm invariant of [`NormalizedMatrix`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Visual,
    Textual,
    Attention,
}

/// A dense `rows × cols` matrix of finite `f64` values.
///
/// Rows are token embeddings for `Visual`/`Textual`; an `Attention` matrix is
/// square and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    kind: MatrixKind,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, kind: MatrixKind) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PruneError::Shape(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(PruneError::Shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(PruneError::NonFinite {
                row: pos / cols,
                col: pos % cols,
                value: data[pos],
            });
        }
        if kind == MatrixKind::Attention {
            if rows != cols {
                return Err(PruneError::Shape(format!(
                    "attention matrix must be square, got {rows}x{cols}"
                )));
            }
            if let Some(pos) = data.iter().position(|&x| x < 0.0) {
                return Err(PruneError::Data(format!(
                    "attention entry at row {}, col {} is negative ({})",
                    pos / cols,
                    pos % cols,
                    data[pos]
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            data,
            kind,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], kind: MatrixKind) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(PruneError::Shape(format!(
                "row {bad} has length {}, expected {d}",
                rows[bad].len()
            )));
        }
        Self::new(n, d, rows.concat(), kind)
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
    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn with_kind(self, kind: MatrixKind) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data, kind)
    }

    /// Copies the given rows, in order, into a new matrix of the same kind.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(PruneError::Index {
                    index: i,
                    len: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        let kind = match self.kind {
            MatrixKind::Attention => MatrixKind::Visual,
            k => k,
        };
        Self::new(indices.len(), self.cols, data, kind)
    }
}

/// An [`EmbeddingMatrix`] whose rows all lie on the unit hypersphere.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix(EmbeddingMatrix);

impl NormalizedMatrix {
    /// Wraps a matrix whose rows are already unit-norm within [`UNIT_NORM_TOL`].
    pub fn try_from_unit(m: EmbeddingMatrix) -> Result<Self> {
        for i in 0..m.rows() {
            let norm = l2_norm(m.row(i));
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(PruneError::Data(format!(
                    "row {i} has norm {norm}, expected unit norm"
                )));
            }
        }
        Ok(Self(m))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self(self.0.select_rows(indices)?))
    }

    pub fn into_inner(self) -> EmbeddingMatrix {
        self.0
    }
}

impl Deref for NormalizedMatrix {
    type Target = EmbeddingMatrix;

    fn deref(&self) -> &EmbeddingMatrix {
        &self.0
    }
}

/// Divides every row by its L2 norm.
pub fn row_normalize(m: &EmbeddingMatrix) -> Result<NormalizedMatrix> {
    let mut data = Vec::with_capacity(m.data.len());
    for i in 0..m.rows {
        let row = m.row(i);
        let norm = l2_norm(row);
        if norm < ZERO_ROW_NORM {
            return Err(PruneError::DegenerateEmbedding { row: i, norm });
        }
        data.extend(row.iter().map(|x| x / norm));
    }
    Ok(NormalizedMatrix(EmbeddingMatrix {
        rows: m.rows,
        cols: m.cols,
        data,
        kind: m.kind,
    }))
}

#[inline]
pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Inner product. Every similarity in the crate goes through this function so
/// that independently assembled tables agree bit for bit.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
