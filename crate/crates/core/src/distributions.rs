//! Temperature-scaled similarities, conditional distributions, marginals and
//! PMI tables.
//!
//! Cross tables are `N_V × N_T` (visual rows against text columns); self
//! tables are `N_V × N_V`. Every conditional row is a probability distribution
//! over the columns, and the visual prior is uniform, so the text marginal is
//! the column mean of the cross conditional and the self marginal is the
//! constant `1/N_V`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PruneError, Result};
use crate::matrix::{dot, NormalizedMatrix};

/// Both sides of a PMI ratio are clamped to this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cross,
    #[serde(rename = "self")]
    SelfSim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Softmax,
    Minmax,
}

/// Row-major `rows × cols` table of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Table {
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    fn map_rows<F>(&self, f: F) -> Result<Table>
    where
        F: Fn(usize, &[f64], &mut [f64]) -> Result<()> + Sync,
    {
        let mut values = vec![0.0; self.values.len()];
        values
            .par_chunks_mut(self.cols)
            .enumerate()
            .try_for_each(|(i, out)| f(i, self.row(i), out))?;
        Ok(Table {
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub table: Table,
    pub mode: Mode,
    pub tau: f64,
    pub diagonal_masked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    pub table: Table,
    pub mode: Mode,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalVector {
    pub values: Vec<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmiTable {
    pub table: Table,
    pub mode: Mode,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(PruneError::Config(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// `values[i][j] = (a_i · b_j) / tau`.
pub fn similarity(
    a: &NormalizedMatrix,
    b: &NormalizedMatrix,
    tau: f64,
    mode: Mode,
) -> Result<SimilarityMatrix> {
    check_tau(tau)?;
    if a.cols() != b.cols() {
        return Err(PruneError::Shape(format!(
            "embedding dims differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    if mode == Mode::SelfSim && a.data() != b.data() {
        return Err(PruneError::InvalidMode(
            "self similarity requires the same matrix on both sides".into(),
        ));
    }
    let (rows, cols) = (a.rows(), b.rows());
    let mut values = vec![0.0; rows * cols];
    values.par_chunks_mut(cols).enumerate().for_each(|(i, out)| {
        let ai = a.row(i);
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(ai, b.row(j)) / tau;
        }
    });
    Ok(SimilarityMatrix {
        table: Table { rows, cols, values },
        mode,
        tau,
        diagonal_masked: false,
    })
}

pub fn self_similarity(v: &NormalizedMatrix, tau: f64) -> Result<SimilarityMatrix> {
    similarity(v, v, tau, Mode::SelfSim)
}

/// Replaces the diagonal with `-inf` so each token gets zero probability of
/// explaining itself.
pub fn mask_diagonal(s: &SimilarityMatrix) -> Result<SimilarityMatrix> {
    if s.mode != Mode::SelfSim {
        return Err(PruneError::InvalidMode(
            "diagonal masking applies to self similarity only".into(),
        ));
    }
    if s.table.rows < 2 {
        return Err(PruneError::DegenerateRow { row: 0 });
    }
    let mut out = s.clone();
    for i in 0..out.table.rows {
        out.table.values[i * out.table.cols + i] = f64::NEG_INFINITY;
    }
    out.diagonal_masked = true;
    Ok(out)
}

/// Row maximum and shifted partition function `Σ exp(x - max)`.
///
/// `None` when the row has no finite entry.
pub fn softmax_stats(row: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let max = row
        .clone()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let z = row.map(|x| (x - max).exp()).sum();
    Some((max, z))
}

/// Per-row quantities of the two-stage MinMax normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinmaxStats {
    pub min: f64,
    pub max: f64,
    /// Sum of the stage-one values `(x - min) / (max - min)`.
    pub scaled_sum: f64,
    pub finite: usize,
}

impl MinmaxStats {
    pub fn from_row(row: impl Iterator<Item = f64> + Clone) -> Option<Self> {
        let (mut min, mut max, mut finite) = (f64::INFINITY, f64::NEG_INFINITY, 0usize);
        for x in row.clone().filter(|x| x.is_finite()) {
            min = min.min(x);
            max = max.max(x);
            finite += 1;
        }
        if finite == 0 {
            return None;
        }
        let scaled_sum = if max > min {
            row.filter(|x| x.is_finite())
                .map(|x| (x - min) / (max - min))
                .sum()
        } else {
            finite as f64
        };
        Some(Self {
            min,
            max,
            scaled_sum,
            finite,
        })
    }

    #[inline]
    pub fn prob(&self, x: f64) -> f64 {
        if !x.is_finite() {
            0.0
        } else if self.max > self.min {
            ((x - self.min) / (self.max - self.min)) / self.scaled_sum
        } else {
            1.0 / self.finite as f64
        }
    }
}

/// Row-wise softmax with the max-shift.
pub fn softmax_conditional(s: &SimilarityMatrix) -> Result<ConditionalTable> {
    let table = s.table.map_rows(|i, row, out| {
        let (max, z) =
            softmax_stats(row.iter().copied()).ok_or(PruneError::DegenerateRow { row: i })?;
        for (o, &x) in out.iter_mut().zip(row) {
            *o = (x - max).exp() / z;
        }
        Ok(())
    })?;
    Ok(ConditionalTable {
        table,
        mode: s.mode,
        normalization: Normalization::Softmax,
    })
}

/// Row-wise affine map to `[0, 1]` followed by division by the row sum.
/// A constant row becomes uniform.
pub fn minmax_conditional(s: &SimilarityMatrix) -> Result<ConditionalTable> {
    let table = s.table.map_rows(|i, row, out| {
        let stats =
            MinmaxStats::from_row(row.iter().copied()).ok_or(PruneError::DegenerateRow { row: i })?;
        for (o, &x) in out.iter_mut().zip(row) {
            *o = stats.prob(x);
        }
        Ok(())
    })?;
    Ok(ConditionalTable {
        table,
        mode: s.mode,
        normalization: Normalization::Minmax,
    })
}

pub fn conditional(s: &SimilarityMatrix, normalization: Normalization) -> Result<ConditionalTable> {
    match normalization {
        Normalization::Softmax => softmax_conditional(s),
        Normalization::Minmax => minmax_conditional(s),
    }
}

/// Text marginal under a uniform visual prior: the column mean of the cross
/// conditional.
pub fn text_marginal(c: &ConditionalTable) -> Result<MarginalVector> {
    if c.mode != Mode::Cross {
        return Err(PruneError::InvalidMode(
            "text marginal needs a cross conditional; use visual_marginal for self".into(),
        ));
    }
    let t = &c.table;
    let mut values = vec![0.0; t.cols];
    for i in 0..t.rows {
        for (acc, p) in values.iter_mut().zip(t.row(i)) {
            *acc += p;
        }
    }
    let n = t.rows as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(MarginalVector {
        values,
        mode: Mode::Cross,
    })
}

pub fn visual_marginal(n_v: usize) -> Result<MarginalVector> {
    if n_v == 0 {
        return Err(PruneError::Config("visual token count must be ≥ 1".into()));
    }
    Ok(MarginalVector {
        values: vec![1.0 / n_v as f64; n_v],
        mode: Mode::SelfSim,
    })
}

/// `log(p / m)` with both sides floored at [`PROB_FLOOR`].
#[inline]
pub fn pmi_value(p: f64, m: f64) -> f64 {
    (p.max(PROB_FLOOR) / m.max(PROB_FLOOR)).ln()
}

pub fn pmi(c: &ConditionalTable, m: &MarginalVector) -> Result<PmiTable> {
    if c.mode != m.mode {
        return Err(PruneError::Shape(format!(
            "conditional mode {:?} does not match marginal mode {:?}",
            c.mode, m.mode
        )));
    }
    if c.table.cols != m.values.len() {
        return Err(PruneError::Shape(format!(
            "conditional has {} columns, marginal has {} entries",
            c.table.cols,
            m.values.len()
        )));
    }
    let table = c.table.map_rows(|_, row, out| {
        for ((o, &p), &q) in out.iter_mut().zip(row).zip(&m.values) {
            *o = pmi_value(p, q);
        }
        Ok(())
    })?;
    Ok(PmiTable {
        table,
        mode: c.mode,
    })
}

#[derive(Debug, Clone, Copy)]
enum RowStats {
    Softmax { max: f64, z: f64 },
    Minmax(MinmaxStats),
}

/// Self PMI evaluated on demand from the embeddings, with per-row
/// normalizers precomputed once.
///
/// Produces the same values, bit for bit, as assembling the full
/// `self_similarity → conditional → pmi` pipeline, in `O(N_V)` memory.
#[derive(Debug, Clone)]
pub struct SelfPmiKernel<'a> {
    v: &'a NormalizedMatrix,
    tau: f64,
    mask_diagonal: bool,
    log_prior: f64,
    prior: f64,
    stats: Vec<RowStats>,
}

impl<'a> SelfPmiKernel<'a> {
    pub fn new(
        v: &'a NormalizedMatrix,
        tau: f64,
        normalization: Normalization,
        mask_diagonal: bool,
    ) -> Result<Self> {
        check_tau(tau)?;
        let n = v.rows();
        if mask_diagonal && n < 2 {
            return Err(PruneError::DegenerateRow { row: 0 });
        }
        let logit = |i: usize, j: usize| {
            if mask_diagonal && i == j {
                f64::NEG_INFINITY
            } else {
                dot(v.row(i), v.row(j)) / tau
            }
        };
        let stats = (0..n)
            .into_par_iter()
            .map(|i| {
                let row = (0..n).map(|j| logit(i, j));
                match normalization {
                    Normalization::Softmax => softmax_stats(row)
                        .map(|(max, z)| RowStats::Softmax { max, z })
                        .ok_or(PruneError::DegenerateRow { row: i }),
                    Normalization::Minmax => MinmaxStats::from_row(row)
                        .map(RowStats::Minmax)
                        .ok_or(PruneError::DegenerateRow { row: i }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let prior = 1.0 / n as f64;
        Ok(Self {
            v,
            tau,
            mask_diagonal,
            log_prior: prior.ln(),
            prior,
            stats,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// `p(v_j | v_i)`.
    #[inline]
    pub fn conditional(&self, i: usize, j: usize) -> f64 {
        let s = if self.mask_diagonal && i == j {
            f64::NEG_INFINITY
        } else {
            dot(self.v.row(i), self.v.row(j)) / self.tau
        };
        match self.stats[i] {
            RowStats::Softmax { max, z } => (s - max).exp() / z,
            RowStats::Minmax(m) => m.prob(s),
        }
    }

    /// `PMI(v_i; v_j)`.
    #[inline]
    pub fn pmi(&self, i: usize, j: usize) -> f64 {
        pmi_value(self.conditional(i, j), self.prior)
    }

    /// `log(1/N_V)`, the self marginal in log space.
    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }
}
