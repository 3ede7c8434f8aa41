//! Reference pruning policies: random, cross similarity, encoder attention,
//! similarity recycling, and the two-round MI-Attention combination.

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PruneConfig;
use crate::error::{PruneError, Result};
use crate::matrix::{dot, EmbeddingMatrix, MatrixKind, NormalizedMatrix};
use crate::selection::{elapsed_ns, greedy_select, top_k_heap, SelectionResult};

/// Allowed deviation of an attention row sum from 1 before warning.
pub const ATTENTION_ROW_SUM_TOL: f64 = 1e-4;

/// Averaged encoder attention `A` (`N_V × N_V`) with an optional `[CLS]` row.
#[derive(Debug, Clone)]
pub struct AttentionInput {
    matrix: EmbeddingMatrix,
    cls_index: Option<usize>,
    warnings: Vec<String>,
}

impl AttentionInput {
    pub fn new(matrix: EmbeddingMatrix, cls_index: Option<usize>) -> Result<Self> {
        let matrix = match matrix.kind() {
            MatrixKind::Attention => matrix,
            _ => matrix.with_kind(MatrixKind::Attention)?,
        };
        let n = matrix.rows();
        if let Some(c) = cls_index {
            if c >= n {
                return Err(PruneError::Index { index: c, len: n });
            }
        }
        let mut warnings = Vec::new();
        let off = (0..n)
            .map(|i| (i, matrix.row(i).iter().sum::<f64>()))
            .filter(|(_, s)| (s - 1.0).abs() > ATTENTION_ROW_SUM_TOL)
            .count();
        if off > 0 {
            warnings.push(format!(
                "{off} of {n} attention rows do not sum to 1 within {ATTENTION_ROW_SUM_TOL}"
            ));
        }
        Ok(Self {
            matrix,
            cls_index,
            warnings,
        })
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn cls_index(&self) -> Option<usize> {
        self.cls_index
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// `score_i = A[c][i]`.
    ClsRow,
    /// `score_i = Σ_{j≠i} A[j][i]`.
    ColumnSum,
}

fn clamp(budget: usize, n: usize, warnings: &mut Vec<String>) -> usize {
    if budget > n {
        warnings.push(format!(
            "budget {budget} exceeds {n} visual tokens; keeping all of them"
        ));
        n
    } else {
        budget
    }
}

fn ranked_result(method: &str, scores: &[f64], budget: usize, mut cfg: PruneConfig) -> SelectionResult {
    cfg.budget = budget;
    let mut result = SelectionResult::new(method, cfg);
    let k = clamp(budget, scores.len(), &mut result.warnings);
    result.kept = top_k_heap(scores, k);
    result.step_scores = result.kept.iter().map(|&i| scores[i]).collect();
    result
}

/// Uniform sample without replacement, reproducible from `seed`.
pub fn random_select(n_v: usize, budget: usize, seed: u64) -> Result<SelectionResult> {
    if n_v == 0 {
        return Err(PruneError::Config("no visual tokens to sample".into()));
    }
    let cfg = PruneConfig {
        budget,
        seed,
        ..PruneConfig::default()
    };
    let mut result = SelectionResult::new("random", cfg);
    let start = Instant::now();
    let k = clamp(budget, n_v, &mut result.warnings);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    result.kept = sample(&mut rng, n_v, k).into_vec();
    result.step_scores = vec![0.0; k];
    result.set_timing(0, elapsed_ns(start));
    Ok(result)
}

/// Keeps the tokens with the highest cosine to any text token.
///
/// The temperature only rescales the cosine and cannot change the ranking,
/// so it is recorded but not applied.
pub fn similarity_select(
    v: &NormalizedMatrix,
    t: &NormalizedMatrix,
    tau: f64,
    budget: usize,
) -> Result<SelectionResult> {
    if v.cols() != t.cols() {
        return Err(PruneError::Shape(format!(
            "visual dim {} differs from text dim {}",
            v.cols(),
            t.cols()
        )));
    }
    let start = Instant::now();
    let scores: Vec<f64> = (0..v.rows())
        .map(|i| {
            (0..t.rows())
                .map(|j| dot(v.row(i), t.row(j)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let score_ns = elapsed_ns(start);
    let cfg = PruneConfig {
        tau,
        ..PruneConfig::default()
    };
    let start = Instant::now();
    let mut result = ranked_result("similarity", &scores, budget, cfg);
    result.set_timing(score_ns, elapsed_ns(start));
    Ok(result)
}

/// Per-token attention scores. In `ClsRow` mode the `[CLS]` token itself
/// scores `-1`, below every genuine (non-negative) attention score.
pub fn attention_scores(attn: &AttentionInput, mode: AttentionMode) -> Result<Vec<f64>> {
    let a = attn.matrix();
    let n = a.rows();
    match mode {
        AttentionMode::ClsRow => {
            let c = attn.cls_index().ok_or_else(|| {
                PruneError::Config("cls_row attention needs a [CLS] index".into())
            })?;
            Ok((0..n)
                .map(|i| if i == c { -1.0 } else { a.get(c, i) })
                .collect())
        }
        AttentionMode::ColumnSum => Ok((0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| a.get(j, i)).sum())
            .collect()),
    }
}

pub fn attention_select(
    attn: &AttentionInput,
    budget: usize,
    mode: AttentionMode,
) -> Result<SelectionResult> {
    let start = Instant::now();
    let scores = attention_scores(attn, mode)?;
    let score_ns = elapsed_ns(start);
    let start = Instant::now();
    let cfg = PruneConfig {
        budget,
        ..PruneConfig::default()
    };
    let mut result = ranked_result("attention", &scores, budget, cfg);
    result.warnings.extend(attn.warnings().iter().cloned());
    result.set_timing(score_ns, elapsed_ns(start));
    Ok(result)
}

/// Recycles tokens from `remaining` by their summed cosine to the other
/// remaining tokens. Returns original indices, best first, lowest index on ties.
pub fn similarity_recycle(
    v: &NormalizedMatrix,
    remaining: &[usize],
    recycle_budget: usize,
) -> Result<Vec<usize>> {
    if remaining.is_empty() {
        return Err(PruneError::Config("no remaining tokens to recycle".into()));
    }
    if recycle_budget > remaining.len() {
        return Err(PruneError::Config(format!(
            "recycle budget {recycle_budget} exceeds {} remaining tokens",
            remaining.len()
        )));
    }
    let mut remaining = remaining.to_vec();
    remaining.sort_unstable();
    remaining.dedup();
    if let Some(&index) = remaining.iter().find(|&&i| i >= v.rows()) {
        return Err(PruneError::Index {
            index,
            len: v.rows(),
        });
    }
    let scores: Vec<f64> = remaining
        .iter()
        .enumerate()
        .map(|(a, &i)| {
            remaining
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, &j)| dot(v.row(i), v.row(j)))
                .sum()
        })
        .collect();
    Ok(top_k_heap(&scores, recycle_budget)
        .into_iter()
        .map(|p| remaining[p])
        .collect())
}

/// Default share of the attention pool that survives round two.
pub const DEFAULT_ROUND1_FRACTION: f64 = 0.5;

/// Round 1 keeps `⌈budget / round1_fraction⌉` tokens by attention; round 2
/// runs greedy MI selection inside that pool.
pub fn mi_attention_select(
    v: &NormalizedMatrix,
    t: &NormalizedMatrix,
    attn: &AttentionInput,
    cfg: &PruneConfig,
    round1_fraction: f64,
) -> Result<SelectionResult> {
    cfg.validate()?;
    if !(round1_fraction > 0.0 && round1_fraction <= 1.0) {
        return Err(PruneError::Config(format!(
            "round1_fraction must lie in (0, 1], got {round1_fraction}"
        )));
    }
    let n = v.rows();
    if attn.len() != n {
        return Err(PruneError::Shape(format!(
            "attention is {0}x{0}, expected {n}x{n}",
            attn.len()
        )));
    }
    let mut warnings = attn.warnings().to_vec();
    let budget = clamp(cfg.budget, n, &mut warnings);
    let pool_size = ((budget as f64 / round1_fraction).ceil() as usize).min(n);
    if pool_size < budget {
        return Err(PruneError::Config(format!(
            "attention pool of {pool_size} is smaller than budget {budget}"
        )));
    }

    let mode = if attn.cls_index().is_some() {
        AttentionMode::ClsRow
    } else {
        AttentionMode::ColumnSum
    };
    let start = Instant::now();
    let mut pool = top_k_heap(&attention_scores(attn, mode)?, pool_size);
    pool.sort_unstable();
    let round1_ns = elapsed_ns(start);

    let inner_cfg = PruneConfig {
        budget,
        ..cfg.clone()
    };
    let inner = greedy_select(&v.select_rows(&pool)?, t, &inner_cfg)?;

    let mut result = SelectionResult::new("mi_attention", cfg.clone());
    result.kept = inner.kept.iter().map(|&p| pool[p]).collect();
    result.step_scores = inner.step_scores;
    result.warnings = warnings;
    result.warnings.extend(inner.warnings);
    result.set_timing(round1_ns + inner.score_ns, inner.select_ns);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::row_normalize;

    fn unit(rows: &[Vec<f64>]) -> NormalizedMatrix {
        row_normalize(&EmbeddingMatrix::from_rows(rows, MatrixKind::Visual).unwrap()).unwrap()
    }

    fn attention(rows: &[Vec<f64>], cls: Option<usize>) -> AttentionInput {
        AttentionInput::new(
            EmbeddingMatrix::from_rows(rows, MatrixKind::Attention).unwrap(),
            cls,
        )
        .unwrap()
    }

    #[test]
    fn random_full_budget_and_determinism() {
        let mut all = random_select(10, 10, 3).unwrap().kept;
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(
            random_select(100, 7, 42).unwrap().kept,
            random_select(100, 7, 42).unwrap().kept
        );
        let r = random_select(5, 9, 1).unwrap();
        assert_eq!(r.kept.len(), 5);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn similarity_keeps_parallel_token() {
        let v = unit(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, -1.0]]);
        let t = unit(&[vec![1.0, 0.0]]);
        assert_eq!(similarity_select(&v, &t, 0.1, 1).unwrap().kept, vec![1]);
    }

    #[test]
    fn similarity_identical_tokens_in_index_order() {
        let v = unit(&vec![vec![1.0, 1.0]; 5]);
        let t = unit(&[vec![1.0, 0.0]]);
        assert_eq!(similarity_select(&v, &t, 0.1, 3).unwrap().kept, vec![0, 1, 2]);
    }

    #[test]
    fn identity_attention_scores_zero() {
        let eye: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let a = attention(&eye, None);
        assert_eq!(attention_scores(&a, AttentionMode::ColumnSum).unwrap(), vec![0.0; 4]);
        assert_eq!(
            attention_select(&a, 2, AttentionMode::ColumnSum).unwrap().kept,
            vec![0, 1]
        );
    }

    #[test]
    fn dominant_column_wins() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![0.1, 0.1, 0.7, 0.1])
            .collect();
        let a = attention(&rows, None);
        assert_eq!(attention_select(&a, 1, AttentionMode::ColumnSum).unwrap().kept, vec![2]);
    }

    #[test]
    fn cls_row_scores_and_missing_index() {
        let rows = vec![
            vec![0.1, 0.6, 0.3],
            vec![0.3, 0.3, 0.4],
            vec![0.5, 0.25, 0.25],
        ];
        let a = attention(&rows, Some(0));
        let r = attention_select(&a, 3, AttentionMode::ClsRow).unwrap();
        assert_eq!(r.kept, vec![1, 2, 0]);
        let no_cls = attention(&rows, None);
        assert!(matches!(
            attention_select(&no_cls, 1, AttentionMode::ClsRow),
            Err(PruneError::Config(_))
        ));
    }

    #[test]
    fn unnormalized_attention_warns() {
        let a = attention(&[vec![1.0, 1.0], vec![0.5, 0.5]], None);
        assert_eq!(a.warnings().len(), 1);
    }

    #[test]
    fn recycle_examples() {
        let v = unit(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        // Tokens 0 and 1 are identical: each scores 1 from the other.
        assert_eq!(similarity_recycle(&v, &[0, 1], 2).unwrap(), vec![0, 1]);
        let ortho = unit(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(similarity_recycle(&ortho, &[2, 0, 1], 2).unwrap(), vec![0, 1]);
        assert!(matches!(similarity_recycle(&v, &[], 0), Err(PruneError::Config(_))));
        assert!(matches!(similarity_recycle(&v, &[0], 2), Err(PruneError::Config(_))));
    }

    #[test]
    fn mi_attention_rejects_bad_fraction() {
        let v = unit(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = attention(&[vec![0.5, 0.5], vec![0.5, 0.5]], None);
        let cfg = PruneConfig {
            budget: 1,
            ..PruneConfig::default()
        };
        for f in [0.0, 1.5, f64::NAN] {
            assert!(mi_attention_select(&v, &v, &a, &cfg, f).is_err());
        }
    }
}
