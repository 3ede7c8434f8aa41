//! Per-token relevance and redundancy scores built from PMI tables.
//!
//! All scores are in nats.

use serde::Serialize;

use crate::config::{Aggregation, PruneConfig};
use crate::distributions::{
    conditional, pmi, similarity, text_marginal, ConditionalTable, Mode, PmiTable,
};
use crate::error::{PruneError, Result};
use crate::matrix::NormalizedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Cross,
    #[serde(rename = "self")]
    SelfSim,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub kind: ScoreKind,
    pub aggregation: Aggregation,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn require_mode(table: &PmiTable, mode: Mode) -> Result<()> {
    if table.mode != mode {
        return Err(PruneError::InvalidMode(format!(
            "expected a {mode:?} PMI table, got {:?}",
            table.mode
        )));
    }
    if table.table.rows == 0 || table.table.cols == 0 {
        return Err(PruneError::Shape("empty PMI table".into()));
    }
    Ok(())
}

/// `S_i = max_j PMI(v_i; t_j)`.
pub fn cross_score_max(pmi_cross: &PmiTable) -> Result<ScoreVector> {
    require_mode(pmi_cross, Mode::Cross)?;
    let t = &pmi_cross.table;
    let values = (0..t.rows)
        .map(|i| t.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(ScoreVector {
        values,
        kind: ScoreKind::Cross,
        aggregation: Aggregation::Max,
    })
}

/// `S_i = max_{j ∈ selected} PMI(v_i; v_j)`, or zero for an empty selection.
pub fn self_score_max(pmi_self: &PmiTable, selected: &[usize]) -> Result<ScoreVector> {
    require_mode(pmi_self, Mode::SelfSim)?;
    let t = &pmi_self.table;
    check_indices(selected, t.cols)?;
    let values = (0..t.rows)
        .map(|i| {
            if selected.is_empty() {
                0.0
            } else {
                selected
                    .iter()
                    .map(|&j| t.get(i, j))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();
    Ok(ScoreVector {
        values,
        kind: ScoreKind::SelfSim,
        aggregation: Aggregation::Max,
    })
}

fn check_indices(selected: &[usize], len: usize) -> Result<()> {
    match selected.iter().find(|&&j| j >= len) {
        Some(&index) => Err(PruneError::Index { index, len }),
        None => Ok(()),
    }
}

fn check_pair(c: &ConditionalTable, p: &PmiTable) -> Result<()> {
    if c.mode != p.mode || c.table.rows != p.table.rows || c.table.cols != p.table.cols {
        return Err(PruneError::Shape(format!(
            "conditional {:?} {}x{} does not match PMI {:?} {}x{}",
            c.mode, c.table.rows, c.table.cols, p.mode, p.table.rows, p.table.cols
        )));
    }
    Ok(())
}

/// `S_i = Σ_j p(x_j | v_i) · PMI(v_i; x_j)`, the KL divergence of row `i`
/// from the marginal.
pub fn global_score(cond: &ConditionalTable, pmi_table: &PmiTable) -> Result<ScoreVector> {
    check_pair(cond, pmi_table)?;
    let (c, p) = (&cond.table, &pmi_table.table);
    let values = (0..c.rows)
        .map(|i| c.row(i).iter().zip(p.row(i)).map(|(w, v)| w * v).sum())
        .collect();
    Ok(ScoreVector {
        values,
        kind: match cond.mode {
            Mode::Cross => ScoreKind::Cross,
            Mode::SelfSim => ScoreKind::SelfSim,
        },
        aggregation: Aggregation::Global,
    })
}

/// Running numerator and denominator of the restricted self average.
///
/// Weights `p(v_j | v_i)` are renormalized over the selected columns only.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RestrictedAverage {
    weighted: f64,
    mass: f64,
    plain: f64,
    count: usize,
}

impl RestrictedAverage {
    #[inline]
    pub fn push(&mut self, weight: f64, value: f64) {
        self.weighted += weight * value;
        self.mass += weight;
        self.plain += value;
        self.count += 1;
    }

    /// Zero for an empty selection. Falls back to the unweighted mean when
    /// every weight underflowed to zero.
    #[inline]
    pub fn value(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else if self.mass > 0.0 {
            self.weighted / self.mass
        } else {
            self.plain / self.count as f64
        }
    }
}

/// Global self aggregation restricted to `selected`, visited in the given order.
pub fn global_self_score(
    cond: &ConditionalTable,
    pmi_self: &PmiTable,
    selected: &[usize],
) -> Result<ScoreVector> {
    check_pair(cond, pmi_self)?;
    require_mode(pmi_self, Mode::SelfSim)?;
    check_indices(selected, pmi_self.table.cols)?;
    let values = (0..cond.table.rows)
        .map(|i| {
            let mut acc = RestrictedAverage::default();
            for &j in selected {
                acc.push(cond.table.get(i, j), pmi_self.table.get(i, j));
            }
            acc.value()
        })
        .collect();
    Ok(ScoreVector {
        values,
        kind: ScoreKind::SelfSim,
        aggregation: Aggregation::Global,
    })
}

/// `λ · cross − (1 − λ) · self`.
pub fn combine(cross: &ScoreVector, self_: &ScoreVector, lambda: f64) -> Result<ScoreVector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(PruneError::Config(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if cross.len() != self_.len() {
        return Err(PruneError::Shape(format!(
            "score lengths differ: {} vs {}",
            cross.len(),
            self_.len()
        )));
    }
    Ok(ScoreVector {
        values: cross
            .values
            .iter()
            .zip(&self_.values)
            .map(|(c, s)| combine_value(*c, *s, lambda))
            .collect(),
        kind: ScoreKind::Combined,
        aggregation: cross.aggregation,
    })
}

#[inline]
pub fn combine_value(cross: f64, self_: f64, lambda: f64) -> f64 {
    lambda * cross - (1.0 - lambda) * self_
}

/// Crossmodal tables for one visual/text pair.
#[derive(Debug, Clone)]
pub struct CrossTables {
    pub conditional: ConditionalTable,
    pub pmi: PmiTable,
}

pub fn cross_tables(v: &NormalizedMatrix, t: &NormalizedMatrix, cfg: &PruneConfig) -> Result<CrossTables> {
    let sim = similarity(v, t, cfg.tau, Mode::Cross)?;
    let conditional = conditional(&sim, cfg.normalization)?;
    let marginal = text_marginal(&conditional)?;
    let pmi = pmi(&conditional, &marginal)?;
    Ok(CrossTables { conditional, pmi })
}

pub fn aggregate_cross(tables: &CrossTables, aggregation: Aggregation) -> Result<ScoreVector> {
    match aggregation {
        Aggregation::Max => cross_score_max(&tables.pmi),
        Aggregation::Global => global_score(&tables.conditional, &tables.pmi),
    }
}

/// Crossmodal relevance of every visual token.
pub fn relevance_scores(
    v: &NormalizedMatrix,
    t: &NormalizedMatrix,
    cfg: &PruneConfig,
) -> Result<ScoreVector> {
    aggregate_cross(&cross_tables(v, t, cfg)?, cfg.aggregation)
}
