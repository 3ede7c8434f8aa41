//! Greedy MI-guided token selection and its verification oracles.
//!
//! Each greedy step keeps the unselected token maximizing
//! `λ · S_cross − (1 − λ) · S_self`, where `S_self` aggregates the token's
//! self PMI against the tokens picked so far (zero before the first pick).
//! Ties go to the lowest index. At `λ = 1` the objective is modular and the
//! greedy order equals a top-k retrieval, which [`fast_select_modular`] does
//! with a single bounded-heap pass.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Aggregation, PruneConfig};
use crate::distributions::{
    conditional, mask_diagonal, pmi, pmi_value, self_similarity, visual_marginal, SelfPmiKernel,
};
use crate::error::{PruneError, Result};
use crate::matrix::NormalizedMatrix;
use crate::scoring::{combine_value, relevance_scores, RestrictedAverage, ScoreVector};

/// Largest instance the exhaustive modular oracle will enumerate.
pub const ORACLE_MAX_TOKENS: usize = 20;
/// Largest instance the stepwise verifier accepts.
pub const VERIFIER_MAX_TOKENS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Kept visual indices in pick order.
    pub kept: Vec<usize>,
    /// Marginal gain of each pick, in nats.
    pub step_scores: Vec<f64>,
    pub method: String,
    /// Scoring plus selection.
    pub wall_time_ns: u64,
    pub score_ns: u64,
    pub select_ns: u64,
    pub config: PruneConfig,
    pub warnings: Vec<String>,
}

impl SelectionResult {
    pub(crate) fn new(method: &str, config: PruneConfig) -> Self {
        Self {
            kept: Vec::new(),
            step_scores: Vec::new(),
            method: method.to_string(),
            wall_time_ns: 0,
            score_ns: 0,
            select_ns: 0,
            config,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn set_timing(&mut self, score_ns: u64, select_ns: u64) {
        self.score_ns = score_ns;
        self.select_ns = select_ns;
        self.wall_time_ns = score_ns + select_ns;
    }
}

pub(crate) fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos().min(u64::MAX as u128) as u64
}

/// Balancing factor actually used for `n_text` text tokens.
///
/// With a single text token every cross PMI is zero, so selection falls back
/// to pure redundancy (`λ = 0`).
pub fn effective_lambda(cfg: &PruneConfig, n_text: usize) -> (f64, Option<String>) {
    if n_text == 1 {
        (
            0.0,
            Some(
                "single text token: every crossmodal PMI is 0; selecting by redundancy only (lambda = 0)"
                    .into(),
            ),
        )
    } else {
        (cfg.lambda, None)
    }
}

fn clamp_budget(budget: usize, n_v: usize, warnings: &mut Vec<String>) -> usize {
    if budget >= n_v {
        if budget > n_v {
            warnings.push(format!(
                "budget {budget} exceeds {n_v} visual tokens; keeping all of them"
            ));
        } else {
            warnings.push(format!("budget equals {n_v} visual tokens; nothing is pruned"));
        }
        n_v
    } else {
        budget
    }
}

fn check_inputs(v: &NormalizedMatrix, t: &NormalizedMatrix, cfg: &PruneConfig) -> Result<()> {
    cfg.validate()?;
    if v.cols() != t.cols() {
        return Err(PruneError::Shape(format!(
            "visual dim {} differs from text dim {}",
            v.cols(),
            t.cols()
        )));
    }
    Ok(())
}

enum Redundancy {
    Max { current: Vec<f64> },
    Global { acc: Vec<RestrictedAverage> },
}

impl Redundancy {
    fn new(aggregation: Aggregation, n: usize) -> Self {
        match aggregation {
            Aggregation::Max => Redundancy::Max {
                current: vec![0.0; n],
            },
            Aggregation::Global => Redundancy::Global {
                acc: vec![RestrictedAverage::default(); n],
            },
        }
    }

    #[inline]
    fn value(&self, i: usize) -> f64 {
        match self {
            Redundancy::Max { current } => current[i],
            Redundancy::Global { acc } => acc[i].value(),
        }
    }

    /// Folds the newest pick into every still-unselected candidate.
    fn absorb(&mut self, kernel: &SelfPmiKernel, picked: usize, first: bool, taken: &[bool]) {
        match self {
            Redundancy::Max { current } => {
                current.par_iter_mut().enumerate().for_each(|(i, s)| {
                    if !taken[i] {
                        let p = kernel.pmi(i, picked);
                        *s = if first { p } else { s.max(p) };
                    }
                });
            }
            Redundancy::Global { acc } => {
                let prior = 1.0 / kernel.len() as f64;
                acc.par_iter_mut().enumerate().for_each(|(i, a)| {
                    if !taken[i] {
                        let c = kernel.conditional(i, picked);
                        a.push(c, pmi_value(c, prior));
                    }
                });
            }
        }
    }
}

/// The greedy pick loop over precomputed relevance scores.
///
/// `kernel` is required whenever `lambda < 1`. Returns kept indices and the
/// score of each pick.
pub fn greedy_from_scores(
    cross: &[f64],
    kernel: Option<&SelfPmiKernel>,
    lambda: f64,
    aggregation: Aggregation,
    budget: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = cross.len();
    let k = budget.min(n);
    let kernel = match kernel {
        Some(kern) if kern.len() != n => {
            return Err(PruneError::Shape(format!(
                "self kernel covers {} tokens, relevance has {n}",
                kern.len()
            )))
        }
        Some(kern) => Some(kern),
        None if lambda < 1.0 => {
            return Err(PruneError::Config(
                "redundancy kernel required when lambda < 1".into(),
            ))
        }
        None => None,
    };

    let mut taken = vec![false; n];
    let mut redundancy = Redundancy::new(aggregation, n);
    let mut kept = Vec::with_capacity(k);
    let mut step_scores = Vec::with_capacity(k);

    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let s = combine_value(cross[i], redundancy.value(i), lambda);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (picked, score) = best.expect("fewer picks than tokens");
        taken[picked] = true;
        kept.push(picked);
        step_scores.push(score);
        if let Some(kern) = kernel {
            if lambda < 1.0 && step + 1 < k {
                redundancy.absorb(kern, picked, step == 0, &taken);
            }
        }
    }
    Ok((kept, step_scores))
}

/// Greedy MI-guided selection of `cfg.budget` visual tokens.
pub fn greedy_select(
    v: &NormalizedMatrix,
    t: &NormalizedMatrix,
    cfg: &PruneConfig,
) -> Result<SelectionResult> {
    check_inputs(v, t, cfg)?;
    let mut result = SelectionResult::new("greedy", cfg.clone());
    let (lambda, warning) = effective_lambda(cfg, t.rows());
    result.warnings.extend(warning);
    let budget = clamp_budget(cfg.budget, v.rows(), &mut result.warnings);

    let start = Instant::now();
    let cross = relevance_scores(v, t, cfg)?;
    let kernel = if lambda < 1.0 {
        Some(SelfPmiKernel::new(
            v,
            cfg.effective_self_tau(),
            cfg.normalization,
            cfg.mask_diagonal,
        )?)
    } else {
        None
    };
    let score_ns = elapsed_ns(start);

    let start = Instant::now();
    let (kept, step_scores) =
        greedy_from_scores(&cross.values, kernel.as_ref(), lambda, cfg.aggregation, budget)?;
    result.set_timing(score_ns, elapsed_ns(start));
    result.kept = kept;
    result.step_scores = step_scores;
    Ok(result)
}

/// Heap entry ordered by score, then by lower index.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    index: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Indices of the `k` largest scores, best first, lowest index on ties.
///
/// Heapifies all `n` scores in `O(n)` and pops `k` times, `O(k log n)`.
pub fn top_k_heap(scores: &[f64], k: usize) -> Vec<usize> {
    let entries: Vec<Ranked> = scores
        .iter()
        .enumerate()
        .map(|(index, &score)| Ranked { score, index })
        .collect();
    let mut heap = BinaryHeap::from(entries);
    let k = k.min(scores.len());
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        match heap.pop() {
            Some(r) => out.push(r.index),
            None => break,
        }
    }
    out
}

/// Same output as [`top_k_heap`] from a single pass that keeps the best `k`
/// seen so far in a min-heap.
///
/// Worst case `O(n log k)` (ascending input); on unordered scores almost
/// every element is rejected by one comparison with the heap minimum.
pub fn top_k_bounded(scores: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k);
    for (index, &score) in scores.iter().enumerate() {
        let entry = Ranked { score, index };
        if heap.len() < k {
            heap.push(Reverse(entry));
        } else if let Some(mut worst) = heap.peek_mut() {
            if entry > worst.0 {
                *worst = Reverse(entry);
            }
        }
    }
    heap.into_sorted_vec().into_iter().map(|Reverse(r)| r.index).collect()
}

/// Top-k selection by relevance, valid only for the modular case `λ = 1`.
pub fn fast_select_modular(
    v: &NormalizedMatrix,
    t: &NormalizedMatrix,
    cfg: &PruneConfig,
) -> Result<SelectionResult> {
    check_inputs(v, t, cfg)?;
    if cfg.lambda != 1.0 {
        return Err(PruneError::Config(format!(
            "the top-k fast path needs lambda = 1 (got {}); use greedy_select",
            cfg.lambda
        )));
    }
    let mut result = SelectionResult::new("fast_modular", cfg.clone());
    if t.rows() == 1 {
        result.warnings.push(
            "single text token: every crossmodal PMI is 0; kept order is by index".into(),
        );
    }
    let budget = clamp_budget(cfg.budget, v.rows(), &mut result.warnings);

    let start = Instant::now();
    let cross = relevance_scores(v, t, cfg)?;
    let score_ns = elapsed_ns(start);

    let start = Instant::now();
    let kept = top_k_bounded(&cross.values, budget);
    result.set_timing(score_ns, elapsed_ns(start));
    result.step_scores = kept.iter().map(|&i| cross.values[i]).collect();
    result.kept = kept;
    Ok(result)
}

/// Size-`budget` subset with the largest score sum, by full enumeration.
///
/// Returned sorted; among equal sums the lexicographically smallest wins.
pub fn exhaustive_modular_oracle(scores: &ScoreVector, budget: usize) -> Result<Vec<usize>> {
    let n = scores.len();
    if n > ORACLE_MAX_TOKENS {
        return Err(PruneError::Scale(format!(
            "exhaustive oracle enumerates at most {ORACLE_MAX_TOKENS} tokens, got {n}"
        )));
    }
    if budget == 0 || budget > n {
        return Err(PruneError::Config(format!(
            "budget must lie in 1..={n}, got {budget}"
        )));
    }

    struct Search<'a> {
        values: &'a [f64],
        budget: usize,
        path: Vec<usize>,
        best: Vec<usize>,
        best_sum: f64,
    }

    impl Search<'_> {
        fn visit(&mut self, start: usize, sum: f64) {
            if self.path.len() == self.budget {
                if sum > self.best_sum {
                    self.best_sum = sum;
                    self.best.clone_from(&self.path);
                }
                return;
            }
            let remaining = self.budget - self.path.len();
            for i in start..=self.values.len() - remaining {
                self.path.push(i);
                self.visit(i + 1, sum + self.values[i]);
                self.path.pop();
            }
        }
    }

    let mut search = Search {
        values: &scores.values,
        budget,
        path: Vec::with_capacity(budget),
        best: Vec::new(),
        best_sum: f64::NEG_INFINITY,
    };
    search.visit(0, 0.0);
    Ok(search.best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepViolation {
    pub step: usize,
    /// Index the verifier expected at this step, if any candidate remained.
    pub expected: Option<usize>,
    pub actual: usize,
    pub expected_score: f64,
    pub actual_score: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub steps_checked: usize,
    pub violation: Option<StepViolation>,
}

/// Tolerance between a recorded step score and its recomputation.
pub const STEP_SCORE_TOL: f64 = 1e-9;

/// Replays a greedy result against scores rebuilt from scratch at every step.
///
/// Uses dense self tables and re-aggregates over the whole prefix of picks
/// each step, sharing nothing with the incremental path except the
/// elementwise PMI formula.
pub fn stepwise_greedy_verifier(
    v: &NormalizedMatrix,
    t: &NormalizedMatrix,
    cfg: &PruneConfig,
    result: &SelectionResult,
) -> Result<VerificationReport> {
    let n = v.rows();
    if n > VERIFIER_MAX_TOKENS {
        return Err(PruneError::Scale(format!(
            "stepwise verifier handles at most {VERIFIER_MAX_TOKENS} tokens, got {n}"
        )));
    }
    check_inputs(v, t, cfg)?;
    let (lambda, _) = effective_lambda(cfg, t.rows());
    let cross = relevance_scores(v, t, cfg)?.values;

    let self_tables = if lambda < 1.0 {
        let mut sim = self_similarity(v, cfg.effective_self_tau())?;
        if cfg.mask_diagonal {
            sim = mask_diagonal(&sim)?;
        }
        let cond = conditional(&sim, cfg.normalization)?;
        let p = pmi(&cond, &visual_marginal(n)?)?;
        Some((cond, p))
    } else {
        None
    };

    let fail = |step, expected, actual, expected_score, actual_score, reason: String| {
        Ok(VerificationReport {
            passed: false,
            steps_checked: step,
            violation: Some(StepViolation {
                step,
                expected,
                actual,
                expected_score,
                actual_score,
                reason,
            }),
        })
    };

    let want = cfg.budget.min(n);
    if result.kept.len() != want || result.step_scores.len() != result.kept.len() {
        return fail(
            0,
            None,
            result.kept.first().copied().unwrap_or(0),
            f64::NAN,
            f64::NAN,
            format!(
                "expected {want} picks with scores, got {} picks and {} scores",
                result.kept.len(),
                result.step_scores.len()
            ),
        );
    }

    let mut taken = vec![false; n];
    for (step, &actual) in result.kept.iter().enumerate() {
        let prefix = &result.kept[..step];
        let redundancy = |i: usize| -> f64 {
            let Some((cond, p)) = &self_tables else {
                return 0.0;
            };
            if prefix.is_empty() {
                return 0.0;
            }
            match cfg.aggregation {
                Aggregation::Max => prefix
                    .iter()
                    .map(|&j| p.table.get(i, j))
                    .fold(f64::NEG_INFINITY, f64::max),
                Aggregation::Global => {
                    let mut acc = RestrictedAverage::default();
                    for &j in prefix {
                        acc.push(cond.table.get(i, j), p.table.get(i, j));
                    }
                    acc.value()
                }
            }
        };

        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let s = combine_value(cross[i], redundancy(i), lambda);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let Some((expected, expected_score)) = best else {
            return fail(step, None, actual, f64::NAN, f64::NAN, "no candidates left".into());
        };
        if actual >= n || taken[actual] {
            return fail(
                step,
                Some(expected),
                actual,
                expected_score,
                f64::NAN,
                "index out of range or already selected".into(),
            );
        }
        let actual_score = combine_value(cross[actual], redundancy(actual), lambda);
        if actual != expected {
            return fail(
                step,
                Some(expected),
                actual,
                expected_score,
                actual_score,
                "pick is not the tie-broken argmax".into(),
            );
        }
        let recorded = result.step_scores[step];
        if (recorded - expected_score).abs() > STEP_SCORE_TOL {
            return fail(
                step,
                Some(expected),
                actual,
                expected_score,
                recorded,
                "recorded step score disagrees with recomputation".into(),
            );
        }
        taken[actual] = true;
    }

    Ok(VerificationReport {
        passed: true,
        steps_checked: result.kept.len(),
        violation: None,
    })
}
