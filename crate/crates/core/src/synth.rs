//! Synthetic scenes with planted query-relevant tokens, and recall-based
//! comparison of pruning policies on them.
//!
//! Layout of a scene:
//! - a query direction `q`, matched exactly by text token 0 and loosely by a
//!   few more query text tokens;
//! - planted visual tokens scattered around `q` by `cluster_spread` radians;
//! - background clusters whose centers are orthogonal to every text token,
//!   except cluster 0 (the distractor) which one generic text token partially
//!   matches;
//! - row-stochastic attention that favours the distractor cluster.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{
    attention_select, mi_attention_select, random_select, similarity_select, AttentionInput,
    AttentionMode, DEFAULT_ROUND1_FRACTION,
};
use crate::config::PruneConfig;
use crate::error::{PruneError, Result};
use crate::matrix::{dot, l2_norm, row_normalize, EmbeddingMatrix, MatrixKind};
use crate::selection::{greedy_select, SelectionResult};

/// Cosine between the generic text token and the distractor center.
const GENERIC_ALIGNMENT: f64 = 0.98;
/// Extra unnormalized attention weight on each distractor token.
const DISTRACTOR_ATTENTION_BOOST: f64 = 4.0;
/// Sub-seeds averaged for the random baseline.
const RANDOM_REPEATS: u64 = 3;

pub const METHODS: [&str; 5] = ["random", "similarity", "attention", "mi", "mi_attention"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSpec {
    pub n_visual: usize,
    pub n_text: usize,
    pub dim: usize,
    pub n_planted: usize,
    pub n_background_clusters: usize,
    /// Angular noise std in radians.
    pub cluster_spread: f64,
    /// Share of background tokens in the distractor cluster.
    pub distractor_fraction: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_visual: 576,
            n_text: 8,
            dim: 64,
            n_planted: 24,
            n_background_clusters: 12,
            cluster_spread: 0.15,
            distractor_fraction: 0.25,
            seed: 7,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(PruneError::Config(msg));
        if self.dim < 2 {
            return fail(format!("dim must be ≥ 2, got {}", self.dim));
        }
        if self.n_visual == 0 || self.n_text == 0 {
            return fail("scene needs visual and text tokens".into());
        }
        if self.n_planted > self.n_visual {
            return fail(format!(
                "{} planted tokens exceed {} visual tokens",
                self.n_planted, self.n_visual
            ));
        }
        if self.n_planted < self.n_visual && self.n_background_clusters == 0 {
            return fail("background tokens need at least one cluster".into());
        }
        if !(self.cluster_spread >= 0.0 && self.cluster_spread.is_finite()) {
            return fail(format!("cluster_spread must be ≥ 0, got {}", self.cluster_spread));
        }
        if !(0.0..=1.0).contains(&self.distractor_fraction) {
            return fail(format!(
                "distractor_fraction must lie in [0, 1], got {}",
                self.distractor_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TokenRole {
    Planted,
    /// Background cluster id; 0 is the distractor cluster.
    Background(usize),
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub v: EmbeddingMatrix,
    pub t: EmbeddingMatrix,
    /// Sorted planted visual indices.
    pub planted: Vec<usize>,
    pub attention: AttentionInput,
    pub roles: Vec<TokenRole>,
}

impl Scene {
    /// Mean pairwise cosine inside each background cluster, averaged over
    /// clusters with at least two tokens.
    pub fn mean_intra_cluster_cosine(&self) -> Option<f64> {
        let clusters = self
            .roles
            .iter()
            .filter_map(|r| match r {
                TokenRole::Background(c) => Some(c + 1),
                TokenRole::Planted => None,
            })
            .max()
            .unwrap_or(0);
        let means: Vec<f64> = (0..clusters)
            .filter_map(|c| {
                let members: Vec<usize> = (0..self.roles.len())
                    .filter(|&i| self.roles[i] == TokenRole::Background(c))
                    .collect();
                let mut sum = 0.0;
                let mut pairs = 0usize;
                for (a, &i) in members.iter().enumerate() {
                    for &j in &members[a + 1..] {
                        sum += dot(self.v.row(i), self.v.row(j));
                        pairs += 1;
                    }
                }
                (pairs > 0).then(|| sum / pairs as f64)
            })
            .collect();
        (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
    }

    pub fn distractors(&self) -> Vec<usize> {
        (0..self.roles.len())
            .filter(|&i| self.roles[i] == TokenRole::Background(0))
            .collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalized(mut x: Vec<f64>) -> Vec<f64> {
    let n = l2_norm(&x);
    x.iter_mut().for_each(|e| *e /= n);
    x
}

/// Removes the components along an orthonormal `basis`. Returns `None` when
/// nothing meaningful is left.
fn orthogonalize(mut x: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for b in basis {
        let c = dot(&x, b);
        x.iter_mut().zip(b).for_each(|(e, be)| *e -= c * be);
    }
    (l2_norm(&x) > 1e-6).then(|| normalized(x))
}

/// A random unit vector orthogonal to as much of `basis` as the dimension
/// allows; falls back to the first basis vector alone.
fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let usable = if basis.len() < dim { basis } else { &basis[..1] };
    loop {
        if let Some(x) = orthogonalize(gaussian(rng, dim), usable) {
            return x;
        }
    }
}

/// `cos θ · center + sin θ · u`, with `θ = |N(0, spread)|` and `u ⟂ center`.
fn jitter(rng: &mut ChaCha8Rng, center: &[f64], spread: f64) -> Vec<f64> {
    let theta = (spread * rng.sample::<f64, _>(StandardNormal)).abs();
    let u = random_orthogonal(rng, center.len(), &[center.to_vec()]);
    normalized(
        center
            .iter()
            .zip(&u)
            .map(|(c, e)| theta.cos() * c + theta.sin() * e)
            .collect(),
    )
}

/// Extends an orthonormal basis with `x` (if independent).
fn extend_basis(basis: &mut Vec<Vec<f64>>, x: &[f64]) {
    if let Some(e) = orthogonalize(x.to_vec(), basis) {
        basis.push(e);
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;

    // Text tokens: exact query, loose query paraphrases, one generic token,
    // then unrelated descriptive tokens.
    let q = normalized(gaussian(&mut rng, dim));
    let n_query = (spec.n_text / 4).max(1);
    let has_generic = spec.n_text > n_query && spec.n_background_clusters > 0;
    let mut text = vec![q.clone()];
    for _ in 1..n_query {
        text.push(jitter(&mut rng, &q, spec.cluster_spread));
    }
    let n_descriptive = spec.n_text - n_query - usize::from(has_generic);
    let mut descriptive = Vec::with_capacity(n_descriptive);
    for _ in 0..n_descriptive {
        descriptive.push(normalized(gaussian(&mut rng, dim)));
    }

    let mut basis = Vec::new();
    for x in text.iter().chain(&descriptive) {
        extend_basis(&mut basis, x);
    }
    let mut centers = Vec::with_capacity(spec.n_background_clusters);
    if spec.n_background_clusters > 0 {
        let distractor = random_orthogonal(&mut rng, dim, &basis);
        if has_generic {
            let mut with_center = basis.clone();
            with_center.push(distractor.clone());
            let w = random_orthogonal(&mut rng, dim, &with_center);
            let s = (1.0 - GENERIC_ALIGNMENT * GENERIC_ALIGNMENT).sqrt();
            let generic: Vec<f64> = distractor
                .iter()
                .zip(&w)
                .map(|(c, e)| GENERIC_ALIGNMENT * c + s * e)
                .collect();
            extend_basis(&mut basis, &generic);
            text.push(generic);
        }
        centers.push(distractor);
        for _ in 1..spec.n_background_clusters {
            centers.push(random_orthogonal(&mut rng, dim, &basis));
        }
    }
    text.extend(descriptive);

    // Roles, then a shuffled assignment to positions.
    let n_background = spec.n_visual - spec.n_planted;
    let n_distractor = if spec.n_background_clusters == 1 {
        n_background
    } else {
        (spec.distractor_fraction * n_background as f64).round() as usize
    };
    let others = spec.n_background_clusters.saturating_sub(1);
    let mut roles: Vec<TokenRole> = std::iter::repeat_n(TokenRole::Planted, spec.n_planted)
        .chain(std::iter::repeat_n(TokenRole::Background(0), n_distractor))
        .chain((0..n_background - n_distractor).map(|k| TokenRole::Background(1 + k % others.max(1))))
        .collect();
    roles.shuffle(&mut rng);

    let rows: Vec<Vec<f64>> = roles
        .iter()
        .map(|role| match *role {
            TokenRole::Planted => jitter(&mut rng, &q, spec.cluster_spread),
            TokenRole::Background(c) => jitter(&mut rng, &centers[c], spec.cluster_spread),
        })
        .collect();
    let v = EmbeddingMatrix::from_rows(&rows, MatrixKind::Visual)?;
    let t = EmbeddingMatrix::from_rows(&text, MatrixKind::Textual)?;

    let n = spec.n_visual;
    let mut attn = Vec::with_capacity(n * n);
    for _ in 0..n {
        let row: Vec<f64> = roles
            .iter()
            .map(|r| {
                let boost = if *r == TokenRole::Background(0) {
                    DISTRACTOR_ATTENTION_BOOST
                } else {
                    0.0
                };
                1.0 + boost + 0.5 * rng.random::<f64>()
            })
            .collect();
        let total: f64 = row.iter().sum();
        attn.extend(row.into_iter().map(|a| a / total));
    }
    let attention = AttentionInput::new(
        EmbeddingMatrix::new(n, n, attn, MatrixKind::Attention)?,
        None,
    )?;

    let planted = (0..n).filter(|&i| roles[i] == TokenRole::Planted).collect();
    Ok(Scene {
        v,
        t,
        planted,
        attention,
        roles,
    })
}

/// Share of planted tokens that survived selection.
pub fn recall_at_budget(result: &SelectionResult, planted: &[usize]) -> Result<f64> {
    recall(&result.kept, planted)
}

pub fn recall(kept: &[usize], planted: &[usize]) -> Result<f64> {
    if planted.is_empty() {
        return Err(PruneError::Config("planted set is empty".into()));
    }
    let hits = planted.iter().filter(|p| kept.contains(p)).count();
    Ok(hits as f64 / planted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub budget: usize,
    pub recall: f64,
    pub wall_time_ns: u64,
}

fn run_method(scene: &Scene, method: &str, budget: usize, seed: u64) -> Result<(f64, u64)> {
    let v = row_normalize(&scene.v)?;
    let t = row_normalize(&scene.t)?;
    let cfg = PruneConfig {
        budget,
        seed,
        ..PruneConfig::default()
    };
    let result = match method {
        "random" => {
            let mut recall_sum = 0.0;
            let mut time_sum = 0;
            for k in 0..RANDOM_REPEATS {
                let r = random_select(scene.v.rows(), budget, seed.wrapping_add(k))?;
                recall_sum += recall_at_budget(&r, &scene.planted)?;
                time_sum += r.wall_time_ns;
            }
            return Ok((
                recall_sum / RANDOM_REPEATS as f64,
                time_sum / RANDOM_REPEATS,
            ));
        }
        "similarity" => similarity_select(&v, &t, cfg.tau, budget)?,
        "attention" => attention_select(&scene.attention, budget, AttentionMode::ColumnSum)?,
        "mi" => greedy_select(&v, &t, &cfg)?,
        "mi_attention" => {
            mi_attention_select(&v, &t, &scene.attention, &cfg, DEFAULT_ROUND1_FRACTION)?
        }
        other => {
            return Err(PruneError::Name(format!(
                "unknown method {other:?}; expected one of {}",
                METHODS.join(", ")
            )))
        }
    };
    Ok((recall_at_budget(&result, &scene.planted)?, result.wall_time_ns))
}

/// Recall of every method at every budget, ordered method-major.
pub fn run_comparison(
    spec: &SceneSpec,
    budgets: &[usize],
    methods: &[&str],
) -> Result<Vec<ComparisonRow>> {
    if let Some(m) = methods.iter().find(|m| !METHODS.contains(m)) {
        return Err(PruneError::Name(format!(
            "unknown method {m:?}; expected one of {}",
            METHODS.join(", ")
        )));
    }
    if budgets.contains(&0) {
        return Err(PruneError::Config("budgets must be ≥ 1".into()));
    }
    let scene = generate_scene(spec)?;
    let cells: Vec<(&str, usize)> = methods
        .iter()
        .flat_map(|&m| budgets.iter().map(move |&b| (m, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(method, budget)| {
            let (recall, wall_time_ns) = run_method(&scene, method, budget, spec.seed)?;
            Ok(ComparisonRow {
                method: method.to_string(),
                budget,
                recall,
                wall_time_ns,
            })
        })
        .collect()
}
