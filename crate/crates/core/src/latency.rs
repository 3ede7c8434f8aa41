//! Latency microbenchmark for the selection stage on synthetic Gaussian
//! embeddings. Scoring and kernel setup happen outside the timed region.

use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::config::{Aggregation, PruneConfig};
use crate::distributions::SelfPmiKernel;
use crate::error::{PruneError, Result};
use crate::matrix::{row_normalize, EmbeddingMatrix, MatrixKind, NormalizedMatrix};
use crate::scoring::relevance_scores;
use crate::selection::{elapsed_ns, greedy_from_scores, top_k_bounded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BenchMethod {
    /// Bounded-heap top-k at `λ = 1`.
    FastModular,
    /// Greedy loop with redundancy at `λ = 0.5`.
    Greedy,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::FastModular => "fast_modular",
            BenchMethod::Greedy => "greedy",
        }
    }

    pub fn lambda(self) -> f64 {
        match self {
            BenchMethod::FastModular => 1.0,
            BenchMethod::Greedy => 0.5,
        }
    }
}

impl FromStr for BenchMethod {
    type Err = PruneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast_modular" | "fast" => Ok(BenchMethod::FastModular),
            "greedy" => Ok(BenchMethod::Greedy),
            other => Err(PruneError::Name(format!(
                "unknown bench method {other:?}; expected fast_modular or greedy"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub budgets: Vec<usize>,
    pub methods: Vec<BenchMethod>,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
    pub dim: usize,
    pub n_text: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![2048, 16384],
            budgets: vec![64],
            methods: vec![BenchMethod::FastModular, BenchMethod::Greedy],
            repeats: 30,
            warmup: 10,
            seed: 0,
            dim: 64,
            n_text: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub n_visual: usize,
    pub budget: usize,
    pub median_ns: u64,
    pub p90_ns: u64,
}

/// Median (mean of the middle pair for even counts) and nearest-rank p90.
pub fn summarize(samples: &[u64]) -> Option<(u64, u64)> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_unstable();
    let n = s.len();
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        // average without overflow
        s[n / 2 - 1] / 2 + s[n / 2] / 2 + (s[n / 2 - 1] % 2 + s[n / 2] % 2) / 2
    };
    let rank = (0.9 * n as f64).ceil() as usize;
    Some((median, s[rank.max(1) - 1]))
}

/// Row-normalized standard Gaussian matrix.
pub fn gaussian_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    kind: MatrixKind,
) -> Result<NormalizedMatrix> {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    row_normalize(&EmbeddingMatrix::new(rows, cols, data, kind)?)
}

fn time_runs(warmup: usize, repeats: usize, mut run: impl FnMut() -> Result<()>) -> Result<Vec<u64>> {
    for _ in 0..warmup {
        run()?;
    }
    (0..repeats)
        .map(|_| {
            let start = Instant::now();
            run()?;
            Ok(elapsed_ns(start))
        })
        .collect()
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.repeats == 0 {
        return Err(PruneError::Config("repeats must be ≥ 1".into()));
    }
    if cfg.sizes.is_empty() || cfg.budgets.is_empty() || cfg.methods.is_empty() {
        return Err(PruneError::Config("sizes, budgets and methods must be non-empty".into()));
    }
    if cfg.sizes.contains(&0) || cfg.budgets.contains(&0) {
        return Err(PruneError::Config("sizes and budgets must be ≥ 1".into()));
    }
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n as u64);
        let v = gaussian_matrix(&mut rng, n, cfg.dim, MatrixKind::Visual)?;
        let t = gaussian_matrix(&mut rng, cfg.n_text, cfg.dim, MatrixKind::Textual)?;
        let prune_cfg = PruneConfig::default();
        let cross = relevance_scores(&v, &t, &prune_cfg)?.values;
        let kernel = if cfg.methods.contains(&BenchMethod::Greedy) {
            Some(SelfPmiKernel::new(
                &v,
                prune_cfg.effective_self_tau(),
                prune_cfg.normalization,
                prune_cfg.mask_diagonal,
            )?)
        } else {
            None
        };
        for &method in &cfg.methods {
            for &budget in &cfg.budgets {
                let k = budget.min(n);
                let samples = match method {
                    BenchMethod::FastModular => time_runs(cfg.warmup, cfg.repeats, || {
                        black_box(top_k_bounded(black_box(&cross), k));
                        Ok(())
                    })?,
                    BenchMethod::Greedy => time_runs(cfg.warmup, cfg.repeats, || {
                        black_box(greedy_from_scores(
                            black_box(&cross),
                            kernel.as_ref(),
                            method.lambda(),
                            Aggregation::Max,
                            k,
                        )?);
                        Ok(())
                    })?,
                };
                let (median_ns, p90_ns) = summarize(&samples).expect("repeats ≥ 1");
                rows.push(BenchRow {
                    method: method.name().to_string(),
                    n_visual: n,
                    budget,
                    median_ns,
                    p90_ns,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        assert_eq!(summarize(&[]), None);
        assert_eq!(summarize(&[7]), Some((7, 7)));
        assert_eq!(summarize(&[4, 1, 3, 2]), Some((2, 4)));
        assert_eq!(summarize(&[5, 1, 3]), Some((3, 5)));
        let ten: Vec<u64> = (1..=10).collect();
        assert_eq!(summarize(&ten), Some((5, 9)));
        assert_eq!(summarize(&[u64::MAX, u64::MAX]), Some((u64::MAX, u64::MAX)));
    }

    #[test]
    fn row_structure_is_deterministic() {
        let cfg = BenchConfig {
            sizes: vec![32, 64],
            budgets: vec![4, 8],
            repeats: 2,
            warmup: 1,
            ..BenchConfig::default()
        };
        let rows = run_bench(&cfg).unwrap();
        let keys: Vec<(String, usize, usize)> =
            rows.iter().map(|r| (r.method.clone(), r.n_visual, r.budget)).collect();
        assert_eq!(keys.len(), 8);
        assert_eq!(keys[0], ("fast_modular".to_string(), 32, 4));
        assert_eq!(keys[3], ("greedy".to_string(), 32, 8));
        assert!(rows.iter().all(|r| r.p90_ns >= r.median_ns));
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("fast".parse::<BenchMethod>().unwrap(), BenchMethod::FastModular);
        assert_eq!("greedy".parse::<BenchMethod>().unwrap(), BenchMethod::Greedy);
        assert!("slow".parse::<BenchMethod>().is_err());
    }
}
