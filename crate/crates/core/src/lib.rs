//! Visual token pruning by pointwise mutual information between visual and
//! text embeddings in a multimodal model's projection space.
//!
//! The pipeline: [`matrix::row_normalize`] the inputs, build
//! [`scoring::relevance_scores`], then keep tokens with
//! [`selection::greedy_select`] (or [`selection::fast_select_modular`] when
//! redundancy is switched off). [`baselines`] holds reference policies,
//! [`infotheory`] an exact oracle over small discrete joints, [`synth`] a
//! planted-token recall benchmark and [`latency`] a timing harness.

pub mod baselines;
pub mod config;
pub mod distributions;
pub mod error;
pub mod infotheory;
pub mod latency;
pub mod matrix;
pub mod npy;
pub mod scoring;
pub mod selection;
pub mod synth;

pub use config::{Aggregation, PruneConfig, TaskKind};
pub use distributions::{Mode, Normalization};
pub use error::{PruneError, Result};
pub use matrix::{row_normalize, EmbeddingMatrix, MatrixKind, NormalizedMatrix};
pub use selection::{fast_select_modular, greedy_select, SelectionResult};
