use serde::{Deserialize, Serialize};

use crate::distributions::Normalization;
use crate::error::{PruneError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Strongest single pairing ("pivot" token).
    #[default]
    Max,
    /// Conditional-weighted PMI sum, i.e. the row-wise KL divergence.
    Global,
}

/// Prompt style, which decides how much redundancy matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Free-form questions ("What is ..."): relevance and redundancy balanced.
    OpenEnded,
    /// Multiple choice, yes/no, or reference-answer tasks: relevance only.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub tau: f64,
    pub lambda: f64,
    pub budget: usize,
    pub aggregation: Aggregation,
    pub normalization: Normalization,
    pub mask_diagonal: bool,
    /// Temperature of the visual self-similarity; `None` shares `tau`.
    pub self_tau: Option<f64>,
    pub seed: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            lambda: 1.0,
            budget: 64,
            aggregation: Aggregation::Max,
            normalization: Normalization::Softmax,
            mask_diagonal: false,
            self_tau: None,
            seed: 0,
        }
    }
}

impl PruneConfig {
    pub fn for_task(kind: TaskKind, budget: usize) -> Self {
        let lambda = match kind {
            TaskKind::OpenEnded => 0.5,
            TaskKind::ClosedForm => 1.0,
        };
        Self {
            lambda,
            budget,
            ..Self::default()
        }
    }

    pub fn effective_self_tau(&self) -> f64 {
        self.self_tau.unwrap_or(self.tau)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PruneError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("tau", self.tau)?;
        if let Some(t) = self.self_tau {
            positive("self_tau", t)?;
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(PruneError::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.budget == 0 {
            return Err(PruneError::Config("budget must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = PruneConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.tau, 0.1);
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.effective_self_tau(), 0.1);
    }

    #[test]
    fn task_presets() {
        assert_eq!(PruneConfig::for_task(TaskKind::OpenEnded, 64).lambda, 0.5);
        assert_eq!(PruneConfig::for_task(TaskKind::ClosedForm, 32).lambda, 1.0);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            PruneConfig { lambda: 1.5, ..Default::default() },
            PruneConfig { lambda: -0.1, ..Default::default() },
            PruneConfig { tau: 0.0, ..Default::default() },
            PruneConfig { self_tau: Some(-1.0), ..Default::default() },
            PruneConfig { budget: 0, ..Default::default() },
            PruneConfig { lambda: f64::NAN, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(PruneError::Config(_))), "{cfg:?}");
        }
    }
}
