use serde::{Deserialize, Serialize};

use crate::analysis::ErrorSeries;
use crate::kaczmarz::DistributionKind;

/// One solver iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(rename = "k")]
    pub step: usize,
    #[serde(rename = "i_k")]
    pub sampled_row: usize,
    #[serde(rename = "s_k")]
    pub argmin_iterate: usize,
    #[serde(rename = "t_k")]
    pub target_iterate: usize,
    /// Residual coefficients `c_{i,k}` of every iterate on the sampled row, before the update.
    #[serde(rename = "c")]
    pub coefficients: Vec<f64>,
    /// `|c_{s_k}| * |M_{i_k}|`, the Euclidean length of the step.
    #[serde(rename = "mag")]
    pub update_magnitude: f64,
    #[serde(rename = "swap")]
    pub swap_triggered: bool,
}

/// Post-run consistency check of a single-iterate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    /// `max_l |M_l x - b_l| / (1 + |b_l|)` at the final iterate.
    pub max_scaled_residual: f64,
    pub tolerance: f64,
    pub nonvanishing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub solver: String,
    pub seed: u64,
    pub iterations: usize,
    pub swap_probability: f64,
    pub distribution: DistributionKind,
    pub tie_break: String,
    pub num_iterates: usize,
    pub system: String,
    pub rng: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_check: Option<ResidualCheck>,
}

/// Full record of a run.
///
/// `errors`, when present, has `iterations + 1` entries: index 0 holds the
/// initial errors, index `k + 1` the errors after step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub steps: Vec<StepRecord>,
    pub errors: Option<ErrorSeries>,
    pub initial_iterates: Vec<Vec<f64>>,
    pub final_iterates: Vec<Vec<f64>>,
    /// Every iterate after every step, present when the run asked for it.
    pub iterate_history: Option<Vec<Vec<Vec<f64>>>>,
    pub metadata: TraceMetadata,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_iterates(&self) -> usize {
        self.metadata.num_iterates
    }

    /// Per-iterate squared errors after the last step.
    pub fn final_errors(&self) -> Option<&[f64]> {
        self.errors.as_ref().and_then(ErrorSeries::last)
    }
}
