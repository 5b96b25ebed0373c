//! Single-row projection primitives and the classic randomized Kaczmarz baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::ErrorSeries;
use crate::error::{MrkError, Result};
use crate::linalg::{dist_sq, dot, norm_sq, sub_scaled};
use crate::rng::{self, Stream, RNG_ALGORITHM};
use crate::system::LinearSystem;
use crate::trace::{ResidualCheck, StepRecord, Trace, TraceMetadata};

/// Scaled residual below which a finished RK run is considered consistent.
pub const RESIDUAL_FLAG_TOL: f64 = 1e-6;

/// Signed residual of `x` on the hyperplane `row . x = b`, normalised by `|row|^2`.
pub fn residual_coefficient(row: &[f64], b_entry: f64, x: &[f64]) -> Result<f64> {
    if row.len() != x.len() {
        return Err(MrkError::DimensionMismatch {
            expected: row.len(),
            found: x.len(),
            context: "iterate length",
        });
    }
    let nsq = norm_sq(row);
    if nsq.is_nan() || nsq <= 0.0 {
        return Err(MrkError::Domain("residual coefficient of a zero-norm row".into()));
    }
    Ok((dot(row, x) - b_entry) / nsq)
}

/// Orthogonal projection of `x` onto `{y : row . y = b_entry}`.
pub fn kaczmarz_update(x: &[f64], row: &[f64], b_entry: f64) -> Result<Vec<f64>> {
    let c = residual_coefficient(row, b_entry, x)?;
    let mut out = x.to_vec();
    sub_scaled(&mut out, c, row);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Uniform,
    #[serde(rename = "sqnorm")]
    SquaredRowNorm,
}

impl DistributionKind {
    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::Uniform => "uniform",
            DistributionKind::SquaredRowNorm => "sqnorm",
        }
    }
}

impl std::str::FromStr for DistributionKind {
    type Err = MrkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "sqnorm" | "squared-row-norm" => Ok(Self::SquaredRowNorm),
            other => Err(MrkError::InvalidParameter(format!(
                "unknown row distribution {other:?} (expected uniform or sqnorm)"
            ))),
        }
    }
}

/// Row sampling distribution over the rows of one system.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDistribution {
    kind: DistributionKind,
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

impl RowDistribution {
    pub fn new(kind: DistributionKind, system: &LinearSystem) -> Self {
        Self::from_row_norms_sq(kind, system.row_norms_sq())
    }

    pub fn from_row_norms_sq(kind: DistributionKind, norms_sq: &[f64]) -> Self {
        let m = norms_sq.len();
        let weights: Vec<f64> = match kind {
            DistributionKind::Uniform => vec![1.0 / m as f64; m],
            DistributionKind::SquaredRowNorm => {
                let total: f64 = norms_sq.iter().sum();
                norms_sq.iter().map(|n| n / total).collect()
            }
        };
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Self { kind, weights, cdf }
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Maps one uniform variate in `[0, 1)` to a row index.
    pub fn index_for(&self, u: f64) -> usize {
        let m = self.weights.len();
        match self.kind {
            DistributionKind::Uniform => ((u * m as f64) as usize).min(m - 1),
            DistributionKind::SquaredRowNorm => self.cdf.partition_point(|&c| c <= u).min(m - 1),
        }
    }
}

/// Draws a row index. Consumes exactly one uniform variate.
pub fn sample_row<R: Rng + ?Sized>(dist: &RowDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    dist.index_for(u)
}

/// Classic randomized Kaczmarz on a single consistent system.
///
/// Rows are drawn from the same row-sampling stream `run_mrk` uses, so a
/// one-iterate MRK run with the same seed visits the same rows.
pub fn run_rk(system: &LinearSystem, x0: &[f64], iters: usize, dist: &RowDistribution, seed: u64) -> Result<Trace> {
    if x0.len() != system.dim() {
        return Err(MrkError::DimensionMismatch {
            expected: system.dim(),
            found: x0.len(),
            context: "initial iterate length",
        });
    }
    if dist.len() != system.nrows() {
        return Err(MrkError::DimensionMismatch {
            expected: system.nrows(),
            found: dist.len(),
            context: "row distribution size",
        });
    }
    let solution = match system.solutions() {
        Some([single]) => Some(single.as_slice()),
        Some(many) => {
            return Err(MrkError::Domain(format!(
                "randomized Kaczmarz expects a single-class system, found {} planted solutions",
                many.len()
            )))
        }
        None => None,
    };

    let mut rows = rng::stream(seed, Stream::RowSampling);
    let mut x = x0.to_vec();
    let mut steps = Vec::with_capacity(iters);
    let mut history = solution.map(|s| {
        let mut h = Vec::with_capacity(iters + 1);
        h.push(dist_sq(&x, s));
        h
    });

    for k in 0..iters {
        let i = sample_row(dist, &mut rows);
        let row = system.row(i);
        let nsq = system.row_norm_sq(i);
        let c = (dot(row, &x) - system.rhs_entry(i)) / nsq;
        sub_scaled(&mut x, c, row);
        steps.push(StepRecord {
            step: k,
            sampled_row: i,
            argmin_iterate: 0,
            target_iterate: 0,
            coefficients: vec![c],
            update_magnitude: c.abs() * nsq.sqrt(),
            swap_triggered: false,
        });
        if let (Some(h), Some(s)) = (history.as_mut(), solution) {
            h.push(dist_sq(&x, s));
        }
    }

    let max_scaled_residual = (0..system.nrows())
        .map(|l| (dot(system.row(l), &x) - system.rhs_entry(l)).abs() / (1.0 + system.rhs_entry(l).abs()))
        .fold(0.0, f64::max);
    let residual_check = ResidualCheck {
        max_scaled_residual,
        tolerance: RESIDUAL_FLAG_TOL,
        nonvanishing: max_scaled_residual > RESIDUAL_FLAG_TOL,
    };

    Ok(Trace {
        steps,
        errors: history.map(|h| ErrorSeries::from_distance_history(&h, 1)),
        initial_iterates: vec![x0.to_vec()],
        final_iterates: vec![x],
        iterate_history: None,
        metadata: TraceMetadata {
            solver: "rk".into(),
            seed,
            iterations: iters,
            swap_probability: 0.0,
            distribution: dist.kind(),
            tie_break: "lowest-index".into(),
            num_iterates: 1,
            system: system.describe(),
            rng: RNG_ALGORITHM.into(),
            residual_check: Some(residual_check),
        },
    })
}
