//! The multi-randomized Kaczmarz iteration.
//!
//! Each step samples a row, evaluates the residual coefficient of every
//! iterate on it, picks the iterate with the smallest one (`s_k`), and moves a
//! target iterate `t_k` towards the row's hyperplane by the argmin magnitude.
//! The target is `s_k` unless the swap draw redirects it to a uniformly
//! random iterate.
//!
//! Random draws per step: one variate from the row-sampling stream, one from
//! the swap stream for the swap test, and a second swap-stream variate only
//! when the swap branch is taken.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::ErrorSeries;
use crate::error::{MrkError, Result};
use crate::kaczmarz::{sample_row, DistributionKind, RowDistribution};
use crate::linalg::{dist_sq, dot, sub_scaled};
use crate::rng::{self, Stream, RNG_ALGORITHM};
use crate::system::LinearSystem;
use crate::trace::{StepRecord, Trace, TraceMetadata};

/// The `n + 1` regressor iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSet {
    vectors: Vec<Vec<f64>>,
}

impl IterateSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let d = match vectors.first() {
            Some(v) => v.len(),
            None => return Err(MrkError::Domain("an iterate set needs at least one vector".into())),
        };
        if let Some(v) = vectors.iter().find(|v| v.len() != d) {
            return Err(MrkError::DimensionMismatch {
                expected: d,
                found: v.len(),
                context: "iterate length",
            });
        }
        Ok(Self { vectors })
    }

    /// `count` iterates of dimension `dim` with i.i.d. standard normal entries.
    pub fn standard_normal(count: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, Stream::Init);
        let vectors = (0..count)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Self::new(vectors)
    }

    /// `count` copies of the same vector.
    pub fn replicated(x: &[f64], count: usize) -> Result<Self> {
        Self::new(vec![x.to_vec(); count])
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<Vec<f64>> {
        self.vectors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrkConfig {
    pub swap_probability: f64,
    pub iterations: usize,
    pub distribution: DistributionKind,
    pub seed: u64,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Keep a copy of every iterate after every step.
    #[serde(default)]
    pub record_iterates: bool,
}

impl MrkConfig {
    pub fn new(swap_probability: f64, iterations: usize, distribution: DistributionKind, seed: u64) -> Self {
        Self {
            swap_probability,
            iterations,
            distribution,
            seed,
            tie_break: TieBreak::LowestIndex,
            record_iterates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.swap_probability) {
            return Err(MrkError::InvalidParameter(format!(
                "swap probability must lie in [0, 1], got {}",
                self.swap_probability
            )));
        }
        Ok(())
    }
}

/// Chooses the iterate to update given the argmin iterate `s`.
///
/// Returns `(t, swap_triggered)`. `P(t = s) = 1 - r + r / (n + 1)`.
pub fn select_target<R: Rng + ?Sized>(s: usize, n_plus_1: usize, r: f64, rng: &mut R) -> (usize, bool) {
    let u: f64 = rng.random();
    if u < r {
        let v: f64 = rng.random();
        (((v * n_plus_1 as f64) as usize).min(n_plus_1 - 1), true)
    } else {
        (s, false)
    }
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One MRK step on row `row_index`, updating `iterates` in place.
///
/// Only iterate `t_k` changes; it moves by `|c_{s_k}| sgn(c_{t_k}) M_{i_k}^T`.
pub fn mrk_step<R: Rng + ?Sized>(
    iterates: &mut IterateSet,
    system: &LinearSystem,
    row_index: usize,
    r: f64,
    rng: &mut R,
    step: usize,
) -> Result<StepRecord> {
    if row_index >= system.nrows() {
        return Err(MrkError::Domain(format!(
            "row index {row_index} out of range for {} rows",
            system.nrows()
        )));
    }
    if iterates.dim() != system.dim() {
        return Err(MrkError::DimensionMismatch {
            expected: system.dim(),
            found: iterates.dim(),
            context: "iterate length",
        });
    }
    Ok(step_unchecked(iterates, system, row_index, r, rng, step))
}

fn step_unchecked<R: Rng + ?Sized>(
    iterates: &mut IterateSet,
    system: &LinearSystem,
    row_index: usize,
    r: f64,
    rng: &mut R,
    step: usize,
) -> StepRecord {
    let row = system.row(row_index);
    let b = system.rhs_entry(row_index);
    let nsq = system.row_norm_sq(row_index);

    let coefficients: Vec<f64> = iterates.vectors.iter().map(|x| (dot(row, x) - b) / nsq).collect();
    let mut s = 0;
    for (i, c) in coefficients.iter().enumerate().skip(1) {
        if c.abs() < coefficients[s].abs() {
            s = i;
        }
    }
    let (t, swap_triggered) = select_target(s, iterates.len(), r, rng);
    let magnitude = coefficients[s].abs();
    let alpha = magnitude * sgn(coefficients[t]);
    if alpha != 0.0 {
        sub_scaled(&mut iterates.vectors[t], alpha, row);
    }
    StepRecord {
        step,
        sampled_row: row_index,
        argmin_iterate: s,
        target_iterate: t,
        coefficients,
        update_magnitude: magnitude * nsq.sqrt(),
        swap_triggered,
    }
}

/// Runs `config.iterations` MRK steps from `inits`.
///
/// When the system carries one planted solution per iterate, the trace holds
/// the per-step squared errors labelled by the best final pairing of
/// iterates to solutions (see [`ErrorSeries::from_distance_history`]).
pub fn run_mrk(system: &LinearSystem, inits: &IterateSet, config: &MrkConfig) -> Result<Trace> {
    config.validate()?;
    if inits.dim() != system.dim() {
        return Err(MrkError::DimensionMismatch {
            expected: system.dim(),
            found: inits.dim(),
            context: "iterate length",
        });
    }
    let k = inits.len();
    let dist = RowDistribution::new(config.distribution, system);
    let mut rows = rng::stream(config.seed, Stream::RowSampling);
    let mut swaps = rng::stream(config.seed, Stream::Swap);

    let solutions = system.solutions().filter(|s| s.len() == k);
    // distances[i * k + j] = |x^(i) - x*_j|^2, one block per recorded step
    let mut current = Vec::new();
    let mut history = Vec::new();
    if let Some(sols) = solutions {
        current = (0..k * k).map(|ij| dist_sq(inits.get(ij / k), &sols[ij % k])).collect();
        history.reserve((config.iterations + 1) * k * k);
        history.extend_from_slice(&current);
    }

    let mut iterates = inits.clone();
    let mut iterate_history = config.record_iterates.then(|| {
        let mut h = Vec::with_capacity(config.iterations + 1);
        h.push(iterates.vectors.clone());
        h
    });
    let mut steps = Vec::with_capacity(config.iterations);

    for step in 0..config.iterations {
        let i = sample_row(&dist, &mut rows);
        let record = step_unchecked(&mut iterates, system, i, config.swap_probability, &mut swaps, step);
        if let Some(sols) = solutions {
            let t = record.target_iterate;
            for (j, sol) in sols.iter().enumerate() {
                current[t * k + j] = dist_sq(&iterates.vectors[t], sol);
            }
            history.extend_from_slice(&current);
        }
        if let Some(h) = iterate_history.as_mut() {
            h.push(iterates.vectors.clone());
        }
        steps.push(record);
    }

    Ok(Trace {
        steps,
        errors: solutions.map(|_| ErrorSeries::from_distance_history(&history, k)),
        initial_iterates: inits.vectors.clone(),
        final_iterates: iterates.vectors,
        iterate_history,
        metadata: TraceMetadata {
            solver: "mrk".into(),
            seed: config.seed,
            iterations: config.iterations,
            swap_probability: config.swap_probability,
            distribution: config.distribution,
            tie_break: "lowest-index".into(),
            num_iterates: k,
            system: system.describe(),
            rng: RNG_ALGORITHM.into(),
            residual_check: None,
        },
    })
}
