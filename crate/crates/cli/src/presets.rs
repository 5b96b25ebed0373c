//! Figure-reproduction presets.
//!
//! Iteration budgets were fixed by pilot runs. fig2: the median error crossed
//! 1e-20 near iteration 1,020 (slowest of 100 trials: 1,651). fig3: not
//! piloted on the dataset.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use mrk_core::{ClassSpec, DistributionKind, GeneratorSpec};

/// Environment variable naming the Wisconsin breast-cancer data file.
pub const DATA_ENV: &str = "MRK_WISCONSIN_DATA";
/// Fallback location of the data file, relative to the working directory.
pub const DEFAULT_DATA_PATH: &str = "data/breast-cancer-wisconsin.data";

pub const FIG1_ITERATIONS: usize = 200;
pub const FIG2_ITERATIONS: usize = 3_000;
pub const FIG3_ITERATIONS: usize = 100_000;
pub const FIG3_SPLITS: [usize; 2] = [300, 399];
pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Fig1,
    Fig2,
    Fig3,
}

impl FromStr for PresetName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Self::Fig1),
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            other => bail!("unknown preset {other:?} (expected fig1, fig2 or fig3)"),
        }
    }
}

impl std::fmt::Display for PresetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fig1 => "fig1",
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub swap_probability: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub distribution: Option<DistributionKind>,
    /// Rows per class (fig1, fig2) or split sizes (fig3).
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub trials: Option<usize>,
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemSource {
    /// Synthetic classes; the seed field is replaced by each trial's seed.
    Synthetic { template: GeneratorSpec },
    /// Rows of a delimited data file split in order into planted classes.
    Dataset { path: PathBuf, splits: Vec<usize> },
}

/// A fully concrete experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedExperiment {
    pub preset: PresetName,
    pub problem: ProblemSource,
    pub num_iterates: usize,
    pub swap_probability: f64,
    pub iterations: usize,
    pub distribution: DistributionKind,
    pub base_seed: u64,
    pub trials: usize,
    pub record_iterates: bool,
    pub budget_note: String,
}

impl ResolvedExperiment {
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

pub fn data_path(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_PATH))
}

impl ExperimentPreset {
    pub fn new(name: PresetName) -> Self {
        Self {
            name,
            trials: None,
            overrides: Overrides::default(),
        }
    }

    /// Resolves defaults and overrides. `data` is only consulted by fig3.
    pub fn resolve(&self, data: Option<PathBuf>) -> Result<ResolvedExperiment> {
        let o = &self.overrides;
        let (problem, iterations, trials, record, note) = match self.name {
            PresetName::Fig1 => {
                let sizes = o.sizes.clone().unwrap_or_else(|| vec![10, 10]);
                let classes = two_means(&sizes, 0.8, 0.3)?;
                (
                    synthetic(classes, 2),
                    FIG1_ITERATIONS,
                    1,
                    true,
                    "fig1: 200 iterations, enough for both 2-D iterates to settle visibly",
                )
            }
            PresetName::Fig2 => {
                let sizes = o.sizes.clone().unwrap_or_else(|| vec![1000, 1000]);
                let classes = sizes.iter().map(|&m| ClassSpec::standard(m)).collect();
                (
                    synthetic(classes, 10),
                    FIG2_ITERATIONS,
                    100,
                    false,
                    "fig2: pilot median crossed 1e-20 near iteration 1020 (slowest trial 1651); budget 3000",
                )
            }
            PresetName::Fig3 => {
                let splits = o.sizes.clone().unwrap_or_else(|| FIG3_SPLITS.to_vec());
                (
                    ProblemSource::Dataset {
                        path: data_path(data),
                        splits,
                    },
                    FIG3_ITERATIONS,
                    100,
                    false,
                    "fig3: budget 100000 not piloted on the dataset",
                )
            }
        };
        let swap_probability = o.swap_probability.unwrap_or(0.0);
        if !(0.0..=1.0).contains(&swap_probability) {
            bail!("swap probability must lie in [0, 1], got {swap_probability}");
        }
        let trials = self.trials.unwrap_or(trials);
        if trials == 0 {
            bail!("at least one trial is required");
        }
        let num_iterates = match &problem {
            ProblemSource::Synthetic { template } => template.classes.len(),
            ProblemSource::Dataset { splits, .. } => splits.len(),
        };
        Ok(ResolvedExperiment {
            preset: self.name,
            problem,
            num_iterates,
            swap_probability,
            iterations: o.iterations.unwrap_or(iterations),
            distribution: o.distribution.unwrap_or(DistributionKind::Uniform),
            base_seed: o.seed.unwrap_or(DEFAULT_SEED),
            trials,
            record_iterates: record,
            budget_note: note.into(),
        })
    }
}

fn synthetic(classes: Vec<ClassSpec>, dimension: usize) -> ProblemSource {
    ProblemSource::Synthetic {
        template: GeneratorSpec {
            classes,
            dimension,
            solution_spread: 1.0,
            seed: 0,
            shuffle: true,
        },
    }
}

fn two_means(sizes: &[usize], mean: f64, spread: f64) -> Result<Vec<ClassSpec>> {
    match sizes {
        [a, b] => Ok(vec![
            ClassSpec::new(*a, mean, spread),
            ClassSpec::new(*b, -mean, spread),
        ]),
        _ => bail!("fig1 takes exactly two class sizes, got {sizes:?}"),
    }
}
