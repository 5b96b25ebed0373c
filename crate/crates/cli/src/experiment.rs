//! Multi-trial experiment execution.
//!
//! Trial `t` uses seed `base_seed + t` for problem generation, initial
//! iterates and the solver. Trials run on the rayon pool and are collected in
//! index order, so results do not depend on the thread count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mrk_core::{
    aggregate_series, build_planted_from_matrix, empirical_mistake_rate, generate_synthetic, load_delimited_dataset,
    run_mrk, shuffle_rows, AggregateSeries, ErrorSeries, GeneratorSpec, Imputation, IterateSet, LinearSystem,
    MrkConfig, RowMatrix, Trace, RNG_ALGORITHM,
};

use crate::formats;
use crate::presets::{ProblemSource, ResolvedExperiment};

pub const MISSING_TOKEN: &str = "?";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub final_errors: Vec<f64>,
    pub final_matched_total: f64,
    pub swaps: usize,
    /// Fraction of non-swap steps that moved an iterate paired with another class.
    pub mistake_rate: f64,
}

pub struct TrialResult {
    pub summary: TrialSummary,
    pub errors: ErrorSeries,
    /// Kept only for trial 0 of runs that log iterates.
    pub trace: Option<Trace>,
    pub system: Option<LinearSystem>,
}

pub struct ExperimentOutcome {
    pub aggregate: AggregateSeries,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ResolvedExperiment,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub rng: String,
    pub budget_note: String,
    pub version: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Problem data shared by all trials.
enum Prepared<'a> {
    Synthetic(&'a GeneratorSpec),
    Dataset { data: RowMatrix, splits: &'a [usize] },
}

impl Prepared<'_> {
    fn system(&self, seed: u64) -> Result<LinearSystem> {
        Ok(match self {
            Prepared::Synthetic(template) => generate_synthetic(&GeneratorSpec {
                seed,
                ..(*template).clone()
            })?,
            Prepared::Dataset { data, splits } => shuffle_rows(&build_planted_from_matrix(data, splits, seed)?, seed).0,
        })
    }
}

/// Inputs read by the experiment, checked before any trial starts.
pub fn input_files(exp: &ResolvedExperiment) -> Result<Vec<PathBuf>> {
    match &exp.problem {
        ProblemSource::Synthetic { .. } => Ok(Vec::new()),
        ProblemSource::Dataset { path, .. } => {
            if !path.is_file() {
                bail!(
                    "{} needs the Wisconsin breast-cancer data file, expected at {} \
                     (pass --data or set {})",
                    exp.preset,
                    path.display(),
                    crate::presets::DATA_ENV
                );
            }
            Ok(vec![path.clone()])
        }
    }
}

pub fn run_trial(exp: &ResolvedExperiment, system: &LinearSystem, trial: usize) -> Result<TrialResult> {
    let seed = exp.trial_seed(trial);
    let inits = IterateSet::standard_normal(exp.num_iterates, system.dim(), seed)?;
    let mut config = MrkConfig::new(exp.swap_probability, exp.iterations, exp.distribution, seed);
    config.record_iterates = exp.record_iterates && trial == 0;
    let mut trace = run_mrk(system, &inits, &config)?;
    let mistake_rate = system
        .labels()
        .and_then(|labels| empirical_mistake_rate(&trace, labels))
        .unwrap_or(f64::NAN);
    let errors = trace
        .errors
        .take()
        .with_context(|| format!("trial {trial}: system carries no planted solutions"))?;
    let summary = TrialSummary {
        trial,
        seed,
        final_errors: errors.last().map(<[f64]>::to_vec).unwrap_or_default(),
        final_matched_total: errors
            .matched_total
            .as_ref()
            .and_then(|m| m.last().copied())
            .unwrap_or(f64::NAN),
        swaps: trace.steps.iter().filter(|s| s.swap_triggered).count(),
        mistake_rate,
    };
    let keep = config.record_iterates;
    let trace = keep.then(|| {
        trace.errors = Some(errors.clone());
        trace
    });
    Ok(TrialResult {
        summary,
        errors,
        trace,
        system: keep.then(|| system.clone()),
    })
}

pub fn run_experiment(exp: &ResolvedExperiment) -> Result<ExperimentOutcome> {
    input_files(exp)?;
    let prepared = match &exp.problem {
        ProblemSource::Synthetic { template } => Prepared::Synthetic(template),
        ProblemSource::Dataset { path, splits } => Prepared::Dataset {
            data: load_delimited_dataset(path, MISSING_TOKEN, Imputation::Median)?,
            splits,
        },
    };
    let trials: Vec<TrialResult> = (0..exp.trials)
        .into_par_iter()
        .map(|t| {
            let system = prepared.system(exp.trial_seed(t))?;
            run_trial(exp, &system, t)
        })
        .collect::<Result<_>>()?;
    let series: Vec<&ErrorSeries> = trials.iter().map(|t| &t.errors).collect();
    let aggregate = aggregate_series(&series)?;
    Ok(ExperimentOutcome { aggregate, trials })
}

pub fn write_trials_csv(trials: &[TrialResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let k = trials.first().map_or(0, |t| t.summary.final_errors.len());
    let mut header = vec!["trial".to_string(), "seed".into()];
    header.extend((0..k).map(|i| format!("final_err_{i}")));
    header.push("final_matched_total".into());
    header.push("swaps".into());
    header.push("mistake_rate".into());
    w.write_record(&header)?;
    for t in trials {
        let s = &t.summary;
        let mut rec = vec![s.trial.to_string(), s.seed.to_string()];
        rec.extend(s.final_errors.iter().map(|v| format!("{v:?}")));
        rec.push(format!("{:?}", s.final_matched_total));
        rec.push(s.swaps.to_string());
        rec.push(format!("{:?}", s.mistake_rate));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the experiment and writes its outputs and manifest into `out`.
pub fn run_and_write(exp: &ResolvedExperiment, out: &Path) -> Result<(ExperimentOutcome, RunManifest)> {
    let start = Instant::now();
    let inputs = input_files(exp)?
        .into_iter()
        .map(|p| {
            Ok(InputDigest {
                sha256: sha256_file(&p)?,
                path: p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = run_experiment(exp)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut outputs = Vec::new();
    let aggregate = out.join("aggregate.csv");
    formats::save_aggregate_csv(&outcome.aggregate, &aggregate)?;
    outputs.push(aggregate);
    let trials = out.join("trials.csv");
    write_trials_csv(&outcome.trials, &trials)?;
    outputs.push(trials);
    if let Some(first) = outcome.trials.first() {
        if let (Some(trace), Some(system)) = (&first.trace, &first.system) {
            let path = out.join("trajectory.jsonl");
            formats::save_trace_jsonl(trace, &path)?;
            outputs.push(path);
            let path = out.join("system.csv");
            formats::write_system_csv(system, &path)?;
            outputs.push(path.clone());
            let path = formats::default_solutions_path(&path);
            formats::write_solutions(system.solutions().unwrap_or_default(), &path)?;
            outputs.push(path);
        }
    }

    let manifest_path = out.join("manifest.json");
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        config: exp.clone(),
        inputs,
        outputs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        rng: RNG_ALGORITHM.into(),
        budget_note: exp.budget_note.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let f = std::fs::File::create(&manifest_path).with_context(|| format!("creating {}", manifest_path.display()))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &manifest)?;
    Ok((outcome, manifest))
}
