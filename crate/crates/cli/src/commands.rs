use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mrk_core::{
    bound_matrix, build_planted_from_matrix, class_rk_constants, empirical_mistake_rate, generate_synthetic,
    load_delimited_dataset, run_mrk, run_rk, shuffle_rows, ClassSpec, DistributionKind, GeneratorSpec, Imputation,
    IterateSet, LinearSystem, MrkConfig, RowDistribution, Trace,
};

use crate::experiment::{self, MISSING_TOKEN};
use crate::formats;
use crate::presets::{self, ExperimentPreset, PresetName, DEFAULT_SEED};

#[derive(Debug, Parser)]
#[command(
    name = "mrk",
    version,
    about = "Multi-randomized Kaczmarz for mixtures of linear systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted system file and its solutions sidecar.
    Gen(GenArgs),
    /// Run MRK on a system file.
    Run(RunArgs),
    /// Run the randomized Kaczmarz baseline on a single-class system file.
    Rk(RkArgs),
    /// Run a figure-reproduction preset over many trials.
    Experiment(ExperimentArgs),
    /// Print the bound matrix, its l1 norm and the contraction condition.
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generate the problem of a figure preset (fig1 or fig2).
    #[arg(long, conflicts_with_all = ["spec", "from_data"])]
    pub preset: Option<PresetName>,
    /// JSON generator spec (classes, dimension, solution_spread, seed, shuffle).
    #[arg(long, conflicts_with = "from_data")]
    pub spec: Option<PathBuf>,
    /// Rows per class, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub rows: Vec<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Entry mean per class (default 0).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub means: Vec<f64>,
    /// Entry standard deviation per class (default 1).
    #[arg(long, value_delimiter = ',')]
    pub spreads: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub solution_spread: f64,
    /// Shuffle rows across classes.
    #[arg(long)]
    pub shuffle: bool,
    /// Build from a delimited data file (first column dropped, `?` imputed by column median).
    #[arg(long)]
    pub from_data: Option<PathBuf>,
    /// Class sizes for --from-data, taken in file order.
    #[arg(long, value_delimiter = ',')]
    pub splits: Vec<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output system CSV; the sidecar is written next to it as NAME.solutions.csv.
    #[arg(long, default_value = "system.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// System CSV (f1..fd,b[,label]).
    pub system: PathBuf,
    /// Solutions sidecar; defaults to NAME.solutions.csv when it exists.
    #[arg(long)]
    pub solutions: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "uniform")]
    pub dist: DistributionKind,
    /// Directory for default output names.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// JSON-Lines trace path (default OUT/trace.jsonl).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// CSV error summary path (default OUT/summary.csv).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Fail unless planted solutions are available for error tracking.
    #[arg(long)]
    pub require_errors: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: SolveArgs,
    /// Number of iterates n+1 (default: number of labelled classes, else 1).
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub swap_prob: f64,
    /// Log every iterate after every step in the trace.
    #[arg(long)]
    pub log_iterates: bool,
}

#[derive(Debug, Args)]
pub struct RkArgs {
    #[command(flatten)]
    pub common: SolveArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub preset: PresetName,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output directory (default results/PRESET).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub swap_prob: Option<f64>,
    #[arg(long)]
    pub dist: Option<DistributionKind>,
    /// Rows per class, or split sizes for fig3.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Dataset file for fig3; overrides the MRK_WISCONSIN_DATA variable.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Rows per class, comma separated.
    #[arg(long, value_delimiter = ',', required_unless_present = "from_system")]
    pub counts: Vec<usize>,
    /// Upper bound on the per-class RK constants.
    #[arg(long, required_unless_present = "from_system")]
    pub c: Option<f64>,
    /// Mistake probability.
    #[arg(long, default_value_t = 0.0)]
    pub q: f64,
    /// Swap probability.
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    /// Take counts and c (largest class constant) from a labelled system file.
    #[arg(long, conflicts_with_all = ["counts", "c"])]
    pub from_system: Option<PathBuf>,
    #[arg(long)]
    pub solutions: Option<PathBuf>,
}

pub fn dispatch(cli: Cli, out: &mut impl Write) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Rk(a) => cmd_rk(a, out),
        Command::Experiment(a) => cmd_experiment(a, out),
        Command::Bound(a) => cmd_bound(a, out),
    }
}

fn per_class(values: &[f64], classes: usize, default: f64, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        0 => Ok(vec![default; classes]),
        1 => Ok(vec![values[0]; classes]),
        n if n == classes => Ok(values.to_vec()),
        n => bail!("--{what} has {n} values for {classes} classes"),
    }
}

pub fn cmd_gen(a: GenArgs, out: &mut impl Write) -> Result<()> {
    let (system, seed) = if let Some(path) = &a.from_data {
        if a.splits.is_empty() {
            bail!("--from-data needs --splits");
        }
        let seed = a.seed.unwrap_or(DEFAULT_SEED);
        let data = load_delimited_dataset(path, MISSING_TOKEN, Imputation::Median)?;
        let mut sys = build_planted_from_matrix(&data, &a.splits, seed)?;
        if a.shuffle {
            sys = shuffle_rows(&sys, seed).0;
        }
        (sys, seed)
    } else {
        let mut spec = if let Some(name) = a.preset {
            let exp = ExperimentPreset::new(name).resolve(None)?;
            match exp.problem {
                presets::ProblemSource::Synthetic { template } => GeneratorSpec {
                    seed: exp.base_seed,
                    ..template
                },
                presets::ProblemSource::Dataset { .. } => {
                    bail!("{name} is built from data; use --from-data with --splits")
                }
            }
        } else if let Some(path) = &a.spec {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            if a.rows.is_empty() {
                bail!("give --preset, --spec, --from-data or --rows with --dim");
            }
            let dim = a.dim.context("--rows needs --dim")?;
            let k = a.rows.len();
            let means = per_class(&a.means, k, 0.0, "means")?;
            let spreads = per_class(&a.spreads, k, 1.0, "spreads")?;
            GeneratorSpec {
                classes: (0..k)
                    .map(|j| ClassSpec::new(a.rows[j], means[j], spreads[j]))
                    .collect(),
                dimension: dim,
                solution_spread: a.solution_spread,
                seed: DEFAULT_SEED,
                shuffle: a.shuffle,
            }
        };
        if let Some(seed) = a.seed {
            spec.seed = seed;
        }
        (generate_synthetic(&spec)?, spec.seed)
    };
    formats::write_system_csv(&system, &a.out)?;
    let sidecar = formats::default_solutions_path(&a.out);
    formats::write_solutions(system.solutions().unwrap_or_default(), &sidecar)?;
    writeln!(out, "seed {seed}")?;
    writeln!(out, "wrote {} ({})", a.out.display(), system.describe())?;
    writeln!(out, "wrote {}", sidecar.display())?;
    Ok(())
}

fn load(c: &SolveArgs) -> Result<LinearSystem> {
    formats::load_system(&c.system, c.solutions.as_deref())
}

fn write_outputs(c: &SolveArgs, trace: &Trace, out: &mut impl Write) -> Result<()> {
    let trace_path = c.trace.clone().unwrap_or_else(|| c.out.join("trace.jsonl"));
    formats::save_trace_jsonl(trace, &trace_path)?;
    writeln!(out, "wrote {}", trace_path.display())?;
    match &trace.errors {
        Some(errors) => {
            let summary = c.summary.clone().unwrap_or_else(|| c.out.join("summary.csv"));
            formats::save_summary_csv(errors, &summary)?;
            writeln!(out, "wrote {}", summary.display())?;
            let last = errors.last().unwrap_or_default();
            writeln!(out, "final squared errors {last:?}")?;
        }
        None => writeln!(out, "no planted solutions matching the iterates; errors not tracked")?,
    }
    if let Some(check) = &trace.metadata.residual_check {
        if check.nonvanishing {
            writeln!(
                out,
                "warning: max scaled residual {:e} exceeds {:e}; the system may be inconsistent",
                check.max_scaled_residual, check.tolerance
            )?;
        }
    }
    Ok(())
}

fn require_errors(c: &SolveArgs, trace: &Trace) -> Result<()> {
    if c.require_errors && trace.errors.is_none() {
        bail!(
            "--require-errors: no planted solutions for {} iterate(s) (labels and a solutions sidecar are needed)",
            trace.num_iterates()
        );
    }
    Ok(())
}

pub fn cmd_run(a: RunArgs, out: &mut impl Write) -> Result<()> {
    let c = &a.common;
    let system = load(c)?;
    let k = a.classes.or(system.num_classes()).unwrap_or(1);
    let inits = IterateSet::standard_normal(k, system.dim(), c.seed)?;
    let mut config = MrkConfig::new(a.swap_prob, c.iters, c.dist, c.seed);
    config.record_iterates = a.log_iterates;
    let trace = run_mrk(&system, &inits, &config)?;
    require_errors(c, &trace)?;
    write_outputs(c, &trace, out)?;
    if let Some(rate) = system.labels().and_then(|l| empirical_mistake_rate(&trace, l)) {
        writeln!(out, "empirical mistake rate {rate:?}")?;
    }
    Ok(())
}

pub fn cmd_rk(a: RkArgs, out: &mut impl Write) -> Result<()> {
    let c = &a.common;
    let system = load(c)?;
    let x0 = IterateSet::standard_normal(1, system.dim(), c.seed)?;
    let dist = RowDistribution::new(c.dist, &system);
    let trace = run_rk(&system, x0.get(0), c.iters, &dist, c.seed)?;
    require_errors(c, &trace)?;
    write_outputs(c, &trace, out)
}

pub fn cmd_experiment(a: ExperimentArgs, out: &mut impl Write) -> Result<()> {
    let mut preset = ExperimentPreset::new(a.preset);
    preset.trials = a.trials;
    preset.overrides.seed = a.seed;
    preset.overrides.iterations = a.iters;
    preset.overrides.swap_probability = a.swap_prob;
    preset.overrides.distribution = a.dist;
    preset.overrides.sizes = a.sizes;
    let exp = preset.resolve(a.data)?;
    let dir = a.out.unwrap_or_else(|| Path::new("results").join(a.preset.to_string()));
    let (outcome, manifest) = experiment::run_and_write(&exp, &dir)?;
    writeln!(
        out,
        "{}: {} trial(s), {} iterations, base seed {}",
        exp.preset, exp.trials, exp.iterations, exp.base_seed
    )?;
    if let Some(last) = outcome.aggregate.median.last() {
        writeln!(out, "median final squared errors {last:?}")?;
    }
    for p in &manifest.outputs {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

pub fn cmd_bound(a: BoundArgs, out: &mut impl Write) -> Result<()> {
    let (counts, c) = match &a.from_system {
        Some(path) => {
            let system = formats::load_system(path, a.solutions.as_deref())?;
            let counts = system
                .class_counts()
                .with_context(|| format!("{} has no class labels", path.display()))?
                .to_vec();
            let constants = class_rk_constants(&system)?;
            for (j, k) in constants.iter().enumerate() {
                writeln!(out, "class {j}: rows {} rk constant {:?}", counts[j], k.value)?;
            }
            let c = constants.iter().map(|k| k.value).fold(f64::NEG_INFINITY, f64::max);
            (counts, c)
        }
        None => (a.counts.clone(), a.c.context("--c is required")?),
    };
    let bound = bound_matrix(&counts, c, a.q, a.r)?;
    writeln!(out, "c {c:?} q {:?} r {:?}", a.q, a.r)?;
    writeln!(out, "A =")?;
    for row in &bound.matrix_a {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12}")).collect();
        writeln!(out, "  [{}]", cells.join(", "))?;
    }
    writeln!(out, "l1 norm {:?}", bound.l1_norm)?;
    writeln!(
        out,
        "contraction condition (norm < 1): {}",
        if bound.contracts() { "holds" } else { "fails" }
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Result<String> {
        let cli = Cli::try_parse_from(std::iter::once("mrk").chain(args.iter().copied()))?;
        let mut buf = Vec::new();
        dispatch(cli, &mut buf)?;
        Ok(String::from_utf8(buf)?)
    }

    #[test]
    fn bound_hand_example() {
        let s = run(&["bound", "--counts", "10,10", "--c", "0.5"]).unwrap();
        assert!(s.contains("l1 norm 0.75"), "{s}");
        assert!(s.contains("holds"));
    }

    #[test]
    fn bound_rejects_out_of_range() {
        assert!(run(&["bound", "--counts", "10,10", "--c", "1.5"]).is_err());
        assert!(run(&["bound", "--counts", "10,10", "--c", "0.5", "--r", "2"]).is_err());
    }

    #[test]
    fn inline_gen_validates_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("s.csv");
        let out = out.to_str().unwrap();
        assert!(run(&["gen", "--rows", "5,5", "--dim", "2", "--means", "1,2,3", "--out", out]).is_err());
        let s = run(&[
            "gen", "--rows", "5,5", "--dim", "2", "--means", "0.8,-0.8", "--seed", "3", "--out", out,
        ])
        .unwrap();
        assert!(s.starts_with("seed 3"), "{s}");
    }
}
