//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p mrk-cli --test acceptance` (add `--release` for
//! realistic timings). Criterion 8 needs the Wisconsin breast-cancer file,
//! located through `MRK_WISCONSIN_DATA` or `data/breast-cancer-wisconsin.data`
//! under the workspace root; it is skipped when neither exists.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mrk_cli::experiment::{run_experiment, ExperimentOutcome};
use mrk_cli::presets::{ExperimentPreset, PresetName, DATA_ENV, DEFAULT_DATA_PATH};
use mrk_core::rng::{self, Stream};
use mrk_core::*;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::*;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn planted(rows: &[usize], dim: usize, seed: u64) -> LinearSystem {
    generate_synthetic(&GeneratorSpec {
        classes: rows.iter().map(|&m| ClassSpec::standard(m)).collect(),
        dimension: dim,
        solution_spread: 1.0,
        seed,
        shuffle: true,
    })
    .unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Steps MRK by hand on `sys`, handing (before, after, record) to `visit`.
fn walk(
    sys: &LinearSystem,
    inits: IterateSet,
    r: f64,
    steps: usize,
    seed: u64,
    mut visit: impl FnMut(&IterateSet, &IterateSet, &StepRecord),
) -> IterateSet {
    let dist = RowDistribution::new(DistributionKind::Uniform, sys);
    let mut rows = rng::stream(seed, Stream::RowSampling);
    let mut swaps = rng::stream(seed, Stream::Swap);
    let mut its = inits;
    for k in 0..steps {
        let before = its.clone();
        let i = sample_row(&dist, &mut rows);
        let rec = mrk_step(&mut its, sys, i, r, &mut swaps, k).unwrap();
        visit(&before, &its, &rec);
    }
    its
}

fn rk_reduction() -> Outcome {
    let sys = planted(&[300], 8, 101);
    let inits = IterateSet::standard_normal(1, 8, 101).unwrap();
    let dist = RowDistribution::new(DistributionKind::SquaredRowNorm, &sys);
    let ((same, r_values), elapsed) = timed(|| {
        let rk = run_rk(&sys, inits.get(0), 1000, &dist, 101).unwrap();
        let rk_err = rk.errors.unwrap();
        let mut same = true;
        let rs = [0.0, 0.1, 0.5, 1.0];
        for &r in &rs {
            let cfg = MrkConfig::new(r, 1000, DistributionKind::SquaredRowNorm, 101);
            let mrk = run_mrk(&sys, &inits, &cfg).unwrap().errors.unwrap();
            same &= mrk.len() == 1001
                && mrk
                    .per_iterate
                    .iter()
                    .zip(&rk_err.per_iterate)
                    .all(|(a, b)| a.to_bits() == b.to_bits())
                && mrk.per_iterate.len() == rk_err.per_iterate.len();
        }
        (same, rs.len())
    });
    check(
        same && elapsed < Duration::from_secs(1),
        format!("1000-step error series bitwise equal for {r_values} swap probabilities: {same}; {elapsed:.2?}"),
    )
}

fn residual_recurrence() -> Outcome {
    let sys = planted(&[25, 25], 5, 202);
    let inits = IterateSet::standard_normal(2, 5, 202).unwrap();
    let mut worst: f64 = 0.0;
    let mut flips = 0;
    let (_, elapsed) = timed(|| {
        walk(&sys, inits, 0.3, 10_000, 202, |_, after, rec| {
            let l = rec.sampled_row;
            let row = sys.row(l);
            let nsq = dot(row, row);
            let x = after.get(rec.target_iterate);
            let new_c = (dot(row, x) - sys.rhs_entry(l)) / nsq;
            let ct = rec.coefficients[rec.target_iterate];
            let cs = rec.coefficients[rec.argmin_iterate];
            let expected = if ct == 0.0 {
                0.0
            } else {
                ct.signum() * (ct.abs() - cs.abs())
            };
            // magnitude of the terms the coefficient is computed from
            let scale = ct.abs() + (dot(row, x).abs() + sys.rhs_entry(l).abs()) / nsq;
            worst = worst.max((new_c - expected).abs() / scale);
            if new_c * ct.signum() < -1e-9 * scale {
                flips += 1;
            }
        });
    });
    check(
        worst <= 1e-9 && flips == 0 && elapsed < Duration::from_secs(5),
        format!("max relative deviation {worst:.2e}, sign flips {flips}, 10^4 steps in {elapsed:.2?}"),
    )
}

fn obtuse_triangle() -> Outcome {
    let sys = planted(&[25, 25], 5, 303);
    let sols = sys.solutions().unwrap().to_vec();
    let labels = sys.labels().unwrap().to_vec();
    let inits = IterateSet::standard_normal(2, 5, 303).unwrap();
    // pair iterates with classes by the final matching, as in the error functional
    let mut records = Vec::new();
    let (final_its, elapsed) = timed(|| {
        walk(&sys, inits, 0.2, 10_000, 303, |before, after, rec| {
            let t = rec.target_iterate;
            records.push((rec.sampled_row, t, before.get(t).to_vec(), after.get(t).to_vec()));
        })
    });
    let (_, labeling) = matched_error(final_its.vectors(), &sols).unwrap();
    let (mut checked, mut violations) = (0, 0);
    for (l, t, before, after) in &records {
        let class = labeling[*t];
        if labels[*l] != class {
            continue;
        }
        checked += 1;
        let e0 = dist_sq(before, &sols[class]);
        let e1 = dist_sq(after, &sols[class]);
        if e0 - e1 < dist_sq(before, after) - 1e-9 * (1.0 + e0) {
            violations += 1;
        }
    }
    check(
        checked > 0 && violations == 0 && elapsed < Duration::from_secs(5),
        format!("{checked} consistent steps checked, {violations} violations, {elapsed:.2?}"),
    )
}

fn fig2_run(sizes: Vec<usize>, trials: usize, iterations: Option<usize>) -> ExperimentOutcome {
    let mut p = ExperimentPreset::new(PresetName::Fig2);
    p.trials = Some(trials);
    p.overrides.sizes = Some(sizes);
    p.overrides.iterations = iterations;
    p.overrides.seed = Some(40_000);
    run_experiment(&p.resolve(None).unwrap()).unwrap()
}

/// First step at which the median error of every iterate is below `tol`.
fn first_below(outcome: &ExperimentOutcome, tol: f64) -> Option<usize> {
    let k = outcome.trials[0].errors.num_iterates;
    (0..outcome.trials[0].errors.len()).find(|&step| {
        (0..k).all(|i| {
            let mut v: Vec<f64> = outcome.trials.iter().map(|t| t.errors.at(step)[i]).collect();
            median(&mut v) < tol
        })
    })
}

fn fig2_reproduction() -> Outcome {
    let (full, full_time) = timed(|| fig2_run(vec![1000, 1000], 100, None));
    let budget = full.trials[0].errors.len() - 1;
    let full_hit = first_below(&full, 1e-20);
    let (desk, desk_time) = timed(|| fig2_run(vec![200, 200], 20, Some(30_000)));
    let desk_hit = first_below(&desk, 1e-20);
    check(
        full_hit.is_some() && desk_hit.is_some() && desk_time < Duration::from_secs(120),
        format!(
            "100 trials 1000x10: both medians < 1e-20 at step {full_hit:?} of {budget} ({full_time:.2?}); \
             desk 20 trials 200x10: step {desk_hit:?} of 30000 ({desk_time:.2?})"
        ),
    )
}

fn bound_arithmetic() -> Outcome {
    let b = bound_matrix(&[10, 10], 0.5, 0.0, 0.0).unwrap();
    let exact = b.matrix_a == vec![vec![0.75, 0.0], vec![0.0, 0.75]] && b.l1_norm == 0.75;
    let grid: Vec<f64> = (0..=50).map(|i| 0.5 * i as f64 / 50.0).collect();
    let norms: Vec<f64> = grid
        .iter()
        .map(|&r| bound_matrix(&[10, 10], 0.5, 0.0, r).unwrap().l1_norm)
        .collect();
    let monotone = norms.windows(2).all(|w| w[1] >= w[0]);
    check(
        exact && monotone,
        format!(
            "A = {:?}, norm {}; norm over r in [0, 0.5] from {} to {} non-decreasing: {monotone}",
            b.matrix_a,
            b.l1_norm,
            norms[0],
            norms.last().unwrap()
        ),
    )
}

/// Largest per-class `1 - lambda_min(G) / trace(G)` with `G = M_j^T M_j`.
fn max_class_constant(sys: &LinearSystem) -> f64 {
    let labels = sys.labels().unwrap();
    let d = sys.dim();
    (0..sys.num_classes().unwrap())
        .map(|j| {
            let mut g = nalgebra::DMatrix::<f64>::zeros(d, d);
            for l in (0..sys.nrows()).filter(|&l| labels[l] == j) {
                let row = sys.row(l);
                for a in 0..d {
                    for b in 0..d {
                        g[(a, b)] += row[a] * row[b];
                    }
                }
            }
            1.0 - g.clone().symmetric_eigen().eigenvalues.min() / g.trace()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn log_slope_ratio(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let xs: Vec<f64> = (0..values.len()).map(|k| k as f64).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (cov / var).exp()
}

fn empirical_contraction() -> Outcome {
    let sys = planted(&[25, 25], 3, 1000);
    let c = max_class_constant(&sys);
    let bound = bound_matrix(sys.class_counts().unwrap(), c, 0.0, 0.0).unwrap();
    let series: Vec<Vec<f64>> = (0..50u64)
        .map(|t| {
            let inits = IterateSet::standard_normal(2, 3, 1000 + t).unwrap();
            let cfg = MrkConfig::new(0.0, 4000, DistributionKind::Uniform, 1000 + t);
            run_mrk(&sys, &inits, &cfg)
                .unwrap()
                .errors
                .unwrap()
                .matched_total
                .unwrap()
        })
        .collect();
    let med: Vec<f64> = (0..series[0].len())
        .map(|k| median(&mut series.iter().map(|s| s[k]).collect::<Vec<_>>()))
        .collect();
    let (Some(start), Some(end)) = (med.iter().position(|&v| v < 1e-4), med.iter().position(|&v| v < 1e-18)) else {
        return Fail("median matched error never crossed 1e-4 and 1e-18 within 4000 steps".into());
    };
    let ratio = log_slope_ratio(&med[start..=end]);
    check(
        ratio <= 1.10 * bound.l1_norm,
        format!(
            "fitted ratio {ratio:.4} over steps {start}..{end}; l1 norm of A {:.4} (c = {c:.4}), limit {:.4}",
            bound.l1_norm,
            1.10 * bound.l1_norm
        ),
    )
}

/// Iterations allowed for the r = 0.1 runs, fixed from a pilot of 100 trials
/// on two 200x10 classes whose slowest trial needed 735 steps.
const SWAP_BUDGET: usize = 2_000;

fn swap_necessity() -> Outcome {
    // r = 0: iterate 1 keeps its initial error throughout
    let mut frozen_trials = 0;
    let mut moved_trials = 0;
    for t in 0..20u64 {
        let seed = 9_000 + t;
        let sys = planted(&[200, 200], 10, seed);
        let x = IterateSet::standard_normal(1, 10, seed).unwrap();
        let inits = IterateSet::replicated(x.get(0), 2).unwrap();
        let trace = run_mrk(
            &sys,
            &inits,
            &MrkConfig::new(0.0, 3000, DistributionKind::Uniform, seed),
        )
        .unwrap();
        let errors = trace.errors.unwrap();
        let e1_0 = errors.at(0)[1];
        if errors.rows().all(|row| row[1] == e1_0) {
            frozen_trials += 1;
        } else {
            moved_trials += 1;
        }
    }
    // r = 0.1: matched error below 1e-6 within the budget
    let mut converged = 0;
    for t in 0..100u64 {
        let seed = 17_000 + t;
        let sys = planted(&[200, 200], 10, seed);
        let x = IterateSet::standard_normal(1, 10, seed).unwrap();
        let inits = IterateSet::replicated(x.get(0), 2).unwrap();
        let cfg = MrkConfig::new(0.1, SWAP_BUDGET, DistributionKind::Uniform, seed);
        let trace = run_mrk(&sys, &inits, &cfg).unwrap();
        let sols = sys.solutions().unwrap();
        let (matched, _) = matched_error(&trace.final_iterates, sols).unwrap();
        if matched < 1e-6 {
            converged += 1;
        }
    }
    check(
        moved_trials == 0 && converged >= 95,
        format!(
            "r=0: iterate 1 error constant in {frozen_trials}/20 trials (moved in {moved_trials}); \
             r=0.1: {converged}/100 trials below 1e-6 within {SWAP_BUDGET} steps"
        ),
    )
}

fn wisconsin_path() -> PathBuf {
    std::env::var_os(DATA_ENV).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../..")
            .join(DEFAULT_DATA_PATH)
    })
}

fn fig3_reproduction() -> Outcome {
    let path = wisconsin_path();
    if !path.is_file() {
        return Skip(format!(
            "dataset not found at {} (set {DATA_ENV} to run this criterion)",
            path.display()
        ));
    }
    let data = load_delimited_dataset(&path, "?", Imputation::Median).unwrap();
    let shape = (data.nrows(), data.ncols());
    if shape != (699, 10) {
        return Fail(format!("parsed shape {shape:?}, expected (699, 10)"));
    }
    let mut p = ExperimentPreset::new(PresetName::Fig3);
    p.trials = Some(100);
    let exp = p.resolve(Some(path)).unwrap();
    let (outcome, elapsed) = timed(|| run_experiment(&exp).unwrap());
    let finals: Vec<f64> = (0..2)
        .map(|i| {
            median(
                &mut outcome
                    .trials
                    .iter()
                    .map(|t| t.summary.final_errors[i])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    check(
        finals.iter().all(|&e| e < 1e-12),
        format!(
            "699x10, splits (300, 399), 100 trials of {} steps: median final errors {finals:?} ({elapsed:.2?})",
            exp.iterations
        ),
    )
}

fn sampler_frequencies() -> Outcome {
    let sys = generate_synthetic(&GeneratorSpec {
        classes: vec![ClassSpec::new(10, 0.5, 2.0)],
        dimension: 4,
        solution_spread: 1.0,
        seed: 909,
        shuffle: false,
    })
    .unwrap();
    let norms: Vec<f64> = (0..10).map(|l| dot(sys.row(l), sys.row(l))).collect();
    let fro: f64 = norms.iter().sum();
    let dist = RowDistribution::new(DistributionKind::SquaredRowNorm, &sys);
    let mut rng = rng::stream(909, Stream::RowSampling);
    let draws = 100_000;
    let mut counts = [0usize; 10];
    for _ in 0..draws {
        counts[sample_row(&dist, &mut rng)] += 1;
    }
    let worst = (0..10)
        .map(|l| (counts[l] as f64 / draws as f64 - norms[l] / fro).abs())
        .fold(0.0, f64::max);
    check(
        worst <= 0.01,
        format!("max |frequency - |M_l|^2/|M|_F^2| = {worst:.4} over 10^5 draws"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 rk reduction", rk_reduction),
        ("2 residual recurrence", residual_recurrence),
        ("3 obtuse-triangle decrease", obtuse_triangle),
        ("4 fig2 reproduction", fig2_reproduction),
        ("5 bound-matrix arithmetic", bound_arithmetic),
        ("6 empirical contraction vs theory", empirical_contraction),
        ("7 swap necessity", swap_necessity),
        ("8 fig3 reproduction", fig3_reproduction),
        ("9 sampler correctness", sampler_frequencies),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] criterion {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
