//! Error functionals, relabeling-aware matching, convergence diagnostics and
//! multi-trial aggregation.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{MrkError, Result};
use crate::linalg::{dist_sq, RowMatrix};
use crate::system::LinearSystem;
use crate::trace::Trace;

/// Largest iterate count for which labelings are searched exhaustively.
pub const MAX_MATCHED_ITERATES: usize = 8;

/// Relative singular value threshold used for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Squared errors of every iterate over a run.
///
/// `per_iterate` is flat, one block of `num_iterates` values per recorded
/// step. `labeling[i]` is the solution paired with iterate `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub num_iterates: usize,
    pub per_iterate: Vec<f64>,
    pub total: Vec<f64>,
    pub labeling: Vec<usize>,
    /// Per-step minimum of the total error over all labelings.
    pub matched_total: Option<Vec<f64>>,
}

impl ErrorSeries {
    /// Builds the series from per-step distance blocks, where
    /// `history[step * k * k + i * k + j] = |x^(i) - x*_j|^2`.
    ///
    /// The labeling is the best pairing at the final step, applied to the
    /// whole run. Beyond [`MAX_MATCHED_ITERATES`] the identity labeling is used
    /// and no matched series is produced.
    pub fn from_distance_history(history: &[f64], k: usize) -> Self {
        let block = k * k;
        let steps = history.len() / block;
        let perms = (k <= MAX_MATCHED_ITERATES).then(|| all_labelings(k));
        let labeling = match (&perms, history.chunks_exact(block).last()) {
            (Some(p), Some(last)) => best_labeling(last, k, p).1,
            _ => (0..k).collect(),
        };
        let mut per_iterate = Vec::with_capacity(steps * k);
        let mut total = Vec::with_capacity(steps);
        for d in history.chunks_exact(block) {
            let start = per_iterate.len();
            per_iterate.extend((0..k).map(|i| d[i * k + labeling[i]]));
            total.push(per_iterate[start..].iter().sum());
        }
        let matched_total = perms.map(|p| history.chunks_exact(block).map(|d| best_labeling(d, k, &p).0).collect());
        Self {
            num_iterates: k,
            per_iterate,
            total,
            labeling,
            matched_total,
        }
    }

    /// Number of recorded steps (iterations + 1).
    pub fn len(&self) -> usize {
        self.total.len()
    }

    /// Per-iterate squared errors at recorded step `step`.
    pub fn at(&self, step: usize) -> &[f64] {
        &self.per_iterate[step * self.num_iterates..(step + 1) * self.num_iterates]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.per_iterate.chunks_exact(self.num_iterates.max(1))
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.len().checked_sub(1).map(|k| self.at(k))
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }
}

fn all_labelings(k: usize) -> Vec<Vec<usize>> {
    // itertools yields permutations of a sorted input in lexicographic order
    (0..k).permutations(k).collect()
}

fn best_labeling(dist: &[f64], k: usize, perms: &[Vec<usize>]) -> (f64, Vec<usize>) {
    let mut best = f64::INFINITY;
    let mut arg = &perms[0];
    for p in perms {
        let v: f64 = (0..k).map(|i| dist[i * k + p[i]]).sum();
        if v < best {
            best = v;
            arg = p;
        }
    }
    (best, arg.clone())
}

/// `sum_i |x^(i) - x*_(labeling(i))|^2`.
pub fn total_error(iterates: &[Vec<f64>], solutions: &[Vec<f64>], labeling: &[usize]) -> Result<f64> {
    if iterates.len() != solutions.len() || labeling.len() != iterates.len() {
        return Err(MrkError::Domain(format!(
            "{} iterates, {} solutions and a labeling of length {} do not line up",
            iterates.len(),
            solutions.len(),
            labeling.len()
        )));
    }
    let mut seen = vec![false; solutions.len()];
    for &j in labeling {
        if j >= solutions.len() || std::mem::replace(&mut seen[j], true) {
            return Err(MrkError::Domain(format!("{labeling:?} is not a permutation")));
        }
    }
    let mut sum = 0.0;
    for (x, &j) in iterates.iter().zip(labeling) {
        if x.len() != solutions[j].len() {
            return Err(MrkError::DimensionMismatch {
                expected: solutions[j].len(),
                found: x.len(),
                context: "iterate length",
            });
        }
        sum += dist_sq(x, &solutions[j]);
    }
    Ok(sum)
}

/// Smallest total error over all pairings of iterates with solutions, and the
/// lexicographically smallest pairing attaining it.
pub fn matched_error(iterates: &[Vec<f64>], solutions: &[Vec<f64>]) -> Result<(f64, Vec<usize>)> {
    let k = iterates.len();
    if k > MAX_MATCHED_ITERATES {
        return Err(MrkError::UnsupportedSize {
            max: MAX_MATCHED_ITERATES,
            found: k,
        });
    }
    if solutions.len() != k || k == 0 {
        return Err(MrkError::Domain(format!(
            "cannot match {k} iterates against {} solutions",
            solutions.len()
        )));
    }
    let mut dist = Vec::with_capacity(k * k);
    for x in iterates {
        for s in solutions {
            if x.len() != s.len() {
                return Err(MrkError::DimensionMismatch {
                    expected: s.len(),
                    found: x.len(),
                    context: "iterate length",
                });
            }
            dist.push(dist_sq(x, s));
        }
    }
    Ok(best_labeling(&dist, k, &all_labelings(k)))
}

/// Singular values in decreasing order.
pub fn singular_values(matrix: &RowMatrix) -> Vec<f64> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = matrix.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `RANK_TOL * sigma_max`.
pub fn numerical_rank(matrix: &RowMatrix) -> usize {
    let sv = singular_values(matrix);
    let Some(&max) = sv.first() else { return 0 };
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RkConstant {
    /// `1 - sigma_min^2 / |M|_F^2`, or 1 when the matrix is rank deficient.
    pub value: f64,
    pub sigma_min: f64,
    pub frobenius_sq: f64,
    pub rank_deficient: bool,
}

/// Expected one-step squared-error ratio of randomized Kaczmarz with
/// squared-row-norm sampling on `matrix`.
pub fn rk_contraction_constant(matrix: &RowMatrix) -> RkConstant {
    let sv = singular_values(matrix);
    let d = matrix.ncols();
    let frobenius_sq = matrix.frobenius_sq();
    let max = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| max > 0.0 && s > RANK_TOL * max).count();
    // fewer rows than columns leaves sigma_min = 0
    let sigma_min = if sv.len() < d {
        0.0
    } else {
        sv.last().copied().unwrap_or(0.0)
    };
    if rank < d {
        return RkConstant {
            value: 1.0,
            sigma_min,
            frobenius_sq,
            rank_deficient: true,
        };
    }
    RkConstant {
        value: 1.0 - sigma_min * sigma_min / frobenius_sq,
        sigma_min,
        frobenius_sq,
        rank_deficient: false,
    }
}

/// The bound matrix on per-iterate squared errors near convergence, together
/// with its inputs and its l1 operator norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalBound {
    pub matrix_a: Vec<Vec<f64>>,
    pub l1_norm: f64,
    pub class_counts: Vec<usize>,
    pub rk_constant_bound: f64,
    pub mistake_probability: f64,
    pub swap_probability: f64,
}

impl TheoreticalBound {
    pub fn contracts(&self) -> bool {
        self.l1_norm < 1.0
    }
}

/// Fills the bound matrix for class sizes `m_0..m_n`.
///
/// With `p = q + r/(n+1)`, column `j` uses the size `m_j` of the class whose
/// row was sampled:
///
/// ```text
/// A_jj = 1 + (m_j/m)(c - 1)(1 - q - n r/(n+1)) + ((m - m_j)/m) p
/// A_ij = 2 (m_j/m) p                                   (i != j)
/// ```
pub fn bound_matrix(class_counts: &[usize], c: f64, q: f64, r: f64) -> Result<TheoreticalBound> {
    if class_counts.is_empty() || class_counts.contains(&0) {
        return Err(MrkError::InvalidParameter(format!(
            "class counts must be positive, got {class_counts:?}"
        )));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(MrkError::InvalidParameter(format!("c must lie in (0, 1), got {c}")));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(MrkError::InvalidParameter(format!("q must lie in [0, 1), got {q}")));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(MrkError::InvalidParameter(format!("r must lie in [0, 1], got {r}")));
    }
    let k = class_counts.len();
    let n = (k - 1) as f64;
    let m: usize = class_counts.iter().sum();
    let m = m as f64;
    let p = q + r / (n + 1.0);
    let mut a = vec![vec![0.0; k]; k];
    for (j, &mj) in class_counts.iter().enumerate() {
        let frac = mj as f64 / m;
        for (i, row) in a.iter_mut().enumerate() {
            row[j] = if i == j {
                1.0 + frac * (c - 1.0) * (1.0 - q - n * r / (n + 1.0)) + (1.0 - frac) * p
            } else {
                2.0 * frac * p
            };
        }
    }
    let l1_norm = l1_operator_norm(&a)?;
    Ok(TheoreticalBound {
        matrix_a: a,
        l1_norm,
        class_counts: class_counts.to_vec(),
        rk_constant_bound: c,
        mistake_probability: q,
        swap_probability: r,
    })
}

/// Maximum column sum of a nonnegative matrix.
pub fn l1_operator_norm(matrix: &[Vec<f64>]) -> Result<f64> {
    let cols = matrix.first().map_or(0, Vec::len);
    let mut sums = vec![0.0; cols];
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != cols {
            return Err(MrkError::DimensionMismatch {
                expected: cols,
                found: row.len(),
                context: "matrix row length",
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if v.is_nan() || v < 0.0 {
                return Err(MrkError::Domain(format!("entry ({i}, {j}) = {v} is negative")));
            }
            sums[j] += v;
        }
    }
    Ok(sums.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRank {
    pub class: usize,
    pub rows: usize,
    pub rank: usize,
    pub full_rank: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub dim: usize,
    pub classes: Vec<ClassRank>,
}

impl RankReport {
    pub fn all_full_rank(&self) -> bool {
        self.classes.iter().all(|c| c.full_rank)
    }
}

/// Numerical rank of every labelled class submatrix.
pub fn check_full_rank(system: &LinearSystem) -> Result<RankReport> {
    let classes = system
        .num_classes()
        .filter(|_| system.labels().is_some())
        .ok_or_else(|| MrkError::Domain("rank check needs class labels".into()))?;
    let dim = system.dim();
    let classes = (0..classes)
        .map(|class| {
            let sub = system.class_matrix(class).expect("labels present");
            let rank = numerical_rank(&sub);
            ClassRank {
                class,
                rows: sub.nrows(),
                rank,
                full_rank: rank == dim,
            }
        })
        .collect();
    Ok(RankReport { dim, classes })
}

/// Per-class RK constants of a labelled system.
pub fn class_rk_constants(system: &LinearSystem) -> Result<Vec<RkConstant>> {
    let classes = system
        .num_classes()
        .filter(|_| system.labels().is_some())
        .ok_or_else(|| MrkError::Domain("per-class constants need class labels".into()))?;
    Ok((0..classes)
        .map(|j| rk_contraction_constant(&system.class_matrix(j).expect("labels present")))
        .collect())
}

/// Linear-interpolation percentile of an ascending slice, `p` in `[0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Median and quartiles of each iterate's squared error across trials.
///
/// Indexing is `[recorded step][iterate]`, matching [`ErrorSeries::at`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub median: Vec<Vec<f64>>,
    pub q25: Vec<Vec<f64>>,
    pub q75: Vec<Vec<f64>>,
    pub trial_count: usize,
}

impl AggregateSeries {
    pub fn len(&self) -> usize {
        self.median.len()
    }

    pub fn is_empty(&self) -> bool {
        self.median.is_empty()
    }

    pub fn num_iterates(&self) -> usize {
        self.median.first().map_or(0, Vec::len)
    }
}

pub fn aggregate_trials(traces: &[Trace]) -> Result<AggregateSeries> {
    let series: Vec<&ErrorSeries> = traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.errors
                .as_ref()
                .ok_or_else(|| MrkError::Domain(format!("trial {i} has no error series")))
        })
        .collect::<Result<_>>()?;
    aggregate_series(&series)
}

pub fn aggregate_series(series: &[&ErrorSeries]) -> Result<AggregateSeries> {
    let first = series
        .first()
        .ok_or_else(|| MrkError::Domain("no trials to aggregate".into()))?;
    let steps = first.len();
    let k = first.num_iterates;
    for (i, s) in series.iter().enumerate() {
        if s.len() != steps || s.num_iterates != k || s.per_iterate.len() != steps * k {
            return Err(MrkError::Domain(format!(
                "trial {i} does not share the iteration count and iterate count of trial 0"
            )));
        }
    }
    let mut median = Vec::with_capacity(steps);
    let mut q25 = Vec::with_capacity(steps);
    let mut q75 = Vec::with_capacity(steps);
    let mut column = Vec::with_capacity(series.len());
    for step in 0..steps {
        let (mut md, mut lo, mut hi) = (Vec::with_capacity(k), Vec::with_capacity(k), Vec::with_capacity(k));
        for i in 0..k {
            column.clear();
            column.extend(series.iter().map(|s| s.per_iterate[step * k + i]));
            column.sort_by(f64::total_cmp);
            lo.push(percentile(&column, 0.25));
            md.push(percentile(&column, 0.5));
            hi.push(percentile(&column, 0.75));
        }
        median.push(md);
        q25.push(lo);
        q75.push(hi);
    }
    Ok(AggregateSeries {
        median,
        q25,
        q75,
        trial_count: series.len(),
    })
}

/// Fraction of non-swap steps that updated an iterate paired with a class
/// other than the sampled row's class. `None` without labels, errors, or
/// non-swap steps.
pub fn empirical_mistake_rate(trace: &Trace, labels: &[usize]) -> Option<f64> {
    let labeling = &trace.errors.as_ref()?.labeling;
    let mut total = 0usize;
    let mut wrong = 0usize;
    for s in trace.steps.iter().filter(|s| !s.swap_triggered) {
        total += 1;
        if labeling[s.target_iterate] != labels[s.sampled_row] {
            wrong += 1;
        }
    }
    (total > 0).then(|| wrong as f64 / total as f64)
}

/// Per-step ratio `exp(slope)` of a least-squares line through `ln(values)`.
pub fn fitted_geometric_ratio(values: &[f64]) -> Option<f64> {
    if values.len() < 2 || values.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return None;
    }
    let n = values.len() as f64;
    let mean_k = (n - 1.0) / 2.0;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mean_l = logs.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, l) in logs.iter().enumerate() {
        let dk = k as f64 - mean_k;
        num += dk * (l - mean_l);
        den += dk * dk;
    }
    Some((num / den).exp())
}
