//! Planted multi-class problems: Gaussian generators, delimited-data ingestion
//! and row shuffling. Ground truth is kept on the returned system.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::numerical_rank;
use crate::error::{MrkError, Result};
use crate::linalg::{dot, RowMatrix};
use crate::rng::{self, Stream};
use crate::system::LinearSystem;

/// One class of a synthetic problem. Entries are i.i.d. `N(entry_mean, entry_spread^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub rows: usize,
    pub entry_mean: f64,
    /// Standard deviation of the matrix entries.
    pub entry_spread: f64,
}

impl ClassSpec {
    pub fn new(rows: usize, entry_mean: f64, entry_spread: f64) -> Self {
        Self {
            rows,
            entry_mean,
            entry_spread,
        }
    }

    /// Standard normal entries.
    pub fn standard(rows: usize) -> Self {
        Self::new(rows, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub classes: Vec<ClassSpec>,
    pub dimension: usize,
    /// Standard deviation of the planted solution entries (mean 0).
    pub solution_spread: f64,
    pub seed: u64,
    #[serde(default)]
    pub shuffle: bool,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(MrkError::InvalidParameter("at least one class is required".into()));
        }
        if self.dimension == 0 {
            return Err(MrkError::InvalidParameter("dimension must be positive".into()));
        }
        if !(self.solution_spread > 0.0 && self.solution_spread.is_finite()) {
            return Err(MrkError::InvalidParameter(format!(
                "solution spread must be positive, got {}",
                self.solution_spread
            )));
        }
        for (j, c) in self.classes.iter().enumerate() {
            if c.rows < self.dimension {
                return Err(MrkError::InvalidParameter(format!(
                    "class {j} has {} rows, fewer than the dimension {}",
                    c.rows, self.dimension
                )));
            }
            if !(c.entry_spread > 0.0 && c.entry_spread.is_finite()) || !c.entry_mean.is_finite() {
                return Err(MrkError::InvalidParameter(format!(
                    "class {j} needs a finite mean and positive spread"
                )));
            }
        }
        Ok(())
    }
}

/// A row permutation: new row `k` is old row `permutation[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleRecord {
    pub permutation: Vec<usize>,
    pub inverse: Vec<usize>,
}

impl ShuffleRecord {
    pub fn from_permutation(permutation: Vec<usize>) -> Self {
        let mut inverse = vec![0; permutation.len()];
        for (new, &old) in permutation.iter().enumerate() {
            inverse[old] = new;
        }
        Self { permutation, inverse }
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// Undoes the shuffle on a system produced by it.
    pub fn restore(&self, shuffled: &LinearSystem) -> LinearSystem {
        shuffled.reorder_rows(&self.inverse)
    }
}

/// Draws a planted multi-class system.
///
/// Class `j` contributes `rows_j` rows with entries drawn from its normal law;
/// its solution has i.i.d. `N(0, solution_spread^2)` entries and `b = M^(j) x*_j`.
pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<LinearSystem> {
    spec.validate()?;
    let d = spec.dimension;
    let m: usize = spec.classes.iter().map(|c| c.rows).sum();
    let mut rng = rng::stream(spec.seed, Stream::Generate);
    let sol_law = Normal::new(0.0, spec.solution_spread).map_err(|e| MrkError::InvalidParameter(e.to_string()))?;

    let mut data = Vec::with_capacity(m * d);
    let mut rhs = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    let mut solutions = Vec::with_capacity(spec.classes.len());
    for (j, class) in spec.classes.iter().enumerate() {
        let law =
            Normal::new(class.entry_mean, class.entry_spread).map_err(|e| MrkError::InvalidParameter(e.to_string()))?;
        let start = data.len();
        data.extend((0..class.rows * d).map(|_| rng.sample(law)));
        let x: Vec<f64> = (0..d).map(|_| rng.sample(sol_law)).collect();
        for row in data[start..].chunks_exact(d) {
            rhs.push(dot(row, &x));
        }
        labels.extend(std::iter::repeat_n(j, class.rows));
        solutions.push(x);
    }

    let system = LinearSystem::new(RowMatrix::from_row_major(m, d, data)?, rhs)?
        .with_ground_truth(Some(labels), Some(solutions))?;
    if spec.shuffle {
        Ok(shuffle_rows(&system, spec.seed).0)
    } else {
        Ok(system)
    }
}

/// How missing cells are filled in by [`load_delimited_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Imputation {
    #[default]
    Median,
    Mean,
}

/// Reads a comma-delimited numeric table, drops the first (identifier)
/// column and fills `missing_token` cells column-wise.
///
/// Row and column numbers in parse errors are 1-based positions in the file.
pub fn load_delimited_dataset(path: &Path, missing_token: &str, impute: Imputation) -> Result<RowMatrix> {
    let text = std::fs::read_to_string(path).map_err(|source| MrkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut width = None;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(MrkError::Domain(format!(
                    "{}: line {} has {} fields, expected {w}",
                    path.display(),
                    line_no + 1,
                    fields.len()
                )))
            }
            _ => {}
        }
        let row = fields
            .iter()
            .enumerate()
            .skip(1)
            .map(|(col, cell)| {
                if *cell == missing_token {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|_| MrkError::Parse {
                        path: path.to_path_buf(),
                        row: line_no + 1,
                        column: col + 1,
                        cell: (*cell).to_string(),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    let cols = width.unwrap_or(1).saturating_sub(1);
    if cells.is_empty() || cols == 0 {
        return Err(MrkError::Domain(format!("{}: no data columns", path.display())));
    }

    let mut fill = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut present: Vec<f64> = cells.iter().filter_map(|r| r[j]).collect();
        if present.is_empty() {
            return Err(MrkError::Domain(format!(
                "{}: column {} has no values to impute from",
                path.display(),
                j + 2
            )));
        }
        fill.push(match impute {
            Imputation::Median => median(&mut present),
            Imputation::Mean => present.iter().sum::<f64>() / present.len() as f64,
        });
    }
    let data = cells
        .iter()
        .flat_map(|r| r.iter().zip(&fill).map(|(c, f)| c.unwrap_or(*f)))
        .collect();
    RowMatrix::from_row_major(cells.len(), cols, data)
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

/// Splits `data` in row order into classes of the given sizes and plants a
/// standard normal solution per class.
pub fn build_planted_from_matrix(data: &RowMatrix, split_sizes: &[usize], solution_seed: u64) -> Result<LinearSystem> {
    let d = data.ncols();
    let total: usize = split_sizes.iter().sum();
    if total != data.nrows() {
        return Err(MrkError::InvalidParameter(format!(
            "split sizes sum to {total} but the matrix has {} rows",
            data.nrows()
        )));
    }
    let mut start = 0;
    for (class, &size) in split_sizes.iter().enumerate() {
        if size < d {
            return Err(MrkError::InvalidParameter(format!(
                "class {class} has {size} rows, fewer than the dimension {d}"
            )));
        }
        let rows: Vec<usize> = (start..start + size).collect();
        let rank = numerical_rank(&data.select_rows(&rows));
        if rank < d {
            return Err(MrkError::RankDeficient { class, rank, dim: d });
        }
        start += size;
    }

    let mut rng = rng::stream(solution_seed, Stream::Plant);
    let solutions: Vec<Vec<f64>> = split_sizes
        .iter()
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let labels: Vec<usize> = split_sizes
        .iter()
        .enumerate()
        .flat_map(|(j, &size)| std::iter::repeat_n(j, size))
        .collect();
    let rhs = data
        .rows_iter()
        .zip(&labels)
        .map(|(row, &j)| dot(row, &solutions[j]))
        .collect();
    LinearSystem::new(data.clone(), rhs)?.with_ground_truth(Some(labels), Some(solutions))
}

/// Applies a uniformly random row permutation to `M`, `b` and the labels together.
pub fn shuffle_rows(system: &LinearSystem, seed: u64) -> (LinearSystem, ShuffleRecord) {
    let mut permutation: Vec<usize> = (0..system.nrows()).collect();
    permutation.shuffle(&mut rng::stream(seed, Stream::Shuffle));
    let shuffled = system.reorder_rows(&permutation);
    (shuffled, ShuffleRecord::from_permutation(permutation))
}
