use serde::{Deserialize, Serialize};

use crate::error::{MrkError, Result};
use crate::linalg::{dot, norm_sq, RowMatrix};

/// Tolerance for planted-solution consistency: `|M_l x - b_l| <= CONSISTENCY_TOL * (1 + |b_l|)`.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// The stacked system `M x = b` formed by shuffling several consistent
/// systems together, optionally carrying the ground truth it was built from.
///
/// Squared row norms are computed once at construction; a zero row is
/// rejected there so the solvers never divide by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    matrix: RowMatrix,
    rhs: Vec<f64>,
    row_norms_sq: Vec<f64>,
    labels: Option<Vec<usize>>,
    solutions: Option<Vec<Vec<f64>>>,
    class_counts: Option<Vec<usize>>,
}

impl LinearSystem {
    pub fn new(matrix: RowMatrix, rhs: Vec<f64>) -> Result<Self> {
        if rhs.len() != matrix.nrows() {
            return Err(MrkError::DimensionMismatch {
                expected: matrix.nrows(),
                found: rhs.len(),
                context: "right-hand side length",
            });
        }
        let row_norms_sq: Vec<f64> = matrix.rows_iter().map(norm_sq).collect();
        if let Some(row) = row_norms_sq.iter().position(|&n| n <= 0.0 || !n.is_finite()) {
            return Err(MrkError::ZeroNormRow { row });
        }
        Ok(Self {
            matrix,
            rhs,
            row_norms_sq,
            labels: None,
            solutions: None,
            class_counts: None,
        })
    }

    /// Attaches class labels and/or planted solutions.
    ///
    /// With both present every row is checked against the solution of its
    /// class. The number of classes is the number of solutions when given,
    /// otherwise one more than the largest label.
    pub fn with_ground_truth(mut self, labels: Option<Vec<usize>>, solutions: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let d = self.dim();
        if let Some(sols) = &solutions {
            if sols.is_empty() {
                return Err(MrkError::Domain("solution list is empty".into()));
            }
            for s in sols {
                if s.len() != d {
                    return Err(MrkError::DimensionMismatch {
                        expected: d,
                        found: s.len(),
                        context: "planted solution length",
                    });
                }
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != self.nrows() {
                return Err(MrkError::DimensionMismatch {
                    expected: self.nrows(),
                    found: labels.len(),
                    context: "label count",
                });
            }
            let classes = match &solutions {
                Some(s) => s.len(),
                None => labels.iter().max().map_or(0, |&l| l + 1),
            };
            let mut counts = vec![0usize; classes];
            for (row, &label) in labels.iter().enumerate() {
                if label >= classes {
                    return Err(MrkError::LabelOutOfRange { row, label, classes });
                }
                counts[label] += 1;
            }
            if let Some(sols) = &solutions {
                for (row, &label) in labels.iter().enumerate() {
                    let residual = (dot(self.matrix.row(row), &sols[label]) - self.rhs[row]).abs();
                    if residual > CONSISTENCY_TOL * (1.0 + self.rhs[row].abs()) {
                        return Err(MrkError::InconsistentRow {
                            row,
                            class: label,
                            residual,
                        });
                    }
                }
            }
            self.class_counts = Some(counts);
        } else {
            self.class_counts = None;
        }
        self.labels = labels;
        self.solutions = solutions;
        Ok(self)
    }

    pub fn matrix(&self) -> &RowMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    #[inline]
    pub fn rhs_entry(&self, i: usize) -> f64 {
        self.rhs[i]
    }

    #[inline]
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norms_sq[i]
    }

    pub fn row_norms_sq(&self) -> &[f64] {
        &self.row_norms_sq
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn solutions(&self) -> Option<&[Vec<f64>]> {
        self.solutions.as_deref()
    }

    pub fn class_counts(&self) -> Option<&[usize]> {
        self.class_counts.as_deref()
    }

    /// Number of classes known from ground truth, if any.
    pub fn num_classes(&self) -> Option<usize> {
        self.solutions
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.class_counts.as_ref().map(Vec::len))
    }

    /// Indices of the rows labelled `class`, in row order.
    pub fn rows_of_class(&self, class: usize) -> Option<Vec<usize>> {
        let labels = self.labels.as_ref()?;
        Some(
            labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    /// The submatrix `M^(class)` recovered from the labels.
    pub fn class_matrix(&self, class: usize) -> Option<RowMatrix> {
        self.rows_of_class(class).map(|rows| self.matrix.select_rows(&rows))
    }

    /// Reorders rows so that new row `k` is old row `order[k]`.
    pub(crate) fn reorder_rows(&self, order: &[usize]) -> Self {
        Self {
            matrix: self.matrix.select_rows(order),
            rhs: order.iter().map(|&i| self.rhs[i]).collect(),
            row_norms_sq: order.iter().map(|&i| self.row_norms_sq[i]).collect(),
            labels: self.labels.as_ref().map(|l| order.iter().map(|&i| l[i]).collect()),
            solutions: self.solutions.clone(),
            class_counts: self.class_counts.clone(),
        }
    }

    pub fn describe(&self) -> String {
        match &self.class_counts {
            Some(counts) => format!(
                "{}x{} system, class sizes {:?}{}",
                self.nrows(),
                self.dim(),
                counts,
                if self.solutions.is_some() {
                    ", planted solutions"
                } else {
                    ""
                }
            ),
            None => format!("{}x{} system", self.nrows(), self.dim()),
        }
    }
}
