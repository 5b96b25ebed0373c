//! Multi-randomized Kaczmarz (MRK) for latent class linear regression.
//!
//! Several consistent systems `M^(i) x*_i = b^(i)` are stacked and their rows
//! shuffled; MRK keeps one iterate per class and, at each step, projects the
//! iterate closest to a sampled row's hyperplane towards it. The crate also
//! carries the classic randomized Kaczmarz baseline, planted problem
//! generators and convergence diagnostics.

pub mod analysis;
pub mod error;
pub mod kaczmarz;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod solver;
pub mod system;
pub mod trace;

pub use analysis::{
    aggregate_series, aggregate_trials, bound_matrix, check_full_rank, class_rk_constants, empirical_mistake_rate,
    fitted_geometric_ratio, l1_operator_norm, matched_error, numerical_rank, rk_contraction_constant, total_error,
    AggregateSeries, ErrorSeries, RankReport, RkConstant, TheoreticalBound,
};
pub use error::{MrkError, Result};
pub use kaczmarz::{kaczmarz_update, residual_coefficient, run_rk, sample_row, DistributionKind, RowDistribution};
pub use linalg::RowMatrix;
pub use problems::{
    build_planted_from_matrix, generate_synthetic, load_delimited_dataset, shuffle_rows, ClassSpec, GeneratorSpec,
    Imputation, ShuffleRecord,
};
pub use rng::RNG_ALGORITHM;
pub use solver::{mrk_step, run_mrk, select_target, IterateSet, MrkConfig, TieBreak};
pub use system::LinearSystem;
pub use trace::{ResidualCheck, StepRecord, Trace, TraceMetadata};
