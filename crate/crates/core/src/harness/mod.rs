//! Training, evaluation, equivariance and gradient checks, and multi-seed
//! experiments with their result tables.

mod equivariance;
mod experiment;
mod gradcheck;
mod results;
mod train;

pub use equivariance::{
    check_equivariance, logit_deviations, EquivarianceConfig, EquivarianceReport, GroupTag, TrialInput,
};
pub use experiment::{
    column_name, multi_seed_experiment, run_one, summarise, table_columns, test_sets, thread_count, with_pool,
    ExperimentOutcome, ExperimentSpec, TestColumn,
};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use results::{
    build_report, read_results_csv, render_table, write_results_csv, Report, ResultsRow, Series, SeriesPoint, Stat,
};
pub use train::{argmax, evaluate, predict_all, train, EpochStats, Evaluation, RunResult, TrainConfig};
