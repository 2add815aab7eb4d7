//! Experiment protocol, statistics and report emission.

mod dataset;
mod experiment;
mod report;
mod stats;
mod study;

pub use dataset::{balanced_columns, extract_private_column, select_private_column};
pub use experiment::{
    budget_threshold_grid, defend_target, degree_bucket_analysis, degree_quantile_buckets,
    loss_exponent_grid, prepare_repeat, run_multi_target_experiment, run_single_grid,
    run_single_target_experiment, single_target_repeat, sweep_hyperparams, write_buckets_csv,
    write_sweep_csv, BucketDelta, Dataset, ExperimentConfig, FlipCount, Predictions,
    RepeatSetup, SweepRow,
};
pub use report::{
    read_records_csv, Accuracy, Condition, EvalReport, MarginSummary, Mode, NodeRecord,
    TrajectoryPoint, REPORT_VERSION,
};
pub use stats::{average_ranks, kappa_coefficient, mean, mean_sd, spearman};
pub use study::{feature_defense, structure_vs_feature, FeatureFlip, PerturbationEffect};
