//! Metrics and the experiment harness behind the `bench` subcommand.

mod experiment;
mod metrics;

pub use experiment::{
    parse_seeds, run_experiment, train_pendulum_model, train_sine_model, write_marginals_csv,
    ExperimentConfig, MethodSummary, MetricsReport, RunMetrics, RunRecord, SmootherKind,
    SystemSpec, EXACT_TOL, REPORT_SCHEMA_VERSION, THREADS_ENV,
};
pub use metrics::{metric_mae_x, metric_nll_x, metric_nll_z, MeanSe};
