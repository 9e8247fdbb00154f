//! Episode loop, experiment orchestration, metrics and persistence.

pub mod config;
pub mod episode;
pub mod experiment;
pub mod log;
pub mod metrics;

pub use config::{MetricsConfig, ModelConfig, Scenario, ScenarioConfig, ShapeChoice, WorldConfig};
pub use episode::{run_episode, EpisodeOptions, EpisodeRecord, World};
pub use experiment::{
    compare_learners, format_comparison, prepare, report, run_experiment, run_prepared, velocity_sweep, Comparison,
    ExperimentResult, Prepared, Report, SweepRow,
};
pub use metrics::{adaptation_time, rolling_curve, summarize, MetricsSummary};
