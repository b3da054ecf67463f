//! Experiment runner for the streamsim simulator: configuration parsing,
//! scenario sweeps and report emission.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig};
pub use experiment::{ablation, calibrate_ranker, heterogeneity_study, run_experiment, run_scenario};
pub use report::{emit_report, parse_report_csv, Report, ReportRow};
