//! Experiment orchestration: model lifecycle, probing, unlearning runs, the analyses,
//! persistence and plots.

pub mod config;
pub mod data;
pub mod experiments;
pub mod lab;
pub mod plot;
pub mod report;

pub use config::ExperimentConfig;
pub use experiments::{AnalysisKind, AnalysisPoint, AnalysisResult};
pub use lab::Lab;
