//! Configuration, orchestration, persistence and report rendering.

use thiserror::Error;

pub mod config;
pub mod report;
pub mod run;

pub use config::{DataSource, RunConfig, SplitDates, TuningConfig};
pub use report::{emit_table, export_equity, table_header};
pub use run::{persist, read_report, run_experiment, CurveKey, ReportFile, RunArtifact, ENGINE_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("engine error: {0}")]
    Engine(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("mixed tasks: {0}")]
    MixedTasks(String),
    #[error("unknown selector: {0}")]
    UnknownSelector(String),
}

impl AppError {
    /// 1 configuration, 2 data, 3 engine.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Io(_) | AppError::UnknownSelector(_) => 1,
            AppError::Data(_) => 2,
            AppError::Engine(_) | AppError::MixedTasks(_) => 3,
        }
    }
}
