//! Experiment orchestration: grids of dataset configurations, repeated
//! training runs with plain splits or k-fold cross-validation, aggregate
//! statistics and report rendering.
//!
//! [`commands`] holds one function per CLI subcommand so the binary stays a
//! thin argument parser.

pub mod commands;
mod experiment;
mod grid;
mod report;
mod stats;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Resolution};
use crate::network::{NetworkConfig, NetworkError, PAPER_DENSE_UNITS, PAPER_FILTERS};
use crate::pcb::PcbError;
use crate::tensor::TensorError;

pub use experiment::{
    fit, run_experiment, DataSource, ExperimentOutcome, ExperimentSpec, RunRecord, RunReport, RunSummary, DEFAULT_RUNS,
    DEFAULT_TEST_PERCENT,
};
pub use grid::{grid_expand, Grid, GridGroup, GridNetwork};
pub use report::{
    compare_models, confusion_table, emit_report, format_percent, render_csv, render_json, summary_csv, summary_table,
    ModelComparison, ReportFormat,
};
pub use stats::{aggregate_stats, Aggregate};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PCBNET_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Pcb(#[from] PcbError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0}")]
    Invalid(String),
    #[error("grid {path}: {detail}")]
    Grid { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Dataset(DatasetError::Parse { .. }) => "dataset_name",
            HarnessError::Dataset(DatasetError::Format { .. }) => "clip_format",
            HarnessError::Dataset(DatasetError::InsufficientSamples { .. }) => "insufficient_samples",
            HarnessError::Dataset(_) => "dataset",
            HarnessError::Network(NetworkError::Format { .. }) => "checkpoint_format",
            HarnessError::Network(NetworkError::ConfigMismatch { .. }) => "config_mismatch",
            HarnessError::Network(_) => "network",
            HarnessError::Pcb(_) => "manifest",
            HarnessError::Tensor(_) => "tensor",
            HarnessError::Invalid(_) => "invalid_argument",
            HarnessError::Grid { .. } => "grid",
            HarnessError::Io { .. } => "io",
            HarnessError::Json(_) => "json",
            HarnessError::Csv(_) => "csv",
        }
    }

    /// Byte offset for format errors.
    pub fn offset(&self) -> Option<u64> {
        match self {
            HarnessError::Dataset(DatasetError::Format { offset, .. })
            | HarnessError::Network(NetworkError::Format { offset, .. }) => Some(*offset),
            _ => None,
        }
    }
}

/// Convolution widths and dense units, independent of the input shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub filters: [usize; 4],
    pub dense_units: usize,
}

impl Architecture {
    pub const PAPER: Architecture = Architecture { filters: PAPER_FILTERS, dense_units: PAPER_DENSE_UNITS };

    pub fn config(&self, depth: usize, resolution: Resolution) -> NetworkConfig {
        if *self == Self::PAPER {
            NetworkConfig::paper(depth, resolution)
        } else {
            NetworkConfig::custom(depth, resolution, self.filters, self.dense_units)
        }
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::PAPER
    }
}

/// Worker count: `PCBNET_THREADS` when set to a positive integer, otherwise
/// the available parallelism.
pub fn worker_threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                log::warn!("ignoring {THREADS_ENV}={v:?}, expected a positive integer");
                available
            }
        },
        Err(_) => available,
    }
}
