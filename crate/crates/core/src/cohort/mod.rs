//! Batch driver: synthetic cohorts, run configuration, the per-recording
//! pipeline and the report bundle it writes.

mod config;
mod pipeline;
pub mod report;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    has_errors, validate_config, AhiBin, Diagnostic, EnsembleMode, RunConfig, Severity, StagerSource, StrataConfig,
};
pub use pipeline::{
    analyze_recordings, run_pipeline, NamedReport, QualityEntry, RecordingFailure, RunReport, RunSummary, AVG_ENSEMBLE,
    LEARNED_ENSEMBLE,
};
pub use synth::{
    biased_confusion, generate_synthetic_cohort, write_synthetic_cohort, StochasticMatrix, SynthCohort, SynthSpec,
    SynthStager, DEFAULT_TRANSITION,
};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("{what} row {row} is not a probability distribution (sum {sum})")]
    InvalidStochasticMatrix { what: String, row: usize, sum: f64 },
    #[error("concentration must be positive, got {0}")]
    InvalidConcentration(f64),
    #[error("invalid synthetic spec: {0}")]
    EmptySynthSpec(String),
    #[error("unknown ensemble mode `{0}`")]
    UnknownEnsembleMode(String),
    #[error("invalid config:\n{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    InvalidConfig(Vec<Diagnostic>),
    #[error("recording `{0}` is scored by a different set of stagers")]
    StagerMismatch(String),
    #[error("manifest lists no recordings")]
    NoRecordings,
    #[error("none of the {} recordings could be processed", .0.len())]
    NoUsableRecordings(Vec<RecordingFailure>),
    #[error(transparent)]
    Types(#[from] crate::types::TypesError),
    #[error(transparent)]
    Ensemble(#[from] crate::ensemble::EnsembleError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Clinical(#[from] crate::clinical::ClinicalError),
    #[error(transparent)]
    ErrorAnalysis(#[from] crate::error_analysis::ErrorAnalysisError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CohortError> = std::result::Result<T, E>;
