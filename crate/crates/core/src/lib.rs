//! Evaluation toolkit for automatic sleep stagers.
//!
//! Covers PSG preprocessing ([`sigprep`]) and EDF input ([`edf`]),
//! probability ensembling of several stagers ([`ensemble`]), staging and
//! uncertainty metrics with agreement tests ([`metrics`]), clinical sleep
//! measures ([`clinical`]), error taxonomy ([`error_analysis`]) and the
//! batch cohort driver ([`cohort`]).

pub mod clinical;
pub mod cohort;
pub mod edf;
pub mod error_analysis;
pub mod metrics;
pub mod ensemble;
pub mod sigprep;
pub mod types;

pub use types::{
    hardened, severity_of, CohortManifest, Hypnogram, ProbRow, ProbSeq, RecordingEntry,
    SeverityClass, SleepStage, StagerSet, NUM_STAGES,
};
