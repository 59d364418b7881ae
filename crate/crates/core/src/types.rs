//! Shared domain types: sleep stages, hypnograms, per-epoch probability
//! sequences, aligned stager outputs and cohort manifests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of scored sleep stages.
pub const NUM_STAGES: usize = 5;

/// Length of one scoring epoch in seconds.
pub const EPOCH_SECONDS: f64 = 30.0;

/// Rows whose sum deviates from 1 by more than this are renormalized on ingestion.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TypesError {
    #[error("unknown stage code `{0}`")]
    UnknownStageCode(String),
    #[error("negative AHI {0}")]
    NegativeAhi(f64),
    #[error("row {row}: {reason}")]
    InvalidProbRow { row: usize, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("stager set is empty")]
    EmptyStagerSet,
    #[error("length mismatch: expected {expected}, got {got} ({what})")]
    LengthMismatch {
        expected: usize,
        got: usize,
        what: String,
    },
    #[error("invalid manifest entry `{id}`: {reason}")]
    InvalidManifest { id: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TypesError> = std::result::Result<T, E>;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| TypesError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| TypesError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SleepStage {
    W,
    N1,
    N2,
    N3,
    #[serde(rename = "REM")]
    Rem,
}

impl SleepStage {
    pub const ALL: [SleepStage; NUM_STAGES] = [Self::W, Self::N1, Self::N2, Self::N3, Self::Rem];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        Self::ALL
            .get(idx)
            .copied()
            .ok_or_else(|| TypesError::UnknownStageCode(idx.to_string()))
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::W => "W",
            Self::N1 => "N1",
            Self::N2 => "N2",
            Self::N3 => "N3",
            Self::Rem => "REM",
        }
    }

    pub fn is_sleep(self) -> bool {
        self != Self::W
    }

    /// Accepts `W`, `N1`, `N2`, `N3`, `R`, `REM` (any case) or the
    /// canonical indices `0..=4`.
    pub fn from_code(code: &str) -> Result<Self> {
        let trimmed = code.trim();
        if let Ok(idx) = trimmed.parse::<usize>() {
            return Self::from_index(idx);
        }
        match trimmed.to_ascii_uppercase().as_str() {
            "W" => Ok(Self::W),
            "N1" => Ok(Self::N1),
            "N2" => Ok(Self::N2),
            "N3" => Ok(Self::N3),
            "R" | "REM" => Ok(Self::Rem),
            _ => Err(TypesError::UnknownStageCode(code.to_string())),
        }
    }
}

impl fmt::Display for SleepStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SleepStage {
    type Err = TypesError;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_code(s)
    }
}

/// Per-epoch stage labels of one night, 30-s epochs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Hypnogram {
    stages: Vec<SleepStage>,
}

impl Hypnogram {
    pub fn new(stages: Vec<SleepStage>) -> Self {
        Self { stages }
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        indices
            .iter()
            .map(|&i| SleepStage::from_index(i))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn stages(&self) -> &[SleepStage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<SleepStage> {
        self.stages.get(idx).copied()
    }

    pub fn epoch_seconds(&self) -> f64 {
        EPOCH_SECONDS
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.stages.iter().rev().copied().collect())
    }

    /// One stage code per line.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut stages = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let stage = SleepStage::from_code(line).map_err(|e| TypesError::Parse {
                line: line_no + 1,
                reason: e.to_string(),
            })?;
            stages.push(stage);
        }
        Ok(Self::new(stages))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 4);
        for s in &self.stages {
            out.push_str(s.code());
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse_csv(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

impl FromIterator<SleepStage> for Hypnogram {
    fn from_iter<I: IntoIterator<Item = SleepStage>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

pub type ProbRow = [f64; NUM_STAGES];

/// One stager's per-epoch probability vectors over the five stages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbSeq {
    rows: Vec<ProbRow>,
}

impl ProbSeq {
    /// Validates every row. Rows with negative or non-finite entries are
    /// rejected; rows whose sum is off by more than [`ROW_SUM_TOLERANCE`]
    /// are renormalized with a warning.
    pub fn new(mut rows: Vec<ProbRow>) -> Result<Self> {
        let mut renormalized = 0usize;
        for (i, row) in rows.iter_mut().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(TypesError::InvalidProbRow {
                    row: i,
                    reason: format!("entries must be finite and nonnegative: {row:?}"),
                });
            }
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(TypesError::InvalidProbRow {
                    row: i,
                    reason: "row sums to zero".into(),
                });
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                row.iter_mut().for_each(|p| *p /= sum);
                renormalized += 1;
            }
        }
        if renormalized > 0 {
            log::warn!("renormalized {renormalized} probability rows that did not sum to 1");
        }
        Ok(Self { rows })
    }

    /// Trusted constructor for rows produced by this crate.
    pub(crate) fn from_rows_unchecked(rows: Vec<ProbRow>) -> Self {
        Self { rows }
    }

    /// One-hot rows for each stage of a hypnogram.
    pub fn one_hot(h: &Hypnogram) -> Self {
        Self::from_rows_unchecked(
            h.stages()
                .iter()
                .map(|s| {
                    let mut row = [0.0; NUM_STAGES];
                    row[s.index()] = 1.0;
                    row
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[ProbRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Per-row argmax, ties resolved toward the lowest stage index.
    pub fn hardened(&self) -> Hypnogram {
        self.rows.iter().map(|row| SleepStage::ALL[argmax(row)]).collect()
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != NUM_STAGES {
                return Err(TypesError::Parse {
                    line: line_no + 1,
                    reason: format!("expected {NUM_STAGES} fields, found {}", fields.len()),
                });
            }
            let mut row = [0.0; NUM_STAGES];
            for (slot, field) in row.iter_mut().zip(&fields) {
                *slot = field.parse::<f64>().map_err(|e| TypesError::Parse {
                    line: line_no + 1,
                    reason: format!("`{field}`: {e}"),
                })?;
            }
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse_csv(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Free-function form of [`ProbSeq::hardened`].
pub fn hardened(probs: &ProbSeq) -> Hypnogram {
    probs.hardened()
}

/// Aligned outputs of M stagers for one recording plus the scored truth.
#[derive(Clone, Debug, PartialEq)]
pub struct StagerSet {
    names: Vec<String>,
    outputs: Vec<ProbSeq>,
    truth: Hypnogram,
}

impl StagerSet {
    pub fn new(names: Vec<String>, outputs: Vec<ProbSeq>, truth: Hypnogram) -> Result<Self> {
        if outputs.is_empty() {
            return Err(TypesError::EmptyStagerSet);
        }
        if names.len() != outputs.len() {
            return Err(TypesError::LengthMismatch {
                expected: outputs.len(),
                got: names.len(),
                what: "stager names".into(),
            });
        }
        for (name, out) in names.iter().zip(&outputs) {
            if out.len() != truth.len() {
                return Err(TypesError::LengthMismatch {
                    expected: truth.len(),
                    got: out.len(),
                    what: format!("epochs of stager `{name}`"),
                });
            }
        }
        Ok(Self {
            names,
            outputs,
            truth,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn outputs(&self) -> &[ProbSeq] {
        &self.outputs
    }

    pub fn truth(&self) -> &Hypnogram {
        &self.truth
    }

    pub fn num_stagers(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_epochs(&self) -> usize {
        self.truth.len()
    }

    /// Concatenates the epochs of several recordings scored by the same stagers.
    pub fn concat(sets: &[StagerSet]) -> Result<Self> {
        let first = sets.first().ok_or(TypesError::EmptyStagerSet)?;
        let m = first.num_stagers();
        let mut outputs = vec![Vec::new(); m];
        let mut truth = Vec::new();
        for set in sets {
            if set.names != first.names {
                return Err(TypesError::LengthMismatch {
                    expected: m,
                    got: set.num_stagers(),
                    what: "stagers across recordings".into(),
                });
            }
            for (acc, out) in outputs.iter_mut().zip(&set.outputs) {
                acc.extend_from_slice(out.rows());
            }
            truth.extend_from_slice(set.truth.stages());
        }
        Self::new(
            first.names.clone(),
            outputs.into_iter().map(ProbSeq::from_rows_unchecked).collect(),
            Hypnogram::new(truth),
        )
    }
}

/// OSA severity bins over the apnea-hypopnea index, left-closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SeverityClass {
    None,
    Mild,
    Moderate,
    Severe,
    Unknown,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 5] = [
        Self::None,
        Self::Mild,
        Self::Moderate,
        Self::Severe,
        Self::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::None => "None (0<=AHI<1)",
            Self::Mild => "Mild (1<=AHI<5)",
            Self::Moderate => "Moderate (5<=AHI<10)",
            Self::Severe => "Severe (AHI>=10)",
            Self::Unknown => "Unknown",
        }
    }
}

/// `None` input means the AHI was not recorded.
pub fn severity_of(ahi: Option<f64>) -> Result<SeverityClass> {
    let Some(ahi) = ahi else {
        return Ok(SeverityClass::Unknown);
    };
    if ahi.is_nan() {
        return Ok(SeverityClass::Unknown);
    }
    if ahi < 0.0 {
        return Err(TypesError::NegativeAhi(ahi));
    }
    Ok(if ahi < 1.0 {
        SeverityClass::None
    } else if ahi < 5.0 {
        SeverityClass::Mild
    } else if ahi < 10.0 {
        SeverityClass::Moderate
    } else {
        SeverityClass::Severe
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub id: String,
    pub age: f64,
    #[serde(default)]
    pub ahi: Option<f64>,
    #[serde(default)]
    pub subset_tag: String,
    /// Scored hypnogram, one stage code per line.
    pub hypnogram: PathBuf,
    /// Optional EDF recording for the preprocessing stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edf: Option<PathBuf>,
}

impl RecordingEntry {
    pub fn severity(&self) -> Result<SeverityClass> {
        severity_of(self.ahi)
    }
}

/// Per-recording metadata; serialized as a JSON array of entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CohortManifest {
    pub recordings: Vec<RecordingEntry>,
}

impl CohortManifest {
    pub fn validate(&self) -> Result<()> {
        for r in &self.recordings {
            if !(r.age > 0.0) {
                return Err(TypesError::InvalidManifest {
                    id: r.id.clone(),
                    reason: format!("age must be positive, got {}", r.age),
                });
            }
            if let Some(ahi) = r.ahi {
                if ahi < 0.0 {
                    return Err(TypesError::InvalidManifest {
                        id: r.id.clone(),
                        reason: format!("negative AHI {ahi}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Self = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
