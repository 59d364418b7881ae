//! Error taxonomy across stagers: common errors (every stager wrong) versus
//! the rest, their stage distribution, distance to the nearest stage
//! transition in the scored hypnogram, and the surrounding transition
//! pattern.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::types::{Hypnogram, SleepStage, NUM_STAGES};

/// Largest |distance| with its own histogram bucket.
pub const NEAR_TRANSITION_EPOCHS: i64 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ErrorAnalysisError {
    #[error("common-error analysis needs at least two stagers")]
    SingleStager,
    #[error("epoch {index} out of range for hypnogram of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{names} names for {stagers} stagers")]
    NameMismatch { names: usize, stagers: usize },
}

pub type Result<T, E = ErrorAnalysisError> = std::result::Result<T, E>;

/// Position of an epoch relative to the nearest boundary `truth[j] != truth[j+1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransitionDistance {
    /// Boundaries directly on both sides.
    Rapid,
    /// Negative: the epoch precedes its nearest boundary by `|d|` epochs.
    /// Positive: it follows it. Never 0.
    Signed(i64),
    /// Equally far from a boundary on each side (distance ≥ 2).
    Equidistant(i64),
    /// The hypnogram has no transitions at all.
    NoTransition,
}

impl TransitionDistance {
    pub fn reversed(self) -> Self {
        match self {
            Self::Signed(d) => Self::Signed(-d),
            other => other,
        }
    }
}

impl fmt::Display for TransitionDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rapid => f.write_str("rapid"),
            Self::Signed(d) => write!(f, "{d:+}"),
            Self::Equidistant(d) => write!(f, "={d}"),
            Self::NoTransition => f.write_str("none"),
        }
    }
}

impl Serialize for TransitionDistance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn check_index(truth: &Hypnogram, i: usize) -> Result<()> {
    if i >= truth.len() {
        return Err(ErrorAnalysisError::IndexOutOfRange {
            index: i,
            len: truth.len(),
        });
    }
    Ok(())
}

fn resolve(before: Option<i64>, after: Option<i64>) -> TransitionDistance {
    match (before, after) {
        (Some(1), Some(1)) => TransitionDistance::Rapid,
        (None, None) => TransitionDistance::NoTransition,
        (Some(b), None) => TransitionDistance::Signed(b),
        (None, Some(a)) => TransitionDistance::Signed(-a),
        (Some(b), Some(a)) if b < a => TransitionDistance::Signed(b),
        (Some(b), Some(a)) if a < b => TransitionDistance::Signed(-a),
        (Some(b), Some(_)) => TransitionDistance::Equidistant(b),
    }
}

/// Signed distance of epoch `i` to the nearest stage transition in `truth`.
/// An epoch adjacent to a boundary has |distance| 1.
pub fn transition_distance(truth: &Hypnogram, i: usize) -> Result<TransitionDistance> {
    check_index(truth, i)?;
    let s = truth.stages();
    // Boundary between j and j+1 with j+1 <= i: distance i - j.
    let before = (0..i).rev().find(|&j| s[j] != s[j + 1]).map(|j| (i - j) as i64);
    // Boundary between j and j+1 with j >= i: distance j - i + 1.
    let after = (i..s.len().saturating_sub(1))
        .find(|&j| s[j] != s[j + 1])
        .map(|j| (j - i + 1) as i64);
    Ok(resolve(before, after))
}

/// [`transition_distance`] for every epoch in two linear passes.
pub fn transition_distances(truth: &Hypnogram) -> Vec<TransitionDistance> {
    let s = truth.stages();
    let n = s.len();
    let mut before = vec![None; n];
    let mut last: Option<usize> = None;
    for i in 0..n {
        if i > 0 && s[i - 1] != s[i] {
            last = Some(i - 1);
        }
        before[i] = last.map(|j| (i - j) as i64);
    }
    let mut out = vec![TransitionDistance::NoTransition; n];
    let mut next: Option<usize> = None;
    for i in (0..n).rev() {
        if i + 1 < n && s[i] != s[i + 1] {
            next = Some(i);
        }
        let after = next.map(|j| (j - i + 1) as i64);
        out[i] = resolve(before[i], after);
    }
    out
}

pub type Pattern = (SleepStage, SleepStage, SleepStage);

/// `(previous, own, next)` stage; missing neighbours at the ends are the
/// epoch itself.
pub fn transition_pattern(truth: &Hypnogram, i: usize) -> Result<Pattern> {
    check_index(truth, i)?;
    let s = truth.stages();
    let prev = if i == 0 { s[i] } else { s[i - 1] };
    let next = s.get(i + 1).copied().unwrap_or(s[i]);
    Ok((prev, s[i], next))
}

fn serialize_pattern<S: Serializer>(p: &Pattern, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&format_args!("{}-{}-{}", p.0, p.1, p.2))
}

/// One epoch misclassified by at least one stager.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recording: Option<String>,
    pub epoch_index: usize,
    pub truth_stage: SleepStage,
    pub predictions: Vec<SleepStage>,
    pub is_common: bool,
    pub transition_distance: TransitionDistance,
    #[serde(serialize_with = "serialize_pattern")]
    pub pattern: Pattern,
}

impl ErrorRecord {
    pub fn is_error_of(&self, stager: usize) -> bool {
        self.predictions[stager] != self.truth_stage
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorShare {
    pub stager: String,
    pub total_errors: u64,
    pub common_errors: u64,
    pub other_errors: u64,
}

impl ErrorShare {
    pub fn common_fraction(&self) -> f64 {
        if self.total_errors == 0 {
            0.0
        } else {
            self.common_errors as f64 / self.total_errors as f64
        }
    }

    pub fn other_fraction(&self) -> f64 {
        if self.total_errors == 0 {
            0.0
        } else {
            self.other_errors as f64 / self.total_errors as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorClassification {
    pub names: Vec<String>,
    pub records: Vec<ErrorRecord>,
    pub shares: Vec<ErrorShare>,
}

impl ErrorClassification {
    /// Appends another recording's analysis of the same stagers.
    pub fn extend(&mut self, other: ErrorClassification) {
        if self.names.is_empty() {
            *self = other;
            return;
        }
        for (mine, theirs) in self.shares.iter_mut().zip(&other.shares) {
            mine.total_errors += theirs.total_errors;
            mine.common_errors += theirs.common_errors;
            mine.other_errors += theirs.other_errors;
        }
        self.records.extend(other.records);
    }
}

/// Flags every epoch any stager got wrong; an epoch is a common error when
/// all stagers got it wrong.
pub fn classify_errors(
    names: &[String],
    predictions: &[Hypnogram],
    truth: &Hypnogram,
    recording: Option<&str>,
) -> Result<ErrorClassification> {
    if names.len() != predictions.len() {
        return Err(ErrorAnalysisError::NameMismatch {
            names: names.len(),
            stagers: predictions.len(),
        });
    }
    if predictions.len() < 2 {
        return Err(ErrorAnalysisError::SingleStager);
    }
    if let Some(p) = predictions.iter().find(|p| p.len() != truth.len()) {
        return Err(ErrorAnalysisError::LengthMismatch(p.len(), truth.len()));
    }
    let distances = transition_distances(truth);
    let mut shares: Vec<ErrorShare> = names
        .iter()
        .map(|n| ErrorShare {
            stager: n.clone(),
            ..ErrorShare::default()
        })
        .collect();
    let mut records = Vec::new();
    for (i, &t) in truth.stages().iter().enumerate() {
        let preds: Vec<SleepStage> = predictions.iter().map(|p| p.stages()[i]).collect();
        let wrong = preds.iter().filter(|&&p| p != t).count();
        if wrong == 0 {
            continue;
        }
        let is_common = wrong == preds.len();
        for (share, &p) in shares.iter_mut().zip(&preds) {
            if p != t {
                share.total_errors += 1;
                if is_common {
                    share.common_errors += 1;
                } else {
                    share.other_errors += 1;
                }
            }
        }
        records.push(ErrorRecord {
            recording: recording.map(str::to_string),
            epoch_index: i,
            truth_stage: t,
            predictions: preds,
            is_common,
            transition_distance: distances[i],
            pattern: transition_pattern(truth, i)?,
        });
    }
    Ok(ErrorClassification {
        names: names.to_vec(),
        records,
        shares,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    All,
    Common,
    Other,
}

impl ErrorKind {
    fn admits(self, r: &ErrorRecord) -> bool {
        match self {
            Self::All => true,
            Self::Common => r.is_common,
            Self::Other => !r.is_common,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Common => "common",
            Self::Other => "other",
        }
    }
}

/// Per stager, the fraction of its errors (of the given kind) whose true
/// stage is each of W, N1, N2, N3, REM. All zeros when it has none.
pub fn error_stage_distribution(
    records: &[ErrorRecord],
    n_stagers: usize,
    kind: ErrorKind,
) -> Vec<[f64; NUM_STAGES]> {
    (0..n_stagers)
        .map(|m| {
            let mut counts = [0u64; NUM_STAGES];
            for r in records.iter().filter(|r| kind.admits(r) && r.is_error_of(m)) {
                counts[r.truth_stage.index()] += 1;
            }
            let total: u64 = counts.iter().sum();
            if total == 0 {
                [0.0; NUM_STAGES]
            } else {
                counts.map(|c| c as f64 / total as f64)
            }
        })
        .collect()
}

pub const HISTOGRAM_BUCKETS: [&str; 11] = [
    "rapid", "-4", "-3", "-2", "-1", "+1", "+2", "+3", "+4", "equidistant", "beyond",
];

fn bucket_of(d: TransitionDistance) -> usize {
    match d {
        TransitionDistance::Rapid => 0,
        TransitionDistance::Signed(v) if (-NEAR_TRANSITION_EPOCHS..0).contains(&v) => {
            (v + NEAR_TRANSITION_EPOCHS + 1) as usize
        }
        TransitionDistance::Signed(v) if (1..=NEAR_TRANSITION_EPOCHS).contains(&v) => {
            (v + NEAR_TRANSITION_EPOCHS) as usize
        }
        TransitionDistance::Equidistant(v) if v <= NEAR_TRANSITION_EPOCHS => 9,
        _ => 10,
    }
}

/// Counts per [`HISTOGRAM_BUCKETS`] entry of one stager's errors.
pub fn distance_histogram(records: &[ErrorRecord], stager: usize, kind: ErrorKind) -> [u64; 11] {
    let mut counts = [0u64; 11];
    for r in records.iter().filter(|r| kind.admits(r) && r.is_error_of(stager)) {
        counts[bucket_of(r.transition_distance)] += 1;
    }
    counts
}

/// Occurrences of each `(previous, own, next)` pattern among the records of
/// the given kind.
pub fn pattern_counts(records: &[ErrorRecord], kind: ErrorKind) -> BTreeMap<Pattern, u64> {
    let mut out = BTreeMap::new();
    for r in records.iter().filter(|r| kind.admits(r)) {
        *out.entry(r.pattern).or_insert(0) += 1;
    }
    out
}
