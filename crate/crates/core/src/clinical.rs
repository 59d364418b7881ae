//! Hypnogram-derived sleep measures, their relative errors and paired
//! t-tests between stagers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::types::{Hypnogram, SleepStage, EPOCH_SECONDS};

const EPOCH_MINUTES: f64 = EPOCH_SECONDS / 60.0;

/// Significance level for the Table-IV style comparison.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum ClinicalError {
    #[error("hypnogram is empty")]
    EmptyHypnogram,
    #[error("paired t-test needs at least 2 complete pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

pub type Result<T, E = ClinicalError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalMeasures {
    /// Total sleep time, minutes.
    pub tst: f64,
    /// Wake after sleep onset, minutes; trailing wake after the last sleep
    /// epoch is not counted.
    pub waso: f64,
    /// Minutes from sleep onset to the first REM epoch.
    pub rem_latency: Option<f64>,
    /// Percent of the scored duration spent asleep.
    pub sleep_efficiency: f64,
}

/// An all-wake night is not an error: TST, WASO and SE are 0 and REM
/// latency is absent.
pub fn clinical_measures(h: &Hypnogram) -> Result<ClinicalMeasures> {
    if h.is_empty() {
        return Err(ClinicalError::EmptyHypnogram);
    }
    let stages = h.stages();
    let sleep_epochs = stages.iter().filter(|s| s.is_sleep()).count();
    let tst = EPOCH_MINUTES * sleep_epochs as f64;
    let sleep_efficiency = 100.0 * tst / (EPOCH_MINUTES * stages.len() as f64);
    let Some(onset) = stages.iter().position(|s| s.is_sleep()) else {
        return Ok(ClinicalMeasures {
            tst: 0.0,
            waso: 0.0,
            rem_latency: None,
            sleep_efficiency: 0.0,
        });
    };
    let last_sleep = stages.iter().rposition(|s| s.is_sleep()).unwrap_or(onset);
    let waso_epochs = stages[onset..=last_sleep]
        .iter()
        .filter(|&&s| s == SleepStage::W)
        .count();
    let rem_latency = stages[onset..]
        .iter()
        .position(|&s| s == SleepStage::Rem)
        .map(|d| EPOCH_MINUTES * d as f64);
    Ok(ClinicalMeasures {
        tst,
        waso: EPOCH_MINUTES * waso_epochs as f64,
        rem_latency,
        sleep_efficiency,
    })
}

/// Absolute relative error in percent per measure; `None` where the true
/// value is 0 or either REM latency is absent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    pub tst: Option<f64>,
    pub waso: Option<f64>,
    pub rem_latency: Option<f64>,
    pub sleep_efficiency: Option<f64>,
}

impl RelativeErrors {
    pub const MEASURES: [&'static str; 4] = ["TST", "WASO", "LatREM", "SE"];

    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.tst, self.waso, self.rem_latency, self.sleep_efficiency]
    }
}

fn rel(pred: f64, truth: f64) -> Option<f64> {
    (truth != 0.0).then(|| 100.0 * (pred - truth).abs() / truth)
}

pub fn relative_errors(pred: &ClinicalMeasures, truth: &ClinicalMeasures) -> RelativeErrors {
    RelativeErrors {
        tst: rel(pred.tst, truth.tst),
        waso: rel(pred.waso, truth.waso),
        rem_latency: match (pred.rem_latency, truth.rem_latency) {
            (Some(p), Some(t)) => rel(p, t),
            _ => None,
        },
        sleep_efficiency: rel(pred.sleep_efficiency, truth.sleep_efficiency),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

/// Two-sided paired t-test on `a - b`. Pairs with a missing value on either
/// side are dropped. Zero-variance differences give `t = 0, p = 1` when the
/// mean difference is 0 and `t = ±inf, p = 0` otherwise.
pub fn paired_t_test(a: &[Option<f64>], b: &[Option<f64>]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(ClinicalError::LengthMismatch(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some((*x)? - (*y)?))
        .collect();
    let n = diffs.len();
    if n < 2 {
        return Err(ClinicalError::TooFewPairs(n));
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult { t: 0.0, p: 1.0, n }
        } else {
            TTestResult {
                t: mean.signum() * f64::INFINITY,
                p: 0.0,
                n,
            }
        });
    }
    let t = mean / (var / nf).sqrt();
    let dist = StudentsT::new(0.0, 1.0, nf - 1.0).expect("valid t distribution");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTestResult { t, p, n })
}

pub fn paired_t_test_values(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    let wrap = |v: &[f64]| v.iter().copied().map(Some).collect::<Vec<_>>();
    paired_t_test(&wrap(a), &wrap(b))
}

/// Mean ± sd of one stager's relative errors for one measure, compared
/// against a reference stager with a paired t-test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrorSummary {
    pub stager: String,
    pub measure: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub reference: String,
    pub t_test: Option<TTestResult>,
    pub significant: Option<bool>,
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (n > 1).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    });
    (Some(mean), sd)
}

/// `errors[r][m]` holds recording `r`, stager `m`.
pub fn summarize_relative_errors(
    names: &[String],
    errors: &[Vec<RelativeErrors>],
    reference: usize,
) -> Vec<RelativeErrorSummary> {
    let mut out = Vec::new();
    for (m, name) in names.iter().enumerate() {
        for (k, measure) in RelativeErrors::MEASURES.iter().enumerate() {
            let column: Vec<Option<f64>> = errors.iter().map(|r| r[m].as_array()[k]).collect();
            let present: Vec<f64> = column.iter().flatten().copied().collect();
            let (mean, sd) = mean_sd(&present);
            let t_test = if m == reference {
                None
            } else {
                let ref_col: Vec<Option<f64>> =
                    errors.iter().map(|r| r[reference].as_array()[k]).collect();
                paired_t_test(&column, &ref_col).ok()
            };
            out.push(RelativeErrorSummary {
                stager: name.clone(),
                measure: (*measure).to_string(),
                n: present.len(),
                mean,
                sd,
                reference: names[reference].clone(),
                significant: t_test.map(|t| t.p < ALPHA),
                t_test,
            });
        }
    }
    out
}
