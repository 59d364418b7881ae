//! Staging performance (accuracy, Cohen's kappa, macro F1, sensitivity,
//! specificity), predictive uncertainty (NLL, Brier score), McNemar's test,
//! pairwise agreement and stratified reporting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};
use thiserror::Error;

use crate::types::{Hypnogram, ProbSeq, SeverityClass, NUM_STAGES};

/// Floor applied to predicted probabilities inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Below this many discordant pairs McNemar also reports the exact binomial p.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("kappa undefined: chance agreement is 1 but observed agreement is {0}")]
    DegenerateKappa(f64),
    #[error("no epochs to score")]
    Empty,
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Rows are truth, columns are prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_STAGES]; NUM_STAGES],
    pub total: u64,
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        self.total += other.total;
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_STAGES).map(|i| self.counts[i][i]).sum()
    }

    pub fn truth_count(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn pred_count(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(MetricsError::Empty);
        }
        Ok(self.trace() as f64 / self.total as f64)
    }

    /// `(p_o - p_e) / (1 - p_e)` with chance agreement from the marginals.
    pub fn kappa(&self) -> Result<f64> {
        let n = self.total as f64;
        let p_o = self.accuracy()?;
        let p_e: f64 = (0..NUM_STAGES)
            .map(|c| (self.truth_count(c) as f64 / n) * (self.pred_count(c) as f64 / n))
            .sum();
        if p_e >= 1.0 {
            return if p_o >= 1.0 {
                Ok(1.0)
            } else {
                Err(MetricsError::DegenerateKappa(p_o))
            };
        }
        Ok((p_o - p_e) / (1.0 - p_e))
    }

    fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[c][c];
        let fn_ = self.truth_count(c) - tp;
        let fp = self.pred_count(c) - tp;
        let tn = self.total - tp - fn_ - fp;
        (tp, fp, fn_, tn)
    }
}

pub fn confusion(pred: &Hypnogram, truth: &Hypnogram) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, t) in pred.stages().iter().zip(truth.stages()) {
        cm.add(t.index(), p.index());
    }
    Ok(cm)
}

/// Which classes enter the macro averages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassAveraging {
    /// Only classes occurring in truth or prediction; per-class ratios with
    /// an empty denominator are left out of the average.
    #[default]
    PresentClasses,
    /// All five classes; undefined ratios count as 0.
    AllClasses,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_epochs: u64,
    pub accuracy: f64,
    pub kappa: f64,
    pub mf1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Per-stage F1; `None` for stages left out under [`ClassAveraging::PresentClasses`].
    pub per_class_f1: [Option<f64>; NUM_STAGES],
    pub nll: Option<f64>,
    pub brier: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn ratio(num: u64, den: u64, averaging: ClassAveraging) -> Option<f64> {
    match (den, averaging) {
        (0, ClassAveraging::PresentClasses) => None,
        (0, ClassAveraging::AllClasses) => Some(0.0),
        _ => Some(num as f64 / den as f64),
    }
}

/// Sums needed for every pooled metric; merge across recordings, then finish.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricAccumulator {
    pub cm: ConfusionMatrix,
    pub nll_sum: f64,
    pub brier_sum: f64,
    pub prob_epochs: u64,
}

impl MetricAccumulator {
    pub fn from_hypnograms(pred: &Hypnogram, truth: &Hypnogram) -> Result<Self> {
        Ok(Self {
            cm: confusion(pred, truth)?,
            ..Self::default()
        })
    }

    pub fn from_probs(probs: &ProbSeq, truth: &Hypnogram) -> Result<Self> {
        let mut acc = Self::from_hypnograms(&probs.hardened(), truth)?;
        for (row, t) in probs.rows().iter().zip(truth.stages()) {
            acc.nll_sum += -row[t.index()].max(PROB_FLOOR).ln();
            acc.brier_sum += row
                .iter()
                .enumerate()
                .map(|(c, p)| {
                    let y = if c == t.index() { 1.0 } else { 0.0 };
                    (y - p).powi(2)
                })
                .sum::<f64>()
                / NUM_STAGES as f64;
        }
        acc.prob_epochs = probs.len() as u64;
        Ok(acc)
    }

    pub fn merge(&mut self, other: &MetricAccumulator) {
        self.cm.merge(&other.cm);
        self.nll_sum += other.nll_sum;
        self.brier_sum += other.brier_sum;
        self.prob_epochs += other.prob_epochs;
    }

    pub fn finish(&self, averaging: ClassAveraging) -> Result<MetricReport> {
        let cm = &self.cm;
        let accuracy = cm.accuracy()?;
        let kappa = cm.kappa()?;
        let mut per_class_f1 = [None; NUM_STAGES];
        let mut sens = Vec::new();
        let mut spec = Vec::new();
        for (c, f1_slot) in per_class_f1.iter_mut().enumerate() {
            let (tp, fp, fn_, tn) = cm.one_vs_rest(c);
            let present = tp + fp + fn_ > 0;
            if averaging == ClassAveraging::PresentClasses && !present {
                continue;
            }
            *f1_slot = ratio(2 * tp, 2 * tp + fp + fn_, averaging);
            sens.extend(ratio(tp, tp + fn_, averaging));
            spec.extend(ratio(tn, tn + fp, averaging));
        }
        let f1s: Vec<f64> = per_class_f1.iter().flatten().copied().collect();
        let (nll, brier) = if self.prob_epochs > 0 {
            let n = self.prob_epochs as f64;
            (Some(self.nll_sum / n), Some(self.brier_sum / n))
        } else {
            (None, None)
        };
        Ok(MetricReport {
            n_epochs: cm.total,
            accuracy,
            kappa,
            mf1: mean(&f1s),
            sensitivity: mean(&sens),
            specificity: mean(&spec),
            per_class_f1,
            nll,
            brier,
        })
    }
}

/// Mean over epochs of `-log ŷ_truth`, ŷ floored at [`PROB_FLOOR`].
pub fn nll(probs: &ProbSeq, truth: &Hypnogram) -> Result<f64> {
    let acc = MetricAccumulator::from_probs(probs, truth)?;
    if acc.prob_epochs == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(acc.nll_sum / acc.prob_epochs as f64)
}

/// Mean over epochs of `(1/C) Σ_c (y_c - ŷ_c)²`.
pub fn brier(probs: &ProbSeq, truth: &Hypnogram) -> Result<f64> {
    let acc = MetricAccumulator::from_probs(probs, truth)?;
    if acc.prob_epochs == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(acc.brier_sum / acc.prob_epochs as f64)
}

/// Full report for one stager. `probs` adds NLL and Brier score; when given,
/// it must be the stager whose hardened output produced `cm`.
pub fn overall_metrics(cm: &ConfusionMatrix, probs: Option<&ProbSeq>, truth: &Hypnogram) -> Result<MetricReport> {
    overall_metrics_with(cm, probs, truth, ClassAveraging::default())
}

pub fn overall_metrics_with(
    cm: &ConfusionMatrix,
    probs: Option<&ProbSeq>,
    truth: &Hypnogram,
    averaging: ClassAveraging,
) -> Result<MetricReport> {
    let mut acc = match probs {
        Some(p) => MetricAccumulator::from_probs(p, truth)?,
        None => MetricAccumulator::default(),
    };
    acc.cm = *cm;
    acc.finish(averaging)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Epochs where A is right and B is wrong.
    pub b: u64,
    /// Epochs where A is wrong and B is right.
    pub c: u64,
    /// Continuity-corrected chi-square statistic.
    pub statistic: f64,
    /// Upper tail of chi-square with one degree of freedom.
    pub p_value: f64,
    /// Two-sided exact binomial p, reported when `b + c` is small.
    pub exact_p_value: Option<f64>,
}

pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemarResult {
    let n = b + c;
    if n == 0 {
        return McNemarResult {
            b,
            c,
            statistic: 0.0,
            p_value: 1.0,
            exact_p_value: Some(1.0),
        };
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let statistic = diff * diff / n as f64;
    let p_value = ChiSquared::new(1.0).expect("valid dof").sf(statistic);
    let exact_p_value = (n < MCNEMAR_EXACT_BELOW).then(|| {
        let binom = Binomial::new(0.5, n).expect("valid binomial");
        (2.0 * binom.cdf(b.min(c))).min(1.0)
    });
    McNemarResult {
        b,
        c,
        statistic,
        p_value,
        exact_p_value,
    }
}

pub fn mcnemar(pred_a: &Hypnogram, pred_b: &Hypnogram, truth: &Hypnogram) -> Result<McNemarResult> {
    if pred_a.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred_a.len(), truth.len()));
    }
    if pred_b.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred_b.len(), truth.len()));
    }
    let (mut b, mut c) = (0u64, 0u64);
    for ((a, p), t) in pred_a.stages().iter().zip(pred_b.stages()).zip(truth.stages()) {
        match (a == t, p == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

/// Symmetric agreement matrix over labelled hypnograms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl KappaMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

/// Kappa for every pair of stagers and each stager against the truth.
/// The truth is the last row/column, labelled `truth_label`.
pub fn pairwise_kappa(
    names: &[String],
    stagers: &[Hypnogram],
    truth: &Hypnogram,
    truth_label: &str,
) -> Result<KappaMatrix> {
    let mut all: Vec<&Hypnogram> = stagers.iter().collect();
    all.push(truth);
    let mut labels = names.to_vec();
    labels.push(truth_label.to_string());
    for h in &all {
        if h.len() != truth.len() {
            return Err(MetricsError::LengthMismatch(h.len(), truth.len()));
        }
    }
    let k = all.len();
    let mut values = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = confusion(all[i], all[j])?.kappa()?;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(KappaMatrix { labels, values })
}

/// Per-recording inputs to stratified reporting.
#[derive(Clone, Debug)]
pub struct RecordingScores<'a> {
    pub id: &'a str,
    pub age: f64,
    pub severity: SeverityClass,
    /// One accumulator per stager, same order as the stager names.
    pub per_stager: Vec<MetricAccumulator>,
}

/// Half-open age interval `[lo, hi)` in years.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeBin {
    pub lo: f64,
    pub hi: f64,
}

impl AgeBin {
    pub fn contains(&self, age: f64) -> bool {
        age >= self.lo && age < self.hi
    }

    pub fn label(&self) -> String {
        format!("[{},{})", self.lo, self.hi)
    }
}

/// One-year integer bins spanning the observed ages.
pub fn default_age_bins(ages: &[f64]) -> Vec<AgeBin> {
    let lo = ages.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Vec::new();
    }
    let (start, end) = (lo.floor() as i64, hi.floor() as i64);
    (start..=end)
        .map(|y| AgeBin {
            lo: y as f64,
            hi: (y + 1) as f64,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    /// `age` or `severity`.
    pub dimension: String,
    pub stratum: String,
    pub stager: String,
    pub n_recordings: usize,
    pub report: MetricReport,
}

/// Pools epochs of the recordings falling into each age bin and each
/// severity class; empty strata are omitted.
pub fn stratified_metrics(
    stager_names: &[String],
    recordings: &[RecordingScores<'_>],
    age_bins: &[AgeBin],
    averaging: ClassAveraging,
) -> Result<Vec<StratumReport>> {
    let mut strata: Vec<(String, String, Vec<&RecordingScores<'_>>)> = Vec::new();
    for bin in age_bins {
        let members: Vec<_> = recordings.iter().filter(|r| bin.contains(r.age)).collect();
        strata.push(("age".into(), bin.label(), members));
    }
    let mut by_severity: BTreeMap<SeverityClass, Vec<&RecordingScores<'_>>> = BTreeMap::new();
    for r in recordings {
        by_severity.entry(r.severity).or_default().push(r);
    }
    for class in SeverityClass::ALL {
        if let Some(members) = by_severity.remove(&class) {
            strata.push(("severity".into(), class.label().into(), members));
        }
    }

    let mut out = Vec::new();
    for (dimension, stratum, members) in strata {
        if members.is_empty() {
            continue;
        }
        for (m, name) in stager_names.iter().enumerate() {
            let mut acc = MetricAccumulator::default();
            for r in &members {
                acc.merge(&r.per_stager[m]);
            }
            if acc.cm.total == 0 {
                continue;
            }
            out.push(StratumReport {
                dimension: dimension.clone(),
                stratum: stratum.clone(),
                stager: name.clone(),
                n_recordings: members.len(),
                report: acc.finish(averaging)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(idx: &[usize]) -> Hypnogram {
        Hypnogram::from_indices(idx).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let t = h(&[0, 1, 2, 3, 4, 0, 1, 2, 3, 4]);
        assert_eq!(confusion(&t, &t).unwrap().trace(), 10);
        let shifted = h(&[1, 2, 3, 4, 0, 1, 2, 3, 4, 0]);
        assert_eq!(confusion(&shifted, &t).unwrap().trace(), 0);
        let empty = confusion(&h(&[]), &h(&[])).unwrap();
        assert_eq!(empty.total, 0);
        assert!(confusion(&h(&[0]), &h(&[])).is_err());
    }

    #[test]
    fn worked_kappa() {
        let pred = h(&[0, 0, 2, 2]);
        let truth = h(&[0, 2, 2, 2]);
        let cm = confusion(&pred, &truth).unwrap();
        let r = overall_metrics(&cm, None, &truth).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert!((r.kappa - 0.5).abs() < 1e-15);
        assert_eq!(r.nll, None);
    }

    #[test]
    fn perfect_predictions() {
        let truth = h(&[0, 1, 2, 3, 4, 2, 2]);
        let probs = ProbSeq::one_hot(&truth);
        let cm = confusion(&probs.hardened(), &truth).unwrap();
        let r = overall_metrics(&cm, Some(&probs), &truth).unwrap();
        assert_eq!((r.accuracy, r.kappa, r.mf1), (1.0, 1.0, 1.0));
        assert_eq!((r.sensitivity, r.specificity), (1.0, 1.0));
        assert_eq!(r.nll, Some(0.0));
        assert_eq!(r.brier, Some(0.0));
    }

    #[test]
    fn uniform_predictions() {
        let truth = h(&[0, 1, 2, 3, 4, 2]);
        let probs = ProbSeq::new(vec![[0.2; 5]; 6]).unwrap();
        assert!((nll(&probs, &truth).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert!((brier(&probs, &truth).unwrap() - 0.16).abs() < 1e-12);
    }

    #[test]
    fn single_class_perfect_mf1() {
        let truth = h(&[2; 8]);
        let cm = confusion(&truth, &truth).unwrap();
        let r = overall_metrics(&cm, None, &truth).unwrap();
        assert_eq!(r.mf1, 1.0);
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.per_class_f1[0], None);
        let all = overall_metrics_with(&cm, None, &truth, ClassAveraging::AllClasses).unwrap();
        assert!((all.mf1 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_kappa_only_when_disagreeing() {
        let mut cm = ConfusionMatrix::default();
        cm.add(1, 1);
        assert_eq!(cm.kappa().unwrap(), 1.0);
        assert_eq!(ConfusionMatrix::default().kappa(), Err(MetricsError::Empty));
    }

    #[test]
    fn mcnemar_examples() {
        let r = mcnemar_from_counts(8, 8);
        assert!((r.statistic - 0.0625).abs() < 1e-15);
        assert!(r.p_value > 0.05);
        assert!((r.p_value - 0.802_587_348_634_152_6).abs() < 1e-9);
        let r = mcnemar_from_counts(10, 2);
        assert!((r.statistic - 49.0 / 12.0).abs() < 1e-12);
        assert!((r.p_value - 0.043_308_142_810_792_06).abs() < 1e-9);
        assert!((r.exact_p_value.unwrap() - 0.038_574_218_75).abs() < 1e-12);
        assert_eq!(mcnemar_from_counts(0, 0).p_value, 1.0);
        assert_eq!(mcnemar_from_counts(30, 10).exact_p_value, None);
    }

    #[test]
    fn mcnemar_from_hypnograms() {
        let truth = h(&[0, 1, 2, 3, 4]);
        let a = h(&[0, 1, 2, 0, 0]);
        let b = h(&[0, 0, 0, 3, 0]);
        let r = mcnemar(&a, &b, &truth).unwrap();
        assert_eq!((r.b, r.c), (2, 1));
        let swapped = mcnemar(&b, &a, &truth).unwrap();
        assert_eq!(swapped.p_value, r.p_value);
        assert!(mcnemar(&a, &h(&[0]), &truth).is_err());
    }

    #[test]
    fn pairwise_matrix() {
        let truth = h(&[0, 1, 2, 3, 4, 2]);
        let a = h(&[0, 1, 2, 3, 4, 2]);
        let b = h(&[0, 0, 2, 3, 4, 1]);
        let k = pairwise_kappa(&["a".into(), "b".into()], &[a, b], &truth, "truth").unwrap();
        assert_eq!(k.labels, vec!["a", "b", "truth"]);
        assert_eq!(k.get(0, 2), 1.0);
        assert_eq!(k.get(1, 1), 1.0);
        assert_eq!(k.get(1, 2), k.get(2, 1));
        assert!(k.get(1, 2) < 1.0);
    }

    #[test]
    fn strata() {
        let t1 = h(&[0, 1, 2, 2]);
        let t2 = h(&[2, 3, 4, 4, 0]);
        let acc1 = MetricAccumulator::from_probs(&ProbSeq::one_hot(&t1), &t1).unwrap();
        let acc2 = MetricAccumulator::from_hypnograms(&h(&[2, 3, 3, 4, 0]), &t2).unwrap();
        let recs = vec![
            RecordingScores { id: "a", age: 5.5, severity: SeverityClass::Mild, per_stager: vec![acc1] },
            RecordingScores { id: "b", age: 7.2, severity: SeverityClass::Mild, per_stager: vec![acc2] },
        ];
        let bins = default_age_bins(&[5.5, 7.2]);
        assert_eq!(bins.len(), 3);
        let out = stratified_metrics(&["s".into()], &recs, &bins, ClassAveraging::PresentClasses).unwrap();
        // age bins [5,6) and [7,8) populated, [6,7) omitted; one severity stratum.
        assert_eq!(out.len(), 3);
        let sev = out.iter().find(|r| r.dimension == "severity").unwrap();
        assert_eq!(sev.report.n_epochs, 9);
        let age_total: u64 = out.iter().filter(|r| r.dimension == "age").map(|r| r.report.n_epochs).sum();
        assert_eq!(age_total, 9);

        let mut pooled = acc1;
        pooled.merge(&acc2);
        let whole = stratified_metrics(&["s".into()], &recs, &[AgeBin { lo: 0.0, hi: 100.0 }], ClassAveraging::PresentClasses).unwrap();
        assert_eq!(whole[0].report, pooled.finish(ClassAveraging::PresentClasses).unwrap());
    }

    fn stage_vec() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..5, 1..150)
    }

    proptest! {
        #[test]
        fn kappa_one_iff_identical(truth in stage_vec(), flip in 0usize..150) {
            let t = h(&truth);
            let cm = confusion(&t, &t).unwrap();
            prop_assert_eq!(cm.kappa().unwrap(), 1.0);
            let mut pred = truth.clone();
            let i = flip % pred.len();
            pred[i] = (pred[i] + 1) % 5;
            let k = confusion(&h(&pred), &t).unwrap().kappa().unwrap();
            prop_assert!(k < 1.0);
        }

        #[test]
        fn kappa_invariant_under_relabeling(
            pairs in prop::collection::vec((0usize..5, 0usize..5), 2..150),
            perm in Just([3usize, 0, 4, 1, 2]),
        ) {
            let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let k1 = confusion(&h(&pred), &h(&truth)).unwrap().kappa();
            let tp: Vec<usize> = truth.iter().map(|&i| perm[i]).collect();
            let pp: Vec<usize> = pred.iter().map(|&i| perm[i]).collect();
            let k2 = confusion(&h(&pp), &h(&tp)).unwrap().kappa();
            match (k1, k2) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn metrics_in_range(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..150)) {
            let truth = h(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
            let pred = h(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
            let cm = confusion(&pred, &truth).unwrap();
            if let Ok(r) = overall_metrics(&cm, None, &truth) {
                for v in [r.accuracy, r.mf1, r.sensitivity, r.specificity] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert!((-1.0..=1.0).contains(&r.kappa));
            }
        }
    }
}
