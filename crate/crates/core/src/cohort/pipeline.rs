use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{has_errors, validate_config, EnsembleMode, RunConfig};
use super::report::{self, ClinicalRow};
use super::{CohortError, Result};
use crate::clinical::{clinical_measures, relative_errors, summarize_relative_errors, RelativeErrors};
use crate::edf::EdfFile;
use crate::ensemble::{average_probs, super_learner_apply, super_learner_train, SuperLearnerWeights};
use crate::error_analysis::{classify_errors, ErrorClassification, ErrorShare};
use crate::metrics::{
    default_age_bins, mcnemar, pairwise_kappa, stratified_metrics, MetricAccumulator, MetricReport, RecordingScores,
    StratumReport,
};
use crate::sigprep::preprocess;
use crate::types::{CohortManifest, Hypnogram, ProbSeq, RecordingEntry, SeverityClass, StagerSet};

pub const AVG_ENSEMBLE: &str = "avg_ensemble";
pub const LEARNED_ENSEMBLE: &str = "learned_ensemble";
const TRUTH_LABEL: &str = "truth";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordingFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityEntry {
    pub id: String,
    pub good_seconds: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedReport {
    pub stager: String,
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub n_recordings: usize,
    pub n_processed: usize,
    pub n_skipped: usize,
    pub skipped: Vec<RecordingFailure>,
    pub n_validation: usize,
    pub n_evaluated: usize,
    pub seed: u64,
    pub ensemble_mode: String,
    pub stagers: Vec<String>,
    pub overall: Vec<NamedReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learned_weights: Option<SuperLearnerWeights>,
    pub error_shares: Vec<ErrorShare>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub quality: Vec<QualityEntry>,
}

impl RunSummary {
    pub fn report_of(&self, stager: &str) -> Option<&MetricReport> {
        self.overall.iter().find(|r| r.stager == stager).map(|r| &r.report)
    }
}

/// Summary plus every rendered file of the bundle, in write order.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub summary: RunSummary,
    pub files: Vec<(String, String)>,
}

impl RunReport {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |path: PathBuf| move |source| CohortError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        for (name, text) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(io(path.clone()))?;
        }
        Ok(())
    }
}

struct Loaded {
    entry: RecordingEntry,
    set: StagerSet,
    quality: Option<QualityEntry>,
}

fn load_recording(entry: &RecordingEntry, config: &RunConfig, manifest_dir: &Path) -> Result<Loaded, String> {
    let quality = match &config.prep {
        Some(prep) => {
            let edf = entry.edf.as_ref().ok_or("no EDF listed for preprocessing")?;
            let file = EdfFile::open(&manifest_dir.join(edf)).map_err(|e| e.to_string())?;
            let traces = config
                .channel_aliases
                .iter()
                .map(|aliases| file.signal_by_label(aliases))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let out = preprocess(&traces, prep, &entry.id).map_err(|e| e.to_string())?;
            if !out.quality.passed {
                return Err(format!(
                    "quality gate: {} s of usable signal, {} s required",
                    out.quality.good_seconds, prep.min_good_seconds
                ));
            }
            Some(QualityEntry {
                id: entry.id.clone(),
                good_seconds: out.quality.good_seconds,
                passed: true,
            })
        }
        None => None,
    };
    let truth = Hypnogram::read(&manifest_dir.join(&entry.hypnogram)).map_err(|e| e.to_string())?;
    if truth.is_empty() {
        return Err("empty hypnogram".into());
    }
    let outputs = config
        .stagers
        .iter()
        .map(|s| ProbSeq::read(&s.dir.join(format!("{}.csv", entry.id))).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, String>>()?;
    let set = StagerSet::new(config.stager_names(), outputs, truth).map_err(|e| e.to_string())?;
    Ok(Loaded {
        entry: entry.clone(),
        set,
        quality,
    })
}

/// Everything computed for one evaluated recording.
struct Evaluated {
    accumulators: Vec<MetricAccumulator>,
    hardened: Vec<Hypnogram>,
    clinical: Vec<ClinicalRow>,
    relative: Vec<RelativeErrors>,
    errors: Option<ErrorClassification>,
}

fn evaluate(
    loaded: &Loaded,
    names: &[String],
    outputs: &[ProbSeq],
    error_stagers: usize,
) -> Result<Evaluated> {
    let truth = loaded.set.truth();
    let id = &loaded.entry.id;
    let accumulators = outputs
        .iter()
        .map(|o| MetricAccumulator::from_probs(o, truth))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let hardened: Vec<Hypnogram> = outputs.iter().map(ProbSeq::hardened).collect();

    let truth_measures = clinical_measures(truth)?;
    let mut clinical = vec![ClinicalRow {
        recording: id.clone(),
        stager: TRUTH_LABEL.into(),
        measures: truth_measures,
        errors: None,
    }];
    let mut relative = Vec::with_capacity(names.len());
    for (name, h) in names.iter().zip(&hardened) {
        let measures = clinical_measures(h)?;
        let errors = relative_errors(&measures, &truth_measures);
        relative.push(errors);
        clinical.push(ClinicalRow {
            recording: id.clone(),
            stager: name.clone(),
            measures,
            errors: Some(errors),
        });
    }

    let errors = if error_stagers >= 2 {
        Some(classify_errors(&names[..error_stagers], &hardened[..error_stagers], truth, Some(id))?)
    } else {
        None
    };
    Ok(Evaluated {
        accumulators,
        hardened,
        clinical,
        relative,
        errors,
    })
}

fn ahi_strata(
    config: &RunConfig,
    names: &[String],
    recordings: &[(&Loaded, &Evaluated)],
) -> Result<Vec<StratumReport>> {
    let Some(bins) = &config.strata.ahi_bins else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for bin in bins {
        let members: Vec<_> = recordings
            .iter()
            .filter(|(l, _)| l.entry.ahi.is_some_and(|a| a >= bin.lo && a < bin.hi))
            .collect();
        if members.is_empty() {
            continue;
        }
        for (m, name) in names.iter().enumerate() {
            let mut acc = MetricAccumulator::default();
            for (_, e) in &members {
                acc.merge(&e.accumulators[m]);
            }
            out.push(StratumReport {
                dimension: "ahi".into(),
                stratum: bin.label.clone(),
                stager: name.clone(),
                n_recordings: members.len(),
                report: acc.finish(config.strata.averaging)?,
            });
        }
    }
    Ok(out)
}

/// Loads, ensembles and evaluates every recording of the manifest.
///
/// Recordings that fail to load (missing or malformed files, failed
/// quality gate) are skipped and listed in the summary; the run fails only
/// when none remain. Recordings tagged with the validation tag train the
/// learned ensemble and are evaluated only if nothing else is left.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport> {
    let diagnostics = validate_config(config);
    for d in &diagnostics {
        warn!("{d}");
    }
    if has_errors(&diagnostics) {
        let manifest_empty = CohortManifest::read(&config.manifest).is_ok_and(|m| m.recordings.is_empty());
        if manifest_empty {
            return Err(CohortError::NoRecordings);
        }
        return Err(CohortError::InvalidConfig(diagnostics));
    }
    let mode = config.mode()?;
    let manifest = CohortManifest::read(&config.manifest)?;
    let manifest_dir = config.manifest.parent().unwrap_or(Path::new("."));

    let attempts: Vec<_> = manifest
        .recordings
        .par_iter()
        .map(|entry| load_recording(entry, config, manifest_dir))
        .collect();
    let mut loaded = Vec::new();
    let mut skipped = Vec::new();
    for (entry, attempt) in manifest.recordings.iter().zip(attempts) {
        match attempt {
            Ok(l) => loaded.push(l),
            Err(reason) => {
                warn!("skipping recording `{}`: {reason}", entry.id);
                skipped.push(RecordingFailure {
                    id: entry.id.clone(),
                    reason,
                });
            }
        }
    }
    if loaded.is_empty() {
        return Err(CohortError::NoUsableRecordings(skipped));
    }
    info!("{} of {} recordings loaded", loaded.len(), manifest.recordings.len());
    analyze(config, mode, loaded, skipped, manifest.recordings.len())
}

/// Ensembles and evaluates recordings already in memory; the file paths
/// of `config` are ignored.
pub fn analyze_recordings(config: &RunConfig, recordings: Vec<(RecordingEntry, StagerSet)>) -> Result<RunReport> {
    if recordings.is_empty() {
        return Err(CohortError::NoRecordings);
    }
    let names = recordings[0].1.names();
    if let Some((entry, _)) = recordings.iter().find(|(_, set)| set.names() != names) {
        return Err(CohortError::StagerMismatch(entry.id.clone()));
    }
    let n = recordings.len();
    let loaded = recordings
        .into_iter()
        .map(|(entry, set)| Loaded {
            entry,
            set,
            quality: None,
        })
        .collect();
    analyze(config, config.mode()?, loaded, Vec::new(), n)
}

fn analyze(
    config: &RunConfig,
    mode: EnsembleMode,
    loaded: Vec<Loaded>,
    skipped: Vec<RecordingFailure>,
    n_recordings: usize,
) -> Result<RunReport> {
    let is_validation = |l: &Loaded| l.entry.subset_tag == config.validation_tag;
    let n_validation = loaded.iter().filter(|l| is_validation(l)).count();
    let learned_weights = if mode.learned() {
        let train: Vec<StagerSet> = loaded
            .iter()
            .filter(|l| n_validation == 0 || is_validation(l))
            .map(|l| l.set.clone())
            .collect();
        if n_validation == 0 {
            warn!("no `{}` recordings; training the learned ensemble on all of them", config.validation_tag);
        }
        Some(super_learner_train(&StagerSet::concat(&train)?)?)
    } else {
        None
    };

    let base_names = loaded[0].set.names().to_vec();
    let mut names = base_names.clone();
    if mode.averaging() {
        names.push(AVG_ENSEMBLE.into());
    }
    if mode.learned() {
        names.push(LEARNED_ENSEMBLE.into());
    }
    let error_stagers = if config.include_ensemble_in_errors {
        names.len()
    } else {
        base_names.len()
    };

    let eval_set: Vec<&Loaded> = if n_validation < loaded.len() {
        loaded.iter().filter(|l| !is_validation(l)).collect()
    } else {
        loaded.iter().collect()
    };
    let evaluated = eval_set
        .par_iter()
        .map(|l| {
            let mut outputs = l.set.outputs().to_vec();
            if mode.averaging() {
                outputs.push(average_probs(&l.set)?);
            }
            if let Some(w) = &learned_weights {
                outputs.push(super_learner_apply(w, &l.set)?);
            }
            evaluate(l, &names, &outputs, error_stagers)
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(&Loaded, &Evaluated)> = eval_set.iter().copied().zip(&evaluated).collect();

    let overall = names
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let mut acc = MetricAccumulator::default();
            for e in &evaluated {
                acc.merge(&e.accumulators[m]);
            }
            Ok((name.clone(), acc.finish(config.strata.averaging)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let pooled_truth: Hypnogram = eval_set
        .iter()
        .flat_map(|l| l.set.truth().stages().iter().copied())
        .collect();
    let pooled: Vec<Hypnogram> = (0..names.len())
        .map(|m| {
            evaluated
                .iter()
                .flat_map(|e| e.hardened[m].stages().iter().copied())
                .collect()
        })
        .collect();
    let kappa = pairwise_kappa(&names, &pooled, &pooled_truth, TRUTH_LABEL)?;
    let mut mcnemar_rows = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            mcnemar_rows.push((names[i].clone(), names[j].clone(), mcnemar(&pooled[i], &pooled[j], &pooled_truth)?));
        }
    }

    let clinical_rows: Vec<ClinicalRow> = evaluated.iter().flat_map(|e| e.clinical.iter().cloned()).collect();
    let reference = config
        .reference_stager
        .as_ref()
        .and_then(|r| names.iter().position(|n| n == r))
        .unwrap_or(0);
    let relative: Vec<Vec<RelativeErrors>> = evaluated.iter().map(|e| e.relative.clone()).collect();
    let clinical_summary = summarize_relative_errors(&names, &relative, reference);

    let mut errors = ErrorClassification::default();
    for e in &evaluated {
        if let Some(c) = &e.errors {
            errors.extend(c.clone());
        }
    }
    if error_stagers < 2 {
        warn!("common-error analysis skipped: fewer than two stagers");
    }

    let scores: Vec<RecordingScores<'_>> = pairs
        .iter()
        .map(|(l, e)| {
            Ok(RecordingScores {
                id: &l.entry.id,
                age: l.entry.age,
                severity: l.entry.severity().unwrap_or(SeverityClass::Unknown),
                per_stager: e.accumulators.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let age_bins = match &config.strata.age_bins {
        Some(b) => b.clone(),
        None => default_age_bins(&scores.iter().map(|s| s.age).collect::<Vec<_>>()),
    };
    let mut strata = stratified_metrics(&names, &scores, &age_bins, config.strata.averaging)?;
    strata.extend(ahi_strata(config, &names, &pairs)?);

    let summary = RunSummary {
        n_recordings,
        n_processed: loaded.len(),
        n_skipped: skipped.len(),
        skipped,
        n_validation,
        n_evaluated: eval_set.len(),
        seed: config.seed,
        ensemble_mode: mode.label().into(),
        stagers: names.clone(),
        overall: overall
            .iter()
            .map(|(stager, report)| NamedReport {
                stager: stager.clone(),
                report: report.clone(),
            })
            .collect(),
        learned_weights,
        error_shares: errors.shares.clone(),
        quality: loaded.iter().filter_map(|l| l.quality.clone()).collect(),
    };

    let error_names = &names[..error_stagers];
    let mut files = vec![
        ("summary.json".to_string(), serde_json::to_string_pretty(&summary)? + "\n"),
        ("metrics_overall.csv".into(), report::metrics_overall_csv(&overall)),
        ("metrics_classwise.csv".into(), report::metrics_classwise_csv(&overall)),
        ("kappa_matrix.csv".into(), report::kappa_matrix_csv(&kappa)),
        ("mcnemar.csv".into(), report::mcnemar_csv(&mcnemar_rows)),
        ("clinical.csv".into(), report::clinical_csv(&clinical_rows)),
        ("clinical_summary.csv".into(), report::clinical_summary_csv(&clinical_summary)),
        ("errors_histogram.csv".into(), report::errors_histogram_csv(error_names, &errors.records)),
        ("error_patterns.csv".into(), report::error_patterns_csv(&errors.records)),
        ("error_stages.csv".into(), report::error_stages_csv(error_names, &errors.records)),
        ("errors.ndjson".into(), report::errors_ndjson(&errors.records)),
        ("strata.csv".into(), report::strata_csv(&strata)),
    ];
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(RunReport { summary, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::synth::{generate_synthetic_cohort, write_synthetic_cohort, SynthSpec};
    use crate::types::NUM_STAGES;

    fn fixture(spec: &SynthSpec) -> (tempfile::TempDir, RunConfig) {
        let dir = tempfile::tempdir().unwrap();
        let cohort = generate_synthetic_cohort(spec).unwrap();
        let path = write_synthetic_cohort(&cohort, dir.path()).unwrap();
        (dir, RunConfig::read(&path).unwrap())
    }

    #[test]
    fn identity_stagers_score_perfectly() {
        let mut spec = SynthSpec::demo(1, 120, 5);
        for s in &mut spec.stagers {
            s.confusion = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }));
        }
        let (_dir, config) = fixture(&spec);
        let report = run_pipeline(&config).unwrap();
        for r in &report.summary.overall {
            assert_eq!(r.report.accuracy, 1.0, "{}", r.stager);
        }
        assert_eq!(report.file("errors.ndjson"), Some(""));
    }

    #[test]
    fn missing_file_is_skipped_and_counted() {
        let (_dir, config) = fixture(&SynthSpec::demo(3, 60, 2));
        std::fs::remove_file(config.stagers[0].dir.join("synth001.csv")).unwrap();
        let report = run_pipeline(&config).unwrap();
        assert_eq!(report.summary.n_skipped, 1);
        assert_eq!(report.summary.skipped[0].id, "synth001");
        assert_eq!(report.summary.n_evaluated, 2);
    }

    #[test]
    fn empty_manifest_fails() {
        let (_dir, config) = fixture(&SynthSpec::demo(1, 10, 2));
        std::fs::write(&config.manifest, "[]").unwrap();
        assert!(matches!(run_pipeline(&config), Err(CohortError::NoRecordings)));
    }

    #[test]
    fn nothing_loadable_fails() {
        let (_dir, config) = fixture(&SynthSpec::demo(2, 10, 2));
        for id in ["synth000", "synth001"] {
            std::fs::remove_file(config.stagers[2].dir.join(format!("{id}.csv"))).unwrap();
        }
        match run_pipeline(&config) {
            Err(CohortError::NoUsableRecordings(s)) => assert_eq!(s.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn learned_mode_holds_out_validation() {
        let mut spec = SynthSpec::demo(6, 200, 9);
        spec.validation_recordings = 2;
        let (_dir, mut config) = fixture(&spec);
        config.ensemble_mode = "both".into();
        config.include_ensemble_in_errors = true;
        let report = run_pipeline(&config).unwrap();
        let s = &report.summary;
        assert_eq!((s.n_validation, s.n_evaluated), (2, 4));
        assert_eq!(s.stagers.len(), 6);
        let w = s.learned_weights.as_ref().unwrap();
        assert_eq!(w.w.len(), 4);
        assert_eq!(s.error_shares.len(), 6);
        let classwise = report.file("metrics_classwise.csv").unwrap();
        assert_eq!(classwise.lines().count(), 7);
        assert_eq!(classwise.lines().next().unwrap().split(',').count(), NUM_STAGES + 2);
    }

    #[test]
    fn custom_strata() {
        let (_dir, mut config) = fixture(&SynthSpec::demo(4, 50, 3));
        config.strata.ahi_bins = Some(vec![crate::cohort::AhiBin {
            label: "any".into(),
            lo: 0.0,
            hi: 1e9,
        }]);
        let report = run_pipeline(&config).unwrap();
        let strata = report.file("strata.csv").unwrap();
        assert!(strata.lines().any(|l| l.starts_with("ahi,any,avg_ensemble,4,")), "{strata}");
        assert!(strata.lines().any(|l| l.starts_with("severity,")));
    }
}
