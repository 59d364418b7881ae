//! Seeded synthetic cohorts: Markov-chain truth hypnograms scored by
//! simulated stagers with known confusion matrices.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use super::config::{EnsembleMode, RunConfig, StagerSource};
use super::{CohortError, Result};
use crate::types::{
    write_text, CohortManifest, Hypnogram, ProbRow, ProbSeq, RecordingEntry, SleepStage, StagerSet,
    NUM_STAGES,
};

pub type StochasticMatrix = [[f64; NUM_STAGES]; NUM_STAGES];

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthStager {
    pub name: String,
    /// Row `t` is the distribution of the predicted stage given truth `t`.
    pub confusion: StochasticMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_recordings: usize,
    pub epochs_per_recording: usize,
    /// Row `s` is the distribution of the next stage given the current one.
    pub transition: StochasticMatrix,
    pub stagers: Vec<SynthStager>,
    /// Extra Dirichlet mass on the predicted stage; larger is sharper.
    pub concentration: f64,
    pub seed: u64,
    /// The first this-many recordings are tagged `validation`, the rest `test`.
    #[serde(default)]
    pub validation_recordings: usize,
}

fn check_stochastic(m: &StochasticMatrix, what: &str) -> Result<()> {
    for (row, r) in m.iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if r.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(CohortError::InvalidStochasticMatrix {
                what: what.to_string(),
                row,
                sum,
            });
        }
    }
    Ok(())
}

/// Stationary-ish night: sticky stages, no direct W→N3 or N1→N3 jumps.
pub const DEFAULT_TRANSITION: StochasticMatrix = [
    [0.90, 0.06, 0.03, 0.00, 0.01],
    [0.05, 0.70, 0.20, 0.00, 0.05],
    [0.02, 0.03, 0.88, 0.05, 0.02],
    [0.01, 0.00, 0.07, 0.92, 0.00],
    [0.02, 0.03, 0.03, 0.00, 0.92],
];

/// Confusion matrix with `accuracy` on the diagonal and the remaining mass
/// spread over the other stages in proportion to `bias(truth, pred)`.
pub fn biased_confusion(accuracy: f64, bias: impl Fn(usize, usize) -> f64) -> StochasticMatrix {
    let mut m = [[0.0; NUM_STAGES]; NUM_STAGES];
    for (t, row) in m.iter_mut().enumerate() {
        let total: f64 = (0..NUM_STAGES).filter(|&p| p != t).map(|p| bias(t, p)).sum();
        for (p, v) in row.iter_mut().enumerate() {
            *v = if p == t {
                accuracy
            } else {
                (1.0 - accuracy) * bias(t, p) / total
            };
        }
    }
    m
}

impl SynthSpec {
    /// Four stagers of differing skill whose mistakes lean in different
    /// directions.
    pub fn demo(n_recordings: usize, epochs_per_recording: usize, seed: u64) -> Self {
        let lean = |target: fn(usize) -> usize| move |t: usize, p: usize| if p == target(t) { 4.0 } else { 1.0 };
        let stagers = vec![
            SynthStager {
                name: "deeper".into(),
                confusion: biased_confusion(0.78, lean(|t| (t + 1) % NUM_STAGES)),
            },
            SynthStager {
                name: "lighter".into(),
                confusion: biased_confusion(0.74, lean(|t| (t + NUM_STAGES - 1) % NUM_STAGES)),
            },
            SynthStager {
                name: "uniform".into(),
                confusion: biased_confusion(0.70, |_, _| 1.0),
            },
            SynthStager {
                name: "n2_prone".into(),
                confusion: biased_confusion(0.76, lean(|t| if t == 2 { 1 } else { 2 })),
            },
        ];
        Self {
            n_recordings,
            epochs_per_recording,
            transition: DEFAULT_TRANSITION,
            stagers,
            concentration: 2.0,
            seed,
            validation_recordings: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_stochastic(&self.transition, "transition")?;
        for s in &self.stagers {
            check_stochastic(&s.confusion, &format!("confusion of `{}`", s.name))?;
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(CohortError::InvalidConcentration(self.concentration));
        }
        if self.n_recordings == 0 || self.epochs_per_recording == 0 {
            return Err(CohortError::EmptySynthSpec("recordings and epochs must be positive".into()));
        }
        if self.stagers.is_empty() {
            return Err(CohortError::EmptySynthSpec("no stagers".into()));
        }
        Ok(())
    }

    pub fn stager_names(&self) -> Vec<String> {
        self.stagers.iter().map(|s| s.name.clone()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SynthCohort {
    pub manifest: CohortManifest,
    pub sets: Vec<StagerSet>,
}

impl SynthCohort {
    pub fn truths(&self) -> impl Iterator<Item = &Hypnogram> {
        self.sets.iter().map(StagerSet::truth)
    }
}

fn sample_index(rng: &mut ChaCha8Rng, row: &[f64; NUM_STAGES]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last
    // stage with nonzero mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(NUM_STAGES - 1)
}

fn sample_row(rng: &mut ChaCha8Rng, peak: usize, concentration: f64) -> ProbRow {
    let flat = Gamma::new(1.0, 1.0).expect("valid gamma");
    let sharp = Gamma::new(1.0 + concentration, 1.0).expect("valid gamma");
    let mut row: ProbRow =
        std::array::from_fn(|k| if k == peak { sharp.sample(rng) } else { flat.sample(rng) }.max(f64::MIN_POSITIVE));
    let top = (0..NUM_STAGES).fold(peak, |best, k| if row[k] > row[best] { k } else { best });
    row.swap(peak, top);
    let sum: f64 = row.iter().sum();
    row.map(|v| v / sum)
}

/// Recording `r` draws from stream `r` of the seeded generator, so each
/// recording depends only on the seed and its index.
pub fn generate_synthetic_cohort(spec: &SynthSpec) -> Result<SynthCohort> {
    spec.validate()?;
    let width = spec.n_recordings.to_string().len().max(3);
    let mut recordings = Vec::with_capacity(spec.n_recordings);
    let mut sets = Vec::with_capacity(spec.n_recordings);
    for r in 0..spec.n_recordings {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(r as u64);
        let id = format!("synth{r:0width$}");

        let mut truth = Vec::with_capacity(spec.epochs_per_recording);
        let mut state = SleepStage::W.index();
        for _ in 0..spec.epochs_per_recording {
            truth.push(state);
            state = sample_index(&mut rng, &spec.transition[state]);
        }
        let outputs = spec
            .stagers
            .iter()
            .map(|s| {
                let rows = truth
                    .iter()
                    .map(|&t| {
                        let pred = sample_index(&mut rng, &s.confusion[t]);
                        sample_row(&mut rng, pred, spec.concentration)
                    })
                    .collect();
                ProbSeq::new(rows)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;

        let age = 5.0 + (rng.random::<f64>() * 50.0).floor() / 10.0;
        let ahi: f64 = (Exp::new(1.0_f64 / 6.0).expect("valid rate").sample(&mut rng) * 10.0).round() / 10.0;
        recordings.push(RecordingEntry {
            id: id.clone(),
            age,
            ahi: Some(ahi),
            subset_tag: if r < spec.validation_recordings { "validation" } else { "test" }.into(),
            hypnogram: PathBuf::from(format!("hypnograms/{id}.csv")),
            edf: None,
        });
        sets.push(StagerSet::new(spec.stager_names(), outputs, Hypnogram::from_indices(&truth)?)?);
    }
    Ok(SynthCohort {
        manifest: CohortManifest { recordings },
        sets,
    })
}

/// Writes the cohort under `dir` as `manifest.json`, `hypnograms/<id>.csv`,
/// `stagers/<name>/<id>.csv` and a ready-to-run `config.json`, whose path
/// is returned.
pub fn write_synthetic_cohort(cohort: &SynthCohort, dir: &Path) -> Result<PathBuf> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CohortError::Io { path, source }
    };
    let names = cohort
        .sets
        .first()
        .map(|s| s.names().to_vec())
        .unwrap_or_default();
    for sub in std::iter::once("hypnograms".to_string()).chain(names.iter().map(|n| format!("stagers/{n}"))) {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(io(&d))?;
    }
    write_text(&dir.join("manifest.json"), &cohort.manifest.to_json())?;
    for (entry, set) in cohort.manifest.recordings.iter().zip(&cohort.sets) {
        set.truth().write(&dir.join(&entry.hypnogram))?;
        for (name, out) in names.iter().zip(set.outputs()) {
            out.write(&dir.join(format!("stagers/{name}/{}.csv", entry.id)))?;
        }
    }
    let config = RunConfig {
        manifest: PathBuf::from("manifest.json"),
        stagers: names
            .iter()
            .map(|n| StagerSource {
                name: n.clone(),
                dir: PathBuf::from(format!("stagers/{n}")),
            })
            .collect(),
        ensemble_mode: EnsembleMode::Avg.label().into(),
        out_dir: PathBuf::from("report"),
        ..RunConfig::default()
    };
    let path = dir.join("config.json");
    write_text(&path, &config.to_json())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricAccumulator;

    fn identity() -> StochasticMatrix {
        std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
    }

    #[test]
    fn identity_stagers_are_perfect() {
        let mut spec = SynthSpec::demo(3, 200, 7);
        for s in &mut spec.stagers {
            s.confusion = identity();
        }
        let c = generate_synthetic_cohort(&spec).unwrap();
        for set in &c.sets {
            for out in set.outputs() {
                assert_eq!(&out.hardened(), set.truth());
            }
        }
    }

    #[test]
    fn uniform_confusion_accuracy_near_fifth() {
        let mut spec = SynthSpec::demo(1, 100_000, 11);
        spec.stagers.truncate(1);
        spec.stagers[0].confusion = [[0.2; NUM_STAGES]; NUM_STAGES];
        let c = generate_synthetic_cohort(&spec).unwrap();
        let set = &c.sets[0];
        let acc = MetricAccumulator::from_probs(&set.outputs()[0], set.truth())
            .unwrap()
            .cm
            .accuracy()
            .unwrap();
        assert!((acc - 0.2).abs() < 0.02, "{acc}");
    }

    #[test]
    fn seeded_and_order_independent() {
        let a = generate_synthetic_cohort(&SynthSpec::demo(4, 50, 3)).unwrap();
        let b = generate_synthetic_cohort(&SynthSpec::demo(4, 50, 3)).unwrap();
        let c = generate_synthetic_cohort(&SynthSpec::demo(2, 50, 3)).unwrap();
        let d = generate_synthetic_cohort(&SynthSpec::demo(4, 50, 4)).unwrap();
        for i in 0..4 {
            assert_eq!(a.sets[i].outputs()[0].to_csv(), b.sets[i].outputs()[0].to_csv());
            assert_ne!(a.sets[i].outputs()[0].to_csv(), d.sets[i].outputs()[0].to_csv());
        }
        for i in 0..2 {
            assert_eq!(a.sets[i].truth(), c.sets[i].truth());
        }
        assert_eq!(a.manifest, b.manifest);
    }

    #[test]
    fn rejects_bad_matrices() {
        let mut spec = SynthSpec::demo(1, 10, 0);
        spec.transition[2][2] += 0.01;
        assert!(matches!(
            generate_synthetic_cohort(&spec),
            Err(CohortError::InvalidStochasticMatrix { row: 2, .. })
        ));
        let mut spec = SynthSpec::demo(1, 10, 0);
        spec.concentration = 0.0;
        assert!(matches!(generate_synthetic_cohort(&spec), Err(CohortError::InvalidConcentration(_))));
    }

    #[test]
    fn demo_rows_are_stochastic() {
        let spec = SynthSpec::demo(1, 1, 0);
        spec.validate().unwrap();
        for s in &spec.stagers {
            let diag: Vec<f64> = (0..NUM_STAGES).map(|i| s.confusion[i][i]).collect();
            assert!(diag.iter().all(|&d| d == diag[0]));
        }
    }
}
