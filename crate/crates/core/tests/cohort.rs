use stagerbench::cohort::{
    analyze_recordings, biased_confusion, generate_synthetic_cohort, run_pipeline, write_synthetic_cohort, RunConfig,
    SynthSpec, SynthStager, AVG_ENSEMBLE,
};
use stagerbench::ensemble::average_probs;
use stagerbench::metrics::MetricAccumulator;
use stagerbench::{StagerSet, NUM_STAGES};

fn accuracy(acc: &MetricAccumulator) -> f64 {
    acc.cm.accuracy().unwrap()
}

/// Conditionally independent stagers sharing one accuracy `p > 0.2` (the
/// chance level over five stages).
#[test]
fn averaging_beats_best_member_on_long_cohorts() {
    for (seed, accuracies) in [(1u64, vec![0.25; 3]), (2, vec![0.4; 4]), (3, vec![0.6; 3]), (4, vec![0.85; 5])] {
        let mut spec = SynthSpec::demo(10, 10_000, seed);
        spec.stagers = accuracies
            .iter()
            .enumerate()
            .map(|(i, &a)| SynthStager {
                name: format!("p{i}"),
                confusion: biased_confusion(a, |_, _| 1.0),
            })
            .collect();
        let cohort = generate_synthetic_cohort(&spec).unwrap();
        let pooled = StagerSet::concat(&cohort.sets).unwrap();
        assert!(pooled.num_epochs() >= 100_000);
        let best = pooled
            .outputs()
            .iter()
            .map(|o| accuracy(&MetricAccumulator::from_probs(o, pooled.truth()).unwrap()))
            .fold(0.0, f64::max);
        let ens = accuracy(&MetricAccumulator::from_probs(&average_probs(&pooled).unwrap(), pooled.truth()).unwrap());
        assert!(ens >= best - 0.01, "seed {seed}: ensemble {ens} vs best {best}");
    }
}

/// Unequal members are a different matter: weak stagers outvote a strong
/// one under plain averaging.
#[test]
fn averaging_can_trail_a_dominant_member() {
    let mut spec = SynthSpec::demo(10, 10_000, 5);
    spec.stagers = [0.3, 0.5, 0.7]
        .iter()
        .enumerate()
        .map(|(i, &a)| SynthStager {
            name: format!("p{i}"),
            confusion: biased_confusion(a, |_, _| 1.0),
        })
        .collect();
    let pooled = StagerSet::concat(&generate_synthetic_cohort(&spec).unwrap().sets).unwrap();
    let strongest = accuracy(&MetricAccumulator::from_probs(&pooled.outputs()[2], pooled.truth()).unwrap());
    let ens = accuracy(&MetricAccumulator::from_probs(&average_probs(&pooled).unwrap(), pooled.truth()).unwrap());
    assert!(ens < strongest);
}

#[test]
fn per_stager_accuracy_tracks_confusion_diagonal() {
    let mut spec = SynthSpec::demo(4, 25_000, 8);
    spec.stagers = vec![SynthStager {
        name: "p".into(),
        confusion: biased_confusion(0.65, |t, p| (t + p + 1) as f64),
    }];
    let cohort = generate_synthetic_cohort(&spec).unwrap();
    let pooled = StagerSet::concat(&cohort.sets).unwrap();
    let acc = accuracy(&MetricAccumulator::from_probs(&pooled.outputs()[0], pooled.truth()).unwrap());
    assert!((acc - 0.65).abs() < 0.01, "{acc}");
}

#[test]
fn truth_follows_the_transition_matrix() {
    let spec = SynthSpec::demo(1, 200_000, 12);
    let cohort = generate_synthetic_cohort(&spec).unwrap();
    let stages = cohort.sets[0].truth().stages();
    assert_eq!(stages[0].index(), 0);
    let mut counts = [[0u64; NUM_STAGES]; NUM_STAGES];
    for w in stages.windows(2) {
        counts[w[0].index()][w[1].index()] += 1;
    }
    for (s, row) in counts.iter().enumerate() {
        let n: u64 = row.iter().sum();
        for (t, &c) in row.iter().enumerate() {
            let p = spec.transition[s][t];
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() <= 5.0 * se + 1e-12, "{s}->{t}");
        }
    }
}

#[test]
fn bundle_is_reproducible_on_disk_and_in_memory() {
    let spec = SynthSpec::demo(8, 300, 77);
    let dir = tempfile::tempdir().unwrap();
    let cohort = generate_synthetic_cohort(&spec).unwrap();
    let config = RunConfig::read(&write_synthetic_cohort(&cohort, dir.path()).unwrap()).unwrap();
    let a = run_pipeline(&config).unwrap();
    let b = run_pipeline(&config).unwrap();
    assert_eq!(a.files, b.files);

    let in_memory = analyze_recordings(
        &config,
        cohort
            .manifest
            .recordings
            .iter()
            .cloned()
            .zip(cohort.sets.iter().cloned())
            .collect(),
    )
    .unwrap();
    assert_eq!(in_memory.file("metrics_overall.csv"), a.file("metrics_overall.csv"));
    assert_eq!(in_memory.file("errors.ndjson"), a.file("errors.ndjson"));

    let out = dir.path().join("bundle");
    a.write(&out).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_recordings"], 8);
    assert_eq!(summary["n_skipped"], 0);
    assert!(summary["overall"].as_array().unwrap().iter().any(|r| r["stager"] == AVG_ENSEMBLE));
    let text = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(!text.contains(dir.path().to_str().unwrap()), "paths leak into the summary");
}
