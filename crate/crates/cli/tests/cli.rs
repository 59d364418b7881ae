use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chrono::{NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagerbench::edf::{write_edf, EdfHeader, EdfSignalSpec};

fn stagerbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagerbench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = stagerbench(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, recordings: &str) -> std::path::PathBuf {
    let cohort = dir.join("cohort");
    ok(&["synth", "--recordings", recordings, "--epochs", "240", "--seed", "3", "--out", s(&cohort)]);
    cohort
}

#[test]
fn ensemble_avg_and_learned() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = synth(dir.path(), "2");
    let input = |name: &str| format!("{name}={}", s(&cohort.join(format!("stagers/{name}/synth000.csv"))));
    let (a, b) = (input("deeper"), input("lighter"));
    let avg = dir.path().join("avg.csv");
    ok(&["ensemble", "--mode", "avg", "--input", &a, "--input", &b, "--out", s(&avg)]);
    let text = fs::read_to_string(&avg).unwrap();
    assert_eq!(text.lines().count(), 240);

    let weights = dir.path().join("w.json");
    let learned = dir.path().join("learned.csv");
    let truth = cohort.join("hypnograms/synth000.csv");
    ok(&[
        "ensemble", "--mode", "learned", "--input", &a, "--input", &b, "--truth", s(&truth), "--weights",
        s(&weights), "--out", s(&learned),
    ]);
    let w: serde_json::Value = serde_json::from_str(&fs::read_to_string(&weights).unwrap()).unwrap();
    assert_eq!(w["names"], serde_json::json!(["deeper", "lighter"]));
    assert_eq!(w["w"].as_array().unwrap().len(), 2);

    let reapplied = dir.path().join("again.csv");
    ok(&["ensemble", "--mode", "learned", "--input", &a, "--input", &b, "--weights", s(&weights), "--out", s(&reapplied)]);
    assert_eq!(fs::read(&learned).unwrap(), fs::read(&reapplied).unwrap());

    let swapped = stagerbench(&["ensemble", "--mode", "learned", "--input", &b, "--input", &a, "--weights", s(&weights), "--out", s(&reapplied)]);
    assert!(!swapped.status.success());
}

#[test]
fn single_recording_analyses() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = synth(dir.path(), "1");
    let truth = cohort.join("hypnograms/synth000.csv");
    let mut args = vec!["--truth".to_string(), s(&truth).to_string()];
    for name in ["deeper", "lighter", "uniform"] {
        args.push("--input".into());
        args.push(format!("{name}={}", s(&cohort.join(format!("stagers/{name}/synth000.csv")))));
    }
    let run = |cmd: &str, out: &Path, extra: &[&str]| {
        let mut a: Vec<&str> = vec![cmd];
        a.extend(args.iter().map(String::as_str));
        a.extend(extra);
        a.extend(["--out", s(out)]);
        ok(&a);
    };

    let eval = dir.path().join("eval");
    run("eval", &eval, &["--with-ensemble", "--averaging", "all"]);
    let overall = fs::read_to_string(eval.join("metrics_overall.csv")).unwrap();
    assert_eq!(overall.lines().count(), 5);
    assert!(overall.contains("avg_ensemble,240,"));
    let reports: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 4);
    assert_eq!(fs::read_to_string(eval.join("kappa_matrix.csv")).unwrap().lines().count(), 6);
    assert_eq!(fs::read_to_string(eval.join("mcnemar.csv")).unwrap().lines().count(), 7);

    let clinical = dir.path().join("clinical");
    run("clinical", &clinical, &["--reference", "lighter"]);
    let rows = fs::read_to_string(clinical.join("clinical.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5);
    assert!(rows.lines().nth(1).unwrap().starts_with("synth000,truth,"));
    let summary = fs::read_to_string(clinical.join("clinical_summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.contains(",lighter,")));

    let errors = dir.path().join("errors");
    run("errors", &errors, &[]);
    let ndjson = fs::read_to_string(errors.join("errors.ndjson")).unwrap();
    let first: serde_json::Value = serde_json::from_str(ndjson.lines().next().unwrap()).unwrap();
    assert_eq!(first["predictions"].as_array().unwrap().len(), 3);
    let hist = fs::read_to_string(errors.join("errors_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 3 * 3 * 11);
    assert!(errors.join("error_patterns.csv").is_file());
}

#[test]
fn cohort_analyses_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = synth(dir.path(), "3");
    let config = cohort.join("config.json");
    let out = dir.path().join("clin");
    ok(&["clinical", "--config", s(&config), "--out", s(&out)]);
    let rows = fs::read_to_string(out.join("clinical.csv")).unwrap();
    // 3 recordings × (truth + 4 stagers + averaging ensemble)
    assert_eq!(rows.lines().count(), 1 + 3 * 6);
}

#[test]
fn validate_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = synth(dir.path(), "2");
    let config = cohort.join("config.json");
    let clean = ok(&["validate", "--config", s(&config)]);
    assert!(clean.stdout.is_empty());

    let mut value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&config).unwrap()).unwrap();
    value["ensemble_mode"] = "median".into();
    fs::write(&config, value.to_string()).unwrap();
    let bad = stagerbench(&["validate", "--config", s(&config)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stdout).contains("ensemble_mode"));
    assert!(!stagerbench(&["run", "--config", s(&config)]).status.success());
}

#[test]
fn run_skips_broken_recordings() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = synth(dir.path(), "3");
    fs::write(cohort.join("stagers/uniform/synth002.csv"), "not,a,probability,row\n").unwrap();
    let out = dir.path().join("report");
    ok(&["run", "--config", s(&cohort.join("config.json")), "--out", s(&out), "--seed", "9"]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_skipped"], 1);
    assert_eq!(summary["skipped"][0]["id"], "synth002");
    assert_eq!(summary["seed"], 9);
}

#[test]
fn prep_writes_epochs_and_quality() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rate = 256usize;
    let n_records = 600;
    let eeg: Vec<f64> = (0..rate * n_records)
        .map(|i| 40.0 * (i as f64 * 0.1).sin() + rng.random_range(-20.0..20.0))
        .collect();
    let spec = EdfSignalSpec {
        label: "EEG C4-M1".into(),
        transducer: "AgAgCl".into(),
        physical_dimension: "uV".into(),
        physical_min: -200.0,
        physical_max: 200.0,
        digital_min: -32768,
        digital_max: 32767,
        prefiltering: String::new(),
        samples_per_record: rate,
        reserved: String::new(),
    };
    let header = EdfHeader {
        version: "0".into(),
        patient_id: "X".into(),
        recording_id: "Startdate X".into(),
        start_date: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
        start_time: NaiveTime::from_hms_opt(22, 0, 0).unwrap(),
        header_bytes: 512,
        n_records,
        record_duration: 1.0,
        n_signals: 1,
        reserved: String::new(),
    };
    let edf = dir.path().join("night.edf");
    fs::write(&edf, write_edf(&header, &[spec], &[eeg]).unwrap()).unwrap();
    let out = dir.path().join("prep");
    ok(&[
        "prep", "--edf", s(&edf), "--channel", "C4-A1, eeg c4-m1", "--min-good-seconds", "300", "--out", s(&out),
    ]);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("night.json")).unwrap()).unwrap();
    assert_eq!(sidecar["n_epochs"], 20);
    assert_eq!(fs::metadata(out.join("night.f32le")).unwrap().len(), 20 * 3000 * 4);
    let quality: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("night.quality.json")).unwrap()).unwrap();
    assert_eq!(quality["passed"], true);

    let missing = stagerbench(&["prep", "--edf", s(&edf), "--channel", "EOG", "--out", s(&out)]);
    assert!(!missing.status.success());
}
