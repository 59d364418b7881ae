//! Text renderings of the evaluation tables. Every writer is a pure function
//! of its inputs, so identical inputs give byte-identical files.

use serde::Serialize;

use crate::clinical::{ClinicalMeasures, RelativeErrorSummary, RelativeErrors};
use crate::error_analysis::{
    distance_histogram, error_stage_distribution, pattern_counts, ErrorKind, ErrorRecord, HISTOGRAM_BUCKETS,
};
use crate::metrics::{KappaMatrix, McNemarResult, MetricReport, StratumReport};

fn table<R, I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const STAGE_COLUMNS: [&str; 5] = ["W", "N1", "N2", "N3", "REM"];

/// One row per stager: pooled accuracy, kappa, MF1, sensitivity,
/// specificity and the probability losses.
pub fn metrics_overall_csv(rows: &[(String, MetricReport)]) -> String {
    table(
        &["stager", "n_epochs", "accuracy", "kappa", "mf1", "sensitivity", "specificity", "nll", "brier"],
        rows.iter().map(|(name, r)| {
            vec![
                name.clone(),
                r.n_epochs.to_string(),
                r.accuracy.to_string(),
                r.kappa.to_string(),
                r.mf1.to_string(),
                r.sensitivity.to_string(),
                r.specificity.to_string(),
                fmt_opt(r.nll),
                fmt_opt(r.brier),
            ]
        }),
    )
}

/// Per-stage F1 per stager; blank where a stage was left out of the average.
pub fn metrics_classwise_csv(rows: &[(String, MetricReport)]) -> String {
    let mut header = vec!["stager"];
    header.extend(STAGE_COLUMNS);
    header.push("mf1");
    table(
        &header,
        rows.iter().map(|(name, r)| {
            std::iter::once(name.clone())
                .chain(r.per_class_f1.iter().map(|f| fmt_opt(*f)))
                .chain(std::iter::once(r.mf1.to_string()))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn kappa_matrix_csv(k: &KappaMatrix) -> String {
    let mut header = vec![""];
    header.extend(k.labels.iter().map(String::as_str));
    table(
        &header,
        k.labels.iter().zip(&k.values).map(|(label, row)| {
            std::iter::once(label.clone())
                .chain(row.iter().map(f64::to_string))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn mcnemar_csv(rows: &[(String, String, McNemarResult)]) -> String {
    table(
        &["stager_a", "stager_b", "a_right_b_wrong", "a_wrong_b_right", "chi2", "p_value", "exact_p_value"],
        rows.iter().map(|(a, b, r)| {
            vec![
                a.clone(),
                b.clone(),
                r.b.to_string(),
                r.c.to_string(),
                r.statistic.to_string(),
                r.p_value.to_string(),
                fmt_opt(r.exact_p_value),
            ]
        }),
    )
}

/// Clinical measures of one hypnogram; `errors` is absent for the scored
/// truth itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClinicalRow {
    pub recording: String,
    pub stager: String,
    pub measures: ClinicalMeasures,
    pub errors: Option<RelativeErrors>,
}

pub fn clinical_csv(rows: &[ClinicalRow]) -> String {
    table(
        &[
            "recording",
            "stager",
            "tst_min",
            "waso_min",
            "rem_latency_min",
            "sleep_efficiency_pct",
            "tst_rel_err",
            "waso_rel_err",
            "rem_latency_rel_err",
            "sleep_efficiency_rel_err",
        ],
        rows.iter().map(|r| {
            let m = &r.measures;
            let e = r.errors.map(|e| e.as_array()).unwrap_or([None; 4]);
            [
                r.recording.clone(),
                r.stager.clone(),
                m.tst.to_string(),
                m.waso.to_string(),
                fmt_opt(m.rem_latency),
                m.sleep_efficiency.to_string(),
            ]
            .into_iter()
            .chain(e.map(fmt_opt))
            .collect::<Vec<_>>()
        }),
    )
}

pub fn clinical_summary_csv(rows: &[RelativeErrorSummary]) -> String {
    table(
        &["stager", "measure", "n", "mean_rel_err", "sd_rel_err", "reference", "t", "p", "significant"],
        rows.iter().map(|s| {
            vec![
                s.stager.clone(),
                s.measure.clone(),
                s.n.to_string(),
                fmt_opt(s.mean),
                fmt_opt(s.sd),
                s.reference.clone(),
                fmt_opt(s.t_test.map(|t| t.t)),
                fmt_opt(s.t_test.map(|t| t.p)),
                s.significant.map(|b| b.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

const KINDS: [ErrorKind; 3] = [ErrorKind::All, ErrorKind::Common, ErrorKind::Other];

/// Long format: one row per stager, error kind and distance bucket.
pub fn errors_histogram_csv(names: &[String], records: &[ErrorRecord]) -> String {
    let mut rows = Vec::new();
    for (m, name) in names.iter().enumerate() {
        for kind in KINDS {
            let counts = distance_histogram(records, m, kind);
            for (bucket, count) in HISTOGRAM_BUCKETS.iter().zip(counts) {
                rows.push(vec![name.clone(), kind.label().into(), (*bucket).into(), count.to_string()]);
            }
        }
    }
    table(&["stager", "kind", "distance", "count"], rows)
}

pub fn error_patterns_csv(records: &[ErrorRecord]) -> String {
    let mut rows = Vec::new();
    for kind in KINDS {
        for ((prev, own, next), count) in pattern_counts(records, kind) {
            rows.push(vec![
                kind.label().into(),
                prev.to_string(),
                own.to_string(),
                next.to_string(),
                count.to_string(),
            ]);
        }
    }
    table(&["kind", "previous", "stage", "next", "count"], rows)
}

/// Share of each stager's errors falling in each true stage.
pub fn error_stages_csv(names: &[String], records: &[ErrorRecord]) -> String {
    let mut header = vec!["stager", "kind"];
    header.extend(STAGE_COLUMNS);
    let mut rows = Vec::new();
    for kind in KINDS {
        for (name, dist) in names.iter().zip(error_stage_distribution(records, names.len(), kind)) {
            let mut row = vec![name.clone(), kind.label().into()];
            row.extend(dist.iter().map(f64::to_string));
            rows.push(row);
        }
    }
    table(&header, rows)
}

pub fn errors_ndjson(records: &[ErrorRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn strata_csv(rows: &[StratumReport]) -> String {
    table(
        &["dimension", "stratum", "stager", "n_recordings", "n_epochs", "accuracy", "kappa", "mf1", "nll", "brier"],
        rows.iter().map(|s| {
            let r = &s.report;
            vec![
                s.dimension.clone(),
                s.stratum.clone(),
                s.stager.clone(),
                s.n_recordings.to_string(),
                r.n_epochs.to_string(),
                r.accuracy.to_string(),
                r.kappa.to_string(),
                r.mf1.to_string(),
                fmt_opt(r.nll),
                fmt_opt(r.brier),
            ]
        }),
    )
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mcnemar_from_counts;

    #[test]
    fn quotes_awkward_names() {
        let text = mcnemar_csv(&[("a,b".into(), "c".into(), mcnemar_from_counts(10, 2))]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "stager_a,stager_b,a_right_b_wrong,a_wrong_b_right,chi2,p_value,exact_p_value"
        );
        assert!(lines.next().unwrap().starts_with("\"a,b\",c,10,2,4.08"));
    }

    #[test]
    fn kappa_header_has_blank_corner() {
        let k = KappaMatrix {
            labels: vec!["x".into(), "truth".into()],
            values: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
        };
        assert_eq!(kappa_matrix_csv(&k), ",x,truth\nx,1,0.5\ntruth,0.5,1\n");
    }
}
