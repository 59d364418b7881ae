//! Cohort metrics are reductions over recordings: merging per-recording
//! sums must agree with computing on the concatenated epochs, whatever the
//! merge order.

use proptest::prelude::*;
use stagerbench::clinical::{clinical_measures, relative_errors};
use stagerbench::metrics::{ClassAveraging, MetricAccumulator};
use stagerbench::{Hypnogram, ProbRow, ProbSeq};

fn recording() -> impl Strategy<Value = (Vec<usize>, Vec<ProbRow>)> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..5, n),
            prop::collection::vec(prop::array::uniform5(0.01f64..1.0), n),
        )
    })
}

fn accumulate(truth: &[usize], rows: &[ProbRow]) -> MetricAccumulator {
    let probs = ProbSeq::new(rows.to_vec()).unwrap();
    MetricAccumulator::from_probs(&probs, &Hypnogram::from_indices(truth).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn merge_matches_concatenation(recs in prop::collection::vec(recording(), 1..6)) {
        let mut forward = MetricAccumulator::default();
        for (t, r) in &recs {
            forward.merge(&accumulate(t, r));
        }
        let mut backward = MetricAccumulator::default();
        for (t, r) in recs.iter().rev() {
            backward.merge(&accumulate(t, r));
        }
        let all_truth: Vec<usize> = recs.iter().flat_map(|(t, _)| t.iter().copied()).collect();
        let all_rows: Vec<ProbRow> = recs.iter().flat_map(|(_, r)| r.iter().copied()).collect();
        let pooled = accumulate(&all_truth, &all_rows);

        for averaging in [ClassAveraging::PresentClasses, ClassAveraging::AllClasses] {
            let a = forward.finish(averaging).unwrap();
            let b = backward.finish(averaging).unwrap();
            let c = pooled.finish(averaging).unwrap();
            prop_assert_eq!(a.accuracy, c.accuracy);
            prop_assert_eq!(a.kappa, c.kappa);
            prop_assert_eq!(a.mf1, b.mf1);
            prop_assert!((a.nll.unwrap() - c.nll.unwrap()).abs() < 1e-12);
            prop_assert!((a.brier.unwrap() - b.brier.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_scoring_has_no_clinical_error(truth in prop::collection::vec(0usize..5, 1..200)) {
        let h = Hypnogram::from_indices(&truth).unwrap();
        let m = clinical_measures(&h).unwrap();
        let e = relative_errors(&m, &m);
        for v in e.as_array().into_iter().flatten() {
            prop_assert_eq!(v, 0.0);
        }
    }
}
