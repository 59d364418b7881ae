//! Combining base stagers: plain probability averaging and a learned
//! super learner with one scalar weight per stager followed by softmax.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ProbRow, ProbSeq, StagerSet, NUM_STAGES};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("stager set is empty")]
    EmptyStagerSet,
    #[error("probability sequences disagree in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("weights have {weights} entries for {stagers} stagers")]
    WeightDimensionMismatch { weights: usize, stagers: usize },
    #[error("validation set has no labelled epochs")]
    NoLabels,
    #[error("weights file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("weights file: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EnsembleError> = std::result::Result<T, E>;

/// Epoch-wise mean of the stagers' probability rows.
pub fn average_seqs(seqs: &[ProbSeq]) -> Result<ProbSeq> {
    let first = seqs.first().ok_or(EnsembleError::EmptyStagerSet)?;
    if let Some(bad) = seqs.iter().find(|s| s.len() != first.len()) {
        return Err(EnsembleError::LengthMismatch(first.len(), bad.len()));
    }
    let m = seqs.len() as f64;
    let rows = (0..first.len())
        .into_par_iter()
        .map(|l| {
            let mut row = [0.0; NUM_STAGES];
            for s in seqs {
                for (acc, p) in row.iter_mut().zip(&s.rows()[l]) {
                    *acc += p;
                }
            }
            row.iter_mut().for_each(|v| *v /= m);
            row
        })
        .collect();
    Ok(ProbSeq::from_rows_unchecked(rows))
}

pub fn average_probs(set: &StagerSet) -> Result<ProbSeq> {
    average_seqs(set.outputs())
}

/// Learned per-stager weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperLearnerWeights {
    pub names: Vec<String>,
    pub w: Vec<f64>,
    /// Full-batch loss at each pass, starting with the initial weights.
    #[serde(skip)]
    pub training_log: Vec<f64>,
}

impl SuperLearnerWeights {
    pub fn new(names: Vec<String>, w: Vec<f64>) -> Self {
        Self {
            names,
            w,
            training_log: Vec::new(),
        }
    }

    /// Equal weights 1/M, which rank stages like the averaging ensemble.
    pub fn uniform(names: Vec<String>) -> Self {
        let m = names.len();
        Self::new(names, vec![1.0 / m as f64; m])
    }

    /// Running minimum of the training log.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.training_log
            .iter()
            .scan(f64::INFINITY, |best, &l| {
                *best = best.min(l);
                Some(*best)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

fn logits(w: &[f64], seqs: &[ProbSeq], epoch: usize) -> ProbRow {
    let mut z = [0.0; NUM_STAGES];
    for (wm, s) in w.iter().zip(seqs) {
        for (zc, p) in z.iter_mut().zip(&s.rows()[epoch]) {
            *zc += wm * p;
        }
    }
    z
}

pub fn softmax(z: &ProbRow) -> ProbRow {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = z.map(|v| (v - max).exp());
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

fn check_dims(w: &[f64], set: &StagerSet) -> Result<()> {
    if w.len() != set.num_stagers() {
        return Err(EnsembleError::WeightDimensionMismatch {
            weights: w.len(),
            stagers: set.num_stagers(),
        });
    }
    Ok(())
}

/// `softmax(Σ_m w_m · P^m)` per epoch.
pub fn super_learner_apply(weights: &SuperLearnerWeights, set: &StagerSet) -> Result<ProbSeq> {
    check_dims(&weights.w, set)?;
    super_learner_apply_seqs(weights, set.outputs())
}

/// [`super_learner_apply`] on bare probability sequences, no truth needed.
pub fn super_learner_apply_seqs(weights: &SuperLearnerWeights, seqs: &[ProbSeq]) -> Result<ProbSeq> {
    if weights.w.len() != seqs.len() {
        return Err(EnsembleError::WeightDimensionMismatch {
            weights: weights.w.len(),
            stagers: seqs.len(),
        });
    }
    let first = seqs.first().ok_or(EnsembleError::EmptyStagerSet)?;
    if let Some(bad) = seqs.iter().find(|s| s.len() != first.len()) {
        return Err(EnsembleError::LengthMismatch(first.len(), bad.len()));
    }
    let rows = (0..first.len())
        .into_par_iter()
        .map(|l| softmax(&logits(&weights.w, seqs, l)))
        .collect();
    Ok(ProbSeq::from_rows_unchecked(rows))
}

/// Mean cross-entropy against the truth labels and its gradient in `w`.
pub fn loss_and_gradient(w: &[f64], set: &StagerSet) -> Result<(f64, Vec<f64>)> {
    check_dims(w, set)?;
    let n = set.num_epochs();
    if n == 0 {
        return Err(EnsembleError::NoLabels);
    }
    let seqs = set.outputs();
    let truth = set.truth().stages();
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (l, stage) in truth.iter().enumerate() {
        let z = logits(w, seqs, l);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let y = stage.index();
        loss += lse - z[y];
        let s = softmax(&z);
        for (g, seq) in grad.iter_mut().zip(seqs) {
            let p = &seq.rows()[l];
            *g += (0..NUM_STAGES)
                .map(|c| (s[c] - if c == y { 1.0 } else { 0.0 }) * p[c])
                .sum::<f64>();
        }
    }
    let n = n as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_passes: usize,
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            max_passes: 100,
            patience: 10,
            min_improvement: 1e-6,
        }
    }
}

pub fn super_learner_train(validation: &StagerSet) -> Result<SuperLearnerWeights> {
    super_learner_train_with(validation, &TrainConfig::default())
}

/// Full-batch gradient descent from `w = 1/M`. Stops after `max_passes`
/// updates or `patience` passes without an improvement larger than
/// `min_improvement`; returns the best weights seen.
pub fn super_learner_train_with(validation: &StagerSet, config: &TrainConfig) -> Result<SuperLearnerWeights> {
    if validation.num_stagers() == 0 {
        return Err(EnsembleError::EmptyStagerSet);
    }
    if validation.num_epochs() == 0 {
        return Err(EnsembleError::NoLabels);
    }
    let mut w = SuperLearnerWeights::uniform(validation.names().to_vec()).w;
    let mut best_w = w.clone();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0usize;
    let mut log = Vec::with_capacity(config.max_passes + 1);
    for pass in 0..=config.max_passes {
        let (loss, grad) = loss_and_gradient(&w, validation)?;
        log.push(loss);
        if loss < best_loss - config.min_improvement {
            best_loss = loss;
            best_w.clone_from(&w);
            stale = 0;
        } else {
            stale += 1;
        }
        if pass == config.max_passes || stale >= config.patience {
            break;
        }
        for (wm, g) in w.iter_mut().zip(&grad) {
            *wm -= config.learning_rate * g;
        }
    }
    Ok(SuperLearnerWeights {
        names: validation.names().to_vec(),
        w: best_w,
        training_log: log,
    })
}
