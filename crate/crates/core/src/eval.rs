//! Classification and regression metrics, reported on the NCD class.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math::average_ranks;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_EPOCH_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("labels contain a single class; AUC is undefined")]
    SingleClassLabels,
    #[error("labels have zero variance; R^2 is undefined")]
    ZeroVariance,
    #[error("need at least {needed} epochs, have {have}")]
    TooFewEpochs { needed: usize, have: usize },
    #[error("scores and labels differ in length")]
    LengthMismatch,
    #[error("no samples")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// Counts predictions `score >= threshold` against binary labels.
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Self::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassificationMetrics {
    pub f1: f64,
    pub auc: f64,
    pub recall: f64,
    pub precision: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Area under the ROC curve; tied scores contribute one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch);
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassLabels);
    }
    let ranks = average_ranks(scores);
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

pub fn classification_metrics(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ClassificationMetrics, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let auc = roc_auc(scores, labels)?;
    let confusion = Confusion::from_scores(scores, labels, threshold);
    Ok(ClassificationMetrics {
        f1: confusion.f1(),
        auc,
        recall: confusion.recall(),
        precision: confusion.precision(),
        accuracy: confusion.accuracy(),
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegressionMetrics {
    pub r2: f64,
    pub rmse: f64,
}

pub fn regression_metrics(preds: &[f64], targets: &[f64]) -> Result<RegressionMetrics, EvalError> {
    if preds.len() != targets.len() {
        return Err(EvalError::LengthMismatch);
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(RegressionMetrics {
        r2: 1.0 - ss_res / ss_tot,
        rmse: libm::sqrt(ss_res / n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Task {
    Classify,
    Regress,
}

/// Binary target of a 0..=4 severity grade: grades 2 and above are NCD.
pub fn binary_label(grade: u8) -> u8 {
    u8::from(grade >= 2)
}

/// Label map 0..=4 onto [0, 1].
pub fn normalize_label(label: u8) -> f64 {
    f64::from(label) / 4.0
}

/// One row of a per-epoch metric log: named values in a fixed column order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub values: Vec<(String, f64)>,
}

/// Arithmetic mean of each metric over the last `window` epochs.
pub fn epoch_average(log: &[EpochRecord], window: usize) -> Result<Vec<(String, f64)>, EvalError> {
    if window == 0 || log.len() < window {
        return Err(EvalError::TooFewEpochs {
            needed: window.max(1),
            have: log.len(),
        });
    }
    let tail = &log[log.len() - window..];
    let mut out: Vec<(String, f64)> = tail[0].values.iter().map(|(k, _)| (k.clone(), 0.0)).collect();
    for rec in tail {
        for (slot, (k, v)) in out.iter_mut().zip(&rec.values) {
            debug_assert_eq!(&slot.0, k);
            slot.1 += v;
        }
    }
    for slot in &mut out {
        slot.1 /= window as f64;
    }
    Ok(out)
}

/// One system's row in a results table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub system: u8,
    pub features: String,
    pub n_features: usize,
    pub model: String,
    pub classification: Option<ClassificationMetrics>,
    pub regression: Option<RegressionMetrics>,
    pub seed: u64,
    pub config_hash: String,
    /// Number of final epochs averaged (1 for single-fit models).
    pub epoch_window: usize,
}
