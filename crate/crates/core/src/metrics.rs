//! Evaluation metrics.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::objective::LossKind;

pub const PROB_CLIP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Auc,
    Logloss,
    Rmse,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Auc => "auc",
            MetricKind::Logloss => "logloss",
            MetricKind::Rmse => "rmse",
        }
    }

    /// Scores raw model margins: AUC ranks margins directly, the others
    /// use the loss's output scale.
    pub fn evaluate(self, loss: LossKind, labels: &[f64], raw: &[f64]) -> Result<f64> {
        match self {
            MetricKind::Auc => auc(labels, raw),
            MetricKind::Logloss => {
                let p: Vec<f64> = raw.iter().map(|&r| loss.transform(r)).collect();
                logloss(labels, &p)
            }
            MetricKind::Rmse => {
                let p: Vec<f64> = raw.iter().map(|&r| loss.transform(r)).collect();
                rmse(labels, &p)
            }
        }
    }

    pub fn default_for(loss: LossKind) -> Self {
        match loss {
            LossKind::Logistic => MetricKind::Logloss,
            LossKind::SquaredError => MetricKind::Rmse,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auc" => Ok(MetricKind::Auc),
            "logloss" => Ok(MetricKind::Logloss),
            "rmse" => Ok(MetricKind::Rmse),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!(
            "{a} labels but {b} predictions"
        )));
    }
    if a == 0 {
        return Err(Error::InvalidInput("metric of an empty set".into()));
    }
    Ok(())
}

fn check_binary(labels: &[f64]) -> Result<()> {
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidInput(format!("label {y} is not 0 or 1")));
    }
    Ok(())
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share
/// their average rank, so a positive/negative tie counts one half.
pub fn auc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    check_lengths(labels.len(), scores.len())?;
    check_binary(labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        let pos = order[i..j].iter().filter(|&&k| labels[k] == 1.0).count();
        rank_sum += avg * pos as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean binary cross-entropy with probabilities clipped to
/// `[1e-15, 1 - 1e-15]`.
pub fn logloss(labels: &[f64], probabilities: &[f64]) -> Result<f64> {
    check_lengths(labels.len(), probabilities.len())?;
    check_binary(labels)?;
    let total: f64 = labels
        .iter()
        .zip(probabilities)
        .map(|(&y, &p)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / labels.len() as f64)
}

pub fn rmse(labels: &[f64], predictions: &[f64]) -> Result<f64> {
    check_lengths(labels.len(), predictions.len())?;
    let sse: f64 = labels
        .iter()
        .zip(predictions)
        .map(|(&y, &p)| (p - y) * (p - y))
        .sum();
    Ok((sse / labels.len() as f64).sqrt())
}
