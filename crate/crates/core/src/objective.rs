//! Losses, second-order gradient statistics and the closed-form
//! leaf-weight / structure-score / split-gain formulas.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `l = ½(ŷ − y)²`, so `h = 1` per unit weight.
    SquaredError,
    /// Binary cross-entropy on the logit scale; labels must be 0 or 1.
    Logistic,
}

impl LossKind {
    /// Loss of a single prediction on the raw (margin) scale.
    pub fn loss(self, label: f64, raw: f64) -> f64 {
        match self {
            LossKind::SquaredError => 0.5 * (raw - label) * (raw - label),
            // log(1 + e^raw) - y*raw, written to avoid overflow
            LossKind::Logistic => softplus(raw) - label * raw,
        }
    }

    /// Maps a raw score to the output scale (probability for logistic).
    pub fn transform(self, raw: f64) -> f64 {
        match self {
            LossKind::SquaredError => raw,
            LossKind::Logistic => sigmoid(raw),
        }
    }

    pub fn check_labels(self, labels: &[f64]) -> Result<()> {
        if self == LossKind::Logistic {
            if let Some(i) = labels.iter().position(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::InvalidInput(format!(
                    "logistic loss needs labels in {{0,1}}, row {i} has {}",
                    labels[i]
                )));
            }
        }
        Ok(())
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SquaredError => "squared_error",
            LossKind::Logistic => "logistic",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_error" | "reg:squarederror" => Ok(LossKind::SquaredError),
            "logistic" | "binary:logistic" => Ok(LossKind::Logistic),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradPair {
    pub g: f64,
    pub h: f64,
}

impl GradPair {
    pub fn new(g: f64, h: f64) -> Self {
        Self { g, h }
    }
}

impl std::ops::AddAssign for GradPair {
    fn add_assign(&mut self, rhs: Self) {
        self.g += rhs.g;
        self.h += rhs.h;
    }
}

/// Per-instance `(g, h)` statistics; `h ≥ 0` always.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientPairs {
    pairs: Vec<GradPair>,
}

impl GradientPairs {
    pub fn from_pairs(pairs: Vec<GradPair>) -> Result<Self> {
        if let Some(i) = pairs.iter().position(|p| !(p.h >= 0.0) || !p.g.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gradient pair {i} invalid: {:?}",
                pairs[i]
            )));
        }
        Ok(Self { pairs })
    }

    pub fn as_slice(&self) -> &[GradPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn g(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.g)
    }

    pub fn h(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.h)
    }
}

/// Regularization and shrinkage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegParams {
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl Default for RegParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 0.0,
            eta: 0.1,
        }
    }
}

impl RegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!("eta must be in (0, 1], got {}", self.eta)));
        }
        Ok(())
    }
}

/// First and second derivatives of the loss at the current raw predictions,
/// each multiplied by the instance weight.
pub fn gradients(
    loss: LossKind,
    labels: &[f64],
    raw_predictions: &[f64],
    instance_weights: Option<&[f64]>,
) -> Result<GradientPairs> {
    let n = labels.len();
    if raw_predictions.len() != n || instance_weights.is_some_and(|w| w.len() != n) {
        return Err(Error::InvalidInput(
            "labels, predictions and weights differ in length".into(),
        ));
    }
    loss.check_labels(labels)?;
    let mut pairs = Vec::with_capacity(n);
    fill_gradients(loss, labels, raw_predictions, instance_weights, &mut pairs);
    Ok(GradientPairs { pairs })
}

/// Allocation-free variant for the training loop; labels must be pre-checked.
pub(crate) fn fill_gradients(
    loss: LossKind,
    labels: &[f64],
    raw: &[f64],
    weights: Option<&[f64]>,
    out: &mut Vec<GradPair>,
) {
    out.clear();
    out.extend(labels.iter().zip(raw).enumerate().map(|(i, (&y, &f))| {
        let w = weights.map_or(1.0, |w| w[i]);
        match loss {
            LossKind::SquaredError => GradPair::new((f - y) * w, w),
            LossKind::Logistic => {
                let p = sigmoid(f);
                GradPair::new((p - y) * w, p * (1.0 - p) * w)
            }
        }
    }));
}

/// Optimal leaf weight `−G / (H + λ)`.
pub fn leaf_weight(sum_grad: f64, sum_hess: f64, lambda: f64) -> Result<f64> {
    let denom = sum_hess + lambda;
    if !(denom > 0.0) {
        return Err(Error::InvalidInput(format!(
            "H + lambda must be positive, got {denom}"
        )));
    }
    Ok(-sum_grad / denom)
}

/// `−½ Σ G_j²/(H_j + λ) + γT`; lower is better.
pub fn structure_score(leaf_stats: &[(f64, f64)], lambda: f64, gamma: f64) -> f64 {
    let fit: f64 = leaf_stats
        .iter()
        .map(|&(g, h)| g * g / (h + lambda))
        .sum();
    -0.5 * fit + gamma * leaf_stats.len() as f64
}

/// Loss reduction of splitting a node into the given left/right halves.
pub fn split_gain(
    grad_left: f64,
    hess_left: f64,
    grad_right: f64,
    hess_right: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let left = grad_left * grad_left / (hess_left + lambda);
    let right = grad_right * grad_right / (hess_right + lambda);
    let g = grad_left + grad_right;
    let parent = g * g / (hess_left + hess_right + lambda);
    0.5 * (left + right - parent) - gamma
}

/// Rewrites the second-order objective as weighted least squares: each
/// instance becomes `(target = g/h, weight = h)`. Zero-hessian pairs are
/// dropped.
pub fn weighted_regression_view(grads: &GradientPairs) -> Vec<(f64, f64)> {
    grads
        .as_slice()
        .iter()
        .filter(|p| p.h > 0.0)
        .map(|p| (p.g / p.h, p.h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_examples() {
        let g = gradients(LossKind::SquaredError, &[1.0], &[0.0], None).unwrap();
        assert_eq!(g.as_slice()[0], GradPair::new(-1.0, 1.0));
        let g = gradients(LossKind::Logistic, &[1.0], &[0.0], None).unwrap();
        assert_eq!(g.as_slice()[0], GradPair::new(-0.5, 0.25));
    }

    #[test]
    fn instance_weights_scale_both() {
        let g = gradients(LossKind::SquaredError, &[1.0], &[3.0], Some(&[2.0])).unwrap();
        assert_eq!(g.as_slice()[0], GradPair::new(4.0, 2.0));
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        assert!(gradients(LossKind::Logistic, &[0.5], &[0.0], None).is_err());
        assert!(gradients(LossKind::SquaredError, &[0.5], &[0.0], None).is_ok());
        assert!(gradients(LossKind::SquaredError, &[0.5, 1.0], &[0.0], None).is_err());
    }

    #[test]
    fn leaf_weight_examples() {
        assert_eq!(leaf_weight(0.0, 5.0, 1.0).unwrap(), 0.0);
        assert_eq!(leaf_weight(2.0, 3.0, 1.0).unwrap(), -0.5);
        assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
        // λ = 0 falls back to the plain Newton step
        assert_eq!(leaf_weight(3.0, 4.0, 0.0).unwrap(), -0.75);
    }

    #[test]
    fn structure_score_examples() {
        assert_eq!(structure_score(&[(0.0, 3.0)], 1.0, 0.7), 0.7);
        assert_eq!(structure_score(&[(1.0, 1.0), (-1.0, 1.0)], 1.0, 0.0), -0.5);
    }

    #[test]
    fn split_gain_examples() {
        assert_eq!(split_gain(0.0, 2.0, 0.0, 3.0, 1.0, 0.25), -0.25);
        assert_eq!(split_gain(1.0, 1.0, -1.0, 1.0, 1.0, 0.0), 0.5);
    }

    #[test]
    fn regression_view_examples() {
        let g = GradientPairs::from_pairs(vec![
            GradPair::new(-1.0, 1.0),
            GradPair::new(0.5, 0.25),
            GradPair::new(0.3, 0.0),
        ])
        .unwrap();
        assert_eq!(weighted_regression_view(&g), vec![(-1.0, 1.0), (2.0, 0.25)]);
    }

    #[test]
    fn params_validation() {
        assert!(RegParams::default().validate().is_ok());
        let bad = RegParams {
            eta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RegParams {
            lambda: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
