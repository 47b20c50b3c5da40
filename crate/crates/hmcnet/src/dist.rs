//! Normalized probability distributions over a fixed set of classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How far the probability sum may drift from 1.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A validated probability vector with named classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    probs: Vec<f64>,
    labels: Vec<String>,
}

impl ClassDistribution {
    /// Build with generated labels `class0`, `class1`, ...
    pub fn new(probs: Vec<f64>) -> Result<ClassDistribution> {
        let labels = (0..probs.len()).map(|i| format!("class{i}")).collect();
        ClassDistribution::with_labels(probs, labels)
    }

    pub fn with_labels(probs: Vec<f64>, labels: Vec<String>) -> Result<ClassDistribution> {
        if probs.len() < 2 {
            return Err(Error::Validation(format!(
                "a distribution needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} probabilities but {} labels",
                probs.len(),
                labels.len()
            )));
        }
        for &p in &probs {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "probabilities sum to {sum}, expected 1 within {SUM_TOLERANCE}"
            )));
        }
        Ok(ClassDistribution { probs, labels })
    }

    /// Binary distribution from the positive-class probability.
    pub fn binary(p_positive: f64, labels: [&str; 2]) -> Result<ClassDistribution> {
        ClassDistribution::with_labels(
            vec![p_positive, 1.0 - p_positive],
            labels.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Same probabilities under new class names.
    pub fn relabeled(self, labels: &[&str]) -> Result<ClassDistribution> {
        ClassDistribution::with_labels(self.probs, labels.iter().map(|s| s.to_string()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_vectors() {
        assert!(ClassDistribution::new(vec![1.0]).is_err());
        assert!(ClassDistribution::new(vec![0.6, 0.6]).is_err());
        assert!(ClassDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassDistribution::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn argmax_breaks_ties_to_lowest_index() {
        let d = ClassDistribution::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(d.argmax(), 0);
        let d = ClassDistribution::new(vec![0.2, 0.4, 0.4]).unwrap();
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn accepts_sum_within_tolerance() {
        let d = ClassDistribution::new(vec![0.5 + 4e-10, 0.5 + 4e-10]);
        assert!(d.is_ok());
        let d = ClassDistribution::new(vec![0.5 + 2e-9, 0.5]);
        assert!(d.is_err());
    }
}
