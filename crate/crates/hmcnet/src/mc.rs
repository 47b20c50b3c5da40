//! Monte-Carlo-dropout inference and predictive entropy.
//!
//! Running T stochastic forward passes with dropout left on and averaging the
//! softmax outputs approximates the posterior predictive distribution; the
//! entropy of that mean is the total predictive uncertainty. A single
//! eval-mode pass (dropout off) is the deterministic baseline.

use serde::{Deserialize, Serialize};

use crate::dist::ClassDistribution;
use crate::error::{Error, Result};
use crate::nn::{forward, ModelParams, NetworkSpec, RunMode};
use crate::seed::{derive, SeedStream, Stream};
use crate::tensor::Tensor;

/// Default number of stochastic forward passes.
pub const DEFAULT_PASSES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCConfig {
    /// Number of stochastic forward passes (T).
    pub passes: usize,
    pub seed: u64,
    /// Keep every per-pass distribution in the report (memory grows with T).
    pub keep_passes: bool,
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig {
            passes: DEFAULT_PASSES,
            seed: 0,
            keep_passes: false,
        }
    }
}

/// Mean predictive distribution with its entropy and MC bookkeeping.
///
/// `passes` is 0 for the deterministic (dropout-off) baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub mean: ClassDistribution,
    /// Predictive entropy of the mean, in nats.
    pub entropy: f64,
    pub passes: usize,
    pub per_pass: Option<Vec<ClassDistribution>>,
}

impl UncertaintyReport {
    fn from_mean(mean: ClassDistribution, passes: usize) -> UncertaintyReport {
        let entropy = predictive_entropy(&mean);
        UncertaintyReport {
            mean,
            entropy,
            passes,
            per_pass: None,
        }
    }

    /// Wrap a deterministic eval-mode prediction (recorded as 0 passes).
    pub fn deterministic(mean: ClassDistribution) -> UncertaintyReport {
        UncertaintyReport::from_mean(mean, 0)
    }

    /// Rename the classes (probabilities unchanged).
    pub fn relabeled(mut self, labels: &[&str]) -> Result<UncertaintyReport> {
        self.mean = self.mean.relabeled(labels)?;
        self.per_pass = match self.per_pass {
            Some(passes) => Some(
                passes
                    .into_iter()
                    .map(|d| d.relabeled(labels))
                    .collect::<Result<_>>()?,
            ),
            None => None,
        };
        Ok(self)
    }

    /// Serialize as `{"probs": ..., "entropy": ..., "T": ..., "classes": ...}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut value = serde_json::json!({
            "probs": self.mean.probs(),
            "entropy": self.entropy,
            "T": self.passes,
            "classes": self.mean.labels(),
        });
        if let Some(passes) = &self.per_pass {
            value["per_pass"] = serde_json::json!(passes
                .iter()
                .map(|d| d.probs().to_vec())
                .collect::<Vec<_>>());
        }
        value
    }
}

/// Average `config.passes` stochastic forward passes (dropout on, independent
/// per-pass seed streams) and report the entropy of the mean.
///
/// Per-pass outputs are accumulated in pass-index order. When every pass is
/// bit-identical (e.g. all dropout rates are 0) the mean is returned exactly,
/// so the report matches [`deterministic_predict`] bit for bit. Otherwise the
/// mean is renormalized to absorb accumulated rounding, which must be below
/// 1e-9.
pub fn mc_forward(
    spec: &NetworkSpec,
    params: &ModelParams,
    input: &Tensor,
    config: &MCConfig,
) -> Result<UncertaintyReport> {
    if config.passes < 1 {
        return Err(Error::Validation(
            "mc_forward needs at least one pass".into(),
        ));
    }
    let (h, w, c) = spec.input_shape();
    if input.shape() != [h, w, c] {
        return Err(Error::Validation(format!(
            "mc_forward expects a single sample shaped {:?}, got {:?}",
            (h, w, c),
            input.shape()
        )));
    }

    let n_classes = spec.n_classes();
    let mut sum = vec![0.0f64; n_classes];
    let mut first: Option<Vec<f64>> = None;
    let mut identical = true;
    let mut per_pass = config.keep_passes.then(Vec::new);

    for t in 0..config.passes {
        let mut rng = SeedStream::new(derive(config.seed, Stream::McPass, t as u64));
        let (out, _) = forward(spec, params, input, RunMode::Mc { rng: &mut rng })?;
        let probs = out.data();
        match &first {
            None => first = Some(probs.to_vec()),
            Some(f) => {
                if identical && f.as_slice() != probs {
                    identical = false;
                }
            }
        }
        for (s, &p) in sum.iter_mut().zip(probs) {
            *s += p;
        }
        if let Some(kept) = per_pass.as_mut() {
            kept.push(ClassDistribution::new(probs.to_vec())?);
        }
    }

    let mean = if identical {
        first.expect("at least one pass")
    } else {
        let t = config.passes as f64;
        let mut mean: Vec<f64> = sum.iter().map(|s| s / t).collect();
        let total: f64 = mean.iter().sum();
        if (total - 1.0).abs() >= 1e-9 {
            return Err(Error::Numeric(format!(
                "MC mean drifted from 1 by {}",
                (total - 1.0).abs()
            )));
        }
        for m in mean.iter_mut() {
            *m /= total;
        }
        mean
    };

    let mut report =
        UncertaintyReport::from_mean(ClassDistribution::new(mean)?, config.passes);
    report.per_pass = per_pass;
    Ok(report)
}

/// Shannon entropy of the distribution in nats, with 0 ln 0 = 0.
pub fn predictive_entropy(dist: &ClassDistribution) -> f64 {
    entropy_of(dist.probs())
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h.max(0.0)
}

/// Single eval-mode forward pass: the non-Bayesian baseline.
pub fn deterministic_predict(
    spec: &NetworkSpec,
    params: &ModelParams,
    input: &Tensor,
) -> Result<ClassDistribution> {
    let (out, _) = forward(spec, params, input, RunMode::Eval)?;
    if out.rank() != 1 {
        return Err(Error::Validation(
            "deterministic_predict expects a single sample".into(),
        ));
    }
    ClassDistribution::new(out.into_data())
}
