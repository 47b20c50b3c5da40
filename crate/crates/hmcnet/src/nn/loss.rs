//! Softmax, binary cross-entropy, and L2 regularization.

use crate::dist::ClassDistribution;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::forward::softmax_rows;
use super::{LayerSpec, ModelParams, NetworkSpec};

/// Probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] before any log.
pub const PROB_CLAMP: f64 = 1e-12;

/// Numerically stable softmax (max subtraction) over a rank-1 logit tensor.
pub fn softmax(logits: &Tensor) -> Result<ClassDistribution> {
    if logits.rank() != 1 || logits.len() < 2 {
        return Err(Error::Validation(format!(
            "softmax expects a rank-1 tensor of >= 2 logits, got shape {:?}",
            logits.shape()
        )));
    }
    logits.ensure_finite("softmax logits")?;
    let out = softmax_rows(logits, 1);
    ClassDistribution::new(out.into_data())
}

/// Binary cross-entropy: -ln p(target), with the probability clamped.
pub fn bce_loss(predicted: &ClassDistribution, target: usize) -> Result<f64> {
    if predicted.len() != 2 {
        return Err(Error::Validation(format!(
            "binary cross-entropy expects 2 classes, got {}",
            predicted.len()
        )));
    }
    cross_entropy_on_slice(predicted.probs(), target)
}

/// -ln p[target] with clamping; shared by the public op and the train loop.
pub(crate) fn cross_entropy_on_slice(probs: &[f64], target: usize) -> Result<f64> {
    if target >= probs.len() {
        return Err(Error::Validation(format!(
            "target class {target} out of range for {} classes",
            probs.len()
        )));
    }
    Ok(-clamp_prob(probs[target]).ln())
}

/// d/dp of the clamped -ln p at the target entry; zero inside clamp regions
/// so analytic and finite-difference gradients agree.
pub(crate) fn cross_entropy_grad(p_target: f64) -> f64 {
    if p_target <= PROB_CLAMP || p_target >= 1.0 - PROB_CLAMP {
        0.0
    } else {
        -1.0 / p_target
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Which weights the L2 penalty covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L2Scope {
    /// Dense layers only (the classifier block).
    DenseOnly,
    /// Every parametric layer.
    All,
}

impl L2Scope {
    fn includes(&self, layer: &LayerSpec) -> bool {
        match self {
            L2Scope::All => layer.has_params(),
            L2Scope::DenseOnly => matches!(layer, LayerSpec::Dense { .. }),
        }
    }
}

/// L2 penalty `reg * sum(w^2)` over the weights of the layers selected by
/// `scope`, plus its gradient contribution `2 * reg * w`. Biases are excluded.
pub fn l2_penalty(
    spec: &NetworkSpec,
    params: &ModelParams,
    reg: f64,
    scope: L2Scope,
) -> Result<(f64, ModelParams)> {
    if reg < 0.0 {
        return Err(Error::Validation(format!(
            "regularization strength must be >= 0, got {reg}"
        )));
    }
    params.check_shapes(spec)?;
    let mut grads = ModelParams::zeros_like(spec)?;
    let mut penalty = 0.0;
    for (idx, layer) in params.iter() {
        if !scope.includes(&spec.layers()[idx]) {
            continue;
        }
        let g = grads.layer_mut(idx).expect("parametric layer");
        for (gv, &w) in g.weight.data_mut().iter_mut().zip(layer.weight.data()) {
            penalty += w * w;
            *gv = 2.0 * reg * w;
        }
    }
    Ok((reg * penalty, grads))
}
