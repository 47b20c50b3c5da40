//! Analytic-vs-numeric gradient verification.

use crate::error::Result;
use crate::seed::{derive, SeedStream, Stream};
use crate::tensor::Tensor;

use super::loss::{cross_entropy_grad, cross_entropy_on_slice};
use super::{backward, forward, ModelParams, NetworkSpec, RunMode};

/// Compare analytic gradients of the cross-entropy loss against central finite
/// differences, with the dropout masks sampled once from `seed` and frozen for
/// the whole check. Returns the maximum over parameters of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn gradient_check(
    spec: &NetworkSpec,
    params: &ModelParams,
    input: &Tensor,
    target: usize,
    eps: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = SeedStream::new(derive(seed, Stream::Dropout, 0));
    let (_, trace) = forward(spec, params, input, RunMode::Train { rng: &mut rng })?;
    let masks = trace.dropout_masks();

    let probs = trace.output().data();
    let n_classes = probs.len();
    let mut loss_grad = Tensor::zeros(&[1, n_classes]);
    loss_grad.data_mut()[target] = cross_entropy_grad(probs[target]);
    let analytic = backward(spec, params, &trace, &loss_grad)?;

    let frozen_loss = |p: &ModelParams| -> Result<f64> {
        let (out, _) = forward(spec, p, input, RunMode::Frozen { masks: &masks })?;
        cross_entropy_on_slice(out.data(), target)
    };

    let mut max_rel = 0.0f64;
    let mut perturbed = params.clone();
    for (idx, layer) in params.iter() {
        for part in 0..2 {
            let len = if part == 0 {
                layer.weight.len()
            } else {
                layer.bias.len()
            };
            for i in 0..len {
                let original = read(params, idx, part, i);
                write(&mut perturbed, idx, part, i, original + eps);
                let plus = frozen_loss(&perturbed)?;
                write(&mut perturbed, idx, part, i, original - eps);
                let minus = frozen_loss(&perturbed)?;
                write(&mut perturbed, idx, part, i, original);

                let numeric = (plus - minus) / (2.0 * eps);
                let a = read(&analytic, idx, part, i);
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
                if rel > max_rel {
                    max_rel = rel;
                }
            }
        }
    }
    Ok(max_rel)
}

fn read(params: &ModelParams, idx: usize, part: usize, i: usize) -> f64 {
    let layer = params.layer(idx).expect("parametric layer");
    if part == 0 {
        layer.weight.data()[i]
    } else {
        layer.bias.data()[i]
    }
}

fn write(params: &mut ModelParams, idx: usize, part: usize, i: usize, value: f64) {
    let layer = params.layer_mut(idx).expect("parametric layer");
    if part == 0 {
        layer.weight.data_mut()[i] = value;
    } else {
        layer.bias.data_mut()[i] = value;
    }
}
