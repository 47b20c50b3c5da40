//! Mini-batch training loop: shuffled batches, inverted dropout, BCE + L2,
//! Adam updates.

use crate::error::{Error, Result};
use crate::seed::{derive, SeedStream, Stream};
use crate::tensor::Tensor;

use super::loss::{cross_entropy_grad, cross_entropy_on_slice, l2_penalty};
use super::{backward, forward, AdamState, L2Scope, ModelParams, NetworkSpec, RunMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub reg: f64,
    pub l2_scope: L2Scope,
    pub seed: u64,
}

/// Labeled samples for a binary head: every input has the spec's sample shape
/// and every label is 0 or 1.
#[derive(Debug, Clone)]
pub struct TrainSet {
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
}

impl TrainSet {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>) -> Result<TrainSet> {
        if inputs.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Validation(format!(
                "binary training labels must be 0 or 1, got {bad}"
            )));
        }
        Ok(TrainSet { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean per-sample objective (BCE + L2) for each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Optional per-epoch sample transform `(input, epoch, sample_index) -> input`,
/// used for on-the-fly augmentation. Must preserve the sample shape.
pub type EpochTransform<'a> = dyn Fn(&Tensor, usize, usize) -> Tensor + 'a;

/// Train a binary softmax network. Deterministic for a fixed config: batches
/// are reshuffled each epoch from a seeded stream and dropout draws come from
/// per-(epoch, batch) derived streams.
pub fn train(
    spec: &NetworkSpec,
    params: ModelParams,
    data: &TrainSet,
    config: &TrainConfig,
    transform: Option<&EpochTransform>,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Validation("training dataset is empty".into()));
    }
    if spec.n_classes() != 2 {
        return Err(Error::Validation(format!(
            "training expects a binary head, spec has {} classes",
            spec.n_classes()
        )));
    }
    let positives = data.labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::Validation(
            "training dataset contains a single class".into(),
        ));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Validation(
            "batch_size and epochs must be positive".into(),
        ));
    }
    if !(config.lr >= 0.0) || config.reg < 0.0 {
        return Err(Error::Validation(
            "learning rate and regularization must be >= 0".into(),
        ));
    }
    let (h, w, c) = spec.input_shape();
    for (i, input) in data.inputs.iter().enumerate() {
        if input.shape() != [h, w, c] {
            return Err(Error::Validation(format!(
                "sample {i} has shape {:?}, spec expects {:?}",
                input.shape(),
                (h, w, c)
            )));
        }
    }

    let mut params = params;
    params.check_shapes(spec)?;
    let mut adam = AdamState::new(spec)?;
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut shuffle_rng = SeedStream::new(derive(config.seed, Stream::Shuffle, epoch as u64));
        shuffle_rng.shuffle(&mut order);

        // Per-sample loss terms, summed in sample order afterwards so the
        // recorded epoch loss does not depend on the batch partition.
        let mut sample_bce = vec![0.0f64; n];
        let mut sample_l2 = vec![0.0f64; n];
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let b = chunk.len();
            let mut batch = Tensor::zeros(&[b, h, w, c]);
            let plane = h * w * c;
            for (slot, &sample_idx) in chunk.iter().enumerate() {
                let source = match transform {
                    Some(t) => t(&data.inputs[sample_idx], epoch, sample_idx),
                    None => data.inputs[sample_idx].clone(),
                };
                if source.shape() != [h, w, c] {
                    return Err(Error::Validation(format!(
                        "transform changed sample {sample_idx} shape to {:?}",
                        source.shape()
                    )));
                }
                batch.data_mut()[slot * plane..(slot + 1) * plane].copy_from_slice(source.data());
            }

            let dropout_seed = derive(
                derive(config.seed, Stream::Dropout, epoch as u64),
                Stream::Dropout,
                batch_idx as u64,
            );
            let mut rng = SeedStream::new(dropout_seed);
            let (out, trace) = forward(spec, &params, &batch, RunMode::Train { rng: &mut rng })?;

            let mut loss_grad = Tensor::zeros(&[b, 2]);
            let mut batch_bce = 0.0;
            let (l2_value, l2_grads) = l2_penalty(spec, &params, config.reg, config.l2_scope)?;
            for (slot, &sample_idx) in chunk.iter().enumerate() {
                let target = data.labels[sample_idx];
                let row = &out.data()[slot * 2..(slot + 1) * 2];
                let bce = cross_entropy_on_slice(row, target)?;
                batch_bce += bce;
                sample_bce[sample_idx] = bce;
                sample_l2[sample_idx] = l2_value;
                loss_grad.data_mut()[slot * 2 + target] =
                    cross_entropy_grad(row[target]) / b as f64;
            }
            let batch_loss = batch_bce / b as f64 + l2_value;
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite at epoch {epoch}, batch {batch_idx}"
                )));
            }

            let mut grads = backward(spec, &params, &trace, &loss_grad)?;
            add_in_place(&mut grads, &l2_grads);
            adam.step(&mut params, &grads, config.lr);
        }
        let total: f64 = sample_bce.iter().sum::<f64>() + sample_l2.iter().sum::<f64>();
        epoch_losses.push(total / n as f64);
    }

    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

fn add_in_place(target: &mut ModelParams, other: &ModelParams) {
    for (idx, layer) in target.iter_mut() {
        let o = other.layer(idx).expect("matching layout");
        for (t, &v) in layer.weight.data_mut().iter_mut().zip(o.weight.data()) {
            *t += v;
        }
        for (t, &v) in layer.bias.data_mut().iter_mut().zip(o.bias.data()) {
            *t += v;
        }
    }
}
