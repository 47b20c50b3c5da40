//! Forward pass over a layer stack, with train/eval/MC/replay dropout modes.

use crate::error::{Error, Result};
use crate::seed::SeedStream;
use crate::tensor::Tensor;

use super::{ActivationShape, ForwardTrace, LayerAux, LayerSpec, ModelParams, NetworkSpec};

/// Dropout behavior of a forward pass.
///
/// `Train` and `Mc` both sample fresh inverted-dropout masks; they are named
/// separately because they sit on different call paths (optimization vs
/// Monte-Carlo inference). `Eval` makes every dropout layer the identity.
/// `Frozen` replays previously captured masks, which is what makes gradient
/// checking and exhaustive mask enumeration possible.
pub enum RunMode<'a> {
    Eval,
    Train { rng: &'a mut SeedStream },
    Mc { rng: &'a mut SeedStream },
    Frozen { masks: &'a [Option<Tensor>] },
}

enum DropoutPlan<'a> {
    Identity,
    Sample(&'a mut SeedStream),
    Replay(&'a [Option<Tensor>]),
}

/// Run the network on `input`, which is either one sample shaped like
/// `spec.input_shape()` or a batch with a leading batch extent. Returns the
/// softmax output (same arity as the input) plus the trace needed by
/// [`super::backward`].
pub fn forward(
    spec: &NetworkSpec,
    params: &ModelParams,
    input: &Tensor,
    mode: RunMode,
) -> Result<(Tensor, ForwardTrace)> {
    params.check_shapes(spec)?;
    let (h, w, c) = spec.input_shape();
    let (batch, batched) = match input.shape() {
        [ih, iw, ic] if (*ih, *iw, *ic) == (h, w, c) => (1, false),
        [b, ih, iw, ic] if (*ih, *iw, *ic) == (h, w, c) && *b > 0 => (*b, true),
        other => {
            return Err(Error::Shape {
                layer: 0,
                kind: "input".into(),
                message: format!(
                    "input shape {other:?} does not match spec input {:?} (an optional leading batch extent is allowed)",
                    (h, w, c)
                ),
            })
        }
    };
    input.ensure_finite("network input")?;

    let mut plan = match mode {
        RunMode::Eval => DropoutPlan::Identity,
        RunMode::Train { rng } | RunMode::Mc { rng } => DropoutPlan::Sample(rng),
        RunMode::Frozen { masks } => {
            if masks.len() != spec.layers().len() {
                return Err(Error::Validation(format!(
                    "frozen mode got {} mask slots for {} layers",
                    masks.len(),
                    spec.layers().len()
                )));
            }
            DropoutPlan::Replay(masks)
        }
    };

    let input_shapes = spec.layer_input_shapes()?;
    let mut current = batch_view(input, batch);
    let mut layer_inputs = Vec::with_capacity(spec.layers().len());
    let mut aux = Vec::with_capacity(spec.layers().len());

    for (idx, layer) in spec.layers().iter().enumerate() {
        layer_inputs.push(current.clone());
        let (next, layer_aux) = apply_layer(
            layer,
            idx,
            &current,
            input_shapes[idx],
            params,
            batch,
            &mut plan,
        )?;
        aux.push(layer_aux);
        current = next;
    }

    current.ensure_finite("network output")?;
    let trace = ForwardTrace {
        layer_inputs,
        aux,
        output: current.clone(),
        batch,
    };
    let output = if batched {
        current
    } else {
        let classes = current.len();
        current.reshape(vec![classes])?
    };
    Ok((output, trace))
}

/// View a sample or batch as a batched tensor without copying sample layout.
fn batch_view(input: &Tensor, batch: usize) -> Tensor {
    let mut shape = vec![batch];
    if input.shape().len() == 4 {
        shape.extend_from_slice(&input.shape()[1..]);
    } else {
        shape.extend_from_slice(input.shape());
    }
    input
        .clone()
        .reshape(shape)
        .expect("batch view preserves length")
}

#[allow(clippy::too_many_arguments)]
fn apply_layer(
    layer: &LayerSpec,
    idx: usize,
    input: &Tensor,
    sample_shape: ActivationShape,
    params: &ModelParams,
    batch: usize,
    plan: &mut DropoutPlan,
) -> Result<(Tensor, LayerAux)> {
    match *layer {
        LayerSpec::Dense { units } => {
            let p = params.layer(idx).expect("dense layer has params");
            let fan_in = sample_shape.element_count();
            Ok((
                dense_forward(input, &p.weight, &p.bias, batch, fan_in, units),
                LayerAux::None,
            ))
        }
        LayerSpec::Conv2d {
            filters,
            kernel_size,
            stride,
        } => {
            let p = params.layer(idx).expect("conv layer has params");
            let (h, w, c) = match sample_shape {
                ActivationShape::Map(h, w, c) => (h, w, c),
                _ => unreachable!("validated conv input"),
            };
            Ok((
                conv2d_forward(
                    input,
                    &p.weight,
                    &p.bias,
                    batch,
                    (h, w, c),
                    filters,
                    kernel_size,
                    stride,
                ),
                LayerAux::None,
            ))
        }
        LayerSpec::Relu => Ok((input.map(|v| v.max(0.0)), LayerAux::None)),
        LayerSpec::Softmax => Ok((softmax_rows(input, batch), LayerAux::None)),
        LayerSpec::Dropout { rate } => match plan {
            DropoutPlan::Identity => Ok((input.clone(), LayerAux::None)),
            DropoutPlan::Sample(rng) => {
                let mut mask = Tensor::zeros(input.shape());
                for m in mask.data_mut() {
                    *m = if rng.bernoulli(rate) { 0.0 } else { 1.0 };
                }
                Ok((apply_dropout(input, &mask, rate), LayerAux::DropoutMask(mask)))
            }
            DropoutPlan::Replay(masks) => match &masks[idx] {
                Some(mask) => {
                    if mask.shape() != input.shape() {
                        return Err(Error::Validation(format!(
                            "frozen mask for layer {idx} has shape {:?}, activation is {:?}",
                            mask.shape(),
                            input.shape()
                        )));
                    }
                    Ok((
                        apply_dropout(input, mask, rate),
                        LayerAux::DropoutMask(mask.clone()),
                    ))
                }
                None => Err(Error::Validation(format!(
                    "frozen mode is missing a mask for dropout layer {idx}"
                ))),
            },
        },
        LayerSpec::Flatten => {
            let per_sample = sample_shape.element_count();
            Ok((
                input.clone().reshape(vec![batch, per_sample])?,
                LayerAux::None,
            ))
        }
        LayerSpec::MaxPool2d { window } => {
            let (h, w, c) = match sample_shape {
                ActivationShape::Map(h, w, c) => (h, w, c),
                _ => unreachable!("validated pool input"),
            };
            Ok(maxpool_forward(input, batch, (h, w, c), window))
        }
    }
}

/// Inverted dropout: zero where mask is 0, scale survivors by 1/(1-rate).
pub(super) fn apply_dropout(input: &Tensor, mask: &Tensor, rate: f64) -> Tensor {
    let scale = 1.0 / (1.0 - rate);
    let mut out = input.clone();
    for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
        *o = *o * m * scale;
    }
    out
}

pub(super) fn dense_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    batch: usize,
    fan_in: usize,
    units: usize,
) -> Tensor {
    let x = input.data();
    let w = weight.data();
    let b = bias.data();
    let mut out = Tensor::zeros(&[batch, units]);
    let o = out.data_mut();
    for n in 0..batch {
        let xi = &x[n * fan_in..(n + 1) * fan_in];
        let oi = &mut o[n * units..(n + 1) * units];
        oi.copy_from_slice(b);
        for (i, &xv) in xi.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[i * units..(i + 1) * units];
            for (ov, &wv) in oi.iter_mut().zip(wrow) {
                *ov += xv * wv;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(super) fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    batch: usize,
    (h, w, c): (usize, usize, usize),
    filters: usize,
    k: usize,
    stride: usize,
) -> Tensor {
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let x = input.data();
    let kw = kernel.data();
    let b = bias.data();
    let mut out = Tensor::zeros(&[batch, oh, ow, filters]);
    let o = out.data_mut();
    let in_plane = h * w * c;
    let out_plane = oh * ow * filters;
    for n in 0..batch {
        let xi = &x[n * in_plane..(n + 1) * in_plane];
        let oi = &mut o[n * out_plane..(n + 1) * out_plane];
        for r in 0..oh {
            for col in 0..ow {
                let obase = (r * ow + col) * filters;
                oi[obase..obase + filters].copy_from_slice(b);
                for i in 0..k {
                    let src_row = r * stride + i;
                    for j in 0..k {
                        let src_col = col * stride + j;
                        let xbase = (src_row * w + src_col) * c;
                        let kbase = (i * k + j) * c * filters;
                        for ch in 0..c {
                            let xv = xi[xbase + ch];
                            if xv == 0.0 {
                                continue;
                            }
                            let krow = &kw[kbase + ch * filters..kbase + (ch + 1) * filters];
                            for (f, &kv) in krow.iter().enumerate() {
                                oi[obase + f] += xv * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn maxpool_forward(
    input: &Tensor,
    batch: usize,
    (h, w, c): (usize, usize, usize),
    window: usize,
) -> (Tensor, LayerAux) {
    let oh = h / window;
    let ow = w / window;
    let x = input.data();
    let mut out = Tensor::zeros(&[batch, oh, ow, c]);
    let o = out.data_mut();
    let in_plane = h * w * c;
    let out_plane = oh * ow * c;
    let mut indices = vec![0usize; batch * out_plane];
    for n in 0..batch {
        let xi = &x[n * in_plane..(n + 1) * in_plane];
        for r in 0..oh {
            for col in 0..ow {
                for ch in 0..c {
                    let mut best_idx = ((r * window) * w + col * window) * c + ch;
                    let mut best = xi[best_idx];
                    for i in 0..window {
                        for j in 0..window {
                            let idx = ((r * window + i) * w + (col * window + j)) * c + ch;
                            if xi[idx] > best {
                                best = xi[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let oidx = (r * ow + col) * c + ch;
                    o[n * out_plane + oidx] = best;
                    indices[n * out_plane + oidx] = n * in_plane + best_idx;
                }
            }
        }
    }
    (out, LayerAux::PoolIndices(indices))
}

/// Numerically stable softmax over the trailing axis of a [batch, n] tensor.
pub(super) fn softmax_rows(input: &Tensor, batch: usize) -> Tensor {
    let n = input.len() / batch;
    let x = input.data();
    let mut out = Tensor::zeros(input.shape());
    let o = out.data_mut();
    for row in 0..batch {
        let xi = &x[row * n..(row + 1) * n];
        let oi = &mut o[row * n..(row + 1) * n];
        let max = xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (ov, &xv) in oi.iter_mut().zip(xi) {
            let e = (xv - max).exp();
            *ov = e;
            sum += e;
        }
        for ov in oi.iter_mut() {
            *ov /= sum;
        }
    }
    out
}
