//! Reverse-mode gradients through a recorded forward trace.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{ForwardTrace, LayerAux, LayerSpec, ModelParams, NetworkSpec};

/// Back-propagate `loss_grad` (the gradient of the loss with respect to the
/// softmax output, shaped [batch, classes]) through the pass recorded in
/// `trace`. Returns parameter gradients in a [`ModelParams`]-shaped container.
///
/// Dropout layers propagate through the exact masks recorded in the trace;
/// a trace taken in eval mode treats them as the identity.
pub fn backward(
    spec: &NetworkSpec,
    params: &ModelParams,
    trace: &ForwardTrace,
    loss_grad: &Tensor,
) -> Result<ModelParams> {
    params.check_shapes(spec)?;
    if trace.layer_inputs.len() != spec.layers().len() {
        return Err(Error::Validation(format!(
            "trace covers {} layers, spec has {}",
            trace.layer_inputs.len(),
            spec.layers().len()
        )));
    }
    if loss_grad.shape() != trace.output.shape() {
        return Err(Error::Validation(format!(
            "loss gradient shape {:?} does not match trace output {:?}",
            loss_grad.shape(),
            trace.output.shape()
        )));
    }
    let batch = trace.batch;
    let mut grads = ModelParams::zeros_like(spec)?;
    let mut dy = loss_grad.clone();

    for idx in (0..spec.layers().len()).rev() {
        let x = &trace.layer_inputs[idx];
        let needs_dx = idx > 0;
        dy = match spec.layers()[idx] {
            LayerSpec::Softmax => softmax_backward(&trace.output, &dy, batch),
            LayerSpec::Dense { units } => {
                let fan_in = x.len() / batch;
                let p = params.layer(idx).expect("dense params");
                let g = grads.layer_mut(idx).expect("dense grads");
                dense_backward(x, &p.weight, &dy, g, batch, fan_in, units, needs_dx)
            }
            LayerSpec::Conv2d {
                filters,
                kernel_size,
                stride,
            } => {
                let shape = x.shape();
                let (h, w, c) = (shape[1], shape[2], shape[3]);
                let p = params.layer(idx).expect("conv params");
                let g = grads.layer_mut(idx).expect("conv grads");
                conv2d_backward(
                    x,
                    &p.weight,
                    &dy,
                    g,
                    batch,
                    (h, w, c),
                    filters,
                    kernel_size,
                    stride,
                    needs_dx,
                )
            }
            LayerSpec::Relu => {
                let mut dx = dy;
                for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *d = 0.0;
                    }
                }
                dx
            }
            LayerSpec::Dropout { rate } => match &trace.aux[idx] {
                LayerAux::DropoutMask(mask) => {
                    let scale = 1.0 / (1.0 - rate);
                    let mut dx = dy;
                    for (d, &m) in dx.data_mut().iter_mut().zip(mask.data()) {
                        *d = *d * m * scale;
                    }
                    dx
                }
                _ => dy, // dropout was inactive: identity
            },
            LayerSpec::Flatten => dy.reshape(x.shape().to_vec())?,
            LayerSpec::MaxPool2d { .. } => {
                let indices = match &trace.aux[idx] {
                    LayerAux::PoolIndices(i) => i,
                    _ => {
                        return Err(Error::Validation(format!(
                            "trace is missing pool indices for layer {idx}"
                        )))
                    }
                };
                let mut dx = Tensor::zeros(x.shape());
                let d = dx.data_mut();
                for (&src, &g) in indices.iter().zip(dy.data()) {
                    d[src] += g;
                }
                dx
            }
        };
        if !needs_dx {
            break;
        }
    }
    Ok(grads)
}

/// dx_i = p_i * (dy_i - sum_j dy_j p_j), row-wise.
fn softmax_backward(output: &Tensor, dy: &Tensor, batch: usize) -> Tensor {
    let n = output.len() / batch;
    let p = output.data();
    let g = dy.data();
    let mut dx = Tensor::zeros(output.shape());
    let d = dx.data_mut();
    for row in 0..batch {
        let pi = &p[row * n..(row + 1) * n];
        let gi = &g[row * n..(row + 1) * n];
        let dot: f64 = pi.iter().zip(gi).map(|(&a, &b)| a * b).sum();
        for ((dv, &pv), &gv) in d[row * n..(row + 1) * n].iter_mut().zip(pi).zip(gi) {
            *dv = pv * (gv - dot);
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    x: &Tensor,
    weight: &Tensor,
    dy: &Tensor,
    grads: &mut super::LayerParams,
    batch: usize,
    fan_in: usize,
    units: usize,
    needs_dx: bool,
) -> Tensor {
    let xd = x.data();
    let wd = weight.data();
    let gyd = dy.data();
    let gw = grads.weight.data_mut();
    let gb = grads.bias.data_mut();
    let mut dx = Tensor::zeros(x.shape());
    let dxd = dx.data_mut();
    for n in 0..batch {
        let xi = &xd[n * fan_in..(n + 1) * fan_in];
        let gyi = &gyd[n * units..(n + 1) * units];
        for (bv, &gv) in gb.iter_mut().zip(gyi) {
            *bv += gv;
        }
        for (i, &xv) in xi.iter().enumerate() {
            let gwrow = &mut gw[i * units..(i + 1) * units];
            if xv != 0.0 {
                for (gwv, &gv) in gwrow.iter_mut().zip(gyi) {
                    *gwv += xv * gv;
                }
            }
        }
        if needs_dx {
            let dxi = &mut dxd[n * fan_in..(n + 1) * fan_in];
            for (i, dxv) in dxi.iter_mut().enumerate() {
                let wrow = &wd[i * units..(i + 1) * units];
                *dxv = wrow.iter().zip(gyi).map(|(&wv, &gv)| wv * gv).sum();
            }
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    x: &Tensor,
    kernel: &Tensor,
    dy: &Tensor,
    grads: &mut super::LayerParams,
    batch: usize,
    (h, w, c): (usize, usize, usize),
    filters: usize,
    k: usize,
    stride: usize,
    needs_dx: bool,
) -> Tensor {
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let xd = x.data();
    let kd = kernel.data();
    let gyd = dy.data();
    let gk = grads.weight.data_mut();
    let gb = grads.bias.data_mut();
    let mut dx = Tensor::zeros(x.shape());
    let dxd = dx.data_mut();
    let in_plane = h * w * c;
    let out_plane = oh * ow * filters;
    for n in 0..batch {
        let xi = &xd[n * in_plane..(n + 1) * in_plane];
        let gyi = &gyd[n * out_plane..(n + 1) * out_plane];
        let dxi = &mut dxd[n * in_plane..(n + 1) * in_plane];
        for r in 0..oh {
            for col in 0..ow {
                let obase = (r * ow + col) * filters;
                let gout = &gyi[obase..obase + filters];
                for (bv, &gv) in gb.iter_mut().zip(gout) {
                    *bv += gv;
                }
                for i in 0..k {
                    let src_row = r * stride + i;
                    for j in 0..k {
                        let src_col = col * stride + j;
                        let xbase = (src_row * w + src_col) * c;
                        let kbase = (i * k + j) * c * filters;
                        for ch in 0..c {
                            let xv = xi[xbase + ch];
                            let koff = kbase + ch * filters;
                            if xv != 0.0 {
                                for (f, &gv) in gout.iter().enumerate() {
                                    gk[koff + f] += xv * gv;
                                }
                            }
                            if needs_dx {
                                let krow = &kd[koff..koff + filters];
                                let mut acc = 0.0;
                                for (kv, &gv) in krow.iter().zip(gout) {
                                    acc += kv * gv;
                                }
                                dxi[xbase + ch] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}
