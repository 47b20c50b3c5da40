//! Minimal feed-forward network engine.
//!
//! Supports exactly the layer kinds needed here: dense, 2-D convolution,
//! ReLU, softmax, inverted dropout, flatten, and max-pooling, with reverse-mode
//! gradients, binary cross-entropy loss, L2 regularization, and Adam. All
//! arithmetic is f64; eval-mode inference is a pure function of (spec, params,
//! input).

mod adam;
mod backward;
mod forward;
mod gradcheck;
mod init;
mod io;
mod loss;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use backward::backward;
pub use forward::{forward, RunMode};
pub use gradcheck::gradient_check;
pub use init::init_params;
pub use io::{load_params, load_spec, save_params, save_spec, PARAMS_MAGIC};
pub use loss::{bce_loss, l2_penalty, softmax, L2Scope, PROB_CLAMP};
pub use train::{train, TrainConfig, TrainOutcome, TrainSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn default_stride() -> usize {
    1
}

/// One layer of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv2d {
        filters: usize,
        kernel_size: usize,
        #[serde(default = "default_stride")]
        stride: usize,
    },
    Relu,
    Softmax,
    Dropout {
        rate: f64,
    },
    Flatten,
    MaxPool2d {
        window: usize,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
        }
    }

    fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }
}

/// Per-sample activation shape while walking a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationShape {
    /// Height x width x channels feature map.
    Map(usize, usize, usize),
    /// Flat vector.
    Vector(usize),
}

impl ActivationShape {
    pub fn element_count(&self) -> usize {
        match *self {
            ActivationShape::Map(h, w, c) => h * w * c,
            ActivationShape::Vector(n) => n,
        }
    }
}

/// A validated network description: input shape plus an ordered layer stack
/// ending in a single softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    input_shape: (usize, usize, usize),
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: (usize, usize, usize), layers: Vec<LayerSpec>) -> Result<NetworkSpec> {
        let spec = NetworkSpec {
            input_shape,
            layers,
        };
        spec.layer_shapes()?;
        Ok(spec)
    }

    /// (height, width, channels) of a single input sample.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn n_classes(&self) -> usize {
        match self.layer_shapes().expect("validated spec").last() {
            Some(ActivationShape::Vector(n)) => *n,
            _ => unreachable!("validated spec ends in softmax"),
        }
    }

    /// Output shape of every layer, validating the whole stack.
    pub fn layer_shapes(&self) -> Result<Vec<ActivationShape>> {
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Validation(format!(
                "input shape {:?} has a zero extent",
                self.input_shape
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::Validation("network has no layers".into()));
        }
        let softmax_positions: Vec<usize> = self
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Softmax))
            .map(|(i, _)| i)
            .collect();
        if softmax_positions != [self.layers.len() - 1] {
            return Err(Error::Validation(
                "network must contain exactly one softmax, in final position".into(),
            ));
        }

        let mut shape = ActivationShape::Map(h, w, c);
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            shape = propagate(shape, layer, idx)?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Per-sample shape of the input to each layer (element 0 is the network input).
    pub(crate) fn layer_input_shapes(&self) -> Result<Vec<ActivationShape>> {
        let (h, w, c) = self.input_shape;
        let mut input_shapes = vec![ActivationShape::Map(h, w, c)];
        let mut outputs = self.layer_shapes()?;
        outputs.pop();
        input_shapes.extend(outputs);
        Ok(input_shapes)
    }
}

fn shape_err(layer: usize, kind: &str, message: String) -> Error {
    Error::Shape {
        layer,
        kind: kind.to_string(),
        message,
    }
}

fn propagate(input: ActivationShape, layer: &LayerSpec, idx: usize) -> Result<ActivationShape> {
    let kind = layer.kind_name();
    match *layer {
        LayerSpec::Dense { units } => {
            if units == 0 {
                return Err(shape_err(idx, kind, "units must be positive".into()));
            }
            match input {
                ActivationShape::Vector(_) => Ok(ActivationShape::Vector(units)),
                ActivationShape::Map(..) => Err(shape_err(
                    idx,
                    kind,
                    format!("dense expects a flat vector, got {input:?}; insert a flatten layer"),
                )),
            }
        }
        LayerSpec::Conv2d {
            filters,
            kernel_size,
            stride,
        } => {
            if filters == 0 || kernel_size == 0 || stride == 0 {
                return Err(shape_err(
                    idx,
                    kind,
                    "filters, kernel_size and stride must be positive".into(),
                ));
            }
            match input {
                ActivationShape::Map(h, w, _) => {
                    if h < kernel_size || w < kernel_size {
                        return Err(shape_err(
                            idx,
                            kind,
                            format!("kernel {kernel_size} does not fit a {h}x{w} input"),
                        ));
                    }
                    let oh = (h - kernel_size) / stride + 1;
                    let ow = (w - kernel_size) / stride + 1;
                    Ok(ActivationShape::Map(oh, ow, filters))
                }
                ActivationShape::Vector(_) => Err(shape_err(
                    idx,
                    kind,
                    "conv2d expects a feature map, got a flat vector".into(),
                )),
            }
        }
        LayerSpec::Relu => Ok(input),
        LayerSpec::Dropout { rate } => {
            if !(0.0..1.0).contains(&rate) {
                return Err(shape_err(
                    idx,
                    kind,
                    format!("dropout rate {rate} outside [0, 1)"),
                ));
            }
            Ok(input)
        }
        LayerSpec::Flatten => Ok(ActivationShape::Vector(input.element_count())),
        LayerSpec::MaxPool2d { window } => {
            if window == 0 {
                return Err(shape_err(idx, kind, "window must be positive".into()));
            }
            match input {
                ActivationShape::Map(h, w, c) => {
                    if h < window || w < window {
                        return Err(shape_err(
                            idx,
                            kind,
                            format!("window {window} does not fit a {h}x{w} input"),
                        ));
                    }
                    Ok(ActivationShape::Map(h / window, w / window, c))
                }
                ActivationShape::Vector(_) => Err(shape_err(
                    idx,
                    kind,
                    "maxpool2d expects a feature map, got a flat vector".into(),
                )),
            }
        }
        LayerSpec::Softmax => match input {
            ActivationShape::Vector(n) if n >= 2 => Ok(ActivationShape::Vector(n)),
            other => Err(shape_err(
                idx,
                kind,
                format!("softmax expects a flat vector of >= 2 classes, got {other:?}"),
            )),
        },
    }
}

/// Weight and bias for one parametric layer.
///
/// Dense weights are `[in, out]` (output = input . W + b); conv kernels are
/// `[k, k, in_channels, filters]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All trainable parameters of a network, keyed by layer index.
///
/// Also used as the container for gradients and optimizer moments, which share
/// the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Option<LayerParams>>,
}

impl ModelParams {
    /// Zero-valued parameters shaped for `spec`.
    pub fn zeros_like(spec: &NetworkSpec) -> Result<ModelParams> {
        let input_shapes = spec.layer_input_shapes()?;
        let mut layers = Vec::with_capacity(spec.layers().len());
        for (idx, layer) in spec.layers().iter().enumerate() {
            layers.push(match *layer {
                LayerSpec::Dense { units } => {
                    let fan_in = input_shapes[idx].element_count();
                    Some(LayerParams {
                        weight: Tensor::zeros(&[fan_in, units]),
                        bias: Tensor::zeros(&[units]),
                    })
                }
                LayerSpec::Conv2d {
                    filters,
                    kernel_size,
                    ..
                } => {
                    let in_c = match input_shapes[idx] {
                        ActivationShape::Map(_, _, c) => c,
                        _ => unreachable!("validated conv input"),
                    };
                    Some(LayerParams {
                        weight: Tensor::zeros(&[kernel_size, kernel_size, in_c, filters]),
                        bias: Tensor::zeros(&[filters]),
                    })
                }
                _ => None,
            });
        }
        Ok(ModelParams { layers })
    }

    pub fn layer(&self, idx: usize) -> Option<&LayerParams> {
        self.layers.get(idx).and_then(|l| l.as_ref())
    }

    pub fn layer_mut(&mut self, idx: usize) -> Option<&mut LayerParams> {
        self.layers.get_mut(idx).and_then(|l| l.as_mut())
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Parametric layers in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &LayerParams)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.as_ref().map(|p| (i, p)))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (usize, &mut LayerParams)> {
        self.layers
            .iter_mut()
            .enumerate()
            .filter_map(|(i, l)| l.as_mut().map(|p| (i, p)))
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.iter()
            .map(|(_, p)| p.weight.len() + p.bias.len())
            .sum()
    }

    /// Error unless this container matches the shapes implied by `spec`.
    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        let reference = ModelParams::zeros_like(spec)?;
        if reference.layers.len() != self.layers.len() {
            return Err(Error::Validation(format!(
                "params cover {} layers, spec has {}",
                self.layers.len(),
                reference.layers.len()
            )));
        }
        for (idx, (got, want)) in self.layers.iter().zip(&reference.layers).enumerate() {
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => {
                    if g.weight.shape() != w.weight.shape() || g.bias.shape() != w.bias.shape() {
                        return Err(Error::Validation(format!(
                            "layer {idx} params have shape {:?}/{:?}, spec implies {:?}/{:?}",
                            g.weight.shape(),
                            g.bias.shape(),
                            w.weight.shape(),
                            w.bias.shape()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Validation(format!(
                        "layer {idx}: parametric mismatch between params and spec"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Per-layer auxiliary state captured by a forward pass.
#[derive(Debug, Clone)]
pub enum LayerAux {
    None,
    /// 0/1 dropout mask (1 = kept). Present only when dropout was active.
    DropoutMask(Tensor),
    /// Flat index into the layer input chosen by each pooled output element.
    PoolIndices(Vec<usize>),
}

/// Cached activations and stochastic state from one forward pass, as needed
/// for reverse-mode gradients and mask replay.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) layer_inputs: Vec<Tensor>,
    pub(crate) aux: Vec<LayerAux>,
    pub(crate) output: Tensor,
    pub(crate) batch: usize,
}

impl ForwardTrace {
    pub fn n_layers(&self) -> usize {
        self.layer_inputs.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Batched softmax output ([batch, classes]).
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    /// Dropout masks by layer index, for replay via [`RunMode::Frozen`].
    pub fn dropout_masks(&self) -> Vec<Option<Tensor>> {
        self.aux
            .iter()
            .map(|a| match a {
                LayerAux::DropoutMask(m) => Some(m.clone()),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classifier() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 4 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ]
    }

    #[test]
    fn shapes_propagate_through_a_conv_stack() {
        let spec = NetworkSpec::new(
            (16, 16, 3),
            vec![
                LayerSpec::Conv2d {
                    filters: 8,
                    kernel_size: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 2 },
                LayerSpec::Conv2d {
                    filters: 16,
                    kernel_size: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { window: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        let shapes = spec.layer_shapes().unwrap();
        assert_eq!(shapes[0], ActivationShape::Map(14, 14, 8));
        assert_eq!(shapes[2], ActivationShape::Map(7, 7, 8));
        assert_eq!(shapes[3], ActivationShape::Map(5, 5, 16));
        assert_eq!(shapes[5], ActivationShape::Map(2, 2, 16));
        assert_eq!(shapes[6], ActivationShape::Vector(64));
        assert_eq!(spec.n_classes(), 2);
    }

    #[test]
    fn softmax_must_be_single_and_final() {
        let err = NetworkSpec::new((2, 2, 1), vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2 }]);
        assert!(err.is_err());
        let err = NetworkSpec::new(
            (2, 2, 1),
            vec![
                LayerSpec::Flatten,
                LayerSpec::Softmax,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        );
        assert!(err.is_err());
    }

    #[test]
    fn invalid_layer_parameters_are_rejected() {
        let bad_dropout = NetworkSpec::new(
            (2, 2, 1),
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dropout { rate: 1.0 },
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        );
        assert!(bad_dropout.is_err());
        let bad_conv = NetworkSpec::new(
            (2, 2, 1),
            vec![
                LayerSpec::Conv2d {
                    filters: 1,
                    kernel_size: 3,
                    stride: 1,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        );
        match bad_conv {
            Err(Error::Shape { layer: 0, .. }) => {}
            other => panic!("expected shape error naming layer 0, got {other:?}"),
        }
    }

    #[test]
    fn dense_on_a_feature_map_names_the_layer() {
        let err = NetworkSpec::new(
            (4, 4, 1),
            vec![LayerSpec::Dense { units: 2 }, LayerSpec::Softmax],
        );
        match err {
            Err(Error::Shape { layer: 0, kind, .. }) => assert_eq!(kind, "dense"),
            other => panic!("expected dense shape error, got {other:?}"),
        }
    }

    #[test]
    fn zeros_like_matches_spec_shapes() {
        let spec = NetworkSpec::new((1, 1, 3), classifier()).unwrap();
        let params = ModelParams::zeros_like(&spec).unwrap();
        assert!(params.layer(0).is_none());
        let dense1 = params.layer(1).unwrap();
        assert_eq!(dense1.weight.shape(), &[3, 4]);
        assert_eq!(dense1.bias.shape(), &[4]);
        let dense2 = params.layer(4).unwrap();
        assert_eq!(dense2.weight.shape(), &[4, 2]);
        params.check_shapes(&spec).unwrap();
    }
}
