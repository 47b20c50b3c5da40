//! Weight initialization: He-normal before ReLU, Glorot-uniform otherwise.

use crate::error::Result;
use crate::seed::{derive, SeedStream, Stream};

use super::{ActivationShape, LayerSpec, ModelParams, NetworkSpec};

/// Deterministically initialize parameters for `spec`.
///
/// Weights of layers whose activation path reaches a ReLU before the next
/// parametric layer are drawn He-normal (std = sqrt(2 / fan_in)); all other
/// weights are Glorot-uniform. Biases are zero.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ModelParams> {
    let input_shapes = spec.layer_input_shapes()?;
    let mut params = ModelParams::zeros_like(spec)?;
    let mut rng = SeedStream::new(derive(seed, Stream::Init, 0));

    for (idx, layer) in spec.layers().iter().enumerate() {
        let (fan_in, fan_out) = match *layer {
            LayerSpec::Dense { units } => (input_shapes[idx].element_count(), units),
            LayerSpec::Conv2d {
                filters,
                kernel_size,
                ..
            } => {
                let in_c = match input_shapes[idx] {
                    ActivationShape::Map(_, _, c) => c,
                    _ => unreachable!("validated conv input"),
                };
                (
                    kernel_size * kernel_size * in_c,
                    kernel_size * kernel_size * filters,
                )
            }
            _ => continue,
        };
        let weight = &mut params.layer_mut(idx).expect("parametric layer").weight;
        if feeds_relu(spec.layers(), idx) {
            let std = (2.0 / fan_in as f64).sqrt();
            for w in weight.data_mut() {
                *w = std * rng.normal();
            }
        } else {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in weight.data_mut() {
                *w = rng.range_f64(-limit, limit);
            }
        }
    }
    Ok(params)
}

/// True when a ReLU follows layer `idx` before the next parametric layer or
/// the softmax head.
fn feeds_relu(layers: &[LayerSpec], idx: usize) -> bool {
    for layer in &layers[idx + 1..] {
        match layer {
            LayerSpec::Relu => return true,
            LayerSpec::Softmax => return false,
            l if l.has_params() => return false,
            _ => {}
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn spec_with_wide_dense() -> NetworkSpec {
        NetworkSpec::new(
            (1, 1, 200),
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 50 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap()
    }

    #[test]
    fn same_seed_gives_bit_identical_params() {
        let spec = spec_with_wide_dense();
        let a = init_params(&spec, 7).unwrap();
        let b = init_params(&spec, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn biases_are_exactly_zero() {
        let spec = spec_with_wide_dense();
        let params = init_params(&spec, 3).unwrap();
        for (_, layer) in params.iter() {
            assert!(layer.bias.data().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn he_std_matches_fan_in_formula() {
        // fan_in = 200, 200 x 50 = 10000 weight samples; std should be within
        // 10% of sqrt(2/200) = 0.1.
        let spec = spec_with_wide_dense();
        let params = init_params(&spec, 42).unwrap();
        let w = params.layer(1).unwrap().weight.data();
        assert_eq!(w.len(), 10_000);
        let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
        let var: f64 = w.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64;
        let std = var.sqrt();
        let expected = (2.0f64 / 200.0).sqrt();
        assert!(
            (std - expected).abs() < 0.1 * expected,
            "std {std} vs expected {expected}"
        );
    }

    #[test]
    fn glorot_weights_stay_within_limit() {
        // The final dense layer feeds the softmax, so it is Glorot-uniform.
        let spec = spec_with_wide_dense();
        let params = init_params(&spec, 21).unwrap();
        let w = params.layer(3).unwrap().weight.data();
        let limit = (6.0f64 / (50 + 2) as f64).sqrt();
        assert!(w.iter().all(|&v| v.abs() <= limit));
        assert!(w.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn relu_detection_skips_nonparametric_layers() {
        let layers = vec![
            LayerSpec::Dense { units: 4 },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ];
        assert!(feeds_relu(&layers, 0));
        assert!(!feeds_relu(&layers, 3));
    }
}
