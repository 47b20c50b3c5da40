//! On-the-fly augmentation: random rotation plus horizontal/vertical flips.

use serde::{Deserialize, Serialize};

use crate::data::image::sample_bilinear;
use crate::error::{Error, Result};
use crate::seed::SeedStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Rotation range in degrees; must be symmetric around 0 and inside
    /// (-180, 180). The angle is sampled uniformly from it.
    pub rotation_degrees: (f64, f64),
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_degrees: (-90.0, 90.0),
            horizontal_flip: true,
            vertical_flip: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rotation_degrees;
        if lo != -hi || !(0.0..180.0).contains(&hi) {
            return Err(Error::Validation(format!(
                "rotation range must be symmetric inside (-180, 180), got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Apply one random rotation (bilinear resample, edges replicated) and each
/// enabled flip with probability 1/2. A sampled angle of exactly 0 leaves the
/// pixels untouched.
pub fn augment(image: &Tensor, config: &AugmentConfig, rng: &mut SeedStream) -> Result<Tensor> {
    config.validate()?;
    if image.rank() != 3 {
        return Err(Error::Validation(format!(
            "augment expects an H x W x C tensor, got shape {:?}",
            image.shape()
        )));
    }
    let (lo, hi) = config.rotation_degrees;
    let angle = rng.range_f64(lo, hi);
    let mut out = if angle == 0.0 {
        image.clone()
    } else {
        rotate_bilinear(image, angle)
    };
    if config.horizontal_flip && rng.bernoulli(0.5) {
        out = flip_horizontal(&out);
    }
    if config.vertical_flip && rng.bernoulli(0.5) {
        out = flip_vertical(&out);
    }
    Ok(out)
}

/// Rotate counterclockwise by `degrees` about the image center. Each output
/// pixel samples the source bilinearly; coordinates outside the image clamp to
/// the nearest edge pixel. Values are clamped to [0, 1].
pub fn rotate_bilinear(image: &Tensor, degrees: f64) -> Tensor {
    let (h, w, c) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = Tensor::zeros(image.shape());
    let src = image.data();
    let dst = out.data_mut();
    let mut plane = vec![0.0f64; h * w];
    for ch in 0..c {
        for (i, p) in plane.iter_mut().enumerate() {
            *p = src[i * c + ch];
        }
        for r in 0..h {
            let y = r as f64 - cy;
            for col in 0..w {
                let x = col as f64 - cx;
                let xs = cos * x - sin * y;
                let ys = sin * x + cos * y;
                let v = sample_bilinear(&plane, h, w, ys + cy, xs + cx);
                dst[(r * w + col) * c + ch] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Mirror left-right (exact).
pub fn flip_horizontal(image: &Tensor) -> Tensor {
    let (h, w, c) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let mut out = Tensor::zeros(image.shape());
    let src = image.data();
    let dst = out.data_mut();
    for r in 0..h {
        for col in 0..w {
            let from = (r * w + col) * c;
            let to = (r * w + (w - 1 - col)) * c;
            dst[to..to + c].copy_from_slice(&src[from..from + c]);
        }
    }
    out
}

/// Mirror top-bottom (exact).
pub fn flip_vertical(image: &Tensor) -> Tensor {
    let (h, w, c) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let mut out = Tensor::zeros(image.shape());
    let src = image.data();
    let dst = out.data_mut();
    for r in 0..h {
        let from = r * w * c;
        let to = (h - 1 - r) * w * c;
        dst[to..to + w * c].copy_from_slice(&src[from..from + w * c]);
    }
    out
}
