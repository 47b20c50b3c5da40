//! Image loading and preprocessing: grayscale PNG/PGM in, normalized
//! `H x W x 3` tensors out.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Decoded grayscale image. 8-bit pixels are widened into the u16 buffer.
#[derive(Debug, Clone)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
    pub bit_depth: BitDepth,
}

/// Decode an 8- or 16-bit grayscale PNG or PGM file.
pub fn load_image(path: &Path) -> Result<RawImage> {
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other}", path.display())),
    })?;
    match decoded {
        image::DynamicImage::ImageLuma8(img) => Ok(RawImage {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.into_raw().into_iter().map(u16::from).collect(),
            bit_depth: BitDepth::Eight,
        }),
        image::DynamicImage::ImageLuma16(img) => Ok(RawImage {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.into_raw(),
            bit_depth: BitDepth::Sixteen,
        }),
        other => Err(Error::Validation(format!(
            "{}: expected 8- or 16-bit grayscale, got {:?} pixels",
            path.display(),
            other.color()
        ))),
    }
}

/// Resize to `target` (bilinear, align-corners, no aspect preservation),
/// normalize by the bit-depth maximum, and replicate the grayscale plane
/// across 3 channels. Output values are in [0, 1].
pub fn preprocess(image: &RawImage, target: (usize, usize)) -> Result<Tensor> {
    let (th, tw) = target;
    if image.width == 0 || image.height == 0 {
        return Err(Error::Validation("zero-sized source image".into()));
    }
    if th == 0 || tw == 0 {
        return Err(Error::Validation("zero-sized preprocessing target".into()));
    }
    if image.pixels.len() != image.width * image.height {
        return Err(Error::Validation(format!(
            "pixel buffer holds {} values for a {}x{} image",
            image.pixels.len(),
            image.width,
            image.height
        )));
    }
    let max = image.bit_depth.max_value();
    let plane: Vec<f64> = image.pixels.iter().map(|&p| f64::from(p) / max).collect();
    let resized = bilinear_resize(&plane, (image.height, image.width), (th, tw));

    let mut out = Tensor::zeros(&[th, tw, 3]);
    let data = out.data_mut();
    for (i, &v) in resized.iter().enumerate() {
        data[3 * i] = v;
        data[3 * i + 1] = v;
        data[3 * i + 2] = v;
    }
    Ok(out)
}

/// Map a destination coordinate to the source grid (align-corners).
fn source_coord(dst: usize, dst_len: usize, src_len: usize) -> f64 {
    if dst_len == 1 {
        (src_len - 1) as f64 / 2.0
    } else {
        dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
    }
}

/// Bilinear resize of one `src` plane (row-major, `from` = (h, w)).
pub(crate) fn bilinear_resize(
    src: &[f64],
    from: (usize, usize),
    to: (usize, usize),
) -> Vec<f64> {
    let (sh, sw) = from;
    let (th, tw) = to;
    let mut out = vec![0.0f64; th * tw];
    for r in 0..th {
        let y = source_coord(r, th, sh);
        for c in 0..tw {
            let x = source_coord(c, tw, sw);
            out[r * tw + c] = sample_bilinear(src, sh, sw, y, x);
        }
    }
    out
}

/// Sample `src` at fractional (y, x) with edge clamping.
pub(crate) fn sample_bilinear(src: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
    let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(width: usize, height: usize, pixels: Vec<u16>, bit_depth: BitDepth) -> RawImage {
        RawImage {
            width,
            height,
            pixels,
            bit_depth,
        }
    }

    #[test]
    fn constant_white_maps_to_ones() {
        let img = raw(5, 3, vec![255; 15], BitDepth::Eight);
        let out = preprocess(&img, (4, 4)).unwrap();
        assert_eq!(out.shape(), &[4, 4, 3]);
        assert!(out.data().iter().all(|&v| v == 1.0));

        let img16 = raw(2, 2, vec![65535; 4], BitDepth::Sixteen);
        let out16 = preprocess(&img16, (2, 2)).unwrap();
        assert!(out16.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn identity_resize_only_rescales_values() {
        let img = raw(2, 2, vec![0, 51, 102, 204], BitDepth::Eight);
        let out = preprocess(&img, (2, 2)).unwrap();
        let expected = [0.0, 51.0 / 255.0, 102.0 / 255.0, 204.0 / 255.0];
        for (i, &e) in expected.iter().enumerate() {
            for ch in 0..3 {
                assert_eq!(out.data()[3 * i + ch], e);
            }
        }
    }

    #[test]
    fn upsample_center_matches_hand_bilinear() {
        // 2x2 [[0,100],[100,200]] -> 3x3 align-corners: center = mean of the
        // four corners = 100, normalized 100/255.
        let img = raw(2, 2, vec![0, 100, 100, 200], BitDepth::Eight);
        let out = preprocess(&img, (3, 3)).unwrap();
        let center = out.data()[3 * (3 * 1 + 1)];
        assert!((center - 100.0 / 255.0).abs() < 1e-12);
        // Corners are preserved exactly under align-corners.
        assert_eq!(out.data()[0], 0.0);
        assert!((out.data()[3 * 2] - 100.0 / 255.0).abs() < 1e-12);
        assert!((out.data()[3 * 8] - 200.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn zero_sized_inputs_are_rejected() {
        let img = raw(0, 3, vec![], BitDepth::Eight);
        assert!(preprocess(&img, (4, 4)).is_err());
        let ok = raw(2, 2, vec![0; 4], BitDepth::Eight);
        assert!(preprocess(&ok, (0, 4)).is_err());
    }

    proptest! {
        #[test]
        fn output_stays_in_unit_interval(
            pixels in proptest::collection::vec(0u16..=255, 16),
            th in 1usize..8,
            tw in 1usize..8,
        ) {
            let img = raw(4, 4, pixels, BitDepth::Eight);
            let out = preprocess(&img, (th, tw)).unwrap();
            prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
