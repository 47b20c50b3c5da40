//! Procedural three-class grayscale dataset: one fixed shape motif per class
//! plus seeded per-pixel noise, written as 8-bit PGM files with a manifest.
//!
//! The motifs are a filled disk (TN), a flat mid-gray field (Luminal), and a
//! ring (HER2). They are rotation-invariant, so heavy rotation augmentation
//! does not blur the class boundaries, and at noise 0 every image equals its
//! class template exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{write_manifest, Dataset, SampleRecord, SubtypeLabel, View};
use crate::error::{Error, Result};
use crate::seed::{derive, SeedStream, Stream};
use crate::tensor::Tensor;

fn default_side() -> usize {
    16
}
fn default_noise() -> f64 {
    0.1
}

/// Per-class image counts plus image geometry and noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Images per class; consecutive pairs share a patient (CC then MLO).
    pub tn: usize,
    pub luminal: usize,
    pub her2: usize,
    /// Square image side in pixels.
    #[serde(default = "default_side")]
    pub side: usize,
    /// Uniform noise amplitude added to the template (in [0, 1] pixel units).
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side < 4 {
            return Err(Error::Config(format!(
                "synthetic image side must be >= 4, got {}",
                self.side
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!(
                "noise level must be in [0, 1], got {}",
                self.noise
            )));
        }
        if self.tn + self.luminal + self.her2 == 0 {
            return Err(Error::Config("no images requested".into()));
        }
        Ok(())
    }

    pub fn count_of(&self, label: SubtypeLabel) -> usize {
        match label {
            SubtypeLabel::TripleNegative => self.tn,
            SubtypeLabel::Luminal => self.luminal,
            SubtypeLabel::Her2Enriched => self.her2,
        }
    }
}

const BG: u8 = 51; // 0.2 in 8-bit units
const FG: u8 = 204; // 0.8
const MID: u8 = 128;

/// The exact 8-bit pixel grid every image of `label` is built from.
pub fn class_template(label: SubtypeLabel, side: usize) -> Vec<u8> {
    let center = (side as f64 - 1.0) / 2.0;
    let mut pixels = vec![BG; side * side];
    match label {
        SubtypeLabel::TripleNegative => {
            // Filled disk.
            let radius = 0.35 * side as f64;
            for r in 0..side {
                for c in 0..side {
                    let d = ((r as f64 - center).powi(2) + (c as f64 - center).powi(2)).sqrt();
                    if d <= radius {
                        pixels[r * side + c] = FG;
                    }
                }
            }
        }
        SubtypeLabel::Luminal => {
            // Flat field.
            pixels.fill(MID);
        }
        SubtypeLabel::Her2Enriched => {
            // Ring.
            let inner = 0.25 * side as f64;
            let outer = 0.45 * side as f64;
            for r in 0..side {
                for c in 0..side {
                    let d = ((r as f64 - center).powi(2) + (c as f64 - center).powi(2)).sqrt();
                    if d >= inner && d <= outer {
                        pixels[r * side + c] = FG;
                    }
                }
            }
        }
    }
    pixels
}

/// Add uniform noise `level * U(-1, 1)` per value, clamped to [0, 1].
pub fn add_noise(image: &Tensor, level: f64, seed: u64) -> Tensor {
    let mut rng = SeedStream::new(derive(seed, Stream::Noise, 0));
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = (*v + level * rng.range_f64(-1.0, 1.0)).clamp(0.0, 1.0);
    }
    out
}

fn noisy_pixels(template: &[u8], level: f64, seed: u64) -> Vec<u8> {
    let mut rng = SeedStream::new(derive(seed, Stream::Noise, 0));
    template
        .iter()
        .map(|&t| {
            let v = f64::from(t) / 255.0 + level * rng.range_f64(-1.0, 1.0);
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect()
}

/// 8-bit binary PGM (P5).
fn write_pgm(path: &Path, side: usize, pixels: &[u8]) -> Result<()> {
    let mut bytes = format!("P5\n{side} {side}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Generate the dataset under `dir` and return the manifest path.
///
/// Images are named `{label}_{i:04}.pgm`; images 2k and 2k+1 of a class share
/// patient `{label}{k:04}` with views CC and MLO. Byte-identical across runs
/// with the same config.
pub fn generate(config: &SyntheticConfig, dir: &Path) -> Result<PathBuf> {
    config.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut records = Vec::new();
    for label in SubtypeLabel::ALL {
        let template = class_template(label, config.side);
        let class_seed = derive(config.seed, Stream::Generator, label.index() as u64);
        for i in 0..config.count_of(label) {
            let pixels = if config.noise == 0.0 {
                template.clone()
            } else {
                noisy_pixels(&template, config.noise, derive(class_seed, Stream::Generator, i as u64))
            };
            let name = format!("{}_{i:04}.pgm", label.name().to_lowercase());
            write_pgm(&dir.join(&name), config.side, &pixels)?;
            records.push(SampleRecord::from_path(
                dir.join(&name),
                label,
                format!("{}{:04}", label.name(), i / 2),
                if i % 2 == 0 { View::Cc } else { View::Mlo },
            ));
        }
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&Dataset::from_records(records), &manifest)?;
    Ok(manifest)
}
