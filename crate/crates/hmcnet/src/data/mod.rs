//! Dataset records, labels, and materialization to tensors.

mod augment;
mod image;
mod manifest;
mod resample;
mod split;

pub use augment::{augment, flip_horizontal, flip_vertical, rotate_bilinear, AugmentConfig};
pub use image::{load_image, preprocess, BitDepth, RawImage};
pub use manifest::{load_manifest, write_manifest};
pub use resample::{adasyn, random_oversample, rebalance, RebalancePolicy};
pub use split::{split, Grouping, SplitResult};

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The three target classes, in the fixed order used everywhere downstream
/// (composed distributions, confusion matrices, tie-breaking).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubtypeLabel {
    TripleNegative,
    Luminal,
    Her2Enriched,
}

impl SubtypeLabel {
    pub const ALL: [SubtypeLabel; 3] = [
        SubtypeLabel::TripleNegative,
        SubtypeLabel::Luminal,
        SubtypeLabel::Her2Enriched,
    ];

    pub fn index(self) -> usize {
        match self {
            SubtypeLabel::TripleNegative => 0,
            SubtypeLabel::Luminal => 1,
            SubtypeLabel::Her2Enriched => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<SubtypeLabel> {
        SubtypeLabel::ALL.get(index).copied()
    }

    /// The exact strings used in manifests and reports.
    pub fn name(self) -> &'static str {
        match self {
            SubtypeLabel::TripleNegative => "TN",
            SubtypeLabel::Luminal => "Luminal",
            SubtypeLabel::Her2Enriched => "HER2",
        }
    }

    pub fn parse(text: &str) -> Option<SubtypeLabel> {
        match text {
            "TN" => Some(SubtypeLabel::TripleNegative),
            "Luminal" => Some(SubtypeLabel::Luminal),
            "HER2" => Some(SubtypeLabel::Her2Enriched),
            _ => None,
        }
    }
}

impl fmt::Display for SubtypeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mammographic projection of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum View {
    Cc,
    Mlo,
    Unknown,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::Cc => "CC",
            View::Mlo => "MLO",
            View::Unknown => "unknown",
        }
    }

    pub fn parse(text: &str) -> Option<View> {
        match text {
            "CC" => Some(View::Cc),
            "MLO" => Some(View::Mlo),
            "unknown" => Some(View::Unknown),
            _ => None,
        }
    }
}

/// Where a sample's pixels come from: a file on disk or an in-memory tensor
/// (synthetic ADASYN interpolants are embedded directly).
#[derive(Debug, Clone)]
pub enum ImageSource {
    Path(PathBuf),
    Embedded(Tensor),
}

#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub image: ImageSource,
    pub label: SubtypeLabel,
    pub patient_id: String,
    pub view: View,
    /// ADASYN-generated interpolant.
    pub synthetic: bool,
    /// Extra copy produced by random oversampling.
    pub duplicate: bool,
}

impl SampleRecord {
    pub fn from_path(
        path: impl Into<PathBuf>,
        label: SubtypeLabel,
        patient_id: impl Into<String>,
        view: View,
    ) -> SampleRecord {
        SampleRecord {
            image: ImageSource::Path(path.into()),
            label,
            patient_id: patient_id.into(),
            view,
            synthetic: false,
            duplicate: false,
        }
    }
}

/// An ordered collection of records with cached per-class counts.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    records: Vec<SampleRecord>,
    counts: [usize; 3],
}

impl Dataset {
    pub fn from_records(records: Vec<SampleRecord>) -> Dataset {
        let mut counts = [0usize; 3];
        for r in &records {
            counts[r.label.index()] += 1;
        }
        Dataset { records, counts }
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cached counts indexed by [`SubtypeLabel::index`].
    pub fn class_counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn count_of(&self, label: SubtypeLabel) -> usize {
        self.counts[label.index()]
    }

    pub fn labels(&self) -> impl Iterator<Item = SubtypeLabel> + '_ {
        self.records.iter().map(|r| r.label)
    }
}

/// Load a record's pixels as a preprocessed `target.0 x target.1 x 3` tensor
/// in [0, 1]. Embedded tensors must already have that shape.
pub fn materialize(record: &SampleRecord, target: (usize, usize)) -> Result<Tensor> {
    match &record.image {
        ImageSource::Path(path) => {
            let raw = load_image(path)?;
            preprocess(&raw, target)
        }
        ImageSource::Embedded(tensor) => {
            if tensor.shape() != [target.0, target.1, 3] {
                return Err(Error::Validation(format!(
                    "embedded tensor has shape {:?}, expected {:?}; was the target size changed after rebalancing?",
                    tensor.shape(),
                    (target.0, target.1, 3)
                )));
            }
            Ok(tensor.clone())
        }
    }
}

/// Materialize every record of a dataset in order.
pub fn materialize_all(dataset: &Dataset, target: (usize, usize)) -> Result<Vec<Tensor>> {
    dataset
        .records()
        .iter()
        .map(|r| materialize(r, target))
        .collect()
}
