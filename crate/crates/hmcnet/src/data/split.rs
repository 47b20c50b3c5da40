//! Stratified train/test splitting, by patient or by image.

use std::collections::HashMap;

use crate::data::{Dataset, SubtypeLabel};
use crate::error::{Error, Result};
use crate::seed::{derive, SeedStream, Stream};

/// The unit a split keeps together on one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// All images of a patient stay on the same side (default; CC/MLO pairs
    /// would otherwise leak across the split).
    ByPatient,
    /// Every image is its own unit.
    ByImage,
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Dataset,
    pub test: Dataset,
    /// Stratification notes, e.g. a class with a single unit.
    pub warnings: Vec<String>,
}

/// Disjoint, exhaustive, label-stratified split. Units of each class are
/// shuffled by a per-class stream derived from `seed`, and the train side
/// receives `round(train_fraction * units)` of them, clamped so that any class
/// with at least two units appears on both sides. Record order is preserved
/// within each side.
pub fn split(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
    grouping: Grouping,
) -> Result<SplitResult> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Validation("cannot split an empty dataset".into()));
    }
    if dataset.records().iter().any(|r| r.synthetic || r.duplicate) {
        return Err(Error::Validation(
            "dataset contains resampled records; split the original data before rebalancing"
                .into(),
        ));
    }

    // Units in first-appearance order, each with the majority label of its
    // records (ties go to the first-seen label).
    let mut unit_of_record = Vec::with_capacity(dataset.len());
    let mut unit_keys: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut unit_label_counts: Vec<[usize; 3]> = Vec::new();
    for (i, record) in dataset.records().iter().enumerate() {
        let key = match grouping {
            Grouping::ByPatient => record.patient_id.clone(),
            Grouping::ByImage => format!("record-{i}"),
        };
        let idx = *unit_index.entry(key.clone()).or_insert_with(|| {
            unit_keys.push(key);
            unit_label_counts.push([0; 3]);
            unit_keys.len() - 1
        });
        unit_label_counts[idx][record.label.index()] += 1;
        unit_of_record.push(idx);
    }
    let unit_labels: Vec<usize> = unit_label_counts
        .iter()
        .map(|counts| {
            let mut best = 0;
            for c in 1..3 {
                if counts[c] > counts[best] {
                    best = c;
                }
            }
            best
        })
        .collect();

    let mut warnings = Vec::new();
    let mut to_train = vec![false; unit_keys.len()];
    for class in 0..3 {
        let mut units: Vec<usize> = (0..unit_keys.len())
            .filter(|&u| unit_labels[u] == class)
            .collect();
        if units.is_empty() {
            continue;
        }
        let mut rng = SeedStream::new(derive(seed, Stream::Split, class as u64));
        rng.shuffle(&mut units);

        let n = units.len();
        let mut n_train = (train_fraction * n as f64).round() as usize;
        if n == 1 {
            warnings.push(format!(
                "class {} has a single {} unit; it was assigned to the train side",
                SubtypeLabel::from_index(class).expect("class index").name(),
                match grouping {
                    Grouping::ByPatient => "patient",
                    Grouping::ByImage => "image",
                }
            ));
            n_train = 1;
        } else {
            n_train = n_train.clamp(1, n - 1);
        }
        for &u in &units[..n_train] {
            to_train[u] = true;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (record, &unit) in dataset.records().iter().zip(&unit_of_record) {
        if to_train[unit] {
            train.push(record.clone());
        } else {
            test.push(record.clone());
        }
    }
    Ok(SplitResult {
        train: Dataset::from_records(train),
        test: Dataset::from_records(test),
        warnings,
    })
}
