//! Class rebalancing: ADASYN interpolation for the triple-negative class and
//! random oversampling for HER2-enriched, both up to the luminal count.

use crate::data::{
    materialize_all, Dataset, ImageSource, SampleRecord, SubtypeLabel, View,
};
use crate::error::{Error, Result};
use crate::seed::{derive, SeedStream, Stream};
use crate::tensor::Tensor;

/// ADASYN over flattened feature vectors.
///
/// For each minority point the share of majority neighbors among its `k`
/// nearest neighbors in the combined set decides how many synthetics it
/// spawns (largest-remainder rounding makes the total exactly
/// `target_count - |minority|`). Each synthetic is `x + lambda * (z - x)` with
/// `lambda ~ U[0, 1)` and `z` drawn uniformly from the point's `k` nearest
/// minority neighbors. Distances are exact Euclidean.
pub fn adasyn(
    minority: &[Vec<f64>],
    majority: &[Vec<f64>],
    k: usize,
    target_count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if minority.len() < 2 {
        return Err(Error::Validation(format!(
            "ADASYN needs at least 2 minority samples, got {}",
            minority.len()
        )));
    }
    if target_count < minority.len() {
        return Err(Error::Validation(format!(
            "target_count {target_count} is below the minority count {}",
            minority.len()
        )));
    }
    let combined_len = minority.len() + majority.len();
    if k == 0 || k >= combined_len {
        return Err(Error::Validation(format!(
            "k must satisfy 0 < k < {combined_len}, got {k}"
        )));
    }
    let dim = minority[0].len();
    if minority
        .iter()
        .chain(majority.iter())
        .any(|v| v.len() != dim)
    {
        return Err(Error::Validation(
            "all feature vectors must have the same dimension".into(),
        ));
    }

    let extra = target_count - minority.len();
    if extra == 0 {
        return Ok(Vec::new());
    }

    // Majority share among each minority point's k nearest combined neighbors.
    let mut ratios = Vec::with_capacity(minority.len());
    for (i, x) in minority.iter().enumerate() {
        let mut dists: Vec<(f64, usize)> = Vec::with_capacity(combined_len - 1);
        for (j, other) in minority.iter().enumerate() {
            if j != i {
                dists.push((euclidean(x, other), j));
            }
        }
        for (j, other) in majority.iter().enumerate() {
            dists.push((euclidean(x, other), minority.len() + j));
        }
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let majority_neighbors = dists[..k]
            .iter()
            .filter(|&&(_, idx)| idx >= minority.len())
            .count();
        ratios.push(majority_neighbors as f64 / k as f64);
    }

    let total: f64 = ratios.iter().sum();
    let normalized: Vec<f64> = if total == 0.0 {
        vec![1.0 / minority.len() as f64; minority.len()]
    } else {
        ratios.iter().map(|r| r / total).collect()
    };
    let per_point = largest_remainder(&normalized, extra);

    // k nearest minority-only neighbors of each spawning point.
    let k_minority = k.min(minority.len() - 1);
    let mut rng = SeedStream::new(derive(seed, Stream::Adasyn, 0));
    let mut synthetics = Vec::with_capacity(extra);
    for (i, &count) in per_point.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let x = &minority[i];
        let mut dists: Vec<(f64, usize)> = minority
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, other)| (euclidean(x, other), j))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let neighbors: Vec<usize> = dists[..k_minority].iter().map(|&(_, j)| j).collect();

        for _ in 0..count {
            let z = &minority[neighbors[rng.index(neighbors.len())]];
            let lambda = rng.next_f64();
            let s: Vec<f64> = x
                .iter()
                .zip(z)
                .map(|(&a, &b)| a + lambda * (b - a))
                .collect();
            synthetics.push(s);
        }
    }
    Ok(synthetics)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Integer quotas `floor(share * total)` topped up to exactly `total` by
/// descending fractional remainder (ties to the lower index).
fn largest_remainder(shares: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|&q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).expect("finite remainders").then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Uniform-with-replacement duplication up to `target_count`. The output
/// contains every original exactly once (in order) followed by the duplicates,
/// each flagged `duplicate = true`.
pub fn random_oversample(
    samples: &[SampleRecord],
    target_count: usize,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    if samples.is_empty() {
        return Err(Error::Validation("cannot oversample an empty class".into()));
    }
    if target_count < samples.len() {
        return Err(Error::Validation(format!(
            "target_count {target_count} is below the sample count {}",
            samples.len()
        )));
    }
    let mut out = samples.to_vec();
    let mut rng = SeedStream::new(derive(seed, Stream::Oversample, 0));
    for _ in 0..target_count - samples.len() {
        let mut copy = samples[rng.index(samples.len())].clone();
        copy.duplicate = true;
        out.push(copy);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RebalancePolicy {
    /// Neighborhood size for ADASYN.
    pub adasyn_k: usize,
}

impl Default for RebalancePolicy {
    fn default() -> Self {
        RebalancePolicy { adasyn_k: 5 }
    }
}

/// Bring the training set to equal class counts: triple-negative is raised by
/// ADASYN over flattened preprocessed pixels, HER2-enriched by random
/// oversampling, both to the luminal count. Classes at or above the luminal
/// count are left alone. Output order: originals, then HER2 duplicates, then
/// TN synthetics.
pub fn rebalance(
    train: &Dataset,
    policy: &RebalancePolicy,
    target_size: (usize, usize),
    seed: u64,
) -> Result<Dataset> {
    let counts = train.class_counts();
    let target = counts[SubtypeLabel::Luminal.index()];
    let tn_count = counts[SubtypeLabel::TripleNegative.index()];
    let her2_count = counts[SubtypeLabel::Her2Enriched.index()];

    let mut records = train.records().to_vec();

    if her2_count > 0 && her2_count < target {
        let her2: Vec<SampleRecord> = train
            .records()
            .iter()
            .filter(|r| r.label == SubtypeLabel::Her2Enriched)
            .cloned()
            .collect();
        let oversampled =
            random_oversample(&her2, target, derive(seed, Stream::Rebalance, 1))?;
        records.extend(oversampled.into_iter().skip(her2.len()));
    }

    if tn_count > 0 && tn_count < target {
        if tn_count < 2 {
            return Err(Error::Validation(
                "rebalance needs at least 2 TN samples to interpolate between".into(),
            ));
        }
        let features = materialize_all(train, target_size)?;
        let mut minority = Vec::new();
        let mut majority = Vec::new();
        for (record, tensor) in train.records().iter().zip(features) {
            if record.label == SubtypeLabel::TripleNegative {
                minority.push(tensor.into_data());
            } else {
                majority.push(tensor.into_data());
            }
        }
        let k = policy.adasyn_k.min(minority.len() + majority.len() - 1);
        let synthetics = adasyn(
            &minority,
            &majority,
            k,
            target,
            derive(seed, Stream::Rebalance, 0),
        )?;
        for (i, features) in synthetics.into_iter().enumerate() {
            let tensor = Tensor::from_vec(vec![target_size.0, target_size.1, 3], features)?;
            records.push(SampleRecord {
                image: ImageSource::Embedded(tensor),
                label: SubtypeLabel::TripleNegative,
                patient_id: format!("synthetic-tn-{i:04}"),
                view: View::Unknown,
                synthetic: true,
                duplicate: false,
            });
        }
    }

    Ok(Dataset::from_records(records))
}
