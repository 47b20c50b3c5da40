//! Classification metrics: confusion matrices, precision/recall/F1, macro
//! averages, and one-vs-rest ROC curves with trapezoidal AUC.

mod report;

pub use report::{aggregate, evaluate, ClassMetrics, Evaluation, MacroMetrics, MetricsReport};

use std::io::Write;

use crate::error::{Error, Result};

/// Integer counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// Tally `counts[truth][prediction]` over equal-length label sequences.
    pub fn from_labels(
        predictions: &[usize],
        truths: &[usize],
        n_classes: usize,
    ) -> Result<ConfusionMatrix> {
        if predictions.len() != truths.len() {
            return Err(Error::Validation(format!(
                "{} predictions but {} truths",
                predictions.len(),
                truths.len()
            )));
        }
        if n_classes == 0 {
            return Err(Error::Validation("need at least one class".into()));
        }
        let mut counts = vec![0u64; n_classes * n_classes];
        for (&pred, &truth) in predictions.iter().zip(truths) {
            if pred >= n_classes || truth >= n_classes {
                return Err(Error::Validation(format!(
                    "label out of range: pred {pred}, truth {truth}, classes {n_classes}"
                )));
            }
            counts[truth * n_classes + pred] += 1;
        }
        Ok(ConfusionMatrix {
            n: n_classes,
            counts,
        })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<ConfusionMatrix> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            n,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n).map(|c| c.to_vec()).collect()
    }

    pub fn write_csv<W: Write>(&self, classes: &[String], mut out: W) -> std::io::Result<()> {
        write!(out, "true\\pred")?;
        for c in classes {
            write!(out, ",{c}")?;
        }
        writeln!(out)?;
        for (i, row) in self.counts.chunks(self.n).enumerate() {
            write!(out, "{}", classes[i])?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// One-vs-rest reduction of a confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

pub fn binary_counts(matrix: &ConfusionMatrix, positive_class: usize) -> BinaryCounts {
    assert!(positive_class < matrix.n, "class index out of range");
    let c = positive_class;
    let tp = matrix.get(c, c);
    let fn_: u64 = (0..matrix.n).map(|j| matrix.get(c, j)).sum::<u64>() - tp;
    let fp: u64 = (0..matrix.n).map(|i| matrix.get(i, c)).sum::<u64>() - tp;
    let tn = matrix.total() - tp - fn_ - fp;
    BinaryCounts {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    }
}

/// Precision, recall, and F1 with explicit degenerate-case flags: a zero
/// denominator yields 0 and sets the matching `*_undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

pub fn prf(counts: BinaryCounts) -> Prf {
    let tp = counts.true_positives as f64;
    let fp = counts.false_positives as f64;
    let fn_ = counts.false_negatives as f64;

    let precision_undefined = tp + fp == 0.0;
    let recall_undefined = tp + fn_ == 0.0;
    let f1_undefined = 2.0 * tp + fp + fn_ == 0.0;
    Prf {
        precision: if precision_undefined { 0.0 } else { tp / (tp + fp) },
        recall: if recall_undefined { 0.0 } else { tp / (tp + fn_) },
        f1: if f1_undefined {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        },
        precision_undefined,
        recall_undefined,
        f1_undefined,
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_from_precision_recall(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Multiclass accuracy: trace / total (the binary-counts formula for n = 2).
pub fn accuracy(matrix: &ConfusionMatrix) -> Result<f64> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::Validation(
            "accuracy of an empty matrix is undefined".into(),
        ));
    }
    let trace: u64 = (0..matrix.n).map(|i| matrix.get(i, i)).sum();
    Ok(trace as f64 / total as f64)
}

/// Unweighted arithmetic mean. Panics on an empty list (programmer error).
pub fn macro_average(per_class: &[f64]) -> f64 {
    assert!(!per_class.is_empty(), "macro average of an empty list");
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC staircase from (0, 0) to (1, 1), one step per distinct score (ties
/// grouped), threshold +inf first. FPR and TPR are non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    /// `threshold,fpr,tpr` rows for external plotting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "threshold,fpr,tpr")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

/// Sweep thresholds over the distinct scores (descending, +inf first);
/// a sample is predicted positive when its score >= the threshold.
pub fn roc_curve(scores: &[f64], truths: &[bool]) -> Result<RocCurve> {
    if scores.len() != truths.len() {
        return Err(Error::Validation(format!(
            "{} scores but {} labels",
            scores.len(),
            truths.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("scores must be finite".into()));
    }
    let positives = truths.iter().filter(|&&t| t).count();
    let negatives = truths.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Validation(
            "ROC needs at least one positive and one negative label".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // Consume every sample tied at this score in one step.
        while i < order.len() && scores[order[i]] == threshold {
            if truths[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the ROC curve. For finite samples this equals the
/// Mann-Whitney statistic P(score_pos > score_neg) + P(tie)/2.
pub fn auc(curve: &RocCurve) -> f64 {
    let pts = curve.points();
    let mut area = 0.0;
    for pair in pts.windows(2) {
        let dx = pair[1].fpr - pair[0].fpr;
        area += dx * (pair[1].tpr + pair[0].tpr) / 2.0;
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions_give_a_diagonal_matrix() {
        let labels = [0usize, 1, 2, 1, 0];
        let m = ConfusionMatrix::from_labels(&labels, &labels, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(m.get(i, j), 0);
                }
            }
        }
        assert_eq!(accuracy(&m).unwrap(), 1.0);
    }

    #[test]
    fn empty_input_gives_a_zero_matrix_and_undefined_accuracy() {
        let m = ConfusionMatrix::from_labels(&[], &[], 3).unwrap();
        assert_eq!(m.total(), 0);
        assert!(accuracy(&m).is_err());
    }

    #[test]
    fn hand_tallied_pairs_match() {
        // (truth, pred): (0,0), (0,1), (1,1), (2,1), (2,2), (2,2)
        let truths = [0usize, 0, 1, 2, 2, 2];
        let preds = [0usize, 1, 1, 1, 2, 2];
        let m = ConfusionMatrix::from_labels(&preds, &truths, 3).unwrap();
        assert_eq!(m.rows(), vec![vec![1, 1, 0], vec![0, 1, 0], vec![0, 1, 2]]);
        assert_eq!(m.total(), 6);
        assert!(ConfusionMatrix::from_labels(&preds, &truths[..5], 3).is_err());
    }

    #[test]
    fn binary_counts_reduce_one_vs_rest() {
        let all_ones = ConfusionMatrix::from_rows(&[
            vec![1, 1, 1],
            vec![1, 1, 1],
            vec![1, 1, 1],
        ])
        .unwrap();
        for class in 0..3 {
            let c = binary_counts(&all_ones, class);
            assert_eq!(c.true_positives, 1);
            assert_eq!(c.false_negatives, 2);
            assert_eq!(c.false_positives, 2);
            assert_eq!(c.true_negatives, 4);
            assert_eq!(
                c.true_positives + c.false_positives + c.false_negatives + c.true_negatives,
                all_ones.total()
            );
        }

        let diagonal =
            ConfusionMatrix::from_rows(&[vec![3, 0], vec![0, 4]]).unwrap();
        let c = binary_counts(&diagonal, 0);
        assert_eq!(c.false_positives, 0);
        assert_eq!(c.false_negatives, 0);
    }

    #[test]
    fn prf_matches_hand_arithmetic() {
        let counts = BinaryCounts {
            true_positives: 3,
            false_positives: 1,
            false_negatives: 2,
            true_negatives: 4,
        };
        let p = prf(counts);
        assert!((p.precision - 0.75).abs() < 1e-15);
        assert!((p.recall - 0.6).abs() < 1e-15);
        assert!((p.f1 - 2.0 * 3.0 / 9.0).abs() < 1e-15);
        assert!(!p.precision_undefined && !p.recall_undefined && !p.f1_undefined);
    }

    #[test]
    fn zero_denominators_flag_instead_of_failing() {
        let counts = BinaryCounts {
            true_positives: 0,
            false_positives: 0,
            false_negatives: 3,
            true_negatives: 5,
        };
        let p = prf(counts);
        assert_eq!(p.precision, 0.0);
        assert!(p.precision_undefined);
        assert!(!p.recall_undefined);
        assert!(!p.f1_undefined);
        assert_eq!(p.f1, 0.0);
    }

    #[test]
    fn paper_row_f1_reproduces() {
        // Table-style percentages: F1(56.74, 54.07) = 55.37.
        let f1 = f1_from_precision_recall(56.74, 54.07);
        assert!((f1 - 55.37).abs() < 0.01, "f1 {f1}");
    }

    #[test]
    fn accuracy_matches_the_binary_formula() {
        // TP=3, TN=4, FP=1, FN=2 -> 0.7.
        let m = ConfusionMatrix::from_rows(&[vec![3, 2], vec![1, 4]]).unwrap();
        assert!((accuracy(&m).unwrap() - 0.7).abs() < 1e-15);

        let off = ConfusionMatrix::from_rows(&[vec![0, 5], vec![5, 0]]).unwrap();
        assert_eq!(accuracy(&off).unwrap(), 0.0);
    }

    #[test]
    fn macro_average_reproduces_table_rows() {
        assert!((macro_average(&[56.74, 50.17, 95.38]) - 67.43).abs() < 0.01);
        assert!((macro_average(&[54.07, 72.35, 76.54]) - 67.65).abs() < 0.01);
        assert_eq!(macro_average(&[4.2, 4.2, 4.2]), 4.2);
    }

    #[test]
    fn roc_staircase_matches_a_manual_sweep() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let truths = [false, false, true, true];
        let curve = roc_curve(&scores, &truths).unwrap();
        let expected = [
            (f64::INFINITY, 0.0, 0.0),
            (0.8, 0.0, 0.5),
            (0.4, 0.5, 0.5),
            (0.35, 0.5, 1.0),
            (0.1, 1.0, 1.0),
        ];
        assert_eq!(curve.points().len(), expected.len());
        for (p, (t, fpr, tpr)) in curve.points().iter().zip(expected) {
            assert_eq!(p.threshold, t);
            assert!((p.fpr - fpr).abs() < 1e-15);
            assert!((p.tpr - tpr).abs() < 1e-15);
        }
        assert!((auc(&curve) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn degenerate_roc_inputs() {
        // Perfect separation passes through (0, 1).
        let curve = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert!(curve
            .points()
            .iter()
            .any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&curve), 1.0);

        // All scores equal: two points, chance area.
        let flat = roc_curve(&[0.5, 0.5, 0.5], &[true, false, true]).unwrap();
        assert_eq!(flat.points().len(), 2);
        assert!((auc(&flat) - 0.5).abs() < 1e-15);

        assert!(roc_curve(&[0.1, 0.2], &[true, true]).is_err());
    }

    /// Exhaustive pairwise Mann-Whitney oracle.
    fn mann_whitney(scores: &[f64], truths: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if !truths[i] {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if truths[j] {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_equals_the_pairwise_oracle_with_ties() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let truths = [false, false, true, true];
        let curve = roc_curve(&scores, &truths).unwrap();
        assert!((auc(&curve) - mann_whitney(&scores, &truths)).abs() < 1e-12);
        assert!((mann_whitney(&scores, &truths) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn auc_oracle_holds_on_random_tied_instances() {
        let mut rng = SeedStream::new(404);
        for _ in 0..100 {
            let n = 5 + rng.index(196);
            // A small score alphabet forces plenty of ties.
            let levels = 2 + rng.index(9);
            let mut scores = Vec::with_capacity(n);
            let mut truths = Vec::with_capacity(n);
            for _ in 0..n {
                scores.push(rng.index(levels) as f64 / levels as f64);
                truths.push(rng.bernoulli(0.4));
            }
            if !truths.iter().any(|&t| t) || truths.iter().all(|&t| t) {
                continue;
            }
            let curve = roc_curve(&scores, &truths).unwrap();
            let a = auc(&curve);
            let mw = mann_whitney(&scores, &truths);
            assert!((a - mw).abs() < 1e-12, "auc {a} vs mw {mw}");
            assert!((0.0..=1.0).contains(&a));
        }
    }

    proptest! {
        #[test]
        fn roc_is_monotone_and_auc_is_symmetric(
            seed in 0u64..2000,
            n in 4usize..60,
        ) {
            let mut rng = SeedStream::new(seed);
            let mut scores = Vec::with_capacity(n);
            let mut truths = Vec::with_capacity(n);
            for _ in 0..n {
                scores.push((rng.index(8) as f64) / 7.0);
                truths.push(rng.bernoulli(0.5));
            }
            prop_assume!(truths.iter().any(|&t| t) && !truths.iter().all(|&t| t));

            let curve = roc_curve(&scores, &truths).unwrap();
            for pair in curve.points().windows(2) {
                prop_assert!(pair[1].fpr >= pair[0].fpr);
                prop_assert!(pair[1].tpr >= pair[0].tpr);
            }
            let first = curve.points().first().unwrap();
            let last = curve.points().last().unwrap();
            prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));

            // Swapping labels and negating scores preserves the area.
            let neg_scores: Vec<f64> = scores.iter().map(|s| -s).collect();
            let swapped: Vec<bool> = truths.iter().map(|t| !t).collect();
            let mirrored = roc_curve(&neg_scores, &swapped).unwrap();
            prop_assert!((auc(&curve) - auc(&mirrored)).abs() < 1e-12);
        }

        #[test]
        fn f1_forms_agree(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let counts = BinaryCounts {
                true_positives: tp,
                false_positives: fp,
                false_negatives: fn_,
                true_negatives: 10,
            };
            let p = prf(counts);
            if p.precision + p.recall > 0.0 {
                let harmonic = f1_from_precision_recall(p.precision, p.recall);
                prop_assert!((p.f1 - harmonic).abs() < 1e-12);
            }
        }

        #[test]
        fn permuting_samples_changes_no_metric(seed in 0u64..500) {
            let mut rng = SeedStream::new(seed);
            let n = 30;
            let mut scores = Vec::with_capacity(n);
            let mut truths = Vec::with_capacity(n);
            let mut preds = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                scores.push(rng.index(5) as f64 / 4.0);
                truths.push(rng.bernoulli(0.5));
                preds.push(rng.index(3));
                labels.push(rng.index(3));
            }
            prop_assume!(truths.iter().any(|&t| t) && !truths.iter().all(|&t| t));

            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            let p_scores: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
            let p_truths: Vec<bool> = order.iter().map(|&i| truths[i]).collect();
            let p_preds: Vec<usize> = order.iter().map(|&i| preds[i]).collect();
            let p_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();

            let a1 = auc(&roc_curve(&scores, &truths).unwrap());
            let a2 = auc(&roc_curve(&p_scores, &p_truths).unwrap());
            prop_assert!((a1 - a2).abs() < 1e-12);

            let m1 = ConfusionMatrix::from_labels(&preds, &labels, 3).unwrap();
            let m2 = ConfusionMatrix::from_labels(&p_preds, &p_labels, 3).unwrap();
            prop_assert_eq!(m1, m2);
        }
    }
}
