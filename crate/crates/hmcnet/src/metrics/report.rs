//! Full-model evaluation: predict a test set, tally the confusion matrix,
//! and derive per-class and macro metrics with one-vs-rest ROC/AUC.

use serde::{Deserialize, Serialize};

use crate::data::{materialize, Dataset, SubtypeLabel};
use crate::error::{Error, Result};
use crate::hierarchy::{predict, HierarchicalPrediction, RouteMode, TwoStageModel};
use crate::mc::MCConfig;
use crate::seed::{derive, Stream};

use super::{
    accuracy, auc, binary_counts, macro_average, prf, roc_curve, ConfusionMatrix, RocCurve,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
    /// One-vs-rest AUC; absent when the class is missing from the truths.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean of the per-class AUCs; absent when any of them is unavailable.
    pub auc: Option<f64>,
}

/// One evaluation column (with or without uncertainty quantification).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// True when predictions came from MC-dropout averaging.
    pub uq: bool,
    /// Stochastic passes per stage (0 without UQ).
    pub passes: usize,
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: MacroMetrics,
    /// Overall multiclass accuracy (trace / total).
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn confusion_matrix(&self) -> Result<ConfusionMatrix> {
        ConfusionMatrix::from_rows(&self.confusion)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<MetricsReport> {
        serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("invalid metrics JSON: {e}")))
    }
}

/// A report plus the artifacts it was derived from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Per-class ROC curves in class order (None when AUC was unavailable).
    pub roc_curves: Vec<Option<RocCurve>>,
    /// Composed entropy of every prediction, in sample order.
    pub entropies: Vec<f64>,
}

impl Evaluation {
    pub fn mean_entropy(&self) -> f64 {
        if self.entropies.is_empty() {
            return 0.0;
        }
        self.entropies.iter().sum::<f64>() / self.entropies.len() as f64
    }
}

/// Predict every sample of `test` and aggregate. With `mc` given, stage
/// predictions average `mc.passes` stochastic passes, each sample on its own
/// seed stream (derived from the sample index); otherwise predictions are
/// deterministic eval-mode passes.
pub fn evaluate(
    model: &TwoStageModel,
    test: &Dataset,
    mc: Option<&MCConfig>,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Validation("evaluation set is empty".into()));
    }
    let target = model.input_size();
    let mut predictions = Vec::with_capacity(test.len());
    for (i, record) in test.records().iter().enumerate() {
        let input = materialize(record, target)?;
        let sample_mc = mc.map(|cfg| MCConfig {
            seed: derive(cfg.seed, Stream::Sample, i as u64),
            ..*cfg
        });
        predictions.push(predict(model, &input, sample_mc.as_ref(), RouteMode::Soft)?);
    }
    let truths: Vec<SubtypeLabel> = test.labels().collect();
    aggregate(&predictions, &truths, mc.is_some(), mc.map_or(0, |c| c.passes))
}

/// Metrics from already-computed predictions (used directly by tests that
/// need a stub predictor).
pub fn aggregate(
    predictions: &[HierarchicalPrediction],
    truths: &[SubtypeLabel],
    uq: bool,
    passes: usize,
) -> Result<Evaluation> {
    if predictions.len() != truths.len() {
        return Err(Error::Validation(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Validation("nothing to aggregate".into()));
    }

    let n_classes = SubtypeLabel::ALL.len();
    let pred_labels: Vec<usize> = predictions.iter().map(|p| p.label.index()).collect();
    let truth_labels: Vec<usize> = truths.iter().map(|t| t.index()).collect();
    let matrix = ConfusionMatrix::from_labels(&pred_labels, &truth_labels, n_classes)?;

    let mut per_class = Vec::with_capacity(n_classes);
    let mut roc_curves = Vec::with_capacity(n_classes);
    for class in SubtypeLabel::ALL {
        let c = class.index();
        let scores: Vec<f64> = predictions.iter().map(|p| p.composed.probs()[c]).collect();
        let binary_truth: Vec<bool> = truths.iter().map(|&t| t == class).collect();
        let curve = roc_curve(&scores, &binary_truth).ok();
        let auc_value = curve.as_ref().map(auc);

        let scores_prf = prf(binary_counts(&matrix, c));
        per_class.push(ClassMetrics {
            label: class.name().to_string(),
            precision: scores_prf.precision,
            recall: scores_prf.recall,
            f1: scores_prf.f1,
            precision_undefined: scores_prf.precision_undefined,
            recall_undefined: scores_prf.recall_undefined,
            f1_undefined: scores_prf.f1_undefined,
            auc: auc_value,
        });
        roc_curves.push(curve);
    }

    let macro_avg = MacroMetrics {
        precision: macro_average(&per_class.iter().map(|c| c.precision).collect::<Vec<_>>()),
        recall: macro_average(&per_class.iter().map(|c| c.recall).collect::<Vec<_>>()),
        f1: macro_average(&per_class.iter().map(|c| c.f1).collect::<Vec<_>>()),
        auc: per_class
            .iter()
            .map(|c| c.auc)
            .collect::<Option<Vec<f64>>>()
            .map(|aucs| macro_average(&aucs)),
    };

    let report = MetricsReport {
        uq,
        passes,
        classes: SubtypeLabel::ALL.iter().map(|c| c.name().to_string()).collect(),
        per_class,
        macro_avg,
        accuracy: accuracy(&matrix)?,
        confusion: matrix.rows(),
    };
    let entropies = predictions.iter().map(|p| p.composed_entropy).collect();
    Ok(Evaluation {
        report,
        roc_curves,
        entropies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ClassDistribution;
    use crate::hierarchy::COMPOSED_CLASSES;
    use crate::mc::UncertaintyReport;

    /// A stub prediction whose composed distribution is a near-point mass on
    /// `label`.
    fn stub(label: SubtypeLabel, confidence: f64) -> HierarchicalPrediction {
        let mut probs = vec![(1.0 - confidence) / 2.0; 3];
        probs[label.index()] = confidence;
        let composed = ClassDistribution::with_labels(
            probs,
            COMPOSED_CLASSES.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap();
        let stage1 = UncertaintyReport::deterministic(
            ClassDistribution::binary(composed.probs()[0], ["TN", "nonTN"]).unwrap(),
        );
        let entropy = crate::mc::predictive_entropy(&composed);
        HierarchicalPrediction {
            composed,
            composed_entropy: entropy,
            label,
            stage1,
            stage2: None,
            route: RouteMode::Soft,
        }
    }

    #[test]
    fn ground_truth_stub_scores_everything_at_one() {
        let truths = vec![
            SubtypeLabel::TripleNegative,
            SubtypeLabel::TripleNegative,
            SubtypeLabel::Luminal,
            SubtypeLabel::Luminal,
            SubtypeLabel::Her2Enriched,
            SubtypeLabel::Her2Enriched,
        ];
        let predictions: Vec<_> = truths.iter().map(|&t| stub(t, 0.98)).collect();
        let eval = aggregate(&predictions, &truths, false, 0).unwrap();
        let r = &eval.report;
        assert_eq!(r.accuracy, 1.0);
        for class in &r.per_class {
            assert_eq!(class.precision, 1.0);
            assert_eq!(class.recall, 1.0);
            assert_eq!(class.f1, 1.0);
            assert_eq!(class.auc, Some(1.0));
        }
        assert_eq!(r.macro_avg.precision, 1.0);
        assert_eq!(r.macro_avg.auc, Some(1.0));
    }

    #[test]
    fn metrics_recompute_from_the_serialized_confusion_matrix() {
        let truths = vec![
            SubtypeLabel::TripleNegative,
            SubtypeLabel::Luminal,
            SubtypeLabel::Luminal,
            SubtypeLabel::Her2Enriched,
            SubtypeLabel::Her2Enriched,
            SubtypeLabel::Her2Enriched,
        ];
        let preds = vec![
            SubtypeLabel::TripleNegative,
            SubtypeLabel::Luminal,
            SubtypeLabel::Her2Enriched,
            SubtypeLabel::Her2Enriched,
            SubtypeLabel::Luminal,
            SubtypeLabel::Her2Enriched,
        ];
        let predictions: Vec<_> = preds.iter().map(|&p| stub(p, 0.9)).collect();
        let eval = aggregate(&predictions, &truths, true, 7).unwrap();
        let report = &eval.report;

        let text = report.to_json_pretty();
        let parsed = MetricsReport::from_json(&text).unwrap();
        assert_eq!(&parsed, report);

        let matrix = parsed.confusion_matrix().unwrap();
        assert_eq!(accuracy(&matrix).unwrap(), report.accuracy);
        for (c, class_metrics) in parsed.per_class.iter().enumerate() {
            let again = prf(binary_counts(&matrix, c));
            assert_eq!(again.precision, class_metrics.precision);
            assert_eq!(again.recall, class_metrics.recall);
            assert_eq!(again.f1, class_metrics.f1);
        }
        let macro_again = macro_average(
            &parsed.per_class.iter().map(|c| c.precision).collect::<Vec<_>>(),
        );
        assert!((macro_again - parsed.macro_avg.precision).abs() < 1e-12);
        assert_eq!(parsed.passes, 7);
        assert!(parsed.uq);
    }

    #[test]
    fn missing_class_marks_auc_unavailable() {
        let truths = vec![
            SubtypeLabel::TripleNegative,
            SubtypeLabel::Luminal,
            SubtypeLabel::Luminal,
        ];
        let predictions: Vec<_> = truths.iter().map(|&t| stub(t, 0.9)).collect();
        let eval = aggregate(&predictions, &truths, false, 0).unwrap();
        let her2 = &eval.report.per_class[SubtypeLabel::Her2Enriched.index()];
        assert_eq!(her2.auc, None);
        assert_eq!(eval.report.macro_avg.auc, None);
        assert!(eval.roc_curves[SubtypeLabel::Her2Enriched.index()].is_none());
    }

    #[test]
    fn empty_aggregation_is_rejected() {
        assert!(aggregate(&[], &[], false, 0).is_err());
    }
}
