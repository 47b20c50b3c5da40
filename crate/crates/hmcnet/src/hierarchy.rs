//! The two-stage cascade: stage 1 separates triple-negative from the rest,
//! stage 2 separates luminal from HER2-enriched, and a product rule composes
//! the two binary heads into one three-class distribution.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    materialize_all, rebalance, AugmentConfig, Dataset, RebalancePolicy, SampleRecord,
    SubtypeLabel,
};
use crate::dist::ClassDistribution;
use crate::error::{Error, Result};
use crate::mc::{deterministic_predict, mc_forward, MCConfig, UncertaintyReport};
use crate::nn::{
    init_params, load_params, load_spec, save_params, save_spec, train, ModelParams, NetworkSpec,
    TrainConfig, TrainSet,
};
use crate::seed::{derive, SeedStream, Stream};
use crate::tensor::Tensor;

/// Class names of the stage-1 binary head (index 0 is the positive class).
pub const STAGE1_CLASSES: [&str; 2] = ["TN", "nonTN"];
/// Class names of the stage-2 binary head.
pub const STAGE2_CLASSES: [&str; 2] = ["Luminal", "nonLuminal"];
/// Composed three-class order, fixed everywhere.
pub const COMPOSED_CLASSES: [&str; 3] = ["TN", "Luminal", "HER2"];

/// Whether stage 2 always runs (soft, the default) or is skipped when stage 1
/// already claims the sample (hard routing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteMode {
    Soft,
    Hard,
}

/// A dataset relabeled for one binary stage. Label 0 is the stage's positive
/// class (TN for stage 1, Luminal for stage 2).
#[derive(Debug, Clone)]
pub struct BinaryDataset {
    pub records: Vec<SampleRecord>,
    pub labels: Vec<usize>,
}

impl BinaryDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }
}

/// Stage 1: triple-negative (positive) vs everything else. Record order is
/// preserved and no sample is dropped.
pub fn relabel_stage1(dataset: &Dataset) -> BinaryDataset {
    let records = dataset.records().to_vec();
    let labels = records
        .iter()
        .map(|r| usize::from(r.label != SubtypeLabel::TripleNegative))
        .collect();
    BinaryDataset { records, labels }
}

/// Stage 2: luminal (positive) vs HER2-enriched, with ground-truth
/// triple-negative samples removed.
pub fn relabel_stage2(dataset: &Dataset) -> Result<BinaryDataset> {
    let records: Vec<SampleRecord> = dataset
        .records()
        .iter()
        .filter(|r| r.label != SubtypeLabel::TripleNegative)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(Error::Validation(
            "stage 2 has no samples: the dataset is entirely triple-negative".into(),
        ));
    }
    let labels = records
        .iter()
        .map(|r| usize::from(r.label != SubtypeLabel::Luminal))
        .collect();
    Ok(BinaryDataset { records, labels })
}

/// Everything needed to train one stage.
#[derive(Debug, Clone)]
pub struct StageConfig {
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub augment: Option<AugmentConfig>,
    pub rebalance: RebalancePolicy,
    /// Seed for weight initialization.
    pub init_seed: u64,
    /// Seed for this stage's independent rebalance of the training data.
    pub rebalance_seed: u64,
    /// Root seed for per-(epoch, sample) augmentation streams.
    pub augment_seed: u64,
}

/// Per-stage training record: sample counts and the loss history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageLog {
    pub class_counts_before: [usize; 3],
    pub class_counts_after: [usize; 3],
    pub sample_count: usize,
    pub positives: usize,
    pub negatives: usize,
    pub epoch_losses: Vec<f64>,
}

/// Seeds and hyperparameters persisted in `meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageMeta {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub reg: f64,
    pub init_seed: u64,
    pub train_seed: u64,
    pub rebalance_seed: u64,
    pub augment_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub class_order: Vec<String>,
    pub input_size: (usize, usize),
    pub stage1: StageMeta,
    pub stage2: StageMeta,
}

/// One trained binary stage.
#[derive(Debug, Clone)]
pub struct StageModel {
    pub spec: NetworkSpec,
    pub params: ModelParams,
}

/// The trained cascade plus its provenance metadata.
#[derive(Debug, Clone)]
pub struct TwoStageModel {
    pub stage1: StageModel,
    pub stage2: StageModel,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub model: TwoStageModel,
    pub stage1_log: StageLog,
    pub stage2_log: StageLog,
}

fn stage_meta(cfg: &StageConfig) -> StageMeta {
    StageMeta {
        epochs: cfg.train.epochs,
        lr: cfg.train.lr,
        batch_size: cfg.train.batch_size,
        reg: cfg.train.reg,
        init_seed: cfg.init_seed,
        train_seed: cfg.train.seed,
        rebalance_seed: cfg.rebalance_seed,
        augment_seed: cfg.augment_seed,
    }
}

/// Train both stages on `train_data`. Each stage independently rebalances the
/// three-class training set (ADASYN for TN, oversampling for HER2), relabels
/// it for its own binary task, and trains with per-epoch augmentation.
pub fn train_two_stage(
    train_data: &Dataset,
    stage1: &StageConfig,
    stage2: &StageConfig,
) -> Result<TwoStageOutcome> {
    for label in SubtypeLabel::ALL {
        if train_data.count_of(label) == 0 {
            return Err(Error::Validation(format!(
                "training data has no {} samples",
                label.name()
            )));
        }
    }
    if stage1.network.input_shape() != stage2.network.input_shape() {
        return Err(Error::Validation(format!(
            "stage input shapes differ: {:?} vs {:?}",
            stage1.network.input_shape(),
            stage2.network.input_shape()
        )));
    }
    let (h, w, c) = stage1.network.input_shape();
    if c != 3 {
        return Err(Error::Validation(format!(
            "preprocessing emits 3 channels; stage networks declare {c}"
        )));
    }

    let (model1, log1) = train_stage(train_data, stage1, (h, w), |ds| Ok(relabel_stage1(ds)))?;
    let (model2, log2) = train_stage(train_data, stage2, (h, w), relabel_stage2)?;

    let meta = ModelMeta {
        class_order: COMPOSED_CLASSES.iter().map(|s| s.to_string()).collect(),
        input_size: (h, w),
        stage1: stage_meta(stage1),
        stage2: stage_meta(stage2),
    };
    Ok(TwoStageOutcome {
        model: TwoStageModel {
            stage1: model1,
            stage2: model2,
            meta,
        },
        stage1_log: log1,
        stage2_log: log2,
    })
}

fn train_stage(
    train_data: &Dataset,
    config: &StageConfig,
    target: (usize, usize),
    relabel: impl Fn(&Dataset) -> Result<BinaryDataset>,
) -> Result<(StageModel, StageLog)> {
    let rebalanced = rebalance(
        train_data,
        &config.rebalance,
        target,
        config.rebalance_seed,
    )?;
    let binary = relabel(&rebalanced)?;
    let inputs = materialize_all(&Dataset::from_records(binary.records.clone()), target)?;
    let positives = binary.positives();
    let sample_count = binary.len();
    let negatives = sample_count - positives;
    let data = TrainSet::new(inputs, binary.labels)?;

    let params = init_params(&config.network, config.init_seed)?;
    let augment_cfg = config.augment;
    let augment_seed = config.augment_seed;
    let transform = augment_cfg.map(|cfg| {
        move |input: &Tensor, epoch: usize, index: usize| -> Tensor {
            let seed = derive(
                derive(augment_seed, Stream::Augment, epoch as u64),
                Stream::Augment,
                index as u64,
            );
            let mut rng = SeedStream::new(seed);
            crate::data::augment(input, &cfg, &mut rng).expect("validated augment config")
        }
    });
    let outcome = match &transform {
        Some(t) => train(&config.network, params, &data, &config.train, Some(t))?,
        None => train(&config.network, params, &data, &config.train, None)?,
    };

    Ok((
        StageModel {
            spec: config.network.clone(),
            params: outcome.params,
        },
        StageLog {
            class_counts_before: train_data.class_counts(),
            class_counts_after: rebalanced.class_counts(),
            sample_count,
            positives,
            negatives,
            epoch_losses: outcome.epoch_losses,
        },
    ))
}

/// Product-rule composition of the two binary heads:
/// p(TN) = p1(TN), p(Luminal) = p1(nonTN) * p2(Luminal),
/// p(HER2) = p1(nonTN) * p2(nonLuminal).
pub fn compose_distribution(
    stage1: &ClassDistribution,
    stage2: &ClassDistribution,
) -> Result<ClassDistribution> {
    if stage1.len() != 2 || stage2.len() != 2 {
        return Err(Error::Validation(
            "composition expects two binary distributions".into(),
        ));
    }
    let p_tn = stage1.probs()[0];
    let p_rest = stage1.probs()[1];
    let probs = vec![p_tn, p_rest * stage2.probs()[0], p_rest * stage2.probs()[1]];
    ClassDistribution::with_labels(
        probs,
        COMPOSED_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Composed distribution when stage 2 was skipped: stage-1 mass passes
/// through and the remainder splits evenly between the two unseen classes.
fn stage2_free_distribution(stage1: &ClassDistribution) -> Result<ClassDistribution> {
    let p_tn = stage1.probs()[0];
    let half = stage1.probs()[1] / 2.0;
    ClassDistribution::with_labels(
        vec![p_tn, half, half],
        COMPOSED_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

/// A composed three-class prediction with per-stage uncertainty.
#[derive(Debug, Clone)]
pub struct HierarchicalPrediction {
    pub composed: ClassDistribution,
    pub composed_entropy: f64,
    pub label: SubtypeLabel,
    pub stage1: UncertaintyReport,
    /// Absent when hard routing skipped stage 2.
    pub stage2: Option<UncertaintyReport>,
    pub route: RouteMode,
}

impl HierarchicalPrediction {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "composed": {
                "probs": self.composed.probs(),
                "classes": self.composed.labels(),
            },
            "label": self.label.name(),
            "composed_entropy": self.composed_entropy,
            "stage1": self.stage1.to_json(),
            "stage2": self.stage2.as_ref().map(|r| r.to_json()),
            "T": self.stage1.passes,
            "mode": match self.route {
                RouteMode::Soft => "soft",
                RouteMode::Hard => "hard",
            },
        })
    }
}

/// Predict one preprocessed sample. With `mc` given, each stage runs
/// `mc.passes` stochastic passes on its own derived seed stream; otherwise a
/// single eval-mode pass per stage. In hard mode stage 2 is skipped whenever
/// stage 1's argmax is TN.
pub fn predict(
    model: &TwoStageModel,
    input: &Tensor,
    mc: Option<&MCConfig>,
    route: RouteMode,
) -> Result<HierarchicalPrediction> {
    let stage1 = stage_report(
        &model.stage1,
        input,
        mc,
        Stream::Stage1,
        &STAGE1_CLASSES,
    )?;
    let stage1_says_tn = stage1.mean.argmax() == 0;

    let (composed, stage2) = if route == RouteMode::Hard && stage1_says_tn {
        (stage2_free_distribution(&stage1.mean)?, None)
    } else {
        let stage2 = stage_report(
            &model.stage2,
            input,
            mc,
            Stream::Stage2,
            &STAGE2_CLASSES,
        )?;
        (compose_distribution(&stage1.mean, &stage2.mean)?, Some(stage2))
    };

    let label = SubtypeLabel::from_index(composed.argmax()).expect("3-class argmax");
    let composed_entropy = crate::mc::predictive_entropy(&composed);
    Ok(HierarchicalPrediction {
        composed,
        composed_entropy,
        label,
        stage1,
        stage2,
        route,
    })
}

fn stage_report(
    stage: &StageModel,
    input: &Tensor,
    mc: Option<&MCConfig>,
    stream: Stream,
    classes: &[&str; 2],
) -> Result<UncertaintyReport> {
    let report = match mc {
        Some(cfg) => {
            let stage_cfg = MCConfig {
                seed: derive(cfg.seed, stream, 0),
                ..*cfg
            };
            mc_forward(&stage.spec, &stage.params, input, &stage_cfg)?
        }
        None => UncertaintyReport::deterministic(deterministic_predict(
            &stage.spec,
            &stage.params,
            input,
        )?),
    };
    report.relabeled(classes)
}

const STAGE1_SPEC: &str = "stage1.spec.json";
const STAGE1_PARAMS: &str = "stage1.params.bin";
const STAGE2_SPEC: &str = "stage2.spec.json";
const STAGE2_PARAMS: &str = "stage2.params.bin";
const META: &str = "meta.json";

impl TwoStageModel {
    /// Write `stage{1,2}.spec.json`, `stage{1,2}.params.bin` and `meta.json`
    /// into `dir` (created if missing).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_spec(&self.stage1.spec, &dir.join(STAGE1_SPEC))?;
        save_params(&self.stage1.params, &dir.join(STAGE1_PARAMS))?;
        save_spec(&self.stage2.spec, &dir.join(STAGE2_SPEC))?;
        save_params(&self.stage2.params, &dir.join(STAGE2_PARAMS))?;
        let meta = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Validation(format!("meta serialization failed: {e}")))?;
        fs::write(dir.join(META), meta).map_err(|e| Error::io(dir.join(META), e))
    }

    pub fn load(dir: &Path) -> Result<TwoStageModel> {
        let meta_path = dir.join(META);
        let meta_text =
            fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: ModelMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::Validation(format!("{}: invalid meta: {e}", meta_path.display())))?;
        if meta.class_order != COMPOSED_CLASSES {
            return Err(Error::Validation(format!(
                "model class order {:?} does not match {:?}",
                meta.class_order, COMPOSED_CLASSES
            )));
        }
        let spec1 = load_spec(&dir.join(STAGE1_SPEC))?;
        let params1 = load_params(&spec1, &dir.join(STAGE1_PARAMS))?;
        let spec2 = load_spec(&dir.join(STAGE2_SPEC))?;
        let params2 = load_params(&spec2, &dir.join(STAGE2_PARAMS))?;
        let (h1, w1, _) = spec1.input_shape();
        if (h1, w1) != meta.input_size || spec1.input_shape() != spec2.input_shape() {
            return Err(Error::Validation(
                "model metadata and stage input shapes disagree".into(),
            ));
        }
        Ok(TwoStageModel {
            stage1: StageModel {
                spec: spec1,
                params: params1,
            },
            stage2: StageModel {
                spec: spec2,
                params: params2,
            },
            meta,
        })
    }

    pub fn input_size(&self) -> (usize, usize) {
        self.meta.input_size
    }
}

/// Paths a persisted model consists of, relative to its directory.
pub fn model_files() -> [&'static str; 5] {
    [STAGE1_SPEC, STAGE1_PARAMS, STAGE2_SPEC, STAGE2_PARAMS, META]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ImageSource, View};
    use crate::nn::{L2Scope, LayerSpec};

    fn record(label: SubtypeLabel, id: &str, fill: f64) -> SampleRecord {
        SampleRecord {
            image: ImageSource::Embedded(Tensor::filled(&[2, 2, 3], fill)),
            label,
            patient_id: id.into(),
            view: View::Unknown,
            synthetic: false,
            duplicate: false,
        }
    }

    fn dataset(counts: [usize; 3]) -> Dataset {
        let mut records = Vec::new();
        for (class, &n) in counts.iter().enumerate() {
            let label = SubtypeLabel::from_index(class).unwrap();
            for i in 0..n {
                let fill = (class as f64 * 0.35 + 0.1) + 0.01 * (i % 3) as f64;
                records.push(record(label, &format!("{}{i}", label.name()), fill));
            }
        }
        Dataset::from_records(records)
    }

    #[test]
    fn stage1_relabel_counts_and_order() {
        let ds = dataset([20, 100, 30]);
        let bin = relabel_stage1(&ds);
        assert_eq!(bin.len(), 150);
        assert_eq!(bin.positives(), 20);
        for (record, original) in bin.records.iter().zip(ds.records()) {
            assert_eq!(record.patient_id, original.patient_id);
        }
    }

    #[test]
    fn stage2_relabel_drops_tn_and_errors_when_empty() {
        let ds = dataset([20, 100, 30]);
        let bin = relabel_stage2(&ds).unwrap();
        assert_eq!(bin.len(), 130);
        assert_eq!(bin.positives(), 100);
        assert!(bin
            .records
            .iter()
            .all(|r| r.label != SubtypeLabel::TripleNegative));

        let tn_only = dataset([5, 0, 0]);
        assert!(relabel_stage2(&tn_only).is_err());
    }

    #[test]
    fn all_tn_dataset_is_all_positive_for_stage1() {
        let ds = dataset([5, 0, 0]);
        let bin = relabel_stage1(&ds);
        assert_eq!(bin.positives(), 5);
    }

    fn binary(p: f64) -> ClassDistribution {
        ClassDistribution::binary(p, ["a", "b"]).unwrap()
    }

    #[test]
    fn composition_matches_the_product_rule() {
        let composed = compose_distribution(&binary(0.2), &binary(0.7)).unwrap();
        let expect = [0.2, 0.56, 0.24];
        for (got, want) in composed.probs().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
        let sum: f64 = composed.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stage1_point_mass_absorbs_everything() {
        let composed = compose_distribution(&binary(1.0), &binary(0.3)).unwrap();
        assert_eq!(composed.probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_stage2_splits_the_remainder_evenly() {
        let composed = compose_distribution(&binary(0.4), &binary(0.5)).unwrap();
        assert!((composed.probs()[1] - composed.probs()[2]).abs() < 1e-15);
    }

    #[test]
    fn tn_passthrough_is_bitwise() {
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let composed = compose_distribution(&binary(p), &binary(0.37)).unwrap();
            assert_eq!(composed.probs()[0], p);
        }
    }

    fn tiny_stage_config(seed: u64, epochs: usize) -> StageConfig {
        let network = NetworkSpec::new(
            (2, 2, 3),
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 8 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.25 },
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        StageConfig {
            network,
            train: TrainConfig {
                lr: 0.01,
                batch_size: 16,
                epochs,
                reg: 1e-6,
                l2_scope: L2Scope::DenseOnly,
                seed: derive(seed, Stream::TrainLoop, 0),
            },
            augment: None,
            rebalance: RebalancePolicy::default(),
            init_seed: derive(seed, Stream::Init, 0),
            rebalance_seed: derive(seed, Stream::Rebalance, 0),
            augment_seed: derive(seed, Stream::Augment, 0),
        }
    }

    #[test]
    fn two_stage_training_is_deterministic_and_logged() {
        let ds = dataset([6, 12, 5]);
        let s1 = tiny_stage_config(1, 3);
        let s2 = tiny_stage_config(2, 4);
        let a = train_two_stage(&ds, &s1, &s2).unwrap();
        let b = train_two_stage(&ds, &s1, &s2).unwrap();
        assert_eq!(a.model.stage1.params, b.model.stage1.params);
        assert_eq!(a.model.stage2.params, b.model.stage2.params);
        assert_eq!(a.stage1_log.epoch_losses, b.stage1_log.epoch_losses);

        // Rebalanced to the luminal count, then relabeled.
        assert_eq!(a.stage1_log.class_counts_after, [12, 12, 12]);
        assert_eq!(a.stage1_log.sample_count, 36);
        assert_eq!(a.stage1_log.positives, 12);
        assert_eq!(a.stage2_log.sample_count, 24);
        assert_eq!(a.stage2_log.positives, 12);
        assert_eq!(a.stage1_log.epoch_losses.len(), 3);
        assert_eq!(a.stage2_log.epoch_losses.len(), 4);
    }

    #[test]
    fn missing_class_is_named() {
        let ds = dataset([6, 12, 0]);
        let s1 = tiny_stage_config(1, 2);
        let s2 = tiny_stage_config(2, 2);
        match train_two_stage(&ds, &s1, &s2) {
            Err(Error::Validation(msg)) => assert!(msg.contains("HER2"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn model_directory_round_trips() {
        let ds = dataset([6, 12, 5]);
        let outcome =
            train_two_stage(&ds, &tiny_stage_config(1, 2), &tiny_stage_config(2, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let model_dir = dir.path().join("model");
        outcome.model.save(&model_dir).unwrap();
        for file in model_files() {
            assert!(model_dir.join(file).is_file(), "missing {file}");
        }
        let loaded = TwoStageModel::load(&model_dir).unwrap();
        assert_eq!(loaded.stage1.params, outcome.model.stage1.params);
        assert_eq!(loaded.stage2.params, outcome.model.stage2.params);
        assert_eq!(loaded.meta.class_order, COMPOSED_CLASSES);

        let input = Tensor::filled(&[2, 2, 3], 0.4);
        let a = predict(&outcome.model, &input, None, RouteMode::Soft).unwrap();
        let b = predict(&loaded, &input, None, RouteMode::Soft).unwrap();
        assert_eq!(a.composed.probs(), b.composed.probs());
    }

    #[test]
    fn hard_and_soft_agree_on_labels_across_the_grid() {
        // Label agreement regions: stage-1 argmax TN (both say TN), and
        // p1 < 0.5 (identical composed distributions).
        for i in 0..=100 {
            for j in 0..=100 {
                let p1 = i as f64 / 100.0;
                let p2 = j as f64 / 100.0;
                let s1 = binary(p1);
                let s2 = binary(p2);
                let soft = compose_distribution(&s1, &s2).unwrap();
                let soft_label = soft.argmax();
                let hard_label = if s1.argmax() == 0 {
                    stage2_free_distribution(&s1).unwrap().argmax()
                } else {
                    soft.argmax()
                };
                if s1.argmax() == 0 {
                    assert_eq!(hard_label, 0, "p1={p1}");
                    assert_eq!(soft_label, 0, "p1={p1} p2={p2}");
                } else {
                    assert_eq!(hard_label, soft_label, "p1={p1} p2={p2}");
                }
            }
        }
    }

    #[test]
    fn label_is_monotone_in_stage1_confidence() {
        for j in 0..=20 {
            let p2 = j as f64 / 20.0;
            let mut seen_tn = false;
            for i in 0..=100 {
                let p1 = i as f64 / 100.0;
                let composed = compose_distribution(&binary(p1), &binary(p2)).unwrap();
                let is_tn = composed.argmax() == 0;
                if seen_tn {
                    assert!(is_tn, "label left TN at p1={p1}, p2={p2}");
                }
                seen_tn |= is_tn;
            }
            assert!(seen_tn);
        }
    }

    #[test]
    fn predict_composes_reports_and_entropy() {
        let ds = dataset([6, 12, 5]);
        let outcome =
            train_two_stage(&ds, &tiny_stage_config(3, 2), &tiny_stage_config(4, 2)).unwrap();
        let input = Tensor::filled(&[2, 2, 3], 0.45);
        let mc = MCConfig {
            passes: 8,
            seed: 5,
            keep_passes: false,
        };
        let soft = predict(&outcome.model, &input, Some(&mc), RouteMode::Soft).unwrap();
        assert_eq!(soft.composed.labels(), COMPOSED_CLASSES);
        assert!(soft.stage2.is_some());
        assert_eq!(soft.stage1.passes, 8);
        let sum: f64 = soft.composed.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert_eq!(
            soft.label,
            SubtypeLabel::from_index(soft.composed.argmax()).unwrap()
        );

        // Same seeds, same prediction.
        let again = predict(&outcome.model, &input, Some(&mc), RouteMode::Soft).unwrap();
        assert_eq!(soft.composed.probs(), again.composed.probs());
        assert_eq!(soft.composed_entropy, again.composed_entropy);
    }

    #[test]
    fn hard_routing_skips_stage2_only_for_tn_claims() {
        let ds = dataset([6, 12, 5]);
        let outcome =
            train_two_stage(&ds, &tiny_stage_config(5, 3), &tiny_stage_config(6, 3)).unwrap();
        // TN training samples sit near fill 0.1; the trained stage-1 net
        // should claim such an input, making hard routing skip stage 2.
        let tn_like = Tensor::filled(&[2, 2, 3], 0.1);
        let hard = predict(&outcome.model, &tn_like, None, RouteMode::Hard).unwrap();
        if hard.stage1.mean.argmax() == 0 {
            assert!(hard.stage2.is_none());
            assert_eq!(hard.label, SubtypeLabel::TripleNegative);
            assert_eq!(hard.composed.probs()[0], hard.stage1.mean.probs()[0]);
        }
        let luminal_like = Tensor::filled(&[2, 2, 3], 0.45);
        let hard2 = predict(&outcome.model, &luminal_like, None, RouteMode::Hard).unwrap();
        if hard2.stage1.mean.argmax() == 1 {
            assert!(hard2.stage2.is_some());
        }
    }

    #[test]
    fn composed_entropy_matches_hand_arithmetic() {
        // Stage outputs (0.2, 0.8) and (0.7, 0.3) compose to (0.2, 0.56, 0.24)
        // whose entropy is 0.98909 nats (checked against a high-precision
        // script; equal to H(p1) + 0.8 * H(p2) by the chain rule).
        let composed = compose_distribution(&binary(0.2), &binary(0.7)).unwrap();
        let h = crate::mc::predictive_entropy(&composed);
        assert!((h - 0.98909).abs() < 1e-4, "entropy {h}");
    }
}
