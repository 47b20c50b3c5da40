//! Command implementations behind the `hmcnet` binary: dataset generation,
//! training, evaluation, and single-image prediction, all driven by a
//! [`RunConfig`]. Every command is reproducible from (config, seeds).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{load_manifest, load_image, preprocess, split, Dataset};
use crate::error::{Error, Result};
use crate::hierarchy::{predict, RouteMode, StageLog, TwoStageModel, TwoStageOutcome};
use crate::mc::{MCConfig, DEFAULT_PASSES};
use crate::metrics::evaluate;
use crate::synthetic;

/// Subdirectory of the output dir that synthetic datasets are generated into.
pub const DATASET_SUBDIR: &str = "dataset";
/// Subdirectory holding the persisted model.
pub const MODEL_SUBDIR: &str = "model";
pub const TRAINING_LOG: &str = "training_log.json";

/// Generate the configured synthetic dataset under `<output.dir>/dataset/`
/// and return the manifest path.
pub fn run_gen_synthetic(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let synth = config.dataset.synthetic.as_ref().ok_or_else(|| {
        Error::Config("gen-synthetic needs a dataset.synthetic section".into())
    })?;
    synthetic::generate(synth, &config.output.dir.join(DATASET_SUBDIR))
}

/// Load the configured dataset: an explicit manifest when given, otherwise
/// the (re)generated synthetic dataset.
pub fn resolve_dataset(config: &RunConfig) -> Result<Dataset> {
    match &config.dataset.manifest {
        Some(path) => load_manifest(path),
        None => {
            let manifest = run_gen_synthetic(config)?;
            load_manifest(&manifest)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub stage1: StageLog,
    pub stage2: StageLog,
    pub split_warnings: Vec<String>,
    pub config: RunConfig,
}

pub struct TrainArtifacts {
    pub model_dir: PathBuf,
    pub log_path: PathBuf,
    pub outcome: TwoStageOutcome,
}

/// Split, rebalance per stage, train both stages (with per-epoch
/// augmentation), and persist the model directory plus a JSON training log.
pub fn run_train(config: &RunConfig) -> Result<TrainArtifacts> {
    config.validate()?;
    let dataset = resolve_dataset(config)?;
    let result = split(
        &dataset,
        config.dataset.split.train_fraction,
        config.dataset.split.seed,
        config.dataset.split.grouping.into(),
    )?;
    let (stage1, stage2) = config.stage_configs()?;
    let outcome = crate::hierarchy::train_two_stage(&result.train, &stage1, &stage2)?;

    let model_dir = config.output.dir.join(MODEL_SUBDIR);
    outcome.model.save(&model_dir)?;
    let log = TrainingLog {
        stage1: outcome.stage1_log.clone(),
        stage2: outcome.stage2_log.clone(),
        split_warnings: result.warnings,
        config: config.clone(),
    };
    let log_path = config.output.dir.join(TRAINING_LOG);
    let text = serde_json::to_string_pretty(&log)
        .map_err(|e| Error::Validation(format!("log serialization failed: {e}")))?;
    fs::write(&log_path, text).map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainArtifacts {
        model_dir,
        log_path,
        outcome,
    })
}

pub struct EvalArtifacts {
    /// Files written, for logging.
    pub files: Vec<PathBuf>,
    pub without_uq: crate::metrics::Evaluation,
    pub with_uq: crate::metrics::Evaluation,
}

/// Rebuild the test split from the config seed and evaluate the persisted
/// model twice: deterministically and with MC dropout. Writes
/// `metrics_{without,with}_uq.json`, per-class ROC CSVs, and confusion CSVs.
pub fn run_eval(config: &RunConfig, model_dir: &Path) -> Result<EvalArtifacts> {
    config.validate()?;
    let model = TwoStageModel::load(model_dir)?;
    if model.input_size() != config.dataset.target_size {
        return Err(Error::Validation(format!(
            "model expects {:?} inputs but the config target_size is {:?}",
            model.input_size(),
            config.dataset.target_size
        )));
    }
    let dataset = resolve_dataset(config)?;
    let result = split(
        &dataset,
        config.dataset.split.train_fraction,
        config.dataset.split.seed,
        config.dataset.split.grouping.into(),
    )?;

    let out_dir = &config.output.dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();

    let without_uq = evaluate(&model, &result.test, None)?;
    files.extend(write_column(&without_uq, "without_uq", out_dir)?);
    let with_uq = evaluate(&model, &result.test, Some(&config.mc_config()))?;
    files.extend(write_column(&with_uq, "with_uq", out_dir)?);

    Ok(EvalArtifacts {
        files,
        without_uq,
        with_uq,
    })
}

fn write_column(
    eval: &crate::metrics::Evaluation,
    suffix: &str,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();

    let metrics_path = dir.join(format!("metrics_{suffix}.json"));
    fs::write(&metrics_path, eval.report.to_json_pretty())
        .map_err(|e| Error::io(&metrics_path, e))?;
    files.push(metrics_path);

    let matrix = eval.report.confusion_matrix()?;
    let confusion_path = dir.join(format!("confusion_{suffix}.csv"));
    let mut buffer = Vec::new();
    matrix
        .write_csv(&eval.report.classes, &mut buffer)
        .map_err(|e| Error::io(&confusion_path, e))?;
    fs::write(&confusion_path, buffer).map_err(|e| Error::io(&confusion_path, e))?;
    files.push(confusion_path);

    for (class, curve) in eval.report.classes.iter().zip(&eval.roc_curves) {
        if let Some(curve) = curve {
            let roc_path = dir.join(format!("roc_{class}_{suffix}.csv"));
            let mut buffer = Vec::new();
            curve
                .write_csv(&mut buffer)
                .map_err(|e| Error::io(&roc_path, e))?;
            fs::write(&roc_path, buffer).map_err(|e| Error::io(&roc_path, e))?;
            files.push(roc_path);
        }
    }
    Ok(files)
}

/// Predict one image with MC dropout (default T = 50) and return the
/// prediction JSON.
pub fn run_predict(
    model_dir: &Path,
    image_path: &Path,
    passes: Option<usize>,
    mode: RouteMode,
    seed: Option<u64>,
) -> Result<serde_json::Value> {
    let model = TwoStageModel::load(model_dir)?;
    let raw = load_image(image_path)?;
    let input = preprocess(&raw, model.input_size())?;
    let mc = MCConfig {
        passes: passes.unwrap_or(DEFAULT_PASSES),
        seed: seed.unwrap_or(0),
        keep_passes: false,
    };
    let prediction = predict(&model, &input, Some(&mc), mode)?;
    Ok(prediction.to_json())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SyntheticConfig;

    fn tiny_run_config(dir: &Path, seed: u64) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.dataset.synthetic = Some(SyntheticConfig {
            tn: 8,
            luminal: 16,
            her2: 6,
            side: 12,
            noise: 0.1,
            seed,
        });
        cfg.dataset.target_size = (12, 12);
        cfg.model.backbone = Some(vec![
            crate::nn::LayerSpec::Conv2d {
                filters: 4,
                kernel_size: 3,
                stride: 1,
            },
            crate::nn::LayerSpec::Relu,
            crate::nn::LayerSpec::MaxPool2d { window: 2 },
            crate::nn::LayerSpec::Flatten,
        ]);
        cfg.model.classifier_width = 16;
        cfg.training.lr = 0.003;
        cfg.training.epochs_stage1 = 3;
        cfg.training.epochs_stage2 = 3;
        cfg.training.seed = seed;
        cfg.inference.passes = 5;
        cfg.output.dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn gen_train_eval_predict_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_run_config(dir.path(), 3);

        let manifest = run_gen_synthetic(&cfg).unwrap();
        assert!(manifest.is_file());

        let artifacts = run_train(&cfg).unwrap();
        assert!(artifacts.model_dir.join("meta.json").is_file());
        assert!(artifacts.log_path.is_file());
        let log: TrainingLog =
            serde_json::from_str(&fs::read_to_string(&artifacts.log_path).unwrap()).unwrap();
        assert_eq!(log.stage1.epoch_losses.len(), 3);
        assert_eq!(log.stage2.epoch_losses.len(), 3);

        let eval = run_eval(&cfg, &artifacts.model_dir).unwrap();
        assert!(dir.path().join("metrics_without_uq.json").is_file());
        assert!(dir.path().join("metrics_with_uq.json").is_file());
        assert!(dir.path().join("confusion_with_uq.csv").is_file());
        assert!(!eval.with_uq.report.per_class.is_empty());
        assert!(eval.with_uq.report.uq);
        assert!(!eval.without_uq.report.uq);

        let image = dir
            .path()
            .join(DATASET_SUBDIR)
            .join("tn_0000.pgm");
        let json = run_predict(&artifacts.model_dir, &image, Some(7), RouteMode::Soft, None)
            .unwrap();
        assert_eq!(json["T"], 7);
        assert!(json["composed"]["probs"].as_array().unwrap().len() == 3);

        let defaulted =
            run_predict(&artifacts.model_dir, &image, None, RouteMode::Soft, None).unwrap();
        assert_eq!(defaulted["T"], DEFAULT_PASSES);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg_a = tiny_run_config(dir_a.path(), 9);
        let cfg_b = tiny_run_config(dir_b.path(), 9);
        let a = run_train(&cfg_a).unwrap();
        let b = run_train(&cfg_b).unwrap();
        for file in crate::hierarchy::model_files() {
            if file == "meta.json" {
                continue; // identical too, but compare the binary params directly
            }
            let bytes_a = fs::read(a.model_dir.join(file)).unwrap();
            let bytes_b = fs::read(b.model_dir.join(file)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{file} differs");
        }
    }

    #[test]
    fn eval_rejects_a_mismatched_target_size() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_run_config(dir.path(), 5);
        let artifacts = run_train(&cfg).unwrap();
        let mut wrong = cfg.clone();
        wrong.dataset.target_size = (16, 16);
        wrong.model.backbone = None;
        let err = run_eval(&wrong, &artifacts.model_dir);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn missing_class_surfaces_as_a_named_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_run_config(dir.path(), 5);
        cfg.dataset.synthetic = Some(SyntheticConfig {
            tn: 0,
            luminal: 16,
            her2: 6,
            side: 12,
            noise: 0.1,
            seed: 5,
        });
        match run_train(&cfg) {
            Err(e) => {
                assert_eq!(e.exit_code(), 2);
                assert!(e.to_string().contains("TN"), "{e}");
            }
            Ok(_) => panic!("expected a validation error"),
        }
    }
}
