//! Run configuration: one JSON file drives dataset generation, training,
//! evaluation, and prediction. Defaults follow the reference training recipe
//! (lr 1e-4, batch 32, L2 1e-6, epochs 55/75, rotation range (-90, 90)).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{AugmentConfig, Grouping, RebalancePolicy};
use crate::error::{Error, Result};
use crate::hierarchy::{RouteMode, StageConfig};
use crate::mc::DEFAULT_PASSES;
use crate::nn::{L2Scope, LayerSpec, NetworkSpec, TrainConfig};
use crate::seed::{derive, Stream};
use crate::synthetic::SyntheticConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub inference: InferenceConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            inference: InferenceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// CSV manifest path; when absent, the `synthetic` section is generated
    /// and used instead.
    pub manifest: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    /// Preprocessing target (height, width).
    pub target_size: (usize, usize),
    pub split: SplitConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            manifest: None,
            synthetic: None,
            target_size: (16, 16),
            split: SplitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub grouping: GroupingConfig,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            seed: 0,
            grouping: GroupingConfig::ByPatient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingConfig {
    ByPatient,
    ByImage,
}

impl From<GroupingConfig> for Grouping {
    fn from(g: GroupingConfig) -> Grouping {
        match g {
            GroupingConfig::ByPatient => Grouping::ByPatient,
            GroupingConfig::ByImage => Grouping::ByImage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Convolutional backbone; `None` selects the built-in small CNN.
    pub backbone: Option<Vec<LayerSpec>>,
    /// Width of the two hidden fully-connected classifier layers.
    pub classifier_width: usize,
    /// Dropout rate of the two classifier dropout layers.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: None,
            classifier_width: 128,
            dropout: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub reg: f64,
    /// L2 scope: `dense` (classifier layers) or `all`.
    pub l2_scope: L2ScopeConfig,
    pub seed: u64,
    pub adasyn_k: usize,
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 1e-4,
            batch_size: 32,
            epochs_stage1: 55,
            epochs_stage2: 75,
            reg: 1e-6,
            l2_scope: L2ScopeConfig::Dense,
            seed: 0,
            adasyn_k: 5,
            augment: Some(AugmentConfig::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L2ScopeConfig {
    Dense,
    All,
}

impl From<L2ScopeConfig> for L2Scope {
    fn from(s: L2ScopeConfig) -> L2Scope {
        match s {
            L2ScopeConfig::Dense => L2Scope::DenseOnly,
            L2ScopeConfig::All => L2Scope::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    /// Stochastic forward passes per stage (T).
    #[serde(alias = "T")]
    pub passes: usize,
    pub mode: RouteMode,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            passes: DEFAULT_PASSES,
            mode: RouteMode::Soft,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.dataset.target_size;
        if h == 0 || w == 0 {
            return Err(Error::Config("target_size must be positive".into()));
        }
        if !(self.dataset.split.train_fraction > 0.0 && self.dataset.split.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.dataset.split.train_fraction
            )));
        }
        if self.dataset.manifest.is_none() && self.dataset.synthetic.is_none() {
            return Err(Error::Config(
                "dataset needs either a manifest path or a synthetic section".into(),
            ));
        }
        if let Some(synth) = &self.dataset.synthetic {
            synth.validate()?;
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.model.dropout
            )));
        }
        if self.model.classifier_width == 0 {
            return Err(Error::Config("classifier_width must be positive".into()));
        }
        if self.training.batch_size == 0
            || self.training.epochs_stage1 == 0
            || self.training.epochs_stage2 == 0
        {
            return Err(Error::Config(
                "batch_size and per-stage epochs must be positive".into(),
            ));
        }
        if self.training.lr < 0.0 || self.training.reg < 0.0 {
            return Err(Error::Config("lr and reg must be >= 0".into()));
        }
        if self.training.adasyn_k == 0 {
            return Err(Error::Config("adasyn_k must be positive".into()));
        }
        if let Some(augment) = &self.training.augment {
            augment.validate()?;
        }
        if self.inference.passes == 0 {
            return Err(Error::Config("inference passes must be positive".into()));
        }
        // Building the network validates shape propagation for target_size.
        self.network_spec()?;
        Ok(())
    }

    /// Default backbone: two 3x3 conv blocks with 2x2 pooling.
    pub fn default_backbone() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d {
                filters: 8,
                kernel_size: 3,
                stride: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { window: 2 },
            LayerSpec::Conv2d {
                filters: 16,
                kernel_size: 3,
                stride: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { window: 2 },
            LayerSpec::Flatten,
        ]
    }

    /// The full binary network: backbone plus the classifier block
    /// (dense-relu-dropout twice, then a 2-way softmax head).
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let (h, w) = self.dataset.target_size;
        let mut layers = self
            .model
            .backbone
            .clone()
            .unwrap_or_else(RunConfig::default_backbone);
        let width = self.model.classifier_width;
        let p = self.model.dropout;
        layers.extend([
            LayerSpec::Dense { units: width },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: p },
            LayerSpec::Dense { units: width },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: p },
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ]);
        NetworkSpec::new((h, w, 3), layers)
    }

    /// Per-stage training configs with purpose-derived seeds rooted at
    /// `training.seed` (stage 1 and stage 2 streams are independent).
    pub fn stage_configs(&self) -> Result<(StageConfig, StageConfig)> {
        let network = self.network_spec()?;
        let make = |stream: Stream, epochs: usize| -> StageConfig {
            let stage_seed = derive(self.training.seed, stream, 0);
            StageConfig {
                network: network.clone(),
                train: TrainConfig {
                    lr: self.training.lr,
                    batch_size: self.training.batch_size,
                    epochs,
                    reg: self.training.reg,
                    l2_scope: self.training.l2_scope.into(),
                    seed: derive(stage_seed, Stream::TrainLoop, 0),
                },
                augment: self.training.augment,
                rebalance: RebalancePolicy {
                    adasyn_k: self.training.adasyn_k,
                },
                init_seed: derive(stage_seed, Stream::Init, 0),
                rebalance_seed: derive(stage_seed, Stream::Rebalance, 0),
                augment_seed: derive(stage_seed, Stream::Augment, 0),
            }
        };
        Ok((
            make(Stream::Stage1, self.training.epochs_stage1),
            make(Stream::Stage2, self.training.epochs_stage2),
        ))
    }

    pub fn mc_config(&self) -> crate::mc::MCConfig {
        crate::mc::MCConfig {
            passes: self.inference.passes,
            seed: self.inference.seed,
            keep_passes: false,
        }
    }
}
