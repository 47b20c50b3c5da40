//! Two-stage image classification with Monte-Carlo-dropout uncertainty.
//!
//! `hmcnet` trains a pair of small binary convolutional networks arranged as a
//! cascade — stage 1 separates the first class from the rest, stage 2 splits
//! the remainder — and composes their outputs into a three-class predictive
//! distribution. Keeping dropout active at inference time and averaging T
//! stochastic passes yields a posterior predictive estimate whose entropy
//! quantifies how much the prediction should be trusted.
//!
//! The crate covers the full experimental loop at desk scale:
//!
//! - a minimal f64 network engine (dense/conv/ReLU/softmax/dropout/pooling)
//!   with reverse-mode gradients, finite-difference verification, and Adam;
//! - dataset handling: CSV manifests over PNG/PGM images, patient-aware
//!   stratified splitting, bilinear preprocessing;
//! - class rebalancing via ADASYN interpolation and random oversampling, plus
//!   rotation/flip augmentation;
//! - evaluation: confusion matrices, precision/recall/F1, macro averages, and
//!   per-class one-vs-rest ROC/AUC;
//! - a synthetic dataset generator so everything runs end to end without any
//!   external data.
//!
//! Every stochastic step draws from seed streams derived from run-config
//! seeds, so reruns are byte-identical. See the `examples/` directory for a
//! runnable tour and the `hmcnet` binary for the file-driven pipeline.

pub mod cli;
pub mod config;
pub mod data;
pub mod dist;
pub mod error;
pub mod hierarchy;
pub mod metrics;
pub mod mc;
pub mod nn;
pub mod seed;
pub mod synthetic;
pub mod tensor;

pub use dist::ClassDistribution;
pub use error::{Error, Result};
pub use tensor::Tensor;

pub use data::{Dataset, SampleRecord, SubtypeLabel};
pub use hierarchy::{HierarchicalPrediction, RouteMode, TwoStageModel};
pub use mc::{MCConfig, UncertaintyReport};
pub use metrics::MetricsReport;
pub use nn::{LayerSpec, ModelParams, NetworkSpec, TrainConfig};
