use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::autodiff::AdamConfig;
use crate::gnn::{Activation, GatConfig, Readout, TrainConfig};
use crate::selection::{CentralitySet, SelectionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutMode {
    Sum,
    Mean,
}

/// Node feature construction from the imputed correlation matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Position-wise z-scores with training-fold statistics.
    Standardize,
    /// Per-matrix Fisher z-transform.
    Fisher,
    /// Imputed correlations as given.
    Raw,
}

/// Every knob of a cross-validated run. Missing keys in a config file take
/// these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub seed: u64,
    pub folds: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub k_per_class: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub dropout: f64,
    pub negative_slope: f64,
    pub readout: ReadoutMode,
    pub sparsify_quantile: f64,
    pub ridge_lambda: f64,
    /// Stratified sample selection before training.
    pub selection: bool,
    /// Centralities in the selection regressor: `all`, or `dc`/`cc`/`ec`
    /// joined with `+`.
    pub centralities: String,
    pub class_weighting: bool,
    pub features: FeatureMode,
    pub top_l: usize,
    /// Keep attention masks directed instead of symmetrizing them on export.
    pub directed_masks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            seed: 0,
            folds: 4,
            epochs: 100,
            lr: 1e-4,
            weight_decay: 0.0,
            batch_size: 2,
            k_per_class: 4,
            hidden_dim: 8,
            heads: 2,
            layers: 2,
            dropout: 0.1,
            negative_slope: 0.2,
            readout: ReadoutMode::Sum,
            sparsify_quantile: 0.9,
            ridge_lambda: 1e-3,
            selection: true,
            centralities: "all".into(),
            class_weighting: true,
            features: FeatureMode::Standardize,
            top_l: 100,
            directed_masks: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingFile(path.to_path_buf()))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(m), Some(dir)) = (&cfg.manifest, path.parent()) {
            if m.is_relative() {
                cfg.manifest = Some(dir.join(m));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.top_l == 0 {
            return bad("top_l must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.sparsify_quantile) {
            return bad(format!("sparsify_quantile must lie in [0, 1], got {}", self.sparsify_quantile));
        }
        self.centrality_set()?;
        self.gat_config(2, 2).validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.selection_config()?.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn centrality_set(&self) -> Result<CentralitySet, PipelineError> {
        self.centralities.parse().map_err(PipelineError::Config)
    }

    pub fn gat_config(&self, in_dim: usize, classes: usize) -> GatConfig {
        GatConfig {
            in_dim,
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            layers: self.layers,
            classes,
            dropout: self.dropout,
            negative_slope: self.negative_slope,
            readout: match self.readout {
                ReadoutMode::Sum => Readout::Sum,
                ReadoutMode::Mean => Readout::Mean,
            },
            activation: Activation::Elu,
        }
    }

    pub fn selection_config(&self) -> Result<SelectionConfig, PipelineError> {
        Ok(SelectionConfig {
            k_per_class: self.k_per_class,
            ridge_lambda: self.ridge_lambda,
            oversample_seed: self.seed,
            folds: self.folds,
            centralities: self.centrality_set()?,
            sparsify_quantile: self.sparsify_quantile,
            ..SelectionConfig::default()
        })
    }

    /// Training settings for one outer fold; the fold index perturbs the seed.
    pub fn train_config(&self, fold: usize) -> Result<TrainConfig, PipelineError> {
        let seed = self.seed.wrapping_mul(1_000_003).wrapping_add(fold as u64);
        let mut selection = if self.selection { Some(self.selection_config()?) } else { None };
        if let Some(s) = selection.as_mut() {
            s.oversample_seed = seed;
        }
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() },
            seed,
            selection,
            class_weighting: self.class_weighting,
        })
    }
}
