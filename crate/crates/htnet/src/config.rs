//! JSON training configuration.

use std::fs;
use std::path::{Path, PathBuf};

use htnet_core::nn::{AdadeltaConfig, Architecture, ModelSpec, Pooling};
use htnet_core::perceptron::HtBackend;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const DATA_DIR_ENV: &str = "HT_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ArchName {
    #[default]
    ToyCnn,
    ToyHtCnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingName {
    #[default]
    Max,
    Average,
}

impl From<PoolingName> for Pooling {
    fn from(p: PoolingName) -> Self {
        match p {
            PoolingName::Max => Pooling::Max,
            PoolingName::Average => Pooling::Average,
        }
    }
}

impl From<Pooling> for PoolingName {
    fn from(p: Pooling) -> Self {
        match p {
            Pooling::Max => PoolingName::Max,
            Pooling::Average => PoolingName::Average,
        }
    }
}

/// Transform backend for the HT-perceptron layer at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendConfig {
    #[default]
    Classical,
    QuantumExact,
    QuantumShots {
        shots: u64,
        seed: u64,
    },
}

impl From<BackendConfig> for HtBackend {
    fn from(b: BackendConfig) -> Self {
        match b {
            BackendConfig::Classical => HtBackend::Classical,
            BackendConfig::QuantumExact => HtBackend::QuantumExact,
            BackendConfig::QuantumShots { shots, seed } => {
                HtBackend::QuantumSampled { shots, seed }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub arch: ArchName,
    /// Path count; only read for `toy-ht-cnn`.
    pub paths: usize,
    pub pooling: PoolingName,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub rho: f64,
    pub eps: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Backend for the per-epoch test evaluation. Training is always classical.
    pub ht_backend: BackendConfig,
    /// Directory with the four IDX files; falls back to `HT_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Use only the first `n` training images.
    pub train_limit: Option<usize>,
    /// Use only the first `n` test images.
    pub test_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adadelta = AdadeltaConfig::default();
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            arch: ArchName::ToyCnn,
            paths: 3,
            pooling: PoolingName::Max,
            epochs: 14,
            batch_size: 64,
            lr: 1.0,
            lr_decay: 0.7,
            rho: adadelta.rho,
            eps: adadelta.eps,
            dropout: 0.2,
            seed: 1,
            ht_backend: BackendConfig::Classical,
            data_dir: None,
            output_dir: PathBuf::from("runs/latest"),
            train_limit: None,
            test_limit: None,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return fail(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0)
            || !(self.lr_decay.is_finite() && self.lr_decay > 0.0)
        {
            return fail("lr must be non-negative and lr_decay positive".into());
        }
        if !(0.0..1.0).contains(&self.rho) || !self.eps.is_finite() || self.eps <= 0.0 {
            return fail("rho must lie in [0, 1) and eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)".into());
        }
        if let BackendConfig::QuantumShots { shots: 0, .. } = self.ht_backend {
            return fail("quantum-shots needs at least one shot".into());
        }
        if self.train_limit == Some(0) || self.test_limit == Some(0) {
            return fail("dataset limits must be positive".into());
        }
        self.model_spec().validate()?;
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        let base = match self.arch {
            ArchName::ToyCnn => ModelSpec::toy_cnn(),
            ArchName::ToyHtCnn => ModelSpec::toy_ht_cnn(self.paths),
        };
        ModelSpec {
            pooling: self.pooling.into(),
            dropout: self.dropout,
            ..base
        }
    }

    pub fn adadelta(&self) -> AdadeltaConfig {
        AdadeltaConfig {
            rho: self.rho,
            eps: self.eps,
        }
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch.saturating_sub(1) as i32)
    }

    pub fn resolved_data_dir(&self) -> Result<PathBuf> {
        resolve_data_dir(self.data_dir.as_deref())
    }
}

/// Explicit directory, else `HT_DATA_DIR`.
pub fn resolve_data_dir(explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(dir) = explicit {
        return Ok(dir.to_path_buf());
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Ok(PathBuf::from(dir)),
        _ => Err(Error::Config(format!(
            "no data directory given and {DATA_DIR_ENV} is unset"
        ))),
    }
}

impl ArchName {
    pub fn of(architecture: Architecture) -> (Self, usize) {
        match architecture {
            Architecture::ToyCnn => (ArchName::ToyCnn, 0),
            Architecture::ToyHtCnn { paths } => (ArchName::ToyHtCnn, paths),
        }
    }
}
