//! Single-file checkpoint container.
//!
//! Layout: 8-byte magic `HTNETCKP`, `u32` little-endian format version,
//! `u64` little-endian manifest length, the UTF-8 JSON manifest, then every
//! parameter tensor as packed little-endian `f32` values. Tensor offsets in
//! the manifest count `f32` elements from the start of the blob section.

use std::fs;
use std::path::Path;

use htnet_core::nn::{Architecture, Model, ModelSpec};
use htnet_core::RNG_NAME;
use serde::{Deserialize, Serialize};

use crate::config::{ArchName, PoolingName};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HTNETCKP";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const HT_CONVENTION: &str = "folded-inverse: forward HT unscaled, inverse HT scaled by 1/(H*W)";
pub const MAC_CONVENTION: &str =
    "one MAC per multiply-accumulate; each bias add counts one MAC; HT costs zero MACs";
pub const DTYPE: &str = "f32-le";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub architecture: ArchName,
    pub paths: usize,
    pub image_size: usize,
    pub in_channels: usize,
    pub channels: usize,
    pub hidden: usize,
    pub classes: usize,
    pub pooling: PoolingName,
    pub dropout: f64,
}

impl From<&ModelSpec> for ModelManifest {
    fn from(spec: &ModelSpec) -> Self {
        let (architecture, paths) = ArchName::of(spec.architecture);
        Self {
            architecture,
            paths,
            image_size: spec.image_size,
            in_channels: spec.in_channels,
            channels: spec.channels,
            hidden: spec.hidden,
            classes: spec.classes,
            pooling: spec.pooling.into(),
            dropout: spec.dropout,
        }
    }
}

impl ModelManifest {
    pub fn spec(&self) -> ModelSpec {
        let architecture = match self.architecture {
            ArchName::ToyCnn => Architecture::ToyCnn,
            ArchName::ToyHtCnn => Architecture::ToyHtCnn { paths: self.paths },
        };
        ModelSpec {
            architecture,
            image_size: self.image_size,
            in_channels: self.in_channels,
            channels: self.channels,
            hidden: self.hidden,
            classes: self.classes,
            pooling: self.pooling.into(),
            dropout: self.dropout,
        }
    }
}

/// Metrics of the epoch the weights come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedInfo {
    pub seed: u64,
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conventions {
    pub ht: String,
    pub macs: String,
    pub dtype: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            ht: HT_CONVENTION.into(),
            macs: MAC_CONVENTION.into(),
            dtype: DTYPE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub model: ModelManifest,
    pub metrics: EpochMetrics,
    pub seeds: SeedInfo,
    pub conventions: Conventions,
    pub param_count: usize,
    pub tensors: Vec<TensorEntry>,
}

/// A manifest together with the packed parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub values: Vec<f32>,
}

impl Checkpoint {
    pub fn capture(model: &Model<f32>, metrics: EpochMetrics, seed: u64) -> Self {
        let mut tensors = Vec::new();
        let mut values = Vec::with_capacity(model.param_count());
        for p in model.parameters() {
            tensors.push(TensorEntry {
                name: p.name,
                shape: p.shape,
                offset: values.len(),
                len: p.data.len(),
            });
            values.extend_from_slice(p.data);
        }
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            model: ModelManifest::from(model.spec()),
            metrics,
            seeds: SeedInfo {
                seed,
                rng: RNG_NAME.into(),
            },
            conventions: Conventions::default(),
            param_count: values.len(),
            tensors,
        };
        Self { manifest, values }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(20 + manifest.len() + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let schema = |msg: &str| Error::Schema(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(schema("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported container version {version}"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < len {
            return Err(schema("truncated manifest"));
        }
        let manifest: Manifest = serde_json::from_slice(&body[..len])
            .map_err(|e| Error::Schema(format!("manifest: {e}")))?;
        let blob = &body[len..];
        if blob.len() % 4 != 0 {
            return Err(schema("weight section is not a whole number of f32 values"));
        }
        let values: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let checkpoint = Self { manifest, values };
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported manifest schema {}",
                m.schema_version
            )));
        }
        if m.conventions.dtype != DTYPE {
            return Err(Error::Schema(format!(
                "unsupported dtype {}",
                m.conventions.dtype
            )));
        }
        if m.param_count != self.values.len() {
            return Err(Error::Schema(format!(
                "manifest declares {} values but the file holds {}",
                m.param_count,
                self.values.len()
            )));
        }
        for t in &m.tensors {
            let product: usize = t.shape.iter().product();
            if product != t.len
                || t.offset
                    .checked_add(t.len)
                    .map_or(true, |end| end > self.values.len())
            {
                return Err(Error::Schema(format!(
                    "tensor {} has an inconsistent extent",
                    t.name
                )));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> ModelSpec {
        self.manifest.model.spec()
    }

    /// Rebuilds the model; fails if the tensors do not fit the declared architecture.
    pub fn model(&self) -> Result<Model<f32>> {
        let mut rng = htnet_core::seeded_rng(self.manifest.seeds.seed);
        let mut model = Model::new(self.spec(), &mut rng)?;
        let expected: Vec<(String, Vec<usize>)> = model
            .parameters()
            .into_iter()
            .map(|p| (p.name, p.shape))
            .collect();
        let found: Vec<(String, Vec<usize>)> = self
            .manifest
            .tensors
            .iter()
            .map(|t| (t.name.clone(), t.shape.clone()))
            .collect();
        if expected != found {
            return Err(Error::Schema(format!(
                "tensors do not match a {:?} model: expected {} tensors, found {}",
                self.manifest.model.architecture,
                expected.len(),
                found.len()
            )));
        }
        let values: Vec<(String, Vec<f32>)> = self
            .manifest
            .tensors
            .iter()
            .map(|t| {
                (
                    t.name.clone(),
                    self.values[t.offset..t.offset + t.len].to_vec(),
                )
            })
            .collect();
        model.load_parameters(&values)?;
        Ok(model)
    }

    /// Like [`Self::model`], but also demands a specific architecture.
    pub fn model_for(&self, expected: ArchName, paths: Option<usize>) -> Result<Model<f32>> {
        let m = &self.manifest.model;
        if m.architecture != expected
            || (expected == ArchName::ToyHtCnn && paths.is_some_and(|p| p != m.paths))
        {
            return Err(Error::Schema(format!(
                "checkpoint holds a {:?} model with {} paths, not the requested {:?}",
                m.architecture, m.paths, expected
            )));
        }
        self.model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(spec: ModelSpec) -> Model<f32> {
        Model::new(spec, &mut htnet_core::seeded_rng(9)).unwrap()
    }

    fn small(architecture: Architecture) -> ModelSpec {
        ModelSpec {
            architecture,
            image_size: 8,
            channels: 4,
            hidden: 6,
            ..ModelSpec::toy_cnn()
        }
    }

    #[test]
    fn bytes_round_trip_bit_exactly() {
        let model = tiny(small(Architecture::ToyHtCnn { paths: 2 }));
        let metrics = EpochMetrics {
            epoch: 3,
            train_loss: 0.25,
            test_acc: 0.5,
            seconds: 1.5,
        };
        let ck = Checkpoint::capture(&model, metrics, 42);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model().unwrap(), model);
        assert_eq!(back.manifest.seeds.rng, RNG_NAME);
    }

    #[test]
    fn rejects_corruption_and_wrong_architecture() {
        let ck = Checkpoint::capture(
            &tiny(small(Architecture::ToyCnn)),
            EpochMetrics::default(),
            1,
        );
        let mut bytes = ck.to_bytes();
        bytes.pop();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Schema(_))
        ));
        let mut bytes = ck.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            ck.model_for(ArchName::ToyHtCnn, Some(3)),
            Err(Error::Schema(_))
        ));

        let mut relabeled = ck.clone();
        relabeled.manifest.model.architecture = ArchName::ToyHtCnn;
        relabeled.manifest.model.paths = 1;
        assert!(matches!(relabeled.model(), Err(Error::Schema(_))));
    }
}
