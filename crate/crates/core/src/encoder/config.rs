use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{BackendKind, Encoder};
use super::mock::{MockBackend, PlantedAssociation};
use super::patterned::{PatternedBackend, DEFAULT_PATCH_GRID};
use crate::error::{AuditError, Result};
use crate::geometry::GridRect;

pub const DEFAULT_MOCK_DIM: usize = 512;
pub const DEFAULT_BATCH_SIZE: usize = 32;

/// The `[backend]` block of an audit configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Directory holding `config.json`, `model.safetensors` and `tokenizer.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_name: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Patch grid as `[rows, cols]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_grid: Option<[usize; 2]>,
    /// Patterned region as `[row, col, rows, cols]` in grid coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_region: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub planted_associations: Vec<PlantedAssociation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

impl BackendConfig {
    pub fn mock(seed: u64, dim: usize) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            checkpoint_name: None,
            seed: Some(seed),
            dim: Some(dim),
            patch_grid: None,
            patch_region: None,
            planted_associations: Vec::new(),
            batch_size: None,
        }
    }

    pub fn with_plants(mut self, plants: Vec<PlantedAssociation>) -> Self {
        self.planted_associations = plants;
        self
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(DEFAULT_BATCH_SIZE)
    }

    /// First 8 hex digits of the SHA-256 of the canonical JSON form.
    /// Batch size is excluded since it cannot change any vector.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.batch_size = None;
        let json = serde_json::to_string(&canonical).expect("backend config serializes");
        Sha256::digest(json.as_bytes()).iter().take(4).map(|b| format!("{b:02x}")).collect()
    }
}

/// Instantiates the backend a config describes.
pub fn build_backend(config: &BackendConfig) -> Result<Box<dyn Encoder>> {
    if config.batch_size == Some(0) {
        return Err(AuditError::Config("batch_size must be at least 1".into()));
    }
    let hash = config.config_hash();
    match config.kind {
        BackendKind::Mock => {
            if config.patch_region.is_some() || config.patch_grid.is_some() {
                return Err(AuditError::Config("patch_grid/patch_region apply only to patterned_mock".into()));
            }
            let seed = config.seed.unwrap_or(0);
            let dim = config.dim.unwrap_or(DEFAULT_MOCK_DIM);
            let backend = MockBackend::new(seed, dim, config.planted_associations.clone())?;
            Ok(Box::new(backend.with_name(format!("mock-s{seed}-d{dim}-{hash}"))))
        }
        BackendKind::PatternedMock => {
            if !config.planted_associations.is_empty() {
                return Err(AuditError::Config("planted_associations apply only to the mock backend".into()));
            }
            let grid = config.patch_grid.map(|[r, c]| (r, c)).unwrap_or(DEFAULT_PATCH_GRID);
            let [row, col, rows, cols] = config
                .patch_region
                .ok_or_else(|| AuditError::Config("patterned_mock needs patch_region = [row, col, rows, cols]".into()))?;
            let dim = config.dim.unwrap_or(DEFAULT_MOCK_DIM);
            Ok(Box::new(PatternedBackend::new(grid, GridRect::new(row, col, rows, cols), dim)?))
        }
        BackendKind::Pretrained => build_pretrained(config),
    }
}

#[cfg(feature = "pretrained")]
fn build_pretrained(config: &BackendConfig) -> Result<Box<dyn Encoder>> {
    let dir = config
        .checkpoint_name
        .as_ref()
        .ok_or_else(|| AuditError::Config("pretrained backend needs checkpoint_name (a local checkpoint directory)".into()))?;
    Ok(Box::new(super::pretrained::PretrainedBackend::load(dir)?))
}

#[cfg(not(feature = "pretrained"))]
fn build_pretrained(_config: &BackendConfig) -> Result<Box<dyn Encoder>> {
    Err(AuditError::Capability(
        "this build has no pretrained backend; rebuild with `--features pretrained`".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_block_and_rejects_unknown_keys() {
        let cfg: BackendConfig = toml::from_str(
            r#"
            kind = "mock"
            seed = 3
            dim = 16
            planted_associations = [{ tag = "A", prompt_substring = "terrorist", margin = 0.1 }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.planted_associations.len(), 1);
        let backend = build_backend(&cfg).unwrap();
        assert_eq!(backend.info().dim, 16);
        assert!(backend.info().name.starts_with("mock-s3-d16-"));
        assert!(toml::from_str::<BackendConfig>("kind = \"mock\"\nsede = 3").is_err());
    }

    #[test]
    fn hash_ignores_batch_size_but_tracks_plants() {
        let a = BackendConfig::mock(1, 8);
        let mut b = a.clone();
        b.batch_size = Some(4);
        assert_eq!(a.config_hash(), b.config_hash());
        let c = a.clone().with_plants(vec![PlantedAssociation::new("x", "y", 0.1)]);
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn patterned_requires_region() {
        let mut cfg = BackendConfig::mock(0, 16);
        cfg.kind = BackendKind::PatternedMock;
        assert!(matches!(build_backend(&cfg), Err(AuditError::Config(_))));
        cfg.patch_region = Some([0, 0, 2, 2]);
        assert!(build_backend(&cfg).unwrap().info().supports_gradients);
        cfg.patch_region = Some([6, 6, 2, 2]);
        assert!(build_backend(&cfg).is_err());
    }

    #[cfg(not(feature = "pretrained"))]
    #[test]
    fn pretrained_without_feature_is_capability_error() {
        let mut cfg = BackendConfig::mock(0, 16);
        cfg.kind = BackendKind::Pretrained;
        assert!(matches!(build_backend(&cfg), Err(AuditError::Capability(_))));
    }
}
