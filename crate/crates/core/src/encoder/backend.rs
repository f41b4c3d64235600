use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::image::ImageInput;
use super::vector::EmbeddingVector;
use crate::error::{AuditError, Result};
use crate::geometry::PixelRect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Pretrained,
    Mock,
    PatternedMock,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Pretrained => "pretrained",
            BackendKind::Mock => "mock",
            BackendKind::PatternedMock => "patterned_mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub dim: usize,
    pub kind: BackendKind,
    pub supports_gradients: bool,
}

/// A dual encoder mapping texts and images into one embedding space.
///
/// Implementations return raw (unnormalized) vectors; normalization happens
/// once in [`encode_texts`](super::encode_texts) / [`encode_images`](super::encode_images).
pub trait Encoder: Send + Sync {
    fn info(&self) -> &BackendInfo;

    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;

    fn embed_image(&self, image: &ImageInput) -> Result<Vec<f64>>;

    /// Present when the backend can report layer activations and gradients.
    fn gradient_source(&self) -> Option<&dyn GradientSource> {
        None
    }
}

/// Which activation layer Grad-CAM reads.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    /// Token activations of the last transformer block after its normalization.
    #[default]
    Final,
    /// Same point in block `i` (0-based).
    Block(usize),
    Named(String),
}

impl FromStr for LayerSelector {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Err("empty layer selector".into());
        }
        if s == "final" {
            return Ok(LayerSelector::Final);
        }
        if let Some(i) = s.strip_prefix("block:") {
            return i
                .parse()
                .map(LayerSelector::Block)
                .map_err(|_| format!("invalid block index in `{s}`"));
        }
        Ok(LayerSelector::Named(s.to_string()))
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::Final => f.write_str("final"),
            LayerSelector::Block(i) => write!(f, "block:{i}"),
            LayerSelector::Named(n) => f.write_str(n),
        }
    }
}

/// Token activations at one layer together with the gradient of the
/// image/query cosine similarity with respect to them.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Row-major `tokens × channels`.
    pub activations: Vec<f64>,
    pub gradients: Vec<f64>,
    pub channels: usize,
    /// Leading tokens (global summary) that are not part of the patch grid.
    pub summary_tokens: usize,
    /// Patch grid as (rows, cols).
    pub grid: (usize, usize),
    /// Image area the patch grid covers.
    pub footprint: PixelRect,
    pub similarity: f64,
}

impl LayerTrace {
    pub fn tokens(&self) -> usize {
        self.activations.len() / self.channels.max(1)
    }

    pub fn check(&self) -> Result<()> {
        let expected = (self.summary_tokens + self.grid.0 * self.grid.1) * self.channels;
        if self.channels == 0 || self.activations.len() != expected || self.gradients.len() != expected {
            return Err(AuditError::Computation(format!(
                "layer trace shape mismatch: {} activations, {} gradients, expected {expected}",
                self.activations.len(),
                self.gradients.len()
            )));
        }
        Ok(())
    }
}

pub trait GradientSource: Send + Sync {
    fn layer_trace(
        &self,
        image: &ImageInput,
        query: &EmbeddingVector,
        layer: &LayerSelector,
    ) -> Result<LayerTrace>;
}

/// Deterministic unit vector keyed by a domain label, a seed and arbitrary bytes.
pub(crate) fn hashed_unit_vector(domain: &str, seed: u64, key: &[u8], dim: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(domain.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    hasher.update(key);
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes from `v` its components along each (unit, mutually orthogonal)
/// vector in `basis`.
pub(crate) fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

/// Gram-Schmidt; fails if the vectors are (numerically) dependent.
pub(crate) fn orthonormalize(vectors: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        project_out(&mut v, &basis);
        project_out(&mut v, &basis);
        let n = norm(&v);
        if n < 1e-8 {
            return Err(AuditError::Config("embedding dimension too small for the requested directions".into()));
        }
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_vectors_are_deterministic_and_unit() {
        let a = hashed_unit_vector("text", 7, b"An image of fraud", 64);
        let b = hashed_unit_vector("text", 7, b"An image of fraud", 64);
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        assert_ne!(a, hashed_unit_vector("text", 8, b"An image of fraud", 64));
        assert_ne!(a, hashed_unit_vector("image", 7, b"An image of fraud", 64));
    }

    #[test]
    fn gram_schmidt_gives_orthonormal_set() {
        let vs: Vec<_> = (0..5).map(|i| hashed_unit_vector("c", i, b"", 16)).collect();
        let basis = orthonormalize(vs).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d = dot(&basis[i], &basis[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(orthonormalize(vec![vec![1.0, 0.0], vec![2.0, 0.0]]).is_err());
    }

    #[test]
    fn layer_selector_parses() {
        assert_eq!("final".parse::<LayerSelector>().unwrap(), LayerSelector::Final);
        assert_eq!("block:3".parse::<LayerSelector>().unwrap(), LayerSelector::Block(3));
        assert!("block:x".parse::<LayerSelector>().is_err());
        assert_eq!(LayerSelector::Block(2).to_string(), "block:2");
    }
}
