use serde::{Deserialize, Serialize};

use super::backend::{dot, hashed_unit_vector, norm, orthonormalize, project_out, BackendInfo, BackendKind, Encoder};
use super::image::ImageInput;
use crate::error::{AuditError, Result};

/// Tagged images gain cosine `margin` toward every prompt whose text contains
/// `prompt_substring`, relative to the same image without the tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAssociation {
    pub tag: String,
    pub prompt_substring: String,
    pub margin: f64,
}

impl PlantedAssociation {
    pub fn new(tag: impl Into<String>, prompt_substring: impl Into<String>, margin: f64) -> Self {
        PlantedAssociation {
            tag: tag.into(),
            prompt_substring: prompt_substring.into(),
            margin,
        }
    }
}

/// Hash-seeded encoder: text vectors keyed by (seed, text), image vectors by
/// (seed, image bytes).
///
/// Each planted association owns a concept direction `c` (the set is
/// orthonormalized). A prompt matching one plant embeds as `(r + c)/√2` with
/// `r ⊥ c`; a tagged image has its `c` coordinate raised by `margin·√2` and the
/// rest rescaled to unit norm, which raises its cosine with that prompt by
/// `margin` up to a zero-mean term of order `margin/√dim`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    info: BackendInfo,
    seed: u64,
    plants: Vec<PlantedAssociation>,
    concepts: Vec<Vec<f64>>,
}

pub fn make_mock_backend(seed: u64, dim: usize) -> Result<MockBackend> {
    MockBackend::new(seed, dim, Vec::new())
}

impl MockBackend {
    pub fn new(seed: u64, dim: usize, plants: Vec<PlantedAssociation>) -> Result<Self> {
        if dim < 2 {
            return Err(AuditError::Config(format!("mock backend needs dim >= 2, got {dim}")));
        }
        for p in &plants {
            if p.tag.trim().is_empty() || p.prompt_substring.is_empty() {
                return Err(AuditError::Config("planted association needs a tag and a prompt substring".into()));
            }
            if !p.margin.is_finite() || p.margin.abs() >= 1.0 {
                return Err(AuditError::Config(format!("planted margin {} must lie in (-1, 1)", p.margin)));
            }
        }
        if !plants.is_empty() && plants.len() + 1 >= dim {
            return Err(AuditError::Config(format!(
                "dim {dim} too small for {} planted associations",
                plants.len()
            )));
        }
        let concepts = orthonormalize(
            plants
                .iter()
                .enumerate()
                .map(|(i, p)| hashed_unit_vector("concept", seed, format!("{i}:{}", p.prompt_substring).as_bytes(), dim))
                .collect(),
        )?;
        Ok(MockBackend {
            info: BackendInfo {
                name: format!("mock-s{seed}-d{dim}"),
                dim,
                kind: BackendKind::Mock,
                supports_gradients: false,
            },
            seed,
            plants,
            concepts,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.info.name = name.into();
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn plants(&self) -> &[PlantedAssociation] {
        &self.plants
    }
}

impl Encoder for MockBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let mut t = hashed_unit_vector("text", self.seed, text.as_bytes(), self.info.dim);
        if self.concepts.is_empty() {
            return Ok(t);
        }
        project_out(&mut t, &self.concepts);
        let n = norm(&t);
        t.iter_mut().for_each(|x| *x /= n);
        for (plant, c) in self.plants.iter().zip(&self.concepts) {
            if text.contains(&plant.prompt_substring) {
                t.iter_mut().zip(c).for_each(|(x, y)| *x += y);
            }
        }
        Ok(t)
    }

    fn embed_image(&self, image: &ImageInput) -> Result<Vec<f64>> {
        let u = hashed_unit_vector("image", self.seed, &image.bytes, self.info.dim);
        let matching: Vec<usize> = (0..self.plants.len())
            .filter(|&k| image.has_tag(&self.plants[k].tag))
            .collect();
        if matching.is_empty() {
            return Ok(u);
        }
        let mut coords: Vec<f64> = self.concepts.iter().map(|c| dot(&u, c)).collect();
        let mut rest = u.clone();
        project_out(&mut rest, &self.concepts);
        for &k in &matching {
            coords[k] += self.plants[k].margin * std::f64::consts::SQRT_2;
        }
        let remaining = 1.0 - coords.iter().map(|a| a * a).sum::<f64>();
        if remaining <= 0.0 {
            return Err(AuditError::Backend {
                backend: self.info.name.clone(),
                item: image.id.clone(),
                message: "planted margins too large for a unit embedding".into(),
            });
        }
        let scale = remaining.sqrt() / norm(&rest);
        let mut out: Vec<f64> = rest.iter().map(|x| x * scale).collect();
        for (a, c) in coords.iter().zip(&self.concepts) {
            out.iter_mut().zip(c).for_each(|(x, y)| *x += a * y);
        }
        Ok(out)
    }
}
