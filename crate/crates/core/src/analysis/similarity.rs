use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingBatch, EmbeddingVector};
use crate::error::{AuditError, Result};

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(AuditError::Computation(format!(
            "cosine of vectors with dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(AuditError::Computation("cosine with a zero vector".into()));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Image × prompt cosine similarities, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub image_ids: Vec<String>,
    pub prompt_ids: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(image_ids: Vec<String>, prompt_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != image_ids.len() * prompt_ids.len() {
            return Err(AuditError::Contract(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                image_ids.len(),
                prompt_ids.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(*v)) {
            return Err(AuditError::Contract(format!("similarity {v} outside [-1, 1]")));
        }
        Ok(SimilarityMatrix {
            image_ids,
            prompt_ids,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.image_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.prompt_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn similarity_matrix(images: &EmbeddingBatch, prompts: &EmbeddingBatch) -> Result<SimilarityMatrix> {
    if let (Some(a), Some(b)) = (images.dim(), prompts.dim()) {
        if a != b {
            return Err(AuditError::Computation(format!(
                "image batch from `{}` has dim {a} but prompt batch from `{}` has dim {b}",
                images.backend_name, prompts.backend_name
            )));
        }
    }
    let rows: Vec<Vec<f64>> = images
        .vectors
        .par_iter()
        .map(|img| prompts.vectors.iter().map(|p| cosine(img, p)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(SimilarityMatrix {
        image_ids: images.ids.clone(),
        prompt_ids: prompts.ids.clone(),
        values: rows.into_iter().flatten().collect(),
    })
}
