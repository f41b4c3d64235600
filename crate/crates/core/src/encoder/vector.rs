use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Tolerance on the unit-norm contract for emitted vectors.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A dense embedding. Vectors produced by encoders are unit-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(AuditError::Computation("embedding must have dim >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AuditError::Computation("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingVector { values })
    }

    /// Scales `values` to unit L2 norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut v = EmbeddingVector::new(values)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(AuditError::Computation("cannot normalize a zero vector".into()));
        }
        v.values.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, alpha: f64) -> EmbeddingVector {
        EmbeddingVector {
            values: self.values.iter().map(|x| x * alpha).collect(),
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Embeddings for a list of items, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBatch {
    pub ids: Vec<String>,
    pub vectors: Vec<EmbeddingVector>,
    pub backend_name: String,
}

impl EmbeddingBatch {
    pub fn new(backend_name: impl Into<String>) -> Self {
        EmbeddingBatch {
            ids: Vec::new(),
            vectors: Vec::new(),
            backend_name: backend_name.into(),
        }
    }

    pub fn from_parts(
        backend_name: impl Into<String>,
        ids: Vec<String>,
        vectors: Vec<EmbeddingVector>,
    ) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(AuditError::Contract(format!(
                "{} ids but {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let mut batch = EmbeddingBatch::new(backend_name);
        for (id, v) in ids.into_iter().zip(vectors) {
            batch.push(id, v)?;
        }
        Ok(batch)
    }

    pub fn push(&mut self, id: String, vector: EmbeddingVector) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != vector.dim() {
                return Err(AuditError::Contract(format!(
                    "batch dim {d} but vector `{id}` has dim {}",
                    vector.dim()
                )));
            }
        }
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(EmbeddingVector::dim)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.ids.iter().position(|i| i == id).map(|i| &self.vectors[i])
    }
}
