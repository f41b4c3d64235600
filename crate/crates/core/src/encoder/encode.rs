use rayon::prelude::*;

use super::backend::Encoder;
use super::cache::EmbeddingCache;
use super::config::DEFAULT_BATCH_SIZE;
use super::image::ImageInput;
use super::vector::{EmbeddingBatch, EmbeddingVector};
use crate::dataset::Dataset;
use crate::error::{AuditError, Result};
use crate::lexicon::Prompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    pub batch_size: usize,
    /// Strict mode aborts on the first failing item; lenient mode skips it
    /// and records the failure.
    pub strict: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            batch_size: DEFAULT_BATCH_SIZE,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodeFailure {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct EncodeOutcome {
    pub batch: EmbeddingBatch,
    pub failures: Vec<EncodeFailure>,
    pub cache_hits: usize,
}

pub fn encode_texts(encoder: &dyn Encoder, prompts: &[Prompt]) -> Result<EmbeddingBatch> {
    Ok(encode_texts_with(encoder, prompts, &EncodeOptions::default(), None)?.batch)
}

pub fn encode_texts_with(
    encoder: &dyn Encoder,
    prompts: &[Prompt],
    options: &EncodeOptions,
    cache: Option<&mut EmbeddingCache>,
) -> Result<EncodeOutcome> {
    run(
        encoder,
        prompts,
        options,
        cache,
        |p| p.id().to_string(),
        |p| format!("text:{}", p.full_text),
        |p| encoder.embed_text(&p.full_text),
    )
}

/// Encodes every record of a dataset, reading image files on demand.
pub fn encode_images(encoder: &dyn Encoder, dataset: &Dataset) -> Result<EmbeddingBatch> {
    Ok(encode_images_with(encoder, dataset, &EncodeOptions::default(), None)?.batch)
}

pub fn encode_images_with(
    encoder: &dyn Encoder,
    dataset: &Dataset,
    options: &EncodeOptions,
    cache: Option<&mut EmbeddingCache>,
) -> Result<EncodeOutcome> {
    run(
        encoder,
        dataset.records(),
        options,
        cache,
        |r| r.id.clone(),
        |r| format!("image:{}", r.id),
        |r| encoder.embed_image(&ImageInput::from_record(r, dataset)?),
    )
}

/// Encodes already-decoded images.
pub fn encode_image_inputs(encoder: &dyn Encoder, images: &[ImageInput]) -> Result<EmbeddingBatch> {
    Ok(run(
        encoder,
        images,
        &EncodeOptions::default(),
        None,
        |i| i.id.clone(),
        |i| format!("image:{}", i.id),
        |i| encoder.embed_image(i),
    )?
    .batch)
}

fn run<T: Sync>(
    encoder: &dyn Encoder,
    items: &[T],
    options: &EncodeOptions,
    mut cache: Option<&mut EmbeddingCache>,
    id_of: impl Fn(&T) -> String + Sync,
    key_of: impl Fn(&T) -> String + Sync,
    embed: impl Fn(&T) -> Result<Vec<f64>> + Sync,
) -> Result<EncodeOutcome> {
    if options.batch_size == 0 {
        return Err(AuditError::Config("batch_size must be at least 1".into()));
    }
    let info = encoder.info();
    let cached: Vec<Option<EmbeddingVector>> = items
        .iter()
        .map(|item| {
            cache
                .as_deref()
                .and_then(|c| c.get(&info.name, &key_of(item)))
                .filter(|v| v.dim() == info.dim)
                .cloned()
        })
        .collect();
    let cache_hits = cached.iter().filter(|c| c.is_some()).count();

    let finish = |item: &T| -> Result<EmbeddingVector> {
        let id = id_of(item);
        let wrap = |message: String| AuditError::Backend {
            backend: info.name.clone(),
            item: id.clone(),
            message,
        };
        let raw = embed(item).map_err(|e| match e {
            AuditError::Backend { .. } | AuditError::Image { .. } => e,
            other => wrap(other.to_string()),
        })?;
        if raw.len() != info.dim {
            return Err(wrap(format!("returned {} values, backend dim is {}", raw.len(), info.dim)));
        }
        EmbeddingVector::normalized(raw).map_err(|e| wrap(e.to_string()))
    };

    let indexed: Vec<(usize, &T)> = items.iter().enumerate().filter(|(i, _)| cached[*i].is_none()).collect();
    let computed: Vec<Vec<(usize, Result<EmbeddingVector>)>> = indexed
        .par_chunks(options.batch_size)
        .map(|chunk| chunk.iter().map(|&(i, item)| (i, finish(item))).collect())
        .collect();

    let mut fresh: Vec<Option<Result<EmbeddingVector>>> = (0..items.len()).map(|_| None).collect();
    for (i, r) in computed.into_iter().flatten() {
        fresh[i] = Some(r);
    }

    let mut batch = EmbeddingBatch::new(info.name.clone());
    let mut failures = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let id = id_of(item);
        let vector = match (cached[i].clone(), fresh[i].take()) {
            (Some(v), _) => v,
            (None, Some(Ok(v))) => {
                if let Some(c) = cache.as_deref_mut() {
                    c.insert(&info.name, &key_of(item), v.clone());
                }
                v
            }
            (None, Some(Err(e))) => {
                if options.strict {
                    return Err(e);
                }
                log::warn!("skipping `{id}`: {e}");
                failures.push(EncodeFailure {
                    id,
                    message: e.to_string(),
                });
                continue;
            }
            (None, None) => unreachable!("every uncached item is computed"),
        };
        batch.push(id, vector)?;
    }
    Ok(EncodeOutcome {
        batch,
        failures,
        cache_hits,
    })
}
