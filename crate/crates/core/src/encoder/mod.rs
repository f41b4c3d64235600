//! Embedding backends and batch encoding.

mod backend;
mod cache;
mod config;
mod encode;
mod image;
mod mock;
mod patterned;
#[cfg(feature = "pretrained")]
mod pretrained;
mod vector;

pub use backend::{BackendInfo, BackendKind, Encoder, GradientSource, LayerSelector, LayerTrace};
pub use cache::{EmbeddingCache, CACHE_HEADER};
pub use config::{build_backend, BackendConfig, DEFAULT_BATCH_SIZE, DEFAULT_MOCK_DIM};
pub use encode::{
    encode_image_inputs, encode_images, encode_images_with, encode_texts, encode_texts_with, EncodeFailure,
    EncodeOptions, EncodeOutcome,
};
pub use image::{encode_tagged_png, read_png_tags, ImageInput, TAG_CHUNK_KEYWORD};
pub use mock::{make_mock_backend, MockBackend, PlantedAssociation};
pub use patterned::{make_patterned_backend, PatternedBackend, DEFAULT_PATCH_GRID};
#[cfg(feature = "pretrained")]
pub use pretrained::PretrainedBackend;
pub use vector::{EmbeddingBatch, EmbeddingVector, UNIT_NORM_TOLERANCE};
