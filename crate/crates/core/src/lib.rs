//! Region- and gender-stratified bias auditing for contrastive
//! vision-language models.

pub mod analysis;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod lexicon;
pub mod report;
pub mod saliency;
pub mod synthetic;

pub use error::{AuditError, Result};
