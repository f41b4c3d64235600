//! Deterministic synthetic images and datasets for offline runs and tests.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dataset::{write_manifest, Dataset, FetchedImage, FetcherAdapter, Gender, ImageRecord, Region};
use crate::encoder::encode_tagged_png;
use crate::error::{AuditError, Result};

/// A PNG of random coloured blocks keyed by `(seed, key)`, with `tags`
/// embedded as content tags.
pub fn synthetic_png(seed: u64, key: &str, width: u32, height: u32, tags: &[String]) -> Result<Vec<u8>> {
    encode_tagged_png(&synthetic_pixels(seed, key, width, height), tags)
}

pub fn synthetic_pixels(seed: u64, key: &str, width: u32, height: u32) -> RgbImage {
    let digest: [u8; 32] = Sha256::new()
        .chain_update(b"synthetic\0")
        .chain_update(seed.to_le_bytes())
        .chain_update(key.as_bytes())
        .finalize()
        .into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let block = 4;
    let bw = width.div_ceil(block);
    let bh = height.div_ceil(block);
    let colours: Vec<[u8; 3]> = (0..bw * bh).map(|_| rng.random()).collect();
    RgbImage::from_fn(width, height, |x, y| Rgb(colours[((y / block) * bw + x / block) as usize]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub per_cell: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Content tags embedded in every image of the given cell.
    pub cell_tags: Vec<(Region, Gender, String)>,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        SyntheticDatasetSpec {
            per_cell: crate::dataset::PROTOCOL_IMAGES_PER_CELL,
            width: 16,
            height: 16,
            seed: 0,
            cell_tags: Vec::new(),
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn with_tag(mut self, region: Region, gender: Gender, tag: impl Into<String>) -> Self {
        self.cell_tags.push((region, gender, tag.into()));
        self
    }
}

/// Writes `per_cell` images for each of the 18 (region, gender) cells under
/// `dir/images/` plus `dir/manifest.csv`.
pub fn write_synthetic_dataset(dir: &Path, spec: &SyntheticDatasetSpec) -> Result<Dataset> {
    let mut records = Vec::with_capacity(18 * spec.per_cell);
    for region in Region::ALL {
        for gender in Gender::ALL {
            let tags: Vec<String> = spec
                .cell_tags
                .iter()
                .filter(|(r, g, _)| (*r, *g) == (region, gender))
                .map(|(_, _, t)| t.clone())
                .collect();
            let cell = format!("{}_{}", region.abbreviation(), gender.as_str());
            let cell_dir = dir.join("images").join(&cell);
            std::fs::create_dir_all(&cell_dir).map_err(|e| AuditError::io(&cell_dir, e))?;
            for i in 0..spec.per_cell {
                let id = format!("syn-{}-{}-{i:03}", region.abbreviation().to_lowercase(), gender.as_str());
                let bytes = synthetic_png(spec.seed, &id, spec.width, spec.height, &tags)?;
                let rel = PathBuf::from("images").join(&cell).join(format!("{id}.png"));
                let abs = dir.join(&rel);
                std::fs::write(&abs, bytes).map_err(|e| AuditError::io(&abs, e))?;
                records.push(ImageRecord {
                    id,
                    region,
                    gender,
                    query_term: gender.as_str().to_string(),
                    source_url: None,
                    file_path: rel,
                    width: spec.width,
                    height: spec.height,
                });
            }
        }
    }
    let ds = Dataset::new(records)?.with_root(dir);
    write_manifest(&ds, &dir.join("manifest.csv"))?;
    Ok(ds)
}

/// Offline stand-in for an image search: returns `per_query` synthetic PNGs
/// per query (capped at the quota). Countries in `failing_countries` error out.
#[derive(Debug, Clone)]
pub struct SyntheticFetcher {
    pub seed: u64,
    pub per_query: usize,
    pub size: u32,
    pub failing_countries: Vec<String>,
}

impl SyntheticFetcher {
    pub fn new(seed: u64, per_query: usize) -> Self {
        SyntheticFetcher {
            seed,
            per_query,
            size: 16,
            failing_countries: Vec::new(),
        }
    }
}

impl FetcherAdapter for SyntheticFetcher {
    fn fetch(&self, term: &str, egress_country: &str, quota: usize) -> std::result::Result<Vec<FetchedImage>, String> {
        if self.failing_countries.iter().any(|c| c == egress_country) {
            return Err(format!("no route to {egress_country}"));
        }
        (0..self.per_query.min(quota))
            .map(|i| {
                let key = format!("{egress_country}/{term}/{i}");
                synthetic_png(self.seed, &key, self.size, self.size, &[])
                    .map(|bytes| FetchedImage {
                        url: Some(format!("synthetic://{key}")),
                        bytes,
                    })
                    .map_err(|e| e.to_string())
            })
            .collect()
    }
}
