use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::{write_manifest, Dataset, ImageRecord};
use super::plan::QueryPlan;
use crate::error::{AuditError, Result};

/// One image returned by a fetcher.
#[derive(Debug, Clone)]
pub struct FetchedImage {
    pub url: Option<String>,
    pub bytes: Vec<u8>,
}

/// Seam for dataset construction. Given a localized term, an egress country and
/// a quota, return up to `quota` images. Browser automation and proxy handling
/// live behind implementations of this trait.
pub trait FetcherAdapter: Sync {
    fn fetch(
        &self,
        term: &str,
        egress_country: &str,
        quota: usize,
    ) -> std::result::Result<Vec<FetchedImage>, String>;
}

/// Reads images from `<root>/<egress_country>/<term>/`, sorted by file name.
/// Useful for importing an offline scrape.
#[derive(Debug, Clone)]
pub struct LocalDirectoryFetcher {
    pub root: PathBuf,
}

impl FetcherAdapter for LocalDirectoryFetcher {
    fn fetch(
        &self,
        term: &str,
        egress_country: &str,
        quota: usize,
    ) -> std::result::Result<Vec<FetchedImage>, String> {
        let dir = self.root.join(egress_country).join(term);
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(format!("{}: {e}", dir.display())),
        };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        paths
            .into_iter()
            .take(quota)
            .map(|p| {
                std::fs::read(&p)
                    .map(|bytes| FetchedImage {
                        url: Some(format!("file://{}", p.display())),
                        bytes,
                    })
                    .map_err(|e| format!("{}: {e}", p.display()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub plan: QueryPlan,
    pub kept: usize,
    pub shortfall: usize,
    pub skipped: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FetchReport {
    pub dataset: Dataset,
    pub manifest_path: PathBuf,
    pub outcomes: Vec<PlanOutcome>,
}

/// Runs every plan through the fetcher, stores images under
/// `out_dir/images/<REGION>_<gender>/` and writes `out_dir/manifest.csv`.
///
/// Adapter failures are recorded per plan; whatever was fetched is kept.
/// Record ids are a 12-hex-digit content hash prefix plus a running ordinal.
/// Exact byte duplicates are dropped.
pub fn fetch_images(
    plans: &[QueryPlan],
    fetcher: &dyn FetcherAdapter,
    out_dir: &Path,
) -> Result<FetchReport> {
    let fetched: Vec<std::result::Result<Vec<FetchedImage>, String>> = plans
        .par_iter()
        .map(|p| fetcher.fetch(&p.term, &p.egress_country, p.quota))
        .collect();

    let mut records = Vec::new();
    let mut outcomes = Vec::with_capacity(plans.len());
    let mut seen_hashes = HashSet::new();
    for (plan, result) in plans.iter().zip(fetched) {
        let mut outcome = PlanOutcome {
            plan: plan.clone(),
            kept: 0,
            shortfall: 0,
            skipped: Vec::new(),
            error: None,
        };
        let images = match result {
            Ok(images) => images,
            Err(e) => {
                outcome.error = Some(e);
                Vec::new()
            }
        };
        let cell_dir = PathBuf::from("images").join(format!(
            "{}_{}",
            plan.region.abbreviation(),
            plan.gender.as_str()
        ));
        for (i, image) in images.into_iter().enumerate() {
            if outcome.kept == plan.quota {
                break;
            }
            let digest = hex_digest(&image.bytes);
            if !seen_hashes.insert(digest.clone()) {
                outcome.skipped.push(format!("image {i}: exact duplicate"));
                continue;
            }
            let (format, (width, height)) = match probe_image(&image.bytes) {
                Ok(v) => v,
                Err(e) => {
                    outcome.skipped.push(format!("image {i}: {e}"));
                    continue;
                }
            };
            let id = format!("{}-{:05}", &digest[..12], records.len());
            let rel = cell_dir.join(format!("{id}.{}", format.extensions_str()[0]));
            let abs = out_dir.join(&rel);
            if let Some(parent) = abs.parent() {
                std::fs::create_dir_all(parent).map_err(|e| AuditError::io(parent, e))?;
            }
            std::fs::write(&abs, &image.bytes).map_err(|e| AuditError::io(&abs, e))?;
            records.push(ImageRecord {
                id,
                region: plan.region,
                gender: plan.gender,
                query_term: plan.term.clone(),
                source_url: image.url,
                file_path: rel,
                width,
                height,
            });
            outcome.kept += 1;
        }
        outcome.shortfall = plan.quota - outcome.kept;
        outcomes.push(outcome);
    }

    std::fs::create_dir_all(out_dir).map_err(|e| AuditError::io(out_dir, e))?;
    let dataset = Dataset::new(records)?.with_root(out_dir);
    let manifest_path = out_dir.join("manifest.csv");
    write_manifest(&dataset, &manifest_path)?;
    Ok(FetchReport {
        dataset,
        manifest_path,
        outcomes,
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn probe_image(bytes: &[u8]) -> std::result::Result<(image::ImageFormat, (u32, u32)), String> {
    let reader = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| e.to_string())?;
    let format = reader.format().ok_or("unrecognized image format")?;
    let dims = reader.into_dimensions().map_err(|e| e.to_string())?;
    if dims.0 == 0 || dims.1 == 0 {
        return Err("zero-sized image".into());
    }
    Ok((format, dims))
}
