//! Checks per-cell image counts of a manifest. Without an argument it builds a
//! conformant synthetic dataset, validates it, then drops one image.
//!
//!     cargo run --example validate_manifest [MANIFEST_CSV]

use vlaudit::dataset::{load_manifest, validate_dataset, Dataset, PROTOCOL_IMAGES_PER_CELL};
use vlaudit::synthetic::{write_synthetic_dataset, SyntheticDatasetSpec};

fn main() -> vlaudit::Result<()> {
    if let Some(path) = std::env::args().nth(1) {
        let report = validate_dataset(&load_manifest(path.as_ref())?, PROTOCOL_IMAGES_PER_CELL)?;
        println!("{report}");
        std::process::exit(if report.conformant { 0 } else { 1 });
    }

    let dir = tempfile_dir();
    let ds = write_synthetic_dataset(&dir, &SyntheticDatasetSpec::default())?;
    let report = validate_dataset(&ds, PROTOCOL_IMAGES_PER_CELL)?;
    println!("{} images, conformant: {}", ds.len(), report.conformant);

    let mut records = ds.into_records();
    let dropped = records.remove(500);
    let report = validate_dataset(&Dataset::new(records)?, PROTOCOL_IMAGES_PER_CELL)?;
    println!("without {}: conformant: {}", dropped.id, report.conformant);
    for cell in report.failing_cells() {
        println!("  {} {} has {} images", cell.region, cell.gender, cell.count);
    }
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("vlaudit-validate-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}
