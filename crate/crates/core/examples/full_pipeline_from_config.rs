//! End-to-end audit driven by a TOML config: synthetic dataset, mock backend
//! with one planted association, embedding cache, reproduce-mode tables,
//! gender-gap correlation and all figures.
//!
//!     cargo run --release --example full_pipeline_from_config [WORK_DIR]

use vlaudit::report::{run_pipeline, AuditConfig};
use vlaudit::synthetic::{write_synthetic_dataset, SyntheticDatasetSpec};

const CONFIG: &str = include_str!("configs/mock_audit.toml");
const GGGI: &str = "abbreviation,gggi\nWANA,0.64\nEA,0.70\nWE,0.78\nNA,0.77\nSA,0.63\nSEA,0.71\nEE,0.71\nLA,0.73\nSSA,0.69\n";

fn main() -> vlaudit::Result<()> {
    let work = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("vlaudit-full"));
    let io = |p: &std::path::Path, e| vlaudit::AuditError::io(p, e);
    std::fs::create_dir_all(&work).map_err(|e| io(&work, e))?;

    let spec = SyntheticDatasetSpec {
        per_cell: 20,
        seed: 2023,
        ..Default::default()
    };
    write_synthetic_dataset(&work.join("data"), &spec)?;
    std::fs::write(work.join("gggi.csv"), GGGI).map_err(|e| io(&work, e))?;
    let config_path = work.join("audit.toml");
    std::fs::write(&config_path, CONFIG).map_err(|e| io(&config_path, e))?;

    let cfg = AuditConfig::load(&config_path)?;
    let report = run_pipeline(&cfg)?;

    print!("{}", report.table2().to_text());
    for c in &report.correlations {
        println!("{}: r = {:.3} (p = {:.3})", c.set.as_str(), c.correlation.correlation.r, c.correlation.correlation.p);
    }
    let p = &report.provenance;
    println!("backend {} / config {} / {} images x {} prompts", p.backend, p.config_hash, p.images, p.prompts);
    println!("artifacts in {}", cfg.output.dir.display());
    Ok(())
}
