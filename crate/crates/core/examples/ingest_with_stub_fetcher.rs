//! Runs the ingestion stage against an offline fetcher that produces synthetic
//! PNGs, including one egress country that is unreachable.
//!
//!     cargo run --example ingest_with_stub_fetcher [OUT_DIR]

use vlaudit::dataset::{builtin_region_table, fetch_images, plan_queries, validate_dataset};
use vlaudit::synthetic::SyntheticFetcher;

fn main() -> vlaudit::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("vlaudit-ingest"));
    let plans = plan_queries(&builtin_region_table(), 10)?;

    let mut fetcher = SyntheticFetcher::new(7, 8);
    fetcher.failing_countries.push("Egypt".into());

    let report = fetch_images(&plans, &fetcher, &out)?;
    for o in &report.outcomes {
        let note = o.error.as_deref().map(|e| format!("  error: {e}")).unwrap_or_default();
        println!(
            "{:<5} {:<6} {:<14} kept {:>2} short {:>2}{note}",
            o.plan.region.abbreviation(),
            o.plan.gender.as_str(),
            o.plan.egress_country,
            o.kept,
            o.shortfall
        );
    }
    println!("manifest: {}", report.manifest_path.display());
    println!("{}", validate_dataset(&report.dataset, 10)?);
    Ok(())
}
