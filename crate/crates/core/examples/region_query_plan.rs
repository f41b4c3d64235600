//! Builds the per-region image search plan: one query per (region, gender)
//! in the region's language, routed through its egress country.
//!
//!     cargo run --example region_query_plan

use vlaudit::dataset::{builtin_region_table, plan_queries, plans_to_csv, PROTOCOL_IMAGES_PER_CELL};

fn main() -> vlaudit::Result<()> {
    let regions = builtin_region_table();
    for spec in &regions {
        println!(
            "{:<5} {:<28} {:<10} via {}",
            spec.abbreviation.abbreviation(),
            spec.name,
            spec.query_language,
            spec.ip_countries.join(" + ")
        );
    }
    let plans = plan_queries(&regions, PROTOCOL_IMAGES_PER_CELL)?;
    println!("\n{} queries:\n{}", plans.len(), plans_to_csv(&plans));
    Ok(())
}
