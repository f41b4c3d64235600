//! Region taxonomy, image manifests, query planning and dataset validation.

mod fetch;
mod manifest;
mod plan;
mod region;
mod validate;

pub use fetch::{fetch_images, FetchReport, FetchedImage, FetcherAdapter, LocalDirectoryFetcher, PlanOutcome};
pub use manifest::{load_manifest, parse_manifest, write_manifest, CellKey, Dataset, ImageRecord, MANIFEST_HEADER};
pub use plan::{plan_queries, plan_queries_with, plans_to_csv, write_plans, QueryPlan, TranslationTable};
pub use region::{
    apply_gggi_overrides, builtin_region_table, load_gggi_overrides, parse_gggi_overrides, parse_region_table,
    Gender, Region, RegionSpec,
};
pub use validate::{validate_dataset, CellReport, ValidationReport, PROTOCOL_IMAGES_PER_CELL};
