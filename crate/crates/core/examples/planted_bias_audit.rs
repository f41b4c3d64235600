//! Plants a known association in the mock backend: images of women from three
//! regions sit 0.1 closer (in cosine) to every negative trait prompt. The
//! audit should report a trend gap of about 5 × 0.1 for exactly those cells.
//!
//!     cargo run --release --example planted_bias_audit

use std::collections::BTreeSet;

use vlaudit::dataset::{Gender, Region};
use vlaudit::encoder::{BackendConfig, PlantedAssociation};
use vlaudit::lexicon::{builtin_lexicon, Subclass};
use vlaudit::report::{run_pipeline, AuditConfig};
use vlaudit::synthetic::{write_synthetic_dataset, SyntheticDatasetSpec};

fn main() -> vlaudit::Result<()> {
    let planted = [Region::Sa, Region::Wana, Region::Ssa];
    let dir = std::env::temp_dir().join(format!("vlaudit-planted-{}", std::process::id()));

    let mut spec = SyntheticDatasetSpec::default();
    for region in planted {
        spec = spec.with_tag(region, Gender::Woman, "planted");
    }
    write_synthetic_dataset(&dir, &spec)?;

    let plants = builtin_lexicon()
        .in_subclass(Subclass::Negative)
        .map(|k| PlantedAssociation::new("planted", format!("An image of {}", k.text), 0.1))
        .collect();
    let backend = BackendConfig::mock(1, 2048).with_plants(plants);
    let mut cfg = AuditConfig::new(dir.join("manifest.csv"), backend, dir.join("out"));
    cfg.output.formats = BTreeSet::new();
    let report = run_pipeline(&cfg)?;

    println!("region  trend(man)  trend(woman)  gap");
    for region in Region::SUMMARY_ORDER {
        let t = |g: Gender| report.trends.iter().find(|t| t.region == region && t.gender == g).unwrap().trend;
        let (m, w) = (t(Gender::Man), t(Gender::Woman));
        let mark = if planted.contains(&region) { "  <- planted" } else { "" };
        println!("{:<6} {m:>10.3} {w:>13.3} {:>6.3}{mark}", region.abbreviation(), m - w);
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
