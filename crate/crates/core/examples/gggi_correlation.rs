//! Correlates per-region gender differences with a gender-gap index and draws
//! the scatter plot. The index values here are illustrative; pass a
//! `abbreviation,gggi` CSV with real figures as the first argument.
//!
//!     cargo run --example gggi_correlation [GGGI_CSV]

use vlaudit::analysis::{builtin_appendix_table, correlate_with_index, gender_difference, ScoreMode};
use vlaudit::dataset::{apply_gggi_overrides, builtin_region_table, parse_gggi_overrides, Region};
use vlaudit::lexicon::{builtin_lexicon, KeywordSet};
use vlaudit::report::scatter_png;

const ILLUSTRATIVE: &str = "abbreviation,gggi
WANA,0.64
EA,0.70
WE,0.78
NA,0.77
SA,0.63
SEA,0.71
EE,0.71
LA,0.73
SSA,0.69
";

fn main() -> vlaudit::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).map_err(|e| vlaudit::AuditError::io(&path, e))?,
        None => ILLUSTRATIVE.to_string(),
    };
    let mut regions = builtin_region_table();
    apply_gggi_overrides(&mut regions, &parse_gggi_overrides(&text, "gggi")?)?;

    let table = builtin_appendix_table();
    let lexicon = builtin_lexicon();
    let gd = Region::SUMMARY_ORDER
        .iter()
        .map(|&r| gender_difference(&table, &lexicon, r, KeywordSet::Traits, ScoreMode::Reproduce))
        .collect::<vlaudit::Result<Vec<_>>>()?;

    let result = correlate_with_index(&gd, &regions)?;
    for p in &result.points {
        println!("{:<5} gggi {:.2}  gender difference {:.2}", p.region.abbreviation(), p.gggi, p.gender_difference);
    }
    let c = &result.correlation;
    println!("r = {:.3}, p = {:.4}, n = {}", c.r, c.p, c.n);

    let path = std::env::temp_dir().join("vlaudit-gggi-traits.png");
    let png = scatter_png(&result, "traits: gender gap index vs gender difference")?;
    std::fs::write(&path, png).map_err(|e| vlaudit::AuditError::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}
