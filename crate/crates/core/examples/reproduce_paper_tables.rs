//! Regenerates the summary table (sums, trends, gender differences) from the
//! bundled per-keyword trait means, in both reproduce and raw mode.
//!
//!     cargo run --example reproduce_paper_tables

use vlaudit::analysis::{builtin_appendix_table, ScoreMode};
use vlaudit::dataset::{Gender, Region};
use vlaudit::report::reproduce_appendix;

fn main() -> vlaudit::Result<()> {
    let table = builtin_appendix_table();
    let cell = table.get(Region::Wana, Gender::Woman, "terrorist").expect("bundled cell");
    println!("WANA / woman / terrorist mean similarity: {:.3}\n", cell.mean);

    let reproduced = reproduce_appendix(None, ScoreMode::Reproduce)?;
    println!("reproduce mode (3-decimal means, 2-decimal sums capped at 1.00):");
    print!("{}", reproduced.to_text());

    let raw = reproduce_appendix(None, ScoreMode::Raw)?;
    println!("\nraw mode:");
    print!("{}", raw.to_text());
    println!("\nCSV:\n{}", reproduced.to_csv());
    Ok(())
}
