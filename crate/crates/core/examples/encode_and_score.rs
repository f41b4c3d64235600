//! The analysis core step by step: encode prompts and images, build the
//! cosine similarity matrix, aggregate per (region, gender, keyword) and score.
//!
//!     cargo run --example encode_and_score

use vlaudit::analysis::{group_means, similarity_matrix, ScoreMode};
use vlaudit::dataset::Region;
use vlaudit::encoder::{encode_images, encode_texts, make_mock_backend};
use vlaudit::lexicon::{build_prompts, builtin_lexicon, KeywordSet};
use vlaudit::report::{score_table, Table2Replica};
use vlaudit::synthetic::{write_synthetic_dataset, SyntheticDatasetSpec};

fn main() -> vlaudit::Result<()> {
    let dir = std::env::temp_dir().join(format!("vlaudit-score-{}", std::process::id()));
    let spec = SyntheticDatasetSpec {
        per_cell: 10,
        ..Default::default()
    };
    let dataset = write_synthetic_dataset(&dir, &spec)?;

    let backend = make_mock_backend(42, 512)?;
    let lexicon = builtin_lexicon();
    let prompts = build_prompts(lexicon.keywords(), "An image of ")?;
    println!("{} prompts, e.g. {:?}", prompts.len(), prompts[0].full_text);

    let texts = encode_texts(&backend, &prompts)?;
    let images = encode_images(&backend, &dataset)?;
    let matrix = similarity_matrix(&images, &texts)?;
    println!("similarity matrix {} x {}", matrix.rows(), matrix.cols());

    let table = group_means(&matrix, &dataset, &lexicon)?;
    let stat = table.get(Region::Sa, vlaudit::dataset::Gender::Woman, "caring").expect("cell present");
    println!("SA / woman / caring: mean {:.4} over {} images", stat.mean, stat.n);

    let regions = Region::SUMMARY_ORDER.to_vec();
    let scores = score_table(&table, &lexicon, &regions, &KeywordSet::ALL, ScoreMode::Raw)?;
    print!("{}", Table2Replica::from_scores(&scores, ScoreMode::Raw).to_text());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
