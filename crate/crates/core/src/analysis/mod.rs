//! Cosine similarity, per-cell means, set sums, Trend, Gender Difference and
//! correlation against the gender-gap index.

mod correlation;
mod group;
mod score;
mod similarity;

pub use correlation::{correlate_with_index, pearson, write_scatter_csv, CorrelationResult, IndexCorrelation, ScatterPoint};
pub use group::{
    builtin_appendix_csv, builtin_appendix_table, group_means, load_appendix_csv, parse_appendix_csv, GroupEntry,
    GroupMeanTable, GroupStat, StdWarning, APPENDIX_REGION_ORDER, STD_WARNING_THRESHOLD,
};
pub use score::{
    gender_difference, gender_difference_from_scores, set_sum, trend, trend_for, GenderDifferenceScore, ScoreMode,
    SetScore, TrendScore,
};
pub use similarity::{cosine, similarity_matrix, SimilarityMatrix};
