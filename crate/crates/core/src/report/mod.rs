//! Audit configuration, pipeline orchestration, published-table replication
//! and artifact emission.

mod config;
mod pipeline;
mod plot;
mod table2;

pub use config::{parse_formats, AnalysisSection, AuditConfig, DatasetSection, EmitFormat, LexiconSection, OutputSection};
pub use pipeline::{emit_report, run_pipeline, run_pipeline_with, AuditReport, Provenance, SetCorrelation};
pub use plot::{heatmap_png, scatter_png};
pub use table2::{
    reproduce_appendix, reproduce_from_table, score_table, ScoreSet, Table2Replica, Table2Row, GENDER_DIFFERENCE_ROW,
    TREND_ROW,
};
