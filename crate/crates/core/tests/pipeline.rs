use std::collections::BTreeSet;
use std::path::Path;

use vlaudit::analysis::{load_appendix_csv, ScoreMode};
use vlaudit::dataset::MANIFEST_HEADER;
use vlaudit::encoder::BackendConfig;
use vlaudit::report::{
    emit_report, parse_formats, reproduce_from_table, run_pipeline, AuditConfig, AuditReport, EmitFormat,
    Table2Replica,
};
use vlaudit::synthetic::{write_synthetic_dataset, SyntheticDatasetSpec};
use vlaudit::AuditError;

const GGGI: &str = "abbreviation,gggi\nWANA,0.63\nEA,0.69\nWE,0.79\nNA,0.77\nSA,0.63\nSEA,0.72\nEE,0.71\nLA,0.73\nSSA,0.68\n";

fn small_audit(dir: &Path, out: &str) -> AuditConfig {
    if !dir.join("manifest.csv").exists() {
        let spec = SyntheticDatasetSpec {
            per_cell: 6,
            seed: 21,
            ..Default::default()
        };
        write_synthetic_dataset(dir, &spec).unwrap();
        std::fs::write(dir.join("gggi.csv"), GGGI).unwrap();
    }
    let mut cfg = AuditConfig::new(dir.join("manifest.csv"), BackendConfig::mock(21, 128), dir.join(out));
    cfg.dataset.images_per_cell = 6;
    cfg
}

fn names(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn rerunning_overwrites_with_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_audit(dir.path(), "out");
    run_pipeline(&cfg).unwrap();
    let first: Vec<_> = names(&cfg.output.dir).into_iter().map(|n| std::fs::read(cfg.output.dir.join(&n)).unwrap()).collect();
    run_pipeline(&cfg).unwrap();
    let second: Vec<_> = names(&cfg.output.dir).into_iter().map(|n| std::fs::read(cfg.output.dir.join(&n)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn reproduce_mode_is_derivable_from_emitted_group_means() {
    let dir = tempfile::tempdir().unwrap();
    let raw = small_audit(dir.path(), "raw");
    run_pipeline(&raw).unwrap();
    let mut rep = small_audit(dir.path(), "rep");
    rep.analysis.mode = ScoreMode::Reproduce;
    let report = run_pipeline(&rep).unwrap();

    let table = load_appendix_csv(&raw.output.dir.join("group_means.csv"), 6).unwrap();
    let derived = reproduce_from_table(&table, ScoreMode::Reproduce).unwrap();
    let traits_only: Vec<_> = report
        .table2()
        .rows
        .into_iter()
        .filter(|r| r.set == vlaudit::lexicon::KeywordSet::Traits)
        .collect();
    assert!(!traits_only.is_empty());
    for row in traits_only {
        for (region, v) in &row.values {
            let d = derived.get(row.set, row.gender, &row.label, *region).unwrap();
            assert!((d - v).abs() < 1e-12, "{} {region}: {d} vs {v}", row.label);
        }
    }
}

#[test]
fn empty_manifest_fails_in_validate_stage() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("manifest.csv"), format!("{}\n", MANIFEST_HEADER.join(","))).unwrap();
    let cfg = AuditConfig::new(dir.path().join("manifest.csv"), BackendConfig::mock(1, 64), dir.path().join("out"));
    let err = run_pipeline(&cfg).unwrap_err();
    match &err {
        AuditError::Stage { stage, source } => {
            assert_eq!(*stage, "validate");
            assert!(matches!(**source, AuditError::Validation(_)));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.exit_code(), 1);
    assert!(!dir.path().join("out").join("report.json").exists());
}

#[test]
fn format_selection_controls_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_audit(dir.path(), "csv");
    cfg.output.formats = parse_formats("csv").unwrap();
    run_pipeline(&cfg).unwrap();
    assert_eq!(names(&cfg.output.dir), ["group_means.csv", "table2.csv"].map(String::from).into());

    let mut cfg = small_audit(dir.path(), "all");
    cfg.dataset.gggi = Some(dir.path().join("gggi.csv"));
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.correlations.len(), 3);
    let all = names(&cfg.output.dir);
    for set in ["traits", "adjectives", "occupations"] {
        assert!(all.contains(&format!("scatter_{set}.csv")));
        assert!(all.contains(&format!("scatter_{set}.png")));
        assert!(all.contains(&format!("heatmap_{set}_man.png")));
        assert!(all.contains(&format!("heatmap_{set}_woman.png")));
    }
    assert!(all.contains("report.json"));
    assert_eq!(all.len(), 2 + 3 + 1 + 6 + 3);
}

#[test]
fn saved_report_reemits_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_audit(dir.path(), "first");
    cfg.dataset.gggi = Some(dir.path().join("gggi.csv"));
    run_pipeline(&cfg).unwrap();
    let report = AuditReport::load_json(&cfg.output.dir.join("report.json")).unwrap();
    let again = dir.path().join("again");
    let formats: BTreeSet<EmitFormat> = EmitFormat::ALL.into_iter().collect();
    emit_report(&report, &again, &formats).unwrap();
    for name in names(&cfg.output.dir) {
        assert_eq!(
            std::fs::read(cfg.output.dir.join(&name)).unwrap(),
            std::fs::read(again.join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn table2_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_audit(dir.path(), "t2");
    cfg.analysis.mode = ScoreMode::Reproduce;
    let report = run_pipeline(&cfg).unwrap();
    let text = std::fs::read_to_string(cfg.output.dir.join("table2.csv")).unwrap();
    let parsed = Table2Replica::parse_csv(&text, "table2.csv", ScoreMode::Reproduce).unwrap();
    assert_eq!(parsed, report.table2());
}

#[test]
fn config_file_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_audit(dir.path(), "out");
    let path = dir.path().join("audit.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    assert_eq!(AuditConfig::load(&path).unwrap(), cfg);
    std::fs::write(&path, format!("{}\n[extra]\nx = 1\n", cfg.to_toml())).unwrap();
    assert!(matches!(AuditConfig::load(&path), Err(AuditError::Config(_))));
}
