use std::path::Path;
use std::process::{Command, Output};

use vlaudit::encoder::BackendConfig;
use vlaudit::report::AuditConfig;
use vlaudit::synthetic::{synthetic_png, write_synthetic_dataset, SyntheticDatasetSpec};

fn vlaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlaudit")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn plan_prints_eighteen_queries() {
    let out = vlaudit(&["plan"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 19);
    let out = vlaudit(&["plan", "--regions", "WE,SA", "--quota", "5"]);
    assert_eq!(stdout(&out).lines().count(), 5);
    assert!(stdout(&out).lines().skip(1).all(|l| l.ends_with(",5")));
    assert_eq!(code(&vlaudit(&["plan", "--regions", "XX"])), 2);
}

#[test]
fn usage_errors_are_config_errors() {
    assert_eq!(code(&vlaudit(&["no-such-command"])), 2);
    assert_eq!(code(&vlaudit(&["score"])), 2);
    assert_eq!(code(&vlaudit(&["reproduce-paper", "--mode", "fancy"])), 2);
}

#[test]
fn reproduce_paper_prints_and_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = vlaudit(&["reproduce-paper", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("gender_difference"));
    assert!(text.lines().any(|l| l.starts_with("traits") && l.contains("negative") && l.contains("0.98")));
    assert!(dir.path().join("table2.csv").is_file());
    let missing = vlaudit(&["reproduce-paper", "--fixture", "/nonexistent/appendix.csv"]);
    assert_eq!(code(&missing), 3);
}

#[test]
fn ingest_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = vlaudit(&["ingest", "--out", p(dir.path()), "--synthetic", "2", "--quota", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = dir.path().join("manifest.csv");
    assert_eq!(code(&vlaudit(&["validate", "--manifest", p(&manifest), "--per-cell", "2"])), 0);
    let short = vlaudit(&["validate", "--manifest", p(&manifest)]);
    assert_eq!(code(&short), 1);
    assert!(String::from_utf8_lossy(&short.stderr).contains("non-conformant"));
    assert_eq!(code(&vlaudit(&["ingest", "--out", p(dir.path())])), 2);
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let spec = SyntheticDatasetSpec {
        per_cell: 3,
        seed: 4,
        ..Default::default()
    };
    write_synthetic_dataset(dir, &spec).unwrap();
    let mut cfg = AuditConfig::new("manifest.csv", BackendConfig::mock(4, 64), "out");
    cfg.dataset.images_per_cell = 3;
    cfg.output.cache = Some("cache.csv".into());
    let path = dir.join("audit.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn encode_score_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let enc = vlaudit(&["encode", "--config", p(&config)]);
    assert_eq!(code(&enc), 0, "{}", String::from_utf8_lossy(&enc.stderr));
    assert!(dir.path().join("cache.csv").is_file());
    let again = vlaudit(&["encode", "--config", p(&config)]);
    assert!(stdout(&again).contains("(54 cached)"), "{}", stdout(&again));

    let score = vlaudit(&["score", "--config", p(&config), "--mode", "reproduce"]);
    assert_eq!(code(&score), 0, "{}", String::from_utf8_lossy(&score.stderr));
    assert!(stdout(&score).contains("trend"));
    let report = dir.path().join("out").join("report.json");
    assert!(report.is_file());

    let re = dir.path().join("re");
    let out = vlaudit(&["report", "--input", p(&report), "--out", p(&re), "--formats", "csv"]);
    assert_eq!(code(&out), 0);
    assert!(re.join("table2.csv").is_file());
    assert!(!re.join("report.json").exists());
    assert_eq!(code(&vlaudit(&["report", "--input", p(&report), "--out", p(&re), "--formats", "svg"])), 2);
}

#[test]
fn bad_config_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[dataset]\nmanifest = \"m.csv\"\nbogus = 1\n").unwrap();
    assert_eq!(code(&vlaudit(&["score", "--config", p(&config)])), 2);
}

#[test]
fn saliency_writes_overlay_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("street.png");
    std::fs::write(&image, synthetic_png(3, "street", 56, 56, &[]).unwrap()).unwrap();
    let out = dir.path().join("sal");
    let run = vlaudit(&[
        "saliency",
        "--image",
        p(&image),
        "--question",
        "Where is the sign?",
        "--patch-region",
        "0,4,7,3",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout(&run).contains("answer region x=28"));
    assert!(out.join("street.saliency.png").is_file());
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("street.saliency.json")).unwrap()).unwrap();
    assert_eq!(sidecar["question"], "Where is the sign?");

    let bad_layer = vlaudit(&[
        "saliency", "--image", p(&image), "--question", "q", "--patch-region", "0,0,2,2", "--layer", "block:9", "--out",
        p(&out),
    ]);
    assert_eq!(code(&bad_layer), 2);
}
