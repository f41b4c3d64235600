use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{AuditConfig, EmitFormat};
use super::plot::{heatmap_png, scatter_png};
use super::table2::{score_table, ScoreSet, Table2Replica};
use crate::analysis::{
    correlate_with_index, group_means, similarity_matrix, GenderDifferenceScore, GroupMeanTable, IndexCorrelation,
    ScoreMode, SetScore, StdWarning, TrendScore,
};
use crate::dataset::{
    apply_gggi_overrides, builtin_region_table, load_gggi_overrides, load_manifest, validate_dataset, Dataset, Gender,
    Region, RegionSpec,
};
use crate::encoder::{
    build_backend, encode_images_with, encode_texts_with, EmbeddingBatch, EmbeddingCache, EncodeOptions, Encoder,
};
use crate::error::{AuditError, Result};
use crate::lexicon::{build_prompts, builtin_lexicon, KeywordSet, Lexicon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    /// Hash of every setting that can change a score, plus the manifest contents.
    pub config_hash: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub mode: ScoreMode,
    pub template: String,
    pub images: usize,
    pub prompts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetCorrelation {
    pub set: KeywordSet,
    #[serde(flatten)]
    pub correlation: IndexCorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub provenance: Provenance,
    pub group_means: GroupMeanTable,
    pub set_scores: Vec<SetScore>,
    pub trends: Vec<TrendScore>,
    pub gender_differences: Vec<GenderDifferenceScore>,
    #[serde(default)]
    pub correlations: Vec<SetCorrelation>,
    #[serde(default)]
    pub std_warnings: Vec<StdWarning>,
    /// Keyword column order for tables and heatmaps.
    pub keywords: Vec<(KeywordSet, String)>,
}

impl AuditReport {
    pub fn scores(&self) -> ScoreSet {
        ScoreSet {
            set_scores: self.set_scores.clone(),
            trends: self.trends.clone(),
            gender_differences: self.gender_differences.clone(),
        }
    }

    pub fn table2(&self) -> Table2Replica {
        Table2Replica::from_scores(&self.scores(), self.provenance.mode)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AuditError::load(path.display().to_string(), e.line(), e.to_string()))
    }

    fn lexicon(&self) -> Lexicon {
        let builtin = builtin_lexicon();
        let keywords = self
            .keywords
            .iter()
            .filter_map(|(_, k)| builtin.find(k).cloned())
            .collect();
        Lexicon::new(keywords).unwrap_or(builtin)
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Runs the full audit described by `cfg` and writes the requested artifacts.
pub fn run_pipeline(cfg: &AuditConfig) -> Result<AuditReport> {
    let backend = stage("backend", build_backend(&cfg.backend))?;
    run_pipeline_with(cfg, backend.as_ref())
}

/// As [`run_pipeline`] with an already constructed encoder.
pub fn run_pipeline_with(cfg: &AuditConfig, encoder: &dyn Encoder) -> Result<AuditReport> {
    stage("config", cfg.check())?;
    let lexicon = stage("lexicon", load_lexicon(cfg))?;
    let regions = stage("regions", load_regions(cfg))?;

    let dataset = stage("load", load_manifest(&cfg.dataset.manifest))?;
    stage("validate", check_dataset(cfg, &dataset))?;

    let (images, texts) = stage("encode", encode_all(cfg, encoder, &dataset, &lexicon))?;
    let matrix = stage("similarity", similarity_matrix(&images, &texts))?;
    let group_table = stage("group_means", group_means(&matrix, &dataset, &lexicon))?;

    let mode = cfg.analysis.mode;
    let sets: Vec<KeywordSet> = KeywordSet::ALL
        .into_iter()
        .filter(|s| s.subclasses().iter().all(|sc| lexicon.in_subclass(*sc).next().is_some()))
        .collect();
    let present = group_table.regions();
    let audited: Vec<Region> = Region::ALL.into_iter().filter(|r| present.contains(r)).collect();
    let scores = stage("scores", score_table(&group_table, &lexicon, &audited, &sets, mode))?;
    let correlations = stage("correlation", correlations(cfg, &scores, &regions, &sets))?;

    let report = AuditReport {
        provenance: Provenance {
            backend: encoder.info().name.clone(),
            config_hash: stage("config", config_hash(cfg))?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.backend.seed,
            mode,
            template: cfg.lexicon.template.clone(),
            images: dataset.len(),
            prompts: texts.len(),
            timestamp_unix: cfg.output.timestamp.then(unix_now),
        },
        std_warnings: group_table.std_warnings(),
        group_means: group_table,
        set_scores: scores.set_scores,
        trends: scores.trends,
        gender_differences: scores.gender_differences,
        correlations,
        keywords: lexicon.keywords().iter().map(|k| (k.set, k.text.clone())).collect(),
    };
    stage("emit", emit_report(&report, &cfg.output.dir, &cfg.output.formats))?;
    Ok(report)
}

fn load_lexicon(cfg: &AuditConfig) -> Result<Lexicon> {
    match &cfg.lexicon.path {
        Some(p) => Lexicon::load_csv(p),
        None => Ok(builtin_lexicon()),
    }
}

fn load_regions(cfg: &AuditConfig) -> Result<Vec<RegionSpec>> {
    let mut regions = builtin_region_table();
    if let Some(path) = &cfg.dataset.gggi {
        apply_gggi_overrides(&mut regions, &load_gggi_overrides(path)?)?;
    }
    Ok(regions)
}

fn check_dataset(cfg: &AuditConfig, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(AuditError::Validation(format!(
            "manifest {} lists no images",
            cfg.dataset.manifest.display()
        )));
    }
    let report = validate_dataset(dataset, cfg.dataset.images_per_cell)?;
    if !report.conformant {
        let empty: Vec<String> = report
            .cells
            .iter()
            .filter(|c| c.count == 0)
            .map(|c| format!("{}/{}", c.region, c.gender))
            .collect();
        if cfg.dataset.require_conformant || !empty.is_empty() {
            return Err(AuditError::Validation(report.to_string()));
        }
        log::warn!("dataset is not conformant:\n{report}");
    }
    Ok(())
}

fn encode_all(
    cfg: &AuditConfig,
    encoder: &dyn Encoder,
    dataset: &Dataset,
    lexicon: &Lexicon,
) -> Result<(EmbeddingBatch, EmbeddingBatch)> {
    let prompts = build_prompts(lexicon.keywords(), &cfg.lexicon.template)?;
    let options = EncodeOptions {
        batch_size: cfg.backend.batch_size(),
        strict: true,
    };
    let mut cache = cfg.output.cache.as_ref().map(EmbeddingCache::open).transpose()?;
    let texts = encode_texts_with(encoder, &prompts, &options, cache.as_mut())?;
    let images = encode_images_with(encoder, dataset, &options, cache.as_mut())?;
    if let Some(c) = cache.as_mut() {
        log::info!("embedding cache: {} text hits, {} image hits", texts.cache_hits, images.cache_hits);
        c.save()?;
    }
    Ok((images.batch, texts.batch))
}

fn correlations(
    cfg: &AuditConfig,
    scores: &ScoreSet,
    regions: &[RegionSpec],
    sets: &[KeywordSet],
) -> Result<Vec<SetCorrelation>> {
    if cfg.dataset.gggi.is_none() {
        return Ok(Vec::new());
    }
    sets.iter()
        .map(|&set| {
            let gd: Vec<GenderDifferenceScore> =
                scores.gender_differences.iter().filter(|g| g.set == set).cloned().collect();
            Ok(SetCorrelation {
                set,
                correlation: correlate_with_index(&gd, regions)?,
            })
        })
        .collect()
}

fn config_hash(cfg: &AuditConfig) -> Result<String> {
    let manifest = std::fs::read(&cfg.dataset.manifest).map_err(|e| AuditError::io(&cfg.dataset.manifest, e))?;
    let mut h = Sha256::new();
    h.update(cfg.backend.config_hash());
    h.update([0]);
    h.update(cfg.lexicon.template.as_bytes());
    h.update([0]);
    if let Some(p) = &cfg.lexicon.path {
        h.update(std::fs::read(p).map_err(|e| AuditError::io(p, e))?);
    }
    h.update([0]);
    if let Some(p) = &cfg.dataset.gggi {
        h.update(std::fs::read(p).map_err(|e| AuditError::io(p, e))?);
    }
    h.update([0]);
    h.update(serde_json::to_string(&cfg.analysis.mode).expect("mode serializes"));
    h.update(cfg.dataset.images_per_cell.to_le_bytes());
    h.update(&manifest);
    Ok(h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes the report's artifacts into `dir`:
///
/// * `csv`: `group_means.csv` (per-keyword layout), `table2.csv`, and
///   `scatter_<set>.csv` for each correlation;
/// * `json`: `report.json`;
/// * `png`: `heatmap_<set>_<gender>.png` per keyword set and gender, and
///   `scatter_<set>.png` for each correlation.
///
/// On failure every file written by this call is removed again.
pub fn emit_report(report: &AuditReport, dir: &Path, formats: &BTreeSet<EmitFormat>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let result = emit_into(report, dir, formats, &mut written);
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            Err(e)
        }
    }
}

fn emit_into(report: &AuditReport, dir: &Path, formats: &BTreeSet<EmitFormat>, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AuditError::io(dir, e))?;
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| AuditError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    let lexicon = report.lexicon();
    if formats.contains(&EmitFormat::Csv) {
        put("group_means.csv".into(), report.group_means.to_appendix_csv(&lexicon).into_bytes())?;
        put("table2.csv".into(), report.table2().to_csv().into_bytes())?;
        for c in &report.correlations {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["region", "gggi", "gender_difference"]).expect("in-memory write");
            for p in &c.correlation.points {
                w.write_record([p.region.abbreviation(), &p.gggi.to_string(), &p.gender_difference.to_string()])
                    .expect("in-memory write");
            }
            put(format!("scatter_{}.csv", c.set.as_str()), w.into_inner().expect("in-memory flush"))?;
        }
    }
    if formats.contains(&EmitFormat::Json) {
        put("report.json".into(), report.to_json().into_bytes())?;
    }
    if formats.contains(&EmitFormat::Png) {
        let regions: Vec<Region> = crate::analysis::APPENDIX_REGION_ORDER
            .into_iter()
            .filter(|r| report.group_means.regions().contains(r))
            .collect();
        for set in KeywordSet::ALL {
            let keywords: Vec<&str> = report
                .keywords
                .iter()
                .filter(|(s, _)| *s == set)
                .map(|(_, k)| k.as_str())
                .collect();
            if keywords.is_empty() {
                continue;
            }
            for gender in Gender::ALL {
                let title = format!("{} / {}: mean cosine similarity", set.as_str(), gender.as_str());
                let png = heatmap_png(&report.group_means, &keywords, &regions, gender, &title)?;
                put(format!("heatmap_{}_{}.png", set.as_str(), gender.as_str()), png)?;
            }
        }
        for c in &report.correlations {
            let title = format!("{}: gender gap index vs gender difference", c.set.as_str());
            put(format!("scatter_{}.png", c.set.as_str()), scatter_png(&c.correlation, &title)?)?;
        }
    }
    Ok(())
}
