use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::ScoreMode;
use crate::dataset::PROTOCOL_IMAGES_PER_CELL;
use crate::encoder::BackendConfig;
use crate::error::{AuditError, Result};
use crate::lexicon::DEFAULT_TEMPLATE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitFormat {
    Csv,
    Json,
    Png,
}

impl EmitFormat {
    pub const ALL: [EmitFormat; 3] = [EmitFormat::Csv, EmitFormat::Json, EmitFormat::Png];
}

impl fmt::Display for EmitFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmitFormat::Csv => "csv",
            EmitFormat::Json => "json",
            EmitFormat::Png => "png",
        })
    }
}

impl FromStr for EmitFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            "png" => Ok(EmitFormat::Png),
            other => Err(format!("unknown format `{other}` (expected csv, json or png)")),
        }
    }
}

/// Parses a comma-separated format list such as `csv,json`.
pub fn parse_formats(s: &str) -> Result<BTreeSet<EmitFormat>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse().map_err(AuditError::Config))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub manifest: PathBuf,
    /// CSV of `abbreviation,gggi` overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gggi: Option<PathBuf>,
    #[serde(default = "default_per_cell")]
    pub images_per_cell: usize,
    /// Fail validation unless every cell holds exactly `images_per_cell` images.
    #[serde(default = "default_true")]
    pub require_conformant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_template")]
    pub template: String,
}

impl Default for LexiconSection {
    fn default() -> Self {
        LexiconSection {
            path: None,
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub mode: ScoreMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: BTreeSet<EmitFormat>,
    /// Embedding cache file; created on first use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    /// Record the wall-clock time in the report. Off by default so repeated
    /// runs produce identical files.
    #[serde(default)]
    pub timestamp: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_output_dir(),
            formats: default_formats(),
            cache: None,
            timestamp: false,
        }
    }
}

/// A complete audit run description, usually read from a TOML file with
/// `[dataset]`, `[lexicon]`, `[backend]`, `[analysis]` and `[output]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub lexicon: LexiconSection,
    pub backend: BackendConfig,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_per_cell() -> usize {
    PROTOCOL_IMAGES_PER_CELL
}

fn default_true() -> bool {
    true
}

fn default_template() -> String {
    DEFAULT_TEMPLATE.to_string()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("vlaudit-out")
}

fn default_formats() -> BTreeSet<EmitFormat> {
    EmitFormat::ALL.into_iter().collect()
}

impl AuditConfig {
    pub fn new(manifest: impl Into<PathBuf>, backend: BackendConfig, output_dir: impl Into<PathBuf>) -> Self {
        AuditConfig {
            dataset: DatasetSection {
                manifest: manifest.into(),
                gggi: None,
                images_per_cell: PROTOCOL_IMAGES_PER_CELL,
                require_conformant: true,
            },
            lexicon: LexiconSection::default(),
            backend,
            analysis: AnalysisSection::default(),
            output: OutputSection {
                dir: output_dir.into(),
                ..Default::default()
            },
        }
    }

    /// Reads a TOML config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: AuditConfig = toml::from_str(text).map_err(|e| AuditError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.manifest);
        self.dataset.gggi.as_mut().map(fix);
        self.lexicon.path.as_mut().map(fix);
        fix(&mut self.output.dir);
        self.output.cache.as_mut().map(fix);
        self.backend.checkpoint_name.as_mut().map(fix);
    }

    pub fn check(&self) -> Result<()> {
        if self.lexicon.template.is_empty() {
            return Err(AuditError::Config("lexicon.template must be non-empty".into()));
        }
        if self.dataset.images_per_cell == 0 {
            return Err(AuditError::Config("dataset.images_per_cell must be at least 1".into()));
        }
        if self.backend.batch_size == Some(0) {
            return Err(AuditError::Config("backend.batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_document_and_resolves_paths() {
        let cfg = AuditConfig::from_toml(
            r#"
            [dataset]
            manifest = "data/manifest.csv"
            gggi = "/abs/gggi.csv"
            images_per_cell = 4

            [lexicon]
            template = "A photo of "

            [backend]
            kind = "mock"
            seed = 9
            dim = 32

            [analysis]
            mode = "reproduce"

            [output]
            dir = "out"
            formats = ["csv", "json"]
            "#,
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.dataset.manifest, Path::new("/base/data/manifest.csv"));
        assert_eq!(cfg.dataset.gggi.as_deref(), Some(Path::new("/abs/gggi.csv")));
        assert_eq!(cfg.output.dir, Path::new("/base/out"));
        assert_eq!(cfg.analysis.mode, ScoreMode::Reproduce);
        assert_eq!(cfg.output.formats.len(), 2);
        assert!(!cfg.output.timestamp);
        let again = AuditConfig::from_toml(&cfg.to_toml(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn defaults_and_errors() {
        let cfg = AuditConfig::from_toml("[dataset]\nmanifest = \"m.csv\"\n[backend]\nkind = \"mock\"\n", Path::new("")).unwrap();
        assert_eq!(cfg.dataset.images_per_cell, 70);
        assert_eq!(cfg.lexicon.template, "An image of ");
        assert_eq!(cfg.output.formats.len(), 3);
        for bad in [
            "[dataset]\nmanifest = \"m.csv\"\n",
            "[dataset]\nmanifest = \"m.csv\"\n[backend]\nkind = \"mock\"\n[analysis]\nmode = \"fancy\"\n",
            "[dataset]\nmanifest = \"m.csv\"\nextra = 1\n[backend]\nkind = \"mock\"\n",
            "[dataset]\nmanifest = \"m.csv\"\n[backend]\nkind = \"mock\"\n[lexicon]\ntemplate = \"\"\n",
        ] {
            assert!(matches!(AuditConfig::from_toml(bad, Path::new("")), Err(AuditError::Config(_))), "{bad}");
        }
        assert_eq!(parse_formats("csv, png").unwrap().len(), 2);
        assert!(parse_formats("csv,gif").is_err());
    }
}
