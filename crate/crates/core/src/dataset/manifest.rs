use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::csv_io;
use super::region::{Gender, Region};
use crate::error::{AuditError, Result};

pub const MANIFEST_HEADER: [&str; 8] = [
    "id",
    "region",
    "gender",
    "query_term",
    "source_url",
    "file_path",
    "width",
    "height",
];

/// One scraped image. `gender` is the gender of the query term, not a
/// classifier output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub region: Region,
    pub gender: Gender,
    pub query_term: String,
    pub source_url: Option<String>,
    pub file_path: PathBuf,
    pub width: u32,
    pub height: u32,
}

impl ImageRecord {
    /// A record is materialized once its pixel dimensions are known.
    pub fn is_materialized(&self) -> bool {
        self.width >= 1 && self.height >= 1
    }
}

pub type CellKey = (Region, Gender);

/// A stratified image manifest with derived per-cell counts.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    records: Vec<ImageRecord>,
    cells: BTreeMap<CellKey, usize>,
    root: Option<PathBuf>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl Dataset {
    pub fn new(records: Vec<ImageRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(AuditError::Contract(format!("duplicate image id `{}`", r.id)));
            }
        }
        let mut cells = BTreeMap::new();
        for r in &records {
            *cells.entry((r.region, r.gender)).or_insert(0) += 1;
        }
        Ok(Dataset {
            records,
            cells,
            root: None,
        })
    }

    /// Directory that relative `file_path`s are resolved against.
    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = Some(root.into());
        self
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cells(&self) -> &BTreeMap<CellKey, usize> {
        &self.cells
    }

    pub fn cell_count(&self, region: Region, gender: Gender) -> usize {
        self.cells.get(&(region, gender)).copied().unwrap_or(0)
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn index_by_id(&self) -> BTreeMap<&str, &ImageRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    pub fn image_path(&self, record: &ImageRecord) -> PathBuf {
        match &self.root {
            Some(root) if record.file_path.is_relative() => root.join(&record.file_path),
            _ => record.file_path.clone(),
        }
    }

    pub fn into_records(self) -> Vec<ImageRecord> {
        self.records
    }
}

#[derive(Deserialize)]
struct ManifestRow {
    id: String,
    region: String,
    gender: String,
    query_term: String,
    source_url: String,
    file_path: String,
    width: String,
    height: String,
}

/// Loads a manifest CSV. Relative image paths resolve against the manifest's
/// directory.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    let ds = parse_manifest(&text, &path.display().to_string())?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(ds.with_root(root))
}

pub fn parse_manifest(text: &str, source_name: &str) -> Result<Dataset> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| AuditError::load(source_name, 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(AuditError::load(
            source_name,
            1,
            format!("expected header `{}`", MANIFEST_HEADER.join(",")),
        ));
    }
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let line = i + 2;
        let err = |msg: String| AuditError::load(source_name, line, msg);
        let row = row.map_err(|e| err(format!("malformed row: {e}")))?;
        if row.id.trim().is_empty() {
            return Err(err("empty id".into()));
        }
        if !ids.insert(row.id.clone()) {
            return Err(err(format!("duplicate id `{}`", row.id)));
        }
        let region: Region = row.region.parse().map_err(err)?;
        let gender: Gender = row.gender.parse().map_err(err)?;
        let dim = |name: &str, v: &str| -> Result<u32> {
            v.trim()
                .parse::<u32>()
                .map_err(|_| err(format!("invalid {name} `{v}`")))
        };
        let width = dim("width", &row.width)?;
        let height = dim("height", &row.height)?;
        if (width == 0) != (height == 0) {
            return Err(err("width and height must both be zero or both positive".into()));
        }
        records.push(ImageRecord {
            id: row.id,
            region,
            gender,
            query_term: row.query_term,
            source_url: Some(row.source_url).filter(|s| !s.is_empty()),
            file_path: PathBuf::from(row.file_path),
            width,
            height,
        });
    }
    Dataset::new(records)
}

pub fn write_manifest(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    writer.write_record(MANIFEST_HEADER).map_err(|e| csv_io(path, e))?;
    for r in ds.records() {
        writer
            .write_record([
                r.id.as_str(),
                r.region.abbreviation(),
                r.gender.as_str(),
                &r.query_term,
                r.source_url.as_deref().unwrap_or(""),
                &r.file_path.to_string_lossy(),
                &r.width.to_string(),
                &r.height.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
    }
    writer.flush().map_err(|e| AuditError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,region,gender,query_term,source_url,file_path,width,height\n";

    #[test]
    fn parses_two_rows() {
        let text = format!(
            "{HEADER}a-1,SA,man,आदमी,https://x/1.jpg,img/1.png,32,32\na-2,SA,woman,औरत,,img/2.png,16,8\n"
        );
        let ds = parse_manifest(&text, "m.csv").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.cell_count(Region::Sa, Gender::Man), 1);
        assert_eq!(ds.records()[1].source_url, None);
    }

    #[test]
    fn unknown_region_names_row_and_value() {
        let text = format!("{HEADER}a,SA,man,t,,p,1,1\nb,XX,man,t,,p,1,1\n");
        let err = parse_manifest(&text, "m.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("XX"), "{msg}");
    }

    #[test]
    fn unknown_gender_and_duplicates_rejected() {
        let text = format!("{HEADER}a,SA,other,t,,p,1,1\n");
        assert!(parse_manifest(&text, "m.csv").unwrap_err().to_string().contains("other"));
        let text = format!("{HEADER}a,SA,man,t,,p,1,1\na,SA,man,t,,p,1,1\n");
        assert!(parse_manifest(&text, "m.csv").unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn malformed_rows_rejected() {
        let text = format!("{HEADER}a,SA,man,t,,p,wide,1\n");
        assert!(parse_manifest(&text, "m.csv").unwrap_err().to_string().contains("row 2"));
        let text = format!("{HEADER}a,SA,man\n");
        assert!(parse_manifest(&text, "m.csv").is_err());
        assert!(parse_manifest("id,region\n", "m.csv").is_err());
    }
}
