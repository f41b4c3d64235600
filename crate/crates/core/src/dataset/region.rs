use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

const BUILTIN_REGIONS: &str = include_str!("../../data/regions.csv");

/// The nine audited world regions, in the order of the query-language table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "WANA")]
    Wana,
    #[serde(rename = "NA")]
    Na,
    #[serde(rename = "WE")]
    We,
    #[serde(rename = "SA")]
    Sa,
    #[serde(rename = "SEA")]
    Sea,
    #[serde(rename = "EA")]
    Ea,
    #[serde(rename = "EE")]
    Ee,
    #[serde(rename = "LA")]
    La,
    #[serde(rename = "SSA")]
    Ssa,
}

impl Region {
    pub const ALL: [Region; 9] = [
        Region::Wana,
        Region::Na,
        Region::We,
        Region::Sa,
        Region::Sea,
        Region::Ea,
        Region::Ee,
        Region::La,
        Region::Ssa,
    ];

    /// Column order used by the published summary table.
    pub const SUMMARY_ORDER: [Region; 9] = [
        Region::Wana,
        Region::Ea,
        Region::We,
        Region::Na,
        Region::Sa,
        Region::Sea,
        Region::Ee,
        Region::La,
        Region::Ssa,
    ];

    pub fn abbreviation(self) -> &'static str {
        match self {
            Region::Wana => "WANA",
            Region::Na => "NA",
            Region::We => "WE",
            Region::Sa => "SA",
            Region::Sea => "SEA",
            Region::Ea => "EA",
            Region::Ee => "EE",
            Region::La => "LA",
            Region::Ssa => "SSA",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbreviation())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Region::ALL
            .into_iter()
            .find(|r| r.abbreviation() == s.trim())
            .ok_or_else(|| format!("unknown region abbreviation `{s}`"))
    }
}

/// Perceived gender of an image: the gender of the query term that retrieved it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Man,
    Woman,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Man, Gender::Woman];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Man => "man",
            Gender::Woman => "woman",
        }
    }

    pub fn other(self) -> Gender {
        match self {
            Gender::Man => Gender::Woman,
            Gender::Woman => Gender::Man,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "man" => Ok(Gender::Man),
            "woman" => Ok(Gender::Woman),
            other => Err(format!("unknown gender `{other}` (expected man or woman)")),
        }
    }
}

/// One row of the region table: where and in which language images were queried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    pub abbreviation: Region,
    pub query_language: String,
    pub ip_countries: Vec<String>,
    /// Gender-gap index of the source country, averaged over countries when
    /// there are two.
    pub gggi: Option<f64>,
}

impl RegionSpec {
    pub fn new(
        name: impl Into<String>,
        abbreviation: Region,
        query_language: impl Into<String>,
        ip_countries: Vec<String>,
        gggi: Option<f64>,
    ) -> Result<Self> {
        if ip_countries.is_empty() {
            return Err(AuditError::Config(format!(
                "region {abbreviation} lists no IP countries"
            )));
        }
        if let Some(g) = gggi {
            check_gggi(abbreviation, g)?;
        }
        Ok(RegionSpec {
            name: name.into(),
            abbreviation,
            query_language: query_language.into(),
            ip_countries,
            gggi,
        })
    }

    pub fn set_gggi(&mut self, value: f64) -> Result<()> {
        check_gggi(self.abbreviation, value)?;
        self.gggi = Some(value);
        Ok(())
    }
}

fn check_gggi(region: Region, g: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&g) {
        return Err(AuditError::Config(format!(
            "gender-gap index for {region} must lie in [0, 1], got {g}"
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct RegionRow {
    abbreviation: String,
    name: String,
    language: String,
    ip_countries: String,
}

/// Parses a region table CSV with header `abbreviation,name,language,ip_countries`
/// (countries separated by `;`).
pub fn parse_region_table(text: &str, source_name: &str) -> Result<Vec<RegionSpec>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out: Vec<RegionSpec> = Vec::new();
    for (i, row) in reader.deserialize::<RegionRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| AuditError::load(source_name, line, e.to_string()))?;
        let abbreviation: Region = row
            .abbreviation
            .parse()
            .map_err(|e: String| AuditError::load(source_name, line, e))?;
        if out.iter().any(|r| r.abbreviation == abbreviation) {
            return Err(AuditError::load(
                source_name,
                line,
                format!("duplicate region {abbreviation}"),
            ));
        }
        let countries = row
            .ip_countries
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(String::from)
            .collect();
        let spec = RegionSpec::new(row.name, abbreviation, row.language, countries, None)
            .map_err(|e| AuditError::load(source_name, line, e.to_string()))?;
        out.push(spec);
    }
    Ok(out)
}

/// The nine regions with their query languages and egress countries.
/// Gender-gap values are left unset; supply them with [`apply_gggi_overrides`].
pub fn builtin_region_table() -> Vec<RegionSpec> {
    parse_region_table(BUILTIN_REGIONS, "regions.csv").expect("bundled region table is valid")
}

/// Reads a `abbreviation,gggi` CSV.
pub fn load_gggi_overrides(path: &Path) -> Result<BTreeMap<Region, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    parse_gggi_overrides(&text, &path.display().to_string())
}

pub fn parse_gggi_overrides(text: &str, source_name: &str) -> Result<BTreeMap<Region, f64>> {
    #[derive(Deserialize)]
    struct Row {
        abbreviation: String,
        gggi: f64,
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| AuditError::load(source_name, line, e.to_string()))?;
        let region: Region = row
            .abbreviation
            .parse()
            .map_err(|e: String| AuditError::load(source_name, line, e))?;
        check_gggi(region, row.gggi)
            .map_err(|e| AuditError::load(source_name, line, e.to_string()))?;
        if out.insert(region, row.gggi).is_some() {
            return Err(AuditError::load(
                source_name,
                line,
                format!("duplicate index value for {region}"),
            ));
        }
    }
    Ok(out)
}

pub fn apply_gggi_overrides(table: &mut [RegionSpec], overrides: &BTreeMap<Region, f64>) -> Result<()> {
    for spec in table.iter_mut() {
        if let Some(&g) = overrides.get(&spec.abbreviation) {
            spec.set_gggi(g)?;
        }
    }
    Ok(())
}
