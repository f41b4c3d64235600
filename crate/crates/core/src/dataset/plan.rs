use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::region::{Gender, Region, RegionSpec};
use crate::error::{AuditError, Result};

const BUILTIN_TRANSLATIONS: &str = include_str!("../../data/translations.csv");

/// Localized query terms for "man" and "woman", keyed by language name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranslationTable {
    terms: BTreeMap<String, (String, String)>,
}

impl TranslationTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TRANSLATIONS, "translations.csv").expect("bundled translation table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses a `language,term_man,term_woman` CSV.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            language: String,
            term_man: String,
            term_woman: String,
        }
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut terms = BTreeMap::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| AuditError::load(source_name, i + 2, e.to_string()))?;
            if row.term_man.trim().is_empty() || row.term_woman.trim().is_empty() {
                return Err(AuditError::load(source_name, i + 2, "empty query term"));
            }
            terms.insert(row.language, (row.term_man, row.term_woman));
        }
        Ok(TranslationTable { terms })
    }

    pub fn term(&self, language: &str, gender: Gender) -> Option<&str> {
        self.terms.get(language).map(|(m, w)| match gender {
            Gender::Man => m.as_str(),
            Gender::Woman => w.as_str(),
        })
    }
}

/// One image query to run from one egress location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub region: Region,
    pub term: String,
    pub gender: Gender,
    pub egress_country: String,
    pub quota: usize,
}

/// Plans one query per (region, gender) using the bundled translations.
pub fn plan_queries(regions: &[RegionSpec], quota: usize) -> Result<Vec<QueryPlan>> {
    plan_queries_with(regions, quota, &TranslationTable::builtin())
}

pub fn plan_queries_with(
    regions: &[RegionSpec],
    quota: usize,
    translations: &TranslationTable,
) -> Result<Vec<QueryPlan>> {
    if quota == 0 {
        return Err(AuditError::Contract("query quota must be positive".into()));
    }
    let mut plans = Vec::with_capacity(regions.len() * 2);
    for spec in regions {
        // First listed country; the split across multi-country regions is not
        // recorded anywhere, so keep it deterministic.
        let egress = spec.ip_countries.first().ok_or_else(|| {
            AuditError::Config(format!("region {} lists no IP countries", spec.abbreviation))
        })?;
        for gender in Gender::ALL {
            let term = translations.term(&spec.query_language, gender).ok_or_else(|| {
                AuditError::Config(format!(
                    "no query-term translation for language `{}`",
                    spec.query_language
                ))
            })?;
            plans.push(QueryPlan {
                region: spec.abbreviation,
                term: term.to_string(),
                gender,
                egress_country: egress.clone(),
                quota,
            });
        }
    }
    Ok(plans)
}

/// Plans as CSV: `region,gender,term,egress_country,quota`.
pub fn plans_to_csv(plans: &[QueryPlan]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["region", "gender", "term", "egress_country", "quota"])
        .expect("in-memory write");
    for p in plans {
        writer
            .write_record([
                p.region.abbreviation(),
                p.gender.as_str(),
                &p.term,
                &p.egress_country,
                &p.quota.to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_plans(plans: &[QueryPlan], path: &Path) -> Result<()> {
    std::fs::write(path, plans_to_csv(plans)).map_err(|e| AuditError::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> AuditError {
    AuditError::io(path, std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::region::builtin_region_table;

    #[test]
    fn builtin_plan_is_eighteen_queries_of_seventy() {
        let plans = plan_queries(&builtin_region_table(), 70).unwrap();
        assert_eq!(plans.len(), 18);
        assert!(plans.iter().all(|p| p.quota == 70));
        assert_eq!(plans.iter().map(|p| p.quota).sum::<usize>(), 1260);
    }

    #[test]
    fn empty_regions_give_empty_plan() {
        assert!(plan_queries(&[], 70).unwrap().is_empty());
    }

    #[test]
    fn single_region_gives_both_genders() {
        let table = builtin_region_table();
        let plans = plan_queries(&table[..1], 1).unwrap();
        assert_eq!(plans.len(), 2);
        assert_eq!(plans[0].gender, Gender::Man);
        assert_eq!(plans[1].gender, Gender::Woman);
    }

    #[test]
    fn egress_is_first_listed_country() {
        let plans = plan_queries(&builtin_region_table(), 5).unwrap();
        let la = plans.iter().find(|p| p.region == Region::La).unwrap();
        assert_eq!(la.egress_country, "Mexico");
        let na = plans.iter().find(|p| p.region == Region::Na && p.gender == Gender::Woman).unwrap();
        assert_eq!(na.term, "woman");
    }

    #[test]
    fn missing_translation_names_language() {
        let spec = RegionSpec::new("Somewhere", Region::Ea, "Klingon", vec!["Qo'noS".into()], None).unwrap();
        let err = plan_queries(&[spec], 3).unwrap_err();
        assert!(matches!(err, AuditError::Config(_)));
        assert!(err.to_string().contains("Klingon"));
    }

    #[test]
    fn zero_quota_rejected() {
        assert!(plan_queries(&builtin_region_table(), 0).is_err());
    }
}
