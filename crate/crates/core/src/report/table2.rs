use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    gender_difference_from_scores, load_appendix_csv, parse_appendix_csv, set_sum, trend, GenderDifferenceScore,
    GroupMeanTable, ScoreMode, SetScore, TrendScore,
};
use crate::dataset::{Gender, Region, PROTOCOL_IMAGES_PER_CELL};
use crate::error::{AuditError, Result};
use crate::lexicon::{builtin_lexicon, KeywordSet, Lexicon, Subclass};

pub const TREND_ROW: &str = "trend";
pub const GENDER_DIFFERENCE_ROW: &str = "gender_difference";

/// All set sums, trends and gender differences derivable from a mean table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub set_scores: Vec<SetScore>,
    pub trends: Vec<TrendScore>,
    pub gender_differences: Vec<GenderDifferenceScore>,
}

/// Scores every region in `regions` for every set in `sets`. Trends are
/// computed for the positive/negative trait set only.
pub fn score_table(
    table: &GroupMeanTable,
    lexicon: &Lexicon,
    regions: &[Region],
    sets: &[KeywordSet],
    mode: ScoreMode,
) -> Result<ScoreSet> {
    let mut out = ScoreSet::default();
    for &set in sets {
        for &region in regions {
            let mut region_scores = Vec::with_capacity(4);
            for gender in Gender::ALL {
                for subclass in set.subclasses() {
                    region_scores.push(set_sum(table, lexicon, region, gender, subclass, mode)?);
                }
                if set == KeywordSet::Traits {
                    let n = region_scores.len();
                    out.trends.push(trend(&region_scores[n - 2], &region_scores[n - 1])?);
                }
            }
            out.gender_differences.push(gender_difference_from_scores(&region_scores)?);
            out.set_scores.extend(region_scores);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub set: KeywordSet,
    /// Absent on gender-difference rows.
    pub gender: Option<Gender>,
    /// A subclass name, `trend` or `gender_difference`.
    pub label: String,
    pub values: BTreeMap<Region, f64>,
}

/// Set sums, trends and gender differences laid out as the published summary
/// table: one block per keyword set, one column per region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Replica {
    pub mode: ScoreMode,
    pub regions: Vec<Region>,
    pub rows: Vec<Table2Row>,
}

impl Table2Replica {
    pub fn from_scores(scores: &ScoreSet, mode: ScoreMode) -> Self {
        let present: std::collections::BTreeSet<Region> = scores.set_scores.iter().map(|s| s.region).collect();
        let regions: Vec<Region> = Region::SUMMARY_ORDER.into_iter().filter(|r| present.contains(r)).collect();
        let mut rows = Vec::new();
        for set in KeywordSet::ALL {
            if !scores.set_scores.iter().any(|s| s.set == set) {
                continue;
            }
            for gender in Gender::ALL {
                for subclass in set.subclasses() {
                    let values = scores
                        .set_scores
                        .iter()
                        .filter(|s| s.set == set && s.gender == gender && s.subclass == subclass)
                        .map(|s| (s.region, s.value))
                        .collect();
                    rows.push(Table2Row {
                        set,
                        gender: Some(gender),
                        label: subclass.as_str().to_string(),
                        values,
                    });
                }
                if set == KeywordSet::Traits {
                    let values = scores
                        .trends
                        .iter()
                        .filter(|t| t.gender == gender)
                        .map(|t| (t.region, t.trend))
                        .collect();
                    rows.push(Table2Row {
                        set,
                        gender: Some(gender),
                        label: TREND_ROW.to_string(),
                        values,
                    });
                }
            }
            let values = scores
                .gender_differences
                .iter()
                .filter(|g| g.set == set)
                .map(|g| (g.region, g.value))
                .collect();
            rows.push(Table2Row {
                set,
                gender: None,
                label: GENDER_DIFFERENCE_ROW.to_string(),
                values,
            });
        }
        Table2Replica { mode, regions, rows }
    }

    pub fn get(&self, set: KeywordSet, gender: Option<Gender>, label: &str, region: Region) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.set == set && r.gender == gender && r.label == label)
            .and_then(|r| r.values.get(&region).copied())
    }

    fn format(&self, v: f64) -> String {
        match self.mode {
            ScoreMode::Reproduce => format!("{v:.2}"),
            ScoreMode::Raw => v.to_string(),
        }
    }

    /// `set,gender,row,<region>...`; gender is empty on gender-difference rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["set".to_string(), "gender".to_string(), "row".to_string()];
        header.extend(self.regions.iter().map(|r| r.abbreviation().to_string()));
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![
                row.set.as_str().to_string(),
                row.gender.map(|g| g.as_str().to_string()).unwrap_or_default(),
                row.label.clone(),
            ];
            rec.extend(
                self.regions
                    .iter()
                    .map(|r| row.values.get(r).map(|v| self.format(*v)).unwrap_or_default()),
            );
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn parse_csv(text: &str, source_name: &str, mode: ScoreMode) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| AuditError::load(source_name, 1, e.to_string()))?
            .clone();
        if header.len() < 4 || &header[0] != "set" || &header[1] != "gender" || &header[2] != "row" {
            return Err(AuditError::load(source_name, 1, "expected header `set,gender,row,<region>...`"));
        }
        let regions: Vec<Region> = header
            .iter()
            .skip(3)
            .map(|h| h.parse::<Region>().map_err(|e| AuditError::load(source_name, 1, e)))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let row_no = i + 2;
            let rec = rec.map_err(|e| AuditError::load(source_name, row_no, e.to_string()))?;
            let set: KeywordSet = rec[0].parse().map_err(|e: String| AuditError::load(source_name, row_no, e))?;
            let gender = match rec[1].trim() {
                "" => None,
                g => Some(g.parse().map_err(|e: String| AuditError::load(source_name, row_no, e))?),
            };
            let mut values = BTreeMap::new();
            for (region, cell) in regions.iter().zip(rec.iter().skip(3)) {
                if cell.trim().is_empty() {
                    continue;
                }
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| AuditError::load(source_name, row_no, format!("bad value `{cell}`")))?;
                values.insert(*region, v);
            }
            rows.push(Table2Row {
                set,
                gender,
                label: rec[2].to_string(),
                values,
            });
        }
        Ok(Table2Replica { mode, regions, rows })
    }

    /// Fixed-width text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<12} {:<6} {:<17}", "set", "gender", "row");
        for r in &self.regions {
            let _ = write!(s, " {:>7}", r.abbreviation());
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(
                s,
                "{:<12} {:<6} {:<17}",
                row.set.as_str(),
                row.gender.map(Gender::as_str).unwrap_or(""),
                row.label
            );
            for r in &self.regions {
                let cell = row.values.get(r).map(|v| format!("{v:.2}")).unwrap_or_default();
                let _ = write!(s, " {cell:>7}");
            }
            s.push('\n');
        }
        s
    }
}

/// Recomputes the trait block of the summary table from a consolidated
/// per-keyword mean table (the bundled one when `fixture` is `None`).
pub fn reproduce_appendix(fixture: Option<&Path>, mode: ScoreMode) -> Result<Table2Replica> {
    let table = match fixture {
        Some(path) => load_appendix_csv(path, PROTOCOL_IMAGES_PER_CELL)?,
        None => parse_appendix_csv(crate::analysis::builtin_appendix_csv(), "builtin appendix", PROTOCOL_IMAGES_PER_CELL)?,
    };
    reproduce_from_table(&table, mode)
}

pub fn reproduce_from_table(table: &GroupMeanTable, mode: ScoreMode) -> Result<Table2Replica> {
    let lexicon = builtin_lexicon();
    let mut missing = Vec::new();
    for gender in Gender::ALL {
        for subclass in [Subclass::Positive, Subclass::Negative] {
            for kw in lexicon.in_subclass(subclass) {
                let absent: Vec<&str> = Region::ALL
                    .iter()
                    .filter(|r| table.get(**r, gender, &kw.text).is_none())
                    .map(|r| r.abbreviation())
                    .collect();
                if !absent.is_empty() {
                    missing.push(format!("{gender}/{} ({})", kw.text, absent.join(" ")));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(AuditError::Computation(format!("missing keyword rows: {}", missing.join(", "))));
    }
    let scores = score_table(table, &lexicon, &Region::ALL, &[KeywordSet::Traits], mode)?;
    Ok(Table2Replica::from_scores(&scores, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::GroupStat;

    #[test]
    fn wana_man_row_and_gender_difference() {
        let t = reproduce_appendix(None, ScoreMode::Reproduce).unwrap();
        let get = |g, label| t.get(KeywordSet::Traits, g, label, Region::Wana).unwrap();
        assert_eq!(get(Some(Gender::Man), "negative"), 0.98);
        assert_eq!(get(Some(Gender::Woman), "negative"), 1.00);
        assert!((get(Some(Gender::Man), "positive") - 0.90).abs() <= 0.015);
        assert!((get(Some(Gender::Man), "trend") + 0.08).abs() <= 0.015);
        assert_eq!(t.regions, Region::SUMMARY_ORDER);
        assert_eq!(t.rows.len(), 7);
    }

    #[test]
    fn csv_round_trip_in_both_modes() {
        for mode in [ScoreMode::Raw, ScoreMode::Reproduce] {
            let t = reproduce_appendix(None, mode).unwrap();
            let back = Table2Replica::parse_csv(&t.to_csv(), "t", mode).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn equal_genders_give_zero_difference() {
        let base = crate::analysis::builtin_appendix_table();
        let mut t = GroupMeanTable::new();
        for e in base.entries() {
            let man = *base.get(e.region, Gender::Man, &e.keyword).unwrap();
            t.insert(e.region, e.gender, &e.keyword, GroupStat { std: None, ..man }).unwrap();
        }
        let rep = reproduce_from_table(&t, ScoreMode::Reproduce).unwrap();
        for r in Region::ALL {
            assert_eq!(rep.get(KeywordSet::Traits, None, GENDER_DIFFERENCE_ROW, r), Some(0.0));
        }
    }

    #[test]
    fn missing_rows_are_named() {
        let text: String = crate::analysis::builtin_appendix_csv()
            .lines()
            .filter(|l| !l.starts_with("woman,fraud") && !l.starts_with("man,smart"))
            .map(|l| format!("{l}\n"))
            .collect();
        let table = parse_appendix_csv(&text, "x", 70).unwrap();
        let err = reproduce_from_table(&table, ScoreMode::Reproduce).unwrap_err().to_string();
        assert!(err.contains("woman/fraud") && err.contains("man/smart"), "{err}");
    }
}
