use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::similarity::SimilarityMatrix;
use crate::dataset::{Dataset, Gender, Region};
use crate::error::{AuditError, Result};
use crate::lexicon::Lexicon;

/// Per-cell standard deviations at or above this are reported.
pub const STD_WARNING_THRESHOLD: f64 = 0.015;

/// Region column order of the consolidated mean-score table.
pub const APPENDIX_REGION_ORDER: [Region; 9] = [
    Region::Ssa,
    Region::La,
    Region::Ee,
    Region::Sa,
    Region::We,
    Region::Sea,
    Region::Wana,
    Region::Na,
    Region::Ea,
];

const BUILTIN_APPENDIX: &str = include_str!("../../data/appendix_a.csv");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub mean: f64,
    /// Population standard deviation; absent for tables loaded from published means.
    pub std: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub region: Region,
    pub gender: Gender,
    pub keyword: String,
    #[serde(flatten)]
    pub stat: GroupStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdWarning {
    pub region: Region,
    pub gender: Gender,
    pub keyword: String,
    pub std: f64,
}

/// Mean cosine similarity per (region, gender, keyword).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GroupEntry>", into = "Vec<GroupEntry>")]
pub struct GroupMeanTable {
    entries: BTreeMap<(Region, Gender, String), GroupStat>,
}

impl GroupMeanTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, region: Region, gender: Gender, keyword: &str, stat: GroupStat) -> Result<()> {
        if stat.n == 0 || !stat.mean.is_finite() || !(-1.0..=1.0).contains(&stat.mean) {
            return Err(AuditError::Contract(format!(
                "group entry {region}/{gender}/{keyword}: mean {} over n = {}",
                stat.mean, stat.n
            )));
        }
        if stat.std.is_some_and(|s| s.is_nan() || s < 0.0) {
            return Err(AuditError::Contract(format!("group entry {region}/{gender}/{keyword}: negative std")));
        }
        self.entries.insert((region, gender, keyword.to_string()), stat);
        Ok(())
    }

    pub fn get(&self, region: Region, gender: Gender, keyword: &str) -> Option<&GroupStat> {
        self.entries.get(&(region, gender, keyword.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = GroupEntry> + '_ {
        self.entries.iter().map(|((region, gender, keyword), stat)| GroupEntry {
            region: *region,
            gender: *gender,
            keyword: keyword.clone(),
            stat: *stat,
        })
    }

    pub fn regions(&self) -> BTreeSet<Region> {
        self.entries.keys().map(|k| k.0).collect()
    }

    /// One warning per entry whose std reaches [`STD_WARNING_THRESHOLD`].
    pub fn std_warnings(&self) -> Vec<StdWarning> {
        self.entries
            .iter()
            .filter_map(|((region, gender, keyword), stat)| {
                stat.std.filter(|s| *s >= STD_WARNING_THRESHOLD).map(|std| StdWarning {
                    region: *region,
                    gender: *gender,
                    keyword: keyword.clone(),
                    std,
                })
            })
            .collect()
    }

    /// The consolidated layout: one row per gender × keyword, one column per
    /// region, means to 3 decimals.
    pub fn to_appendix_csv(&self, lexicon: &Lexicon) -> String {
        let regions: Vec<Region> = APPENDIX_REGION_ORDER
            .into_iter()
            .filter(|r| self.regions().contains(r))
            .collect();
        let present: BTreeSet<&str> = self.entries.keys().map(|k| k.2.as_str()).collect();
        let mut keywords: Vec<&str> = lexicon
            .keywords()
            .iter()
            .map(|k| k.text.as_str())
            .filter(|k| present.contains(k))
            .collect();
        keywords.extend(present.iter().filter(|k| lexicon.find(k).is_none()));

        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["gender".to_string(), "keyword".to_string()];
        header.extend(regions.iter().map(|r| r.abbreviation().to_string()));
        w.write_record(&header).expect("in-memory write");
        for gender in Gender::ALL {
            for kw in &keywords {
                if regions.iter().all(|r| self.get(*r, gender, kw).is_none()) {
                    continue;
                }
                let mut row = vec![gender.as_str().to_string(), kw.to_string()];
                row.extend(
                    regions
                        .iter()
                        .map(|r| self.get(*r, gender, kw).map(|s| format_thousandths(s.mean)).unwrap_or_default()),
                );
                w.write_record(&row).expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

impl TryFrom<Vec<GroupEntry>> for GroupMeanTable {
    type Error = AuditError;

    fn try_from(rows: Vec<GroupEntry>) -> Result<Self> {
        let mut table = GroupMeanTable::new();
        for e in rows {
            table.insert(e.region, e.gender, &e.keyword, e.stat)?;
        }
        Ok(table)
    }
}

impl From<GroupMeanTable> for Vec<GroupEntry> {
    fn from(t: GroupMeanTable) -> Self {
        t.entries().collect()
    }
}

/// Shortest decimal for `x` rounded to 3 places (`0.180` prints as `0.18`).
fn format_thousandths(x: f64) -> String {
    let t = super::score::round_half_away(x * 1000.0);
    format!("{}", t as f64 / 1000.0)
}

/// Averages each prompt column over the images of every (region, gender) cell.
pub fn group_means(matrix: &SimilarityMatrix, dataset: &Dataset, lexicon: &Lexicon) -> Result<GroupMeanTable> {
    let by_id = dataset.index_by_id();
    let orphan_images: Vec<&str> = matrix
        .image_ids
        .iter()
        .map(String::as_str)
        .filter(|id| !by_id.contains_key(id))
        .collect();
    let orphan_prompts: Vec<&str> = matrix
        .prompt_ids
        .iter()
        .map(String::as_str)
        .filter(|id| lexicon.find(id).is_none())
        .collect();
    if !orphan_images.is_empty() || !orphan_prompts.is_empty() {
        return Err(AuditError::Contract(format!(
            "similarity matrix references unknown ids (images: [{}]; prompts: [{}])",
            orphan_images.join(", "),
            orphan_prompts.join(", ")
        )));
    }

    let mut cells: BTreeMap<(Region, Gender), Vec<usize>> = BTreeMap::new();
    for (row, id) in matrix.image_ids.iter().enumerate() {
        let r = by_id[id.as_str()];
        cells.entry((r.region, r.gender)).or_default().push(row);
    }

    let mut table = GroupMeanTable::new();
    for ((region, gender), rows) in &cells {
        for (col, keyword) in matrix.prompt_ids.iter().enumerate() {
            let mut xs: Vec<f64> = rows.iter().map(|&row| matrix.get(row, col)).collect();
            let (mean, std) = mean_and_population_std(&mut xs);
            table.insert(
                *region,
                *gender,
                keyword,
                GroupStat {
                    mean,
                    std: Some(std),
                    n: xs.len(),
                },
            )?;
        }
    }
    for w in table.std_warnings() {
        log::warn!(
            "{} {} `{}`: std {:.4} exceeds {STD_WARNING_THRESHOLD}",
            w.region,
            w.gender,
            w.keyword,
            w.std
        );
    }
    Ok(table)
}

/// Sorts first so the result does not depend on record order.
fn mean_and_population_std(xs: &mut [f64]) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mean = (xs.iter().sum::<f64>() / n).clamp(-1.0, 1.0);
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Parses the consolidated layout (`gender,keyword,<region>...`). Entries get
/// `n = images_per_cell` and no std.
pub fn parse_appendix_csv(text: &str, source_name: &str, images_per_cell: usize) -> Result<GroupMeanTable> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| AuditError::load(source_name, 1, e.to_string()))?
        .clone();
    if header.len() < 3 || &header[0] != "gender" || &header[1] != "keyword" {
        return Err(AuditError::load(source_name, 1, "expected header `gender,keyword,<region>...`"));
    }
    let regions: Vec<Region> = header
        .iter()
        .skip(2)
        .map(|h| h.parse::<Region>().map_err(|e| AuditError::load(source_name, 1, e)))
        .collect::<Result<_>>()?;
    let mut table = GroupMeanTable::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| AuditError::load(source_name, row_no, e.to_string()))?;
        let gender: Gender = row[0].parse().map_err(|e: String| AuditError::load(source_name, row_no, e))?;
        let keyword = row[1].trim().to_lowercase();
        for (region, cell) in regions.iter().zip(row.iter().skip(2)) {
            if cell.trim().is_empty() {
                continue;
            }
            let mean: f64 = cell
                .trim()
                .parse()
                .map_err(|_| AuditError::load(source_name, row_no, format!("bad mean `{cell}` for {region}")))?;
            if table.get(*region, gender, &keyword).is_some() {
                return Err(AuditError::load(source_name, row_no, format!("duplicate {gender}/{keyword}")));
            }
            table
                .insert(
                    *region,
                    gender,
                    &keyword,
                    GroupStat {
                        mean,
                        std: None,
                        n: images_per_cell,
                    },
                )
                .map_err(|e| AuditError::load(source_name, row_no, e.to_string()))?;
        }
    }
    Ok(table)
}

pub fn load_appendix_csv(path: &Path, images_per_cell: usize) -> Result<GroupMeanTable> {
    let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    parse_appendix_csv(&text, &path.display().to_string(), images_per_cell)
}

/// The published consolidated trait means for all 9 regions (70 images per cell).
pub fn builtin_appendix_table() -> GroupMeanTable {
    parse_appendix_csv(BUILTIN_APPENDIX, "builtin appendix", crate::dataset::PROTOCOL_IMAGES_PER_CELL)
        .expect("builtin appendix parses")
}

pub fn builtin_appendix_csv() -> &'static str {
    BUILTIN_APPENDIX
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageRecord;
    use crate::lexicon::builtin_lexicon;
    use proptest::prelude::*;

    fn record(id: &str, region: Region, gender: Gender) -> ImageRecord {
        ImageRecord {
            id: id.into(),
            region,
            gender,
            query_term: "x".into(),
            source_url: None,
            file_path: format!("{id}.png").into(),
            width: 1,
            height: 1,
        }
    }

    #[test]
    fn singleton_cell_mean_is_the_entry() {
        let ds = Dataset::new(vec![record("a", Region::Ea, Gender::Man)]).unwrap();
        let m = SimilarityMatrix::from_rows(vec!["a".into()], vec!["fraud".into()], vec![0.25]).unwrap();
        let t = group_means(&m, &ds, &builtin_lexicon()).unwrap();
        assert_eq!(t.get(Region::Ea, Gender::Man, "fraud"), Some(&GroupStat { mean: 0.25, std: Some(0.0), n: 1 }));
    }

    #[test]
    fn means_match_hand_computation() {
        let ds = Dataset::new(vec![
            record("a", Region::Ea, Gender::Man),
            record("b", Region::Ea, Gender::Man),
            record("c", Region::Ea, Gender::Woman),
        ])
        .unwrap();
        let m = SimilarityMatrix::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["fraud".into(), "smart".into()],
            vec![0.1, 0.2, 0.3, 0.6, -0.5, 0.0],
        )
        .unwrap();
        let t = group_means(&m, &ds, &builtin_lexicon()).unwrap();
        let fraud = t.get(Region::Ea, Gender::Man, "fraud").unwrap();
        assert!((fraud.mean - 0.2).abs() < 1e-15);
        assert!((fraud.std.unwrap() - 0.1).abs() < 1e-15);
        assert!((t.get(Region::Ea, Gender::Man, "smart").unwrap().mean - 0.4).abs() < 1e-15);
        assert_eq!(t.get(Region::Ea, Gender::Woman, "fraud").unwrap().mean, -0.5);
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn orphans_are_listed() {
        let ds = Dataset::new(vec![record("a", Region::Ea, Gender::Man)]).unwrap();
        let m = SimilarityMatrix::from_rows(
            vec!["a".into(), "ghost".into()],
            vec!["fraud".into(), "unicorn".into()],
            vec![0.0; 4],
        )
        .unwrap();
        let err = group_means(&m, &ds, &builtin_lexicon()).unwrap_err().to_string();
        assert!(err.contains("ghost") && err.contains("unicorn"), "{err}");
    }

    #[test]
    fn builtin_appendix_round_trips_byte_for_byte() {
        let t = builtin_appendix_table();
        assert_eq!(t.len(), 9 * 2 * 10);
        assert_eq!(t.get(Region::Wana, Gender::Woman, "terrorist").unwrap().mean, 0.242);
        assert_eq!(t.to_appendix_csv(&builtin_lexicon()), BUILTIN_APPENDIX);
    }

    #[test]
    fn std_warning_fires_once_per_offending_entry() {
        let mut t = builtin_appendix_table();
        assert!(t.std_warnings().is_empty());
        let mut stat = *t.get(Region::La, Gender::Man, "fraud").unwrap();
        stat.std = Some(0.0149);
        t.insert(Region::La, Gender::Man, "fraud", stat).unwrap();
        assert!(t.std_warnings().is_empty());
        stat.std = Some(0.015);
        t.insert(Region::La, Gender::Man, "fraud", stat).unwrap();
        let w = t.std_warnings();
        assert_eq!(w.len(), 1);
        assert_eq!((w[0].region, w[0].gender, w[0].keyword.as_str()), (Region::La, Gender::Man, "fraud"));
    }

    #[test]
    fn json_round_trip() {
        let t = builtin_appendix_table();
        let back: GroupMeanTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn record_order_does_not_change_table(
            values in prop::collection::vec(-1.0f64..1.0, 12),
            perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let cells = [(Region::Ea, Gender::Man), (Region::Ea, Gender::Woman), (Region::La, Gender::Man)];
            let records: Vec<ImageRecord> =
                (0..6).map(|i| record(&format!("r{i}"), cells[i % 3].0, cells[i % 3].1)).collect();
            let ids: Vec<String> = (0..6).map(|i| format!("r{i}")).collect();
            let prompts = vec!["fraud".to_string(), "smart".to_string()];
            let m = SimilarityMatrix::from_rows(ids.clone(), prompts.clone(), values.clone()).unwrap();
            let base = group_means(&m, &Dataset::new(records.clone()).unwrap(), &builtin_lexicon()).unwrap();

            let ids_p: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
            let vals_p: Vec<f64> = perm.iter().flat_map(|&i| values[2 * i..2 * i + 2].to_vec()).collect();
            let recs_p: Vec<ImageRecord> = perm.iter().rev().map(|&i| records[i].clone()).collect();
            let m_p = SimilarityMatrix::from_rows(ids_p, prompts, vals_p).unwrap();
            let permuted = group_means(&m_p, &Dataset::new(recs_p).unwrap(), &builtin_lexicon()).unwrap();
            prop_assert_eq!(base, permuted);
        }
    }
}
