use std::fmt;

use serde::{Deserialize, Serialize};

use super::manifest::Dataset;
use super::region::{Gender, Region};
use crate::error::{AuditError, Result};

/// Images per (region, gender) cell in the reference collection protocol.
pub const PROTOCOL_IMAGES_PER_CELL: usize = 70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub region: Region,
    pub gender: Gender,
    pub count: usize,
    pub conformant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub expected_per_cell: usize,
    pub total: usize,
    pub cells: Vec<CellReport>,
    pub conformant: bool,
}

impl ValidationReport {
    pub fn failing_cells(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| !c.conformant)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "region gender count expected status")?;
        for c in &self.cells {
            writeln!(
                f,
                "{:<6} {:<6} {:>5} {:>8} {}",
                c.region.abbreviation(),
                c.gender.as_str(),
                c.count,
                self.expected_per_cell,
                if c.conformant { "ok" } else { "MISMATCH" }
            )?;
        }
        write!(
            f,
            "total {} / {}: {}",
            self.total,
            self.expected_per_cell * self.cells.len(),
            if self.conformant { "conformant" } else { "NOT conformant" }
        )
    }
}

/// Checks every one of the 18 (region, gender) cells for exactly
/// `expected_per_cell` records. Failures are report content, not errors.
pub fn validate_dataset(ds: &Dataset, expected_per_cell: usize) -> Result<ValidationReport> {
    if expected_per_cell == 0 {
        return Err(AuditError::Contract("expected_per_cell must be positive".into()));
    }
    let cells: Vec<CellReport> = Region::ALL
        .iter()
        .flat_map(|&region| Gender::ALL.map(|gender| (region, gender)))
        .map(|(region, gender)| {
            let count = ds.cell_count(region, gender);
            CellReport {
                region,
                gender,
                count,
                conformant: count == expected_per_cell,
            }
        })
        .collect();
    let conformant = cells.iter().all(|c| c.conformant);
    Ok(ValidationReport {
        expected_per_cell,
        total: ds.len(),
        cells,
        conformant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::manifest::ImageRecord;

    fn record(i: usize, region: Region, gender: Gender) -> ImageRecord {
        ImageRecord {
            id: format!("r{i}"),
            region,
            gender,
            query_term: "t".into(),
            source_url: None,
            file_path: format!("{i}.png").into(),
            width: 1,
            height: 1,
        }
    }

    fn grid(per_cell: usize) -> Vec<ImageRecord> {
        let mut out = Vec::new();
        for r in Region::ALL {
            for g in Gender::ALL {
                for _ in 0..per_cell {
                    out.push(record(out.len(), r, g));
                }
            }
        }
        out
    }

    #[test]
    fn conformant_grid_passes() {
        let ds = Dataset::new(grid(70)).unwrap();
        assert_eq!(ds.len(), 1260);
        let report = validate_dataset(&ds, 70).unwrap();
        assert!(report.conformant);
        assert_eq!(report.cells.len(), 18);
    }

    #[test]
    fn missing_cell_is_flagged() {
        let records: Vec<_> = grid(3)
            .into_iter()
            .filter(|r| !(r.region == Region::Ea && r.gender == Gender::Woman))
            .collect();
        let report = validate_dataset(&Dataset::new(records).unwrap(), 3).unwrap();
        assert!(!report.conformant);
        let failing: Vec<_> = report.failing_cells().collect();
        assert_eq!(failing.len(), 1);
        assert_eq!((failing[0].region, failing[0].gender), (Region::Ea, Gender::Woman));
        assert_eq!(failing[0].count, 0);
    }

    #[test]
    fn empty_dataset_reports_all_cells_at_zero() {
        let report = validate_dataset(&Dataset::default(), 70).unwrap();
        assert!(!report.conformant);
        assert_eq!(report.cells.len(), 18);
        assert!(report.cells.iter().all(|c| c.count == 0));
    }

    #[test]
    fn zero_expectation_rejected() {
        assert!(validate_dataset(&Dataset::default(), 0).is_err());
    }
}
