use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::score::GenderDifferenceScore;
use crate::dataset::{Region, RegionSpec};
use crate::error::{AuditError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    /// Two-tailed p-value of `t = r·sqrt((n−2)/(1−r²))` on `n − 2` degrees of freedom.
    pub p: f64,
    pub n: usize,
    pub pairs: Vec<(f64, f64)>,
}

/// Sample Pearson correlation with a two-tailed t-test.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult> {
    if xs.len() != ys.len() {
        return Err(AuditError::Contract(format!("pearson of {} xs and {} ys", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 3 {
        return Err(AuditError::Contract(format!("pearson needs at least 3 pairs, got {n}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AuditError::Computation("pearson input contains a non-finite value".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) || sxx == 0.0 || syy == 0.0 {
        return Err(AuditError::Computation("correlation undefined: zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| AuditError::Computation(e.to_string()))?;
        (2.0 * dist.cdf(-t.abs())).min(1.0)
    };
    Ok(CorrelationResult {
        r,
        p,
        n,
        pairs: xs.iter().copied().zip(ys.iter().copied()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub region: Region,
    pub gggi: f64,
    pub gender_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexCorrelation {
    pub correlation: CorrelationResult,
    pub points: Vec<ScatterPoint>,
}

/// Correlates per-region gender differences with each region's gender-gap index.
pub fn correlate_with_index(gd: &[GenderDifferenceScore], regions: &[RegionSpec]) -> Result<IndexCorrelation> {
    let mut missing = Vec::new();
    let mut points = Vec::with_capacity(gd.len());
    for score in gd {
        match regions
            .iter()
            .find(|r| r.abbreviation == score.region)
            .and_then(|r| r.gggi)
        {
            Some(gggi) => points.push(ScatterPoint {
                region: score.region,
                gggi,
                gender_difference: score.value,
            }),
            None => missing.push(score.region.abbreviation()),
        }
    }
    if !missing.is_empty() {
        return Err(AuditError::Config(format!(
            "no gender-gap index value for region(s): {}",
            missing.join(", ")
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.gggi).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.gender_difference).collect();
    Ok(IndexCorrelation {
        correlation: pearson(&xs, &ys)?,
        points,
    })
}

/// Writes `region,gggi,gender_difference`.
pub fn write_scatter_csv(points: &[ScatterPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["region", "gggi", "gender_difference"]).expect("in-memory write");
    for p in points {
        w.write_record([p.region.abbreviation(), &p.gggi.to_string(), &p.gender_difference.to_string()])
            .expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    let mut f = std::fs::File::create(path).map_err(|e| AuditError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| AuditError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::score::ScoreMode;
    use crate::dataset::builtin_region_table;
    use crate::lexicon::KeywordSet;
    use proptest::prelude::*;

    /// Two-tailed p from the closed-form Student t CDF for integer df.
    fn t_series_p(t: f64, nu: usize) -> f64 {
        let theta = (t.abs() / (nu as f64).sqrt()).atan();
        let (s, c) = theta.sin_cos();
        let a = if nu % 2 == 1 {
            let mut term = c;
            let mut acc = if nu > 1 { c } else { 0.0 };
            let mut k = 3;
            while k < nu {
                term *= (k - 1) as f64 / k as f64 * c * c;
                acc += term;
                k += 2;
            }
            2.0 / std::f64::consts::PI * (theta + s * acc)
        } else {
            let mut term = 1.0;
            let mut acc = 1.0;
            let mut k = 2;
            while k < nu {
                term *= (k - 1) as f64 / k as f64 * c * c;
                acc += term;
                k += 2;
            }
            s * acc
        };
        1.0 - a
    }

    fn covariance_r(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let syy: f64 = ys.iter().map(|y| y * y).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn t_series_oracle_matches_known_values() {
        // Cauchy: P(|T| > 1) = 1/2; df = 2: P(|T| > t) = 1 - t/sqrt(2 + t²).
        assert!((t_series_p(1.0, 1) - 0.5).abs() < 1e-15);
        assert!((t_series_p(2.0, 2) - (1.0 - 2.0 / 6f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn perfect_linearity() {
        let xs = [1.0, 2.0, 3.5, 4.0, 7.0];
        let up: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let down: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &up).unwrap().r - 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &down).unwrap().r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn nine_point_fixture_matches_oracles() {
        let xs = [0.643, 0.712, 0.781, 0.688, 0.754, 0.721, 0.699, 0.765, 0.737];
        let ys = [0.08, 0.05, 0.01, 0.07, 0.03, 0.04, 0.06, 0.02, 0.09];
        let res = pearson(&xs, &ys).unwrap();
        assert_eq!(res.n, 9);
        assert!((res.r - covariance_r(&xs, &ys)).abs() < 1e-12);
        let t = res.r * (7.0 / (1.0 - res.r * res.r)).sqrt();
        assert!((res.p - t_series_p(t, 7)).abs() < 1e-9, "{} vs {}", res.p, t_series_p(t, 7));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(AuditError::Contract(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(AuditError::Contract(_))));
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]), Err(AuditError::Computation(_))));
    }

    fn gd(region: Region, value: f64) -> GenderDifferenceScore {
        GenderDifferenceScore {
            region,
            set: KeywordSet::Traits,
            men_total: value,
            women_total: 0.0,
            value,
            mode: ScoreMode::Raw,
        }
    }

    #[test]
    fn index_correlation_contract() {
        let mut regions = builtin_region_table();
        let scores: Vec<_> = Region::ALL.iter().enumerate().map(|(i, r)| gd(*r, 0.01 * i as f64)).collect();
        let err = correlate_with_index(&scores, &regions).unwrap_err().to_string();
        assert!(err.contains("WANA") && err.contains("SSA"));

        for (i, spec) in regions.iter_mut().enumerate() {
            spec.set_gggi(0.7 - 0.01 * i as f64).unwrap();
        }
        let res = correlate_with_index(&scores, &regions).unwrap();
        assert_eq!(res.correlation.n, 9);
        assert!((res.correlation.r + 1.0).abs() < 1e-12);
        assert_eq!(res.points[0].region, Region::Wana);

        let flat: Vec<_> = Region::ALL.iter().map(|r| gd(*r, 0.05)).collect();
        assert!(correlate_with_index(&flat, &regions).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_affine_invariant(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..20),
            a in 0.1f64..10.0,
            b in -5.0f64..5.0,
        ) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
            prop_assume!(spread(&xs) > 1e-3 && spread(&ys) > 1e-3);
            let base = pearson(&xs, &ys).unwrap();
            prop_assert!(base.r.abs() <= 1.0 && (0.0..=1.0).contains(&base.p));
            prop_assert!((pearson(&ys, &xs).unwrap().r - base.r).abs() < 1e-12);
            let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((pearson(&mapped, &ys).unwrap().r - base.r).abs() < 1e-12);
        }
    }
}
