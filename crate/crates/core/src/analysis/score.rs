use serde::{Deserialize, Serialize};

use super::group::GroupMeanTable;
use crate::dataset::{Gender, Region};
use crate::error::{AuditError, Result};
use crate::lexicon::{KeywordSet, Lexicon, Subclass};

/// `Raw` keeps full precision; `Reproduce` applies the published table's
/// display rounding (per-keyword means to 3 decimals, sums to 2, capped at 1.00).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Raw,
    Reproduce,
}

impl std::str::FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "raw" => Ok(ScoreMode::Raw),
            "reproduce" => Ok(ScoreMode::Reproduce),
            other => Err(format!("unknown score mode `{other}` (expected raw or reproduce)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetScore {
    pub region: Region,
    pub gender: Gender,
    pub set: KeywordSet,
    pub subclass: Subclass,
    pub value: f64,
    pub mode: ScoreMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendScore {
    pub region: Region,
    pub gender: Gender,
    pub positive_sum: f64,
    pub negative_sum: f64,
    pub trend: f64,
    pub mode: ScoreMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderDifferenceScore {
    pub region: Region,
    pub set: KeywordSet,
    pub men_total: f64,
    pub women_total: f64,
    pub value: f64,
    pub mode: ScoreMode,
}

pub(crate) fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

/// Two-decimal reproduce-mode values as integer hundredths.
fn cents(x: f64) -> i64 {
    round_half_away(x * 100.0)
}

/// Sum of the subclass's per-keyword means for one (region, gender) cell.
pub fn set_sum(
    table: &GroupMeanTable,
    lexicon: &Lexicon,
    region: Region,
    gender: Gender,
    subclass: Subclass,
    mode: ScoreMode,
) -> Result<SetScore> {
    let keywords: Vec<&str> = lexicon.in_subclass(subclass).map(|k| k.text.as_str()).collect();
    if keywords.is_empty() {
        return Err(AuditError::Contract(format!("lexicon has no `{}` keywords", subclass.as_str())));
    }
    let mut means = Vec::with_capacity(keywords.len());
    for kw in &keywords {
        let stat = table.get(region, gender, kw).ok_or_else(|| {
            AuditError::Computation(format!("no mean for {region}/{gender}/`{kw}` ({} sum)", subclass.as_str()))
        })?;
        means.push(stat.mean);
    }
    let value = match mode {
        ScoreMode::Raw => means.iter().sum(),
        ScoreMode::Reproduce => {
            let thousandths: i64 = means.iter().map(|m| round_half_away(m * 1000.0)).sum();
            let hundredths = thousandths.signum() * ((thousandths.abs() + 5) / 10);
            hundredths.min(100) as f64 / 100.0
        }
    };
    Ok(SetScore {
        region,
        gender,
        set: subclass.set(),
        subclass,
        value,
        mode,
    })
}

/// `ΣP − ΣN` for one (region, gender) cell.
pub fn trend(pos: &SetScore, neg: &SetScore) -> Result<TrendScore> {
    if (pos.region, pos.gender, pos.mode) != (neg.region, neg.gender, neg.mode) {
        return Err(AuditError::Contract(format!(
            "trend of mismatched scores: {}/{}/{:?} vs {}/{}/{:?}",
            pos.region, pos.gender, pos.mode, neg.region, neg.gender, neg.mode
        )));
    }
    if pos.subclass != Subclass::Positive || neg.subclass != Subclass::Negative {
        return Err(AuditError::Contract(format!(
            "trend needs (positive, negative) sums, got ({}, {})",
            pos.subclass.as_str(),
            neg.subclass.as_str()
        )));
    }
    let trend = match pos.mode {
        ScoreMode::Raw => pos.value - neg.value,
        ScoreMode::Reproduce => (cents(pos.value) - cents(neg.value)) as f64 / 100.0,
    };
    Ok(TrendScore {
        region: pos.region,
        gender: pos.gender,
        positive_sum: pos.value,
        negative_sum: neg.value,
        trend,
        mode: pos.mode,
    })
}

pub fn trend_for(
    table: &GroupMeanTable,
    lexicon: &Lexicon,
    region: Region,
    gender: Gender,
    mode: ScoreMode,
) -> Result<TrendScore> {
    trend(
        &set_sum(table, lexicon, region, gender, Subclass::Positive, mode)?,
        &set_sum(table, lexicon, region, gender, Subclass::Negative, mode)?,
    )
}

/// `|ΣM − ΣW|` where each total adds both subclass sums of `set`.
pub fn gender_difference(
    table: &GroupMeanTable,
    lexicon: &Lexicon,
    region: Region,
    set: KeywordSet,
    mode: ScoreMode,
) -> Result<GenderDifferenceScore> {
    let mut scores = Vec::with_capacity(4);
    for gender in Gender::ALL {
        for subclass in set.subclasses() {
            scores.push(set_sum(table, lexicon, region, gender, subclass, mode)?);
        }
    }
    gender_difference_from_scores(&scores)
}

/// Gender difference from precomputed subclass sums of one region and set
/// (typically two per gender).
pub fn gender_difference_from_scores(scores: &[SetScore]) -> Result<GenderDifferenceScore> {
    let first = scores
        .first()
        .ok_or_else(|| AuditError::Contract("gender difference of no scores".into()))?;
    if scores
        .iter()
        .any(|s| (s.region, s.set, s.mode) != (first.region, first.set, first.mode))
    {
        return Err(AuditError::Contract("gender difference over mixed regions, sets or modes".into()));
    }
    for gender in Gender::ALL {
        if !scores.iter().any(|s| s.gender == gender) {
            return Err(AuditError::Computation(format!(
                "no {gender} scores for {} {}",
                first.region,
                first.set.as_str()
            )));
        }
    }
    let total = |g: Gender| scores.iter().filter(move |s| s.gender == g).map(|s| s.value);
    let (men_total, women_total, value) = match first.mode {
        ScoreMode::Raw => {
            let (m, w): (f64, f64) = (total(Gender::Man).sum(), total(Gender::Woman).sum());
            (m, w, (m - w).abs())
        }
        ScoreMode::Reproduce => {
            let m: i64 = total(Gender::Man).map(cents).sum();
            let w: i64 = total(Gender::Woman).map(cents).sum();
            (m as f64 / 100.0, w as f64 / 100.0, (m - w).abs() as f64 / 100.0)
        }
    };
    Ok(GenderDifferenceScore {
        region: first.region,
        set: first.set,
        men_total,
        women_total,
        value,
        mode: first.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::group::{builtin_appendix_table, GroupStat};
    use crate::lexicon::builtin_lexicon;
    use proptest::prelude::*;

    fn score(region: Region, gender: Gender, subclass: Subclass, value: f64) -> SetScore {
        SetScore {
            region,
            gender,
            set: subclass.set(),
            subclass,
            value,
            mode: ScoreMode::Reproduce,
        }
    }

    #[test]
    fn reproduce_mode_rounds_then_clamps() {
        let t = builtin_appendix_table();
        let lex = builtin_lexicon();
        let neg = |g| set_sum(&t, &lex, Region::Wana, g, Subclass::Negative, ScoreMode::Reproduce).unwrap().value;
        assert_eq!(neg(Gender::Man), 0.98);
        assert_eq!(neg(Gender::Woman), 1.00);
        let raw = set_sum(&t, &lex, Region::Wana, Gender::Woman, Subclass::Negative, ScoreMode::Raw).unwrap();
        assert!((raw.value - 1.024).abs() < 1e-12);
    }

    #[test]
    fn all_zero_means_sum_to_zero() {
        let lex = builtin_lexicon();
        let mut t = GroupMeanTable::new();
        for k in lex.in_subclass(Subclass::Positive) {
            t.insert(Region::Na, Gender::Man, &k.text, GroupStat { mean: 0.0, std: None, n: 1 }).unwrap();
        }
        for mode in [ScoreMode::Raw, ScoreMode::Reproduce] {
            assert_eq!(set_sum(&t, &lex, Region::Na, Gender::Man, Subclass::Positive, mode).unwrap().value, 0.0);
        }
        let err = set_sum(&t, &lex, Region::Na, Gender::Man, Subclass::Negative, ScoreMode::Raw).unwrap_err();
        assert!(err.to_string().contains("criminal"));
    }

    #[test]
    fn trend_examples() {
        let p = score(Region::Wana, Gender::Man, Subclass::Positive, 0.90);
        let n = score(Region::Wana, Gender::Man, Subclass::Negative, 0.98);
        assert_eq!(trend(&p, &n).unwrap().trend, -0.08);
        let p = score(Region::Ea, Gender::Man, Subclass::Positive, 0.92);
        let n = score(Region::Ea, Gender::Man, Subclass::Negative, 0.92);
        assert_eq!(trend(&p, &n).unwrap().trend, 0.0);
        let other = score(Region::Ea, Gender::Woman, Subclass::Negative, 0.92);
        assert!(matches!(trend(&p, &other), Err(AuditError::Contract(_))));
        assert!(matches!(trend(&n, &p), Err(AuditError::Contract(_))));
    }

    #[test]
    fn gender_difference_examples() {
        let t = builtin_appendix_table();
        let lex = builtin_lexicon();
        let printed = [
            score(Region::Wana, Gender::Man, Subclass::Positive, 0.90),
            score(Region::Wana, Gender::Man, Subclass::Negative, 0.98),
            score(Region::Wana, Gender::Woman, Subclass::Positive, 0.96),
            score(Region::Wana, Gender::Woman, Subclass::Negative, 1.00),
        ];
        assert_eq!(gender_difference_from_scores(&printed).unwrap().value, 0.08);
        // From the per-keyword means, men's positive sum is 0.908 and rounds to 0.91.
        let gd = gender_difference(&t, &lex, Region::Wana, KeywordSet::Traits, ScoreMode::Reproduce).unwrap();
        assert_eq!((gd.men_total, gd.women_total, gd.value), (1.89, 1.96, 0.07));

        let occ = [
            score(Region::Wana, Gender::Man, Subclass::MaleDominated, 0.96),
            score(Region::Wana, Gender::Man, Subclass::FemaleDominated, 0.90),
            score(Region::Wana, Gender::Woman, Subclass::MaleDominated, 0.93),
            score(Region::Wana, Gender::Woman, Subclass::FemaleDominated, 1.00),
        ];
        assert_eq!(gender_difference_from_scores(&occ).unwrap().value, 0.07);
        let sym = [
            score(Region::Wana, Gender::Man, Subclass::Masculine, 0.5),
            score(Region::Wana, Gender::Woman, Subclass::Masculine, 0.5),
        ];
        assert_eq!(gender_difference_from_scores(&sym).unwrap().value, 0.0);
        assert!(gender_difference_from_scores(&occ[..2]).is_err());
    }

    #[test]
    fn raw_and_reproduce_stay_within_rounding_envelope() {
        let t = builtin_appendix_table();
        let lex = builtin_lexicon();
        for region in Region::ALL {
            for gender in Gender::ALL {
                let raw = trend_for(&t, &lex, region, gender, ScoreMode::Raw).unwrap().trend;
                let rep = trend_for(&t, &lex, region, gender, ScoreMode::Reproduce).unwrap().trend;
                assert!((raw - rep).abs() < 0.03, "{region} {gender}: {raw} vs {rep}");
            }
            let raw = gender_difference(&t, &lex, region, KeywordSet::Traits, ScoreMode::Raw).unwrap().value;
            let rep = gender_difference(&t, &lex, region, KeywordSet::Traits, ScoreMode::Reproduce).unwrap().value;
            assert!((raw - rep).abs() < 0.03, "{region}: {raw} vs {rep}");
        }
    }

    proptest! {
        #[test]
        fn raw_trend_is_exact_difference(p in -5.0f64..5.0, n in -5.0f64..5.0) {
            let mut pos = score(Region::La, Gender::Woman, Subclass::Positive, p);
            let mut neg = score(Region::La, Gender::Woman, Subclass::Negative, n);
            pos.mode = ScoreMode::Raw;
            neg.mode = ScoreMode::Raw;
            let t = trend(&pos, &neg).unwrap();
            prop_assert_eq!(t.trend, p - n);
            prop_assert_eq!(trend(&pos, &score_raw(pos.value)).map(|_| ()).is_err(), true);
        }

        #[test]
        fn gender_difference_is_non_negative_and_symmetric(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mk = |g, v| SetScore { mode: ScoreMode::Raw, ..score(Region::Sa, g, Subclass::Feminine, v) };
            let gd = gender_difference_from_scores(&[mk(Gender::Man, a), mk(Gender::Woman, b)]).unwrap();
            let swapped = gender_difference_from_scores(&[mk(Gender::Man, b), mk(Gender::Woman, a)]).unwrap();
            prop_assert!(gd.value >= 0.0);
            prop_assert_eq!(gd.value, (a - b).abs());
            prop_assert_eq!(gd.value, swapped.value);
        }
    }

    fn score_raw(v: f64) -> SetScore {
        SetScore {
            mode: ScoreMode::Raw,
            ..score(Region::La, Gender::Woman, Subclass::Positive, v)
        }
    }
}
