use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, NeedScores};
use crate::ingest::{AgeBand, DemographicRecord, Gender, ImdBand, Registry};
use crate::wave::Wave;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeedCount {
    pub need: String,
    pub wave: Wave,
    pub count: usize,
}

/// Per-wave counts of documents whose top need is each need, zero-filled
/// over `needs`, plus per-wave UNMAPPED counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub counts: Vec<NeedCount>,
    pub unmapped: BTreeMap<Wave, usize>,
}

pub fn count_needs<'a>(scored: &[NeedScores], needs: impl IntoIterator<Item = &'a String>) -> CountTable {
    let needs: BTreeSet<&String> = needs.into_iter().collect();
    let waves: BTreeSet<Wave> = scored.iter().map(|s| s.wave).collect();
    let mut cells: BTreeMap<(Wave, &str), usize> = BTreeMap::new();
    let mut unmapped: BTreeMap<Wave, usize> = BTreeMap::new();
    for &w in &waves {
        for n in &needs {
            cells.insert((w, n.as_str()), 0);
        }
    }
    for s in scored {
        match &s.top {
            Some(n) => *cells.entry((s.wave, n.as_str())).or_insert(0) += 1,
            None => *unmapped.entry(s.wave).or_insert(0) += 1,
        }
    }
    CountTable {
        counts: cells
            .into_iter()
            .map(|((wave, need), count)| NeedCount {
                need: need.to_string(),
                wave,
                count,
            })
            .collect(),
        unmapped,
    }
}

/// `P(n, t) = count(n, t) / Σ count(n', t)` over needs present in `counts` for `wave`.
pub fn prevalence(counts: &[NeedCount], wave: Wave) -> Result<BTreeMap<String, f64>, AnalyticsError> {
    let cells: Vec<&NeedCount> = counts.iter().filter(|c| c.wave == wave).collect();
    let total: usize = cells.iter().map(|c| c.count).sum();
    if total == 0 {
        return Err(AnalyticsError::NoScoredDocuments);
    }
    Ok(cells
        .into_iter()
        .map(|c| (c.need.clone(), c.count as f64 / total as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceSeries {
    pub need: String,
    pub values: BTreeMap<Wave, f64>,
}

/// One series per need over every wave with at least one scored document.
pub fn prevalence_series(counts: &[NeedCount]) -> Vec<PrevalenceSeries> {
    let waves: BTreeSet<Wave> = counts.iter().map(|c| c.wave).collect();
    let mut series: BTreeMap<String, BTreeMap<Wave, f64>> = BTreeMap::new();
    for c in counts {
        series.entry(c.need.clone()).or_default();
    }
    for w in waves {
        if let Ok(p) = prevalence(counts, w) {
            for (need, v) in p {
                series.entry(need).or_default().insert(w, v);
            }
        }
    }
    series
        .into_iter()
        .map(|(need, values)| PrevalenceSeries { need, values })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    AgeBand,
    Gender,
    ImdBand,
    ImdDecile,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::AgeBand => "age_band",
            Dimension::Gender => "gender",
            Dimension::ImdBand => "imd_band",
            Dimension::ImdDecile => "imd_decile",
        }
    }

    /// Every subgroup value of the dimension.
    pub fn subgroups(self) -> Vec<String> {
        match self {
            Dimension::AgeBand => [AgeBand::B18To29, AgeBand::B30To39, AgeBand::B40To49, AgeBand::B50Plus]
                .iter()
                .map(|b| b.as_str().to_string())
                .collect(),
            Dimension::Gender => [Gender::Female, Gender::Male, Gender::OtherOrUnknown]
                .iter()
                .map(|g| g.as_str().to_string())
                .collect(),
            Dimension::ImdBand => [ImdBand::Low, ImdBand::High, ImdBand::Unknown]
                .iter()
                .map(|b| b.as_str().to_string())
                .collect(),
            Dimension::ImdDecile => (1..=10).map(|d| d.to_string()).chain(["unknown".to_string()]).collect(),
        }
    }

    pub fn subgroup_of(self, r: &DemographicRecord) -> String {
        match self {
            Dimension::AgeBand => r.age_band.as_str().to_string(),
            Dimension::Gender => r.gender.as_str().to_string(),
            Dimension::ImdBand => r.imd_band.as_str().to_string(),
            Dimension::ImdDecile => r.imd_decile.map_or_else(|| "unknown".to_string(), |d| d.to_string()),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "age_band" => Ok(Dimension::AgeBand),
            "gender" => Ok(Dimension::Gender),
            "imd_band" => Ok(Dimension::ImdBand),
            "imd_decile" => Ok(Dimension::ImdDecile),
            other => Err(AnalyticsError::UnknownDimension(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCell {
    pub need: String,
    pub subgroup: String,
    pub count: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedPrevalence {
    pub dimension: Dimension,
    pub wave: Wave,
    /// Sorted by subgroup, then need.
    pub cells: Vec<StratumCell>,
    /// Subgroups with no scored document in the wave.
    pub omitted_subgroups: Vec<String>,
}

impl StratifiedPrevalence {
    pub fn p(&self, need: &str, subgroup: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.need == need && c.subgroup == subgroup)
            .map(|c| c.p)
    }

    pub fn subgroups(&self) -> BTreeSet<&str> {
        self.cells.iter().map(|c| c.subgroup.as_str()).collect()
    }
}

/// Prevalence within each subgroup of `dimension` for one wave.
///
/// Every need in `needs` gets a cell in each present subgroup; subgroups
/// without scored documents are omitted and listed.
pub fn stratified_prevalence<'a>(
    scored: &[NeedScores],
    registry: &Registry,
    needs: impl IntoIterator<Item = &'a String>,
    dimension: Dimension,
    wave: Wave,
) -> Result<StratifiedPrevalence, AnalyticsError> {
    let needs: BTreeSet<&String> = needs.into_iter().collect();
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for s in scored.iter().filter(|s| s.wave == wave) {
        let record = registry
            .get(&s.user_id)
            .ok_or_else(|| AnalyticsError::UnknownUser(s.user_id.clone()))?;
        let Some(top) = &s.top else { continue };
        let group = counts.entry(dimension.subgroup_of(record)).or_default();
        *group.entry(top.clone()).or_insert(0) += 1;
    }
    let mut cells = Vec::new();
    let mut omitted = Vec::new();
    for sub in dimension.subgroups() {
        let Some(group) = counts.get(&sub) else {
            omitted.push(sub);
            continue;
        };
        let total: usize = group.values().sum();
        let labels: BTreeSet<&String> = needs.iter().copied().chain(group.keys()).collect();
        for need in labels {
            let count = group.get(need).copied().unwrap_or(0);
            cells.push(StratumCell {
                need: need.clone(),
                subgroup: sub.clone(),
                count,
                p: count as f64 / total as f64,
            });
        }
    }
    Ok(StratifiedPrevalence {
        dimension,
        wave,
        cells,
        omitted_subgroups: omitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::needs::TagSource;

    fn scored(doc: &str, user: &str, wave: Wave, top: Option<&str>) -> NeedScores {
        NeedScores {
            doc_id: doc.into(),
            user_id: user.into(),
            wave,
            scores: BTreeMap::new(),
            top: top.map(String::from),
            source: TagSource::Rule,
            degraded: false,
        }
    }

    fn counts(items: &[(&str, usize)]) -> Vec<NeedCount> {
        items
            .iter()
            .map(|(n, c)| NeedCount {
                need: n.to_string(),
                wave: Wave::M3,
                count: *c,
            })
            .collect()
    }

    #[test]
    fn prevalence_formula() {
        assert_eq!(prevalence(&counts(&[("food", 5)]), Wave::M3).unwrap()["food"], 1.0);
        let p = prevalence(&counts(&[("food", 3), ("mental", 1)]), Wave::M3).unwrap();
        assert_eq!((p["food"], p["mental"]), (0.75, 0.25));
        let p = prevalence(&counts(&[("food", 3), ("zero", 0)]), Wave::M3).unwrap();
        assert_eq!(p["zero"], 0.0);
        assert!(matches!(
            prevalence(&counts(&[("a", 0), ("b", 0)]), Wave::M3),
            Err(AnalyticsError::NoScoredDocuments)
        ));
        assert_eq!(AnalyticsError::NoScoredDocuments.to_string(), "no scored documents in window");
    }

    #[test]
    fn counting_excludes_unmapped() {
        let needs = ["a".to_string(), "b".to_string()];
        let s = vec![
            scored("1", "u1", Wave::M3, Some("a")),
            scored("2", "u1", Wave::M3, None),
            scored("3", "u2", Wave::M6, Some("b")),
        ];
        let t = count_needs(&s, &needs);
        assert_eq!(t.counts.len(), 4);
        assert_eq!(t.unmapped[&Wave::M3], 1);
        let series = prevalence_series(&t.counts);
        assert_eq!(series[0].values[&Wave::M3], 1.0);
        assert_eq!(series[0].values[&Wave::M6], 0.0);
    }

    #[test]
    fn strata_partition_and_omissions() {
        let registry = Registry::from_records([
            DemographicRecord::new("f", 30, Gender::Female, Some(2)).unwrap(),
            DemographicRecord::new("m", 55, Gender::Male, None).unwrap(),
        ]);
        let needs = ["a".to_string(), "b".to_string()];
        let s = vec![
            scored("1", "f", Wave::M3, Some("a")),
            scored("2", "f", Wave::M3, Some("b")),
            scored("3", "m", Wave::M3, Some("a")),
            scored("4", "m", Wave::M3, None),
        ];
        let st = stratified_prevalence(&s, &registry, &needs, Dimension::Gender, Wave::M3).unwrap();
        assert_eq!(st.p("a", "female"), Some(0.5));
        assert_eq!(st.p("a", "male"), Some(1.0));
        assert_eq!(st.omitted_subgroups, vec!["other_or_unknown".to_string()]);
        let st = stratified_prevalence(&s, &registry, &needs, Dimension::ImdDecile, Wave::M3).unwrap();
        assert_eq!(st.subgroups(), BTreeSet::from(["2", "unknown"]));

        let bad = vec![scored("9", "nobody", Wave::M3, Some("a"))];
        assert!(matches!(
            stratified_prevalence(&bad, &registry, &needs, Dimension::Gender, Wave::M3),
            Err(AnalyticsError::UnknownUser(_))
        ));
        assert!(matches!("income".parse::<Dimension>(), Err(AnalyticsError::UnknownDimension(_))));
    }
}
