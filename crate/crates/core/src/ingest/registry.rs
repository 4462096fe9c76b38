//! Demographic registry ingestion.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "18-29")]
    B18To29,
    #[serde(rename = "30-39")]
    B30To39,
    #[serde(rename = "40-49")]
    B40To49,
    #[serde(rename = "50+")]
    B50Plus,
}

impl AgeBand {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeBand::B18To29 => "18-29",
            AgeBand::B30To39 => "30-39",
            AgeBand::B40To49 => "40-49",
            AgeBand::B50Plus => "50+",
        }
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const MIN_AGE: u32 = 18;
pub const MAX_AGE: u32 = 120;

/// Maps an age in years onto one of the four analysis bands.
pub fn band_age(age_years: u32) -> Result<AgeBand, IngestError> {
    match age_years {
        18..=29 => Ok(AgeBand::B18To29),
        30..=39 => Ok(AgeBand::B30To39),
        40..=49 => Ok(AgeBand::B40To49),
        50..=MAX_AGE => Ok(AgeBand::B50Plus),
        _ => Err(IngestError::AgeOutOfRange { age: age_years }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    OtherOrUnknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::OtherOrUnknown => "other_or_unknown",
        }
    }

    fn parse(raw: &str) -> Gender {
        match raw.trim().to_ascii_lowercase().as_str() {
            "female" | "f" | "woman" | "w" => Gender::Female,
            "male" | "m" | "man" => Gender::Male,
            _ => Gender::OtherOrUnknown,
        }
    }
}

/// Deprivation band; decile 1 is the most deprived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImdBand {
    Low,
    High,
    Unknown,
}

impl ImdBand {
    pub fn from_decile(decile: Option<u8>) -> ImdBand {
        match decile {
            Some(1..=5) => ImdBand::Low,
            Some(6..=10) => ImdBand::High,
            _ => ImdBand::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ImdBand::Low => "low",
            ImdBand::High => "high",
            ImdBand::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicRecord {
    pub user_id: String,
    pub age_years: u32,
    pub age_band: AgeBand,
    pub gender: Gender,
    pub imd_decile: Option<u8>,
    pub imd_band: ImdBand,
}

impl DemographicRecord {
    pub fn new(user_id: impl Into<String>, age_years: u32, gender: Gender, imd_decile: Option<u8>) -> Result<Self, IngestError> {
        Ok(Self {
            user_id: user_id.into(),
            age_years,
            age_band: band_age(age_years)?,
            gender,
            imd_decile,
            imd_band: ImdBand::from_decile(imd_decile),
        })
    }
}

/// Anonymized registry keyed by re-indexed user id.
///
/// The mapping from source ids is kept in memory only and is never serialized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub records: BTreeMap<String, DemographicRecord>,
    #[serde(skip)]
    source_ids: HashMap<String, String>,
}

impl Registry {
    /// Builds a registry from records that already carry their final ids.
    pub fn from_records(records: impl IntoIterator<Item = DemographicRecord>) -> Self {
        let records: BTreeMap<_, _> = records
            .into_iter()
            .map(|r| (r.user_id.clone(), r))
            .collect();
        let source_ids = records.keys().map(|k| (k.clone(), k.clone())).collect();
        Self {
            records,
            source_ids,
        }
    }

    pub fn get(&self, user_id: &str) -> Option<&DemographicRecord> {
        self.records.get(user_id)
    }

    /// Resolves an id from the raw feedback stream to its re-indexed id.
    pub fn resolve_source_id(&self, source_id: &str) -> Option<&str> {
        self.source_ids.get(source_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    /// 1-based data row (header excluded) or input line.
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryReport {
    pub rows_in: usize,
    pub rows_kept: usize,
    pub rows_removed: usize,
    pub removed: BTreeMap<String, usize>,
    pub imputed: BTreeMap<String, usize>,
    pub errors: Vec<RowIssue>,
}

impl RegistryReport {
    fn remove(&mut self, reason: &str, issue: Option<RowIssue>) {
        self.rows_removed += 1;
        *self.removed.entry(reason.to_string()).or_default() += 1;
        self.errors.extend(issue);
    }

    fn impute(&mut self, field: &str) {
        *self.imputed.entry(field.to_string()).or_default() += 1;
    }
}

const REQUIRED_COLUMNS: [&str; 4] = ["user_id", "age", "gender", "imd_decile"];

/// Parses the registry CSV, applying the missing-data policy and re-indexing user ids.
pub fn ingest_registry(csv_bytes: &[u8]) -> Result<(Registry, RegistryReport), IngestError> {
    let mut report = RegistryReport::default();
    if csv_bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::NoUsableRecords);
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_bytes);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .clone();
    let mut columns = [0usize; 4];
    for (slot, name) in columns.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
    }

    let mut registry = Registry::default();
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        report.rows_in += 1;
        let record = match row {
            Ok(r) if r.len() == headers.len() => r,
            Ok(r) => {
                report.remove(
                    "malformed",
                    Some(RowIssue {
                        row: row_no,
                        message: format!("expected {} fields, found {}", headers.len(), r.len()),
                    }),
                );
                continue;
            }
            Err(e) => {
                report.remove(
                    "malformed",
                    Some(RowIssue {
                        row: row_no,
                        message: e.to_string(),
                    }),
                );
                continue;
            }
        };
        let field = |i: usize| record.get(columns[i]).unwrap_or("").trim();

        let source_id = field(0);
        if source_id.is_empty() {
            report.remove("missing_user_id", None);
            continue;
        }
        if registry.source_ids.contains_key(source_id) {
            report.remove(
                "duplicate_user_id",
                Some(RowIssue {
                    row: row_no,
                    message: format!("duplicate user_id `{source_id}`"),
                }),
            );
            continue;
        }

        let age_raw = field(1);
        if age_raw.is_empty() {
            report.remove("missing_age", None);
            continue;
        }
        let age: u32 = match age_raw.parse::<f64>() {
            Ok(a) if a.is_finite() && a >= 0.0 && a.fract() == 0.0 => a as u32,
            _ => {
                report.remove(
                    "unparseable_age",
                    Some(RowIssue {
                        row: row_no,
                        message: format!("user `{source_id}`: unparseable age `{age_raw}`"),
                    }),
                );
                continue;
            }
        };
        if let Err(e) = band_age(age) {
            report.remove(
                "age_out_of_range",
                Some(RowIssue {
                    row: row_no,
                    message: format!("user `{source_id}`: {e}"),
                }),
            );
            continue;
        }

        let gender_raw = field(2);
        let gender = if gender_raw.is_empty() {
            report.impute("gender");
            Gender::OtherOrUnknown
        } else {
            Gender::parse(gender_raw)
        };

        let imd_raw = field(3);
        let imd_decile = if imd_raw.is_empty() {
            report.impute("imd_decile");
            None
        } else {
            match imd_raw.parse::<u8>() {
                Ok(d @ 1..=10) => Some(d),
                _ => {
                    report.remove(
                        "invalid_imd_decile",
                        Some(RowIssue {
                            row: row_no,
                            message: format!("user `{source_id}`: imd_decile `{imd_raw}` not in 1..10"),
                        }),
                    );
                    continue;
                }
            }
        };

        let new_id = format!("u{:06}", registry.records.len() + 1);
        let rec = DemographicRecord::new(new_id.clone(), age, gender, imd_decile)?;
        registry.source_ids.insert(source_id.to_string(), new_id.clone());
        registry.records.insert(new_id, rec);
        report.rows_kept += 1;
    }

    if registry.is_empty() {
        return Err(IngestError::NoUsableRecords);
    }
    Ok((registry, report))
}
