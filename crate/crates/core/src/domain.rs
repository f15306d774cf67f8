//! Shared vocabulary: violation codes and their severity bands, inspection
//! kinds, sanitarian cluster labels, and the calendar helpers every module uses.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days per year used for every "fractional years" quantity.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Highest code of the food code in force until July 2018.
pub const MAX_CODE: u8 = 45;
pub const LAST_CRITICAL: u8 = 14;
pub const LAST_SERIOUS: u8 = 29;

/// Violation code of the pre-July-2018 Chicago food code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct ViolationCode(u8);

impl ViolationCode {
    pub fn new(code: i64) -> Result<Self> {
        if (1..=MAX_CODE as i64).contains(&code) {
            Ok(ViolationCode(code as u8))
        } else {
            Err(Error::InvalidCode(code))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn severity(self) -> Severity {
        match self.0 {
            1..=LAST_CRITICAL => Severity::Critical,
            15..=LAST_SERIOUS => Severity::Serious,
            _ => Severity::Minor,
        }
    }

    pub fn is_critical(self) -> bool {
        self.severity() == Severity::Critical
    }

    /// The fourteen critical codes, V1 to V14.
    pub fn critical_codes() -> impl Iterator<Item = ViolationCode> {
        (1..=LAST_CRITICAL).map(ViolationCode)
    }
}

impl TryFrom<i64> for ViolationCode {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        ViolationCode::new(v)
    }
}

impl From<ViolationCode> for u8 {
    fn from(c: ViolationCode) -> u8 {
        c.0
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "V{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Critical,
    Serious,
    Minor,
}

pub fn severity_of(code: i64) -> Result<Severity> {
    ViolationCode::new(code).map(ViolationCode::severity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InspectionType {
    Canvass,
    Complaint,
    License,
    Reinspection,
    Other,
}

impl InspectionType {
    pub const ALL: [InspectionType; 5] = [
        InspectionType::Canvass,
        InspectionType::Complaint,
        InspectionType::License,
        InspectionType::Reinspection,
        InspectionType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InspectionType::Canvass => "canvass",
            InspectionType::Complaint => "complaint",
            InspectionType::License => "license",
            InspectionType::Reinspection => "reinspection",
            InspectionType::Other => "other",
        }
    }

    /// Case-insensitive alias lookup. Returns `None` for strings outside the
    /// alias table; ingest maps those to [`InspectionType::Other`] and counts them.
    pub fn from_alias(raw: &str) -> Option<InspectionType> {
        let key = raw.trim().to_ascii_lowercase();
        let kind = match key.as_str() {
            "canvass" | "canvas" | "routine" | "routine inspection" => InspectionType::Canvass,
            "complaint" | "short form complaint" | "suspected food poisoning" | "short form fire-complaint" => {
                InspectionType::Complaint
            }
            "license" | "license-task force" | "license task force" | "new license" => InspectionType::License,
            "reinspection"
            | "re-inspection"
            | "canvass re-inspection"
            | "complaint re-inspection"
            | "license re-inspection"
            | "suspected food poisoning re-inspection" => InspectionType::Reinspection,
            "other" => InspectionType::Other,
            _ => return None,
        };
        Some(kind)
    }
}

impl fmt::Display for InspectionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InspectionType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        InspectionType::from_alias(s).ok_or_else(|| Error::Config(format!("unknown inspection type {s:?}")))
    }
}

/// Color name of a sanitarian cluster. Declaration order is the rank order:
/// purple holds the highest cluster coefficient, brown the lowest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterLabel {
    Purple,
    Blue,
    Orange,
    Green,
    Yellow,
    Brown,
}

impl ClusterLabel {
    pub const ALL: [ClusterLabel; 6] = [
        ClusterLabel::Purple,
        ClusterLabel::Blue,
        ClusterLabel::Orange,
        ClusterLabel::Green,
        ClusterLabel::Yellow,
        ClusterLabel::Brown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClusterLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClusterLabel::Purple => "purple",
            ClusterLabel::Blue => "blue",
            ClusterLabel::Orange => "orange",
            ClusterLabel::Green => "green",
            ClusterLabel::Yellow => "yellow",
            ClusterLabel::Brown => "brown",
        }
    }
}

impl fmt::Display for ClusterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusterLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        ClusterLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown cluster label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(GeoPoint { lat, lon })
        } else {
            Err(Error::InvalidLocation { lat, lon })
        }
    }
}

/// Name, chain key and facility type carried through from the source row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FacilityMeta {
    pub name: String,
    pub chain_key: String,
    pub facility_type: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectionRecord {
    pub inspection_id: u64,
    pub establishment_id: String,
    pub date: NaiveDate,
    pub kind: InspectionType,
    pub violations: BTreeSet<ViolationCode>,
    pub sanitarian: Option<String>,
    pub cluster: Option<ClusterLabel>,
    pub location: GeoPoint,
    pub facility: FacilityMeta,
}

impl InspectionRecord {
    pub fn has_severity(&self, severity: Severity) -> bool {
        self.violations.iter().any(|c| c.severity() == severity)
    }

    pub fn cites(&self, code: ViolationCode) -> bool {
        self.violations.contains(&code)
    }
}

/// 1 iff at least one critical code (1..=14) was cited.
pub fn target_label(record: &InspectionRecord) -> u8 {
    u8::from(record.has_severity(Severity::Critical))
}

pub fn fractional_years(earlier: NaiveDate, later: NaiveDate) -> Result<f64> {
    if earlier > later {
        return Err(Error::DateOrder { earlier, later });
    }
    let days = (later - earlier).num_days();
    Ok(days as f64 / DAYS_PER_YEAR)
}

/// Calendar month bucket, ordered chronologically, displayed as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn of(date: NaiveDate) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid month {s:?}, expected YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        NaiveDate::from_ymd_opt(year, month, 1).ok_or_else(bad)?;
        Ok(YearMonth { year, month })
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Config(format!("invalid date {s:?}: {e}")))
}
