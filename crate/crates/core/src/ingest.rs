//! Canonical CSV ingest for inspections, licenses, weather and point events,
//! plus the previous-canvass linking and date-window filters.
//!
//! Violation fields follow the open-data portal convention: entries separated
//! by `|`, each starting with the integer code terminated by the first `.`,
//! with free text (and an optional ` - Comments:` tail) after it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{
    parse_date, ClusterLabel, FacilityMeta, GeoPoint, InspectionRecord, InspectionType, ViolationCode, YearMonth,
};
use crate::error::{Error, Result};

/// First date of the food code that replaced the 45-code taxonomy.
pub fn default_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 7, 1).unwrap()
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Rows dated on or after this day are dropped.
    pub cutoff: NaiveDate,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            cutoff: default_cutoff(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub records: Vec<InspectionRecord>,
    pub dropped_after_cutoff: usize,
    pub unknown_types: usize,
}

pub fn parse_violation_field(text: &str) -> Result<BTreeSet<ViolationCode>> {
    let mut codes = BTreeSet::new();
    if text.trim().is_empty() {
        return Ok(codes);
    }
    for (index, entry) in text.split('|').enumerate() {
        let entry = entry.trim();
        let head = entry.split('.').next().unwrap_or("").trim();
        let code: i64 = head.parse().map_err(|_| Error::ViolationEntry {
            index,
            entry: entry.to_string(),
        })?;
        codes.insert(ViolationCode::new(code)?);
    }
    Ok(codes)
}

/// Inverse of [`parse_violation_field`] up to the discarded free text.
pub fn format_violation_field(codes: &BTreeSet<ViolationCode>) -> String {
    codes
        .iter()
        .map(|c| format!("{}.", c.get()))
        .collect::<Vec<_>>()
        .join(" | ")
}

#[derive(Debug, Serialize, Deserialize)]
struct InspectionRow {
    inspection_id: u64,
    establishment_id: String,
    name: String,
    chain_key: String,
    facility_type: String,
    lat: f64,
    lon: f64,
    inspection_date: String,
    inspection_type: String,
    violations: String,
    #[serde(default)]
    sanitarian_id: String,
    #[serde(default)]
    cluster: String,
}

fn row_err(row: usize, e: impl std::fmt::Display) -> Error {
    Error::Row {
        row,
        reason: e.to_string(),
    }
}

/// Data rows are numbered from 2 (line 1 is the header).
fn csv_row(e: &csv::Error, fallback: usize) -> usize {
    e.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

pub fn parse_inspections<R: Read>(reader: R, opts: &IngestOptions) -> Result<IngestOutput> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = IngestOutput::default();
    let mut seen = BTreeSet::new();
    for (i, row) in rdr.deserialize::<InspectionRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| row_err(csv_row(&e, line), e))?;
        let date = parse_date(&row.inspection_date).map_err(|e| row_err(line, e))?;
        if date >= opts.cutoff {
            out.dropped_after_cutoff += 1;
            continue;
        }
        let kind = match InspectionType::from_alias(&row.inspection_type) {
            Some(k) => k,
            None => {
                out.unknown_types += 1;
                InspectionType::Other
            }
        };
        let violations = parse_violation_field(&row.violations).map_err(|e| row_err(line, e))?;
        let location = GeoPoint::new(row.lat, row.lon).map_err(|e| row_err(line, e))?;
        let cluster = match row.cluster.trim() {
            "" => None,
            s => Some(s.parse::<ClusterLabel>().map_err(|e| row_err(line, e))?),
        };
        if !seen.insert(row.inspection_id) {
            return Err(row_err(line, format!("duplicate inspection_id {}", row.inspection_id)));
        }
        let sanitarian = Some(row.sanitarian_id.trim().to_string()).filter(|s| !s.is_empty());
        out.records.push(InspectionRecord {
            inspection_id: row.inspection_id,
            establishment_id: row.establishment_id,
            date,
            kind,
            violations,
            sanitarian,
            cluster,
            location,
            facility: FacilityMeta {
                name: row.name,
                chain_key: row.chain_key,
                facility_type: row.facility_type,
            },
        });
    }
    if out.unknown_types > 0 {
        warn!(
            "{} rows had unrecognized inspection types and were mapped to other",
            out.unknown_types
        );
    }
    Ok(out)
}

pub fn read_inspections(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<IngestOutput> {
    parse_inspections(File::open(path)?, opts)
}

pub fn write_inspections<W: Write>(records: &[InspectionRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(InspectionRow {
            inspection_id: r.inspection_id,
            establishment_id: r.establishment_id.clone(),
            name: r.facility.name.clone(),
            chain_key: r.facility.chain_key.clone(),
            facility_type: r.facility.facility_type.clone(),
            lat: r.location.lat,
            lon: r.location.lon,
            inspection_date: r.date.format("%Y-%m-%d").to_string(),
            inspection_type: r.kind.as_str().to_string(),
            violations: format_violation_field(&r.violations),
            sanitarian_id: r.sanitarian.clone().unwrap_or_default(),
            cluster: r.cluster.map(|c| c.as_str().to_string()).unwrap_or_default(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LicenseInfo {
    pub establishment_id: String,
    pub license_start: NaiveDate,
    pub has_alcohol: bool,
    pub has_tobacco: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct LicenseRow {
    establishment_id: String,
    license_start_date: String,
    has_alcohol: u8,
    has_tobacco: u8,
}

fn flag(v: u8, line: usize, col: &str) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(row_err(line, format!("{col} must be 0 or 1, got {v}"))),
    }
}

/// Licenses keyed by establishment id; a later row for the same id replaces an earlier one.
pub fn parse_licenses<R: Read>(reader: R) -> Result<BTreeMap<String, LicenseInfo>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<LicenseRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| row_err(csv_row(&e, line), e))?;
        let info = LicenseInfo {
            license_start: parse_date(&row.license_start_date).map_err(|e| row_err(line, e))?,
            has_alcohol: flag(row.has_alcohol, line, "has_alcohol")?,
            has_tobacco: flag(row.has_tobacco, line, "has_tobacco")?,
            establishment_id: row.establishment_id,
        };
        out.insert(info.establishment_id.clone(), info);
    }
    Ok(out)
}

pub fn write_licenses<W: Write>(licenses: &BTreeMap<String, LicenseInfo>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for l in licenses.values() {
        w.serialize(LicenseRow {
            establishment_id: l.establishment_id.clone(),
            license_start_date: l.license_start.format("%Y-%m-%d").to_string(),
            has_alcohol: l.has_alcohol.into(),
            has_tobacco: l.has_tobacco.into(),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherObservation {
    pub date: NaiveDate,
    pub tmax_f: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeatherRow {
    date: String,
    tmax_f: f64,
}

/// Daily highs keyed by date. Duplicate dates and values outside [-60, 130] °F are rejected.
pub fn parse_weather<R: Read>(reader: R) -> Result<BTreeMap<NaiveDate, f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<WeatherRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| row_err(csv_row(&e, line), e))?;
        let date = parse_date(&row.date).map_err(|e| row_err(line, e))?;
        if !(-60.0..=130.0).contains(&row.tmax_f) {
            return Err(row_err(line, format!("tmax_f {} out of range", row.tmax_f)));
        }
        if out.insert(date, row.tmax_f).is_some() {
            return Err(row_err(line, format!("duplicate weather date {date}")));
        }
    }
    Ok(out)
}

pub fn write_weather<W: Write>(weather: &BTreeMap<NaiveDate, f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (date, tmax) in weather {
        w.serialize(WeatherRow {
            date: date.format("%Y-%m-%d").to_string(),
            tmax_f: *tmax,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Burglary,
    SanitationComplaint,
    GarbageCartRequest,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [
        EventKind::Burglary,
        EventKind::SanitationComplaint,
        EventKind::GarbageCartRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Burglary => "burglary",
            EventKind::SanitationComplaint => "sanitation_complaint",
            EventKind::GarbageCartRequest => "garbage_cart_request",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEvent {
    pub kind: EventKind,
    pub date: NaiveDate,
    pub location: GeoPoint,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    kind: EventKind,
    date: String,
    lat: f64,
    lon: f64,
}

pub fn parse_events<R: Read>(reader: R) -> Result<Vec<PointEvent>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<EventRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| row_err(csv_row(&e, line), e))?;
        out.push(PointEvent {
            kind: row.kind,
            date: parse_date(&row.date).map_err(|e| row_err(line, e))?,
            location: GeoPoint::new(row.lat, row.lon).map_err(|e| row_err(line, e))?,
        });
    }
    Ok(out)
}

pub fn write_events<W: Write>(events: &[PointEvent], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(EventRow {
            kind: e.kind,
            date: e.date.format("%Y-%m-%d").to_string(),
            lat: e.location.lat,
            lon: e.location.lon,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// All four canonical inputs, loaded together.
#[derive(Debug, Clone, Default)]
pub struct InputBundle {
    pub inspections: IngestOutput,
    pub licenses: BTreeMap<String, LicenseInfo>,
    pub weather: BTreeMap<NaiveDate, f64>,
    pub events: Vec<PointEvent>,
}

#[derive(Debug, Clone)]
pub struct InputPaths<'a> {
    pub inspections: &'a Path,
    pub licenses: &'a Path,
    pub weather: &'a Path,
    pub events: &'a Path,
}

fn with_file<T>(path: &Path, f: impl FnOnce(File) -> Result<T>) -> Result<T> {
    let file =
        File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    f(file)
}

impl InputBundle {
    pub fn load(paths: &InputPaths<'_>, opts: &IngestOptions) -> Result<Self> {
        Ok(InputBundle {
            inspections: with_file(paths.inspections, |f| parse_inspections(f, opts))?,
            licenses: with_file(paths.licenses, parse_licenses)?,
            weather: with_file(paths.weather, parse_weather)?,
            events: with_file(paths.events, parse_events)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkedInspection {
    pub current: InspectionRecord,
    pub previous: Option<InspectionRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct LinkOutput {
    pub links: Vec<LinkedInspection>,
    /// Canvass inspections sharing an establishment and date with another.
    pub same_date_ties: usize,
}

/// Pairs every canvass record with the most recent strictly earlier canvass
/// record of the same establishment. Non-canvass records are ignored.
///
/// Same-day canvass records are ordered by inspection id; each of them links
/// to the latest canvass from an earlier date, so a link never points forward
/// or sideways in time.
pub fn link_previous_inspection(records: &[InspectionRecord]) -> LinkOutput {
    let mut by_est: BTreeMap<&str, Vec<&InspectionRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.kind == InspectionType::Canvass) {
        by_est.entry(&r.establishment_id).or_default().push(r);
    }
    let mut out = LinkOutput::default();
    for group in by_est.values_mut() {
        group.sort_by_key(|r| (r.date, r.inspection_id));
        let mut prev_day_last: Option<&InspectionRecord> = None;
        let mut i = 0;
        while i < group.len() {
            let day = group[i].date;
            let mut j = i;
            while j < group.len() && group[j].date == day {
                j += 1;
            }
            if j - i > 1 {
                out.same_date_ties += j - i;
            }
            for r in &group[i..j] {
                out.links.push(LinkedInspection {
                    current: (*r).clone(),
                    previous: prev_day_last.cloned(),
                });
            }
            prev_day_last = Some(group[j - 1]);
            i = j;
        }
    }
    if out.same_date_ties > 0 {
        warn!(
            "{} canvass inspections share an establishment and date; ordered by inspection_id",
            out.same_date_ties
        );
    }
    out
}

/// Records with `start <= date <= end` of the given kind.
pub fn filter_window(
    records: &[InspectionRecord],
    start: NaiveDate,
    end: NaiveDate,
    kind: InspectionType,
) -> Vec<&InspectionRecord> {
    records
        .iter()
        .filter(|r| r.kind == kind && r.date >= start && r.date <= end)
        .collect()
}

pub fn monthly_counts<'a>(records: impl IntoIterator<Item = &'a InspectionRecord>) -> BTreeMap<YearMonth, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(YearMonth::of(r.date)).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PortalStats {
    pub rows: usize,
    pub written: usize,
    pub skipped_missing_location: usize,
    pub skipped_unparseable: usize,
}

/// Converts a City of Chicago "Food Inspections" portal export into the
/// canonical inspections schema. Rows without coordinates, or with an id,
/// date or violation field that cannot be read, are skipped and counted.
pub fn convert_portal_export<R: Read, W: Write>(reader: R, writer: W) -> Result<PortalStats> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Row {
                row: 1,
                reason: format!("portal export lacks column {name:?}"),
            })
    };
    let c_id = col("Inspection ID")?;
    let c_license = col("License #")?;
    let c_dba = col("DBA Name")?;
    let c_aka = col("AKA Name")?;
    let c_facility = col("Facility Type")?;
    let c_lat = col("Latitude")?;
    let c_lon = col("Longitude")?;
    let c_date = col("Inspection Date")?;
    let c_type = col("Inspection Type")?;
    let c_viol = col("Violations")?;

    let mut stats = PortalStats::default();
    let mut w = csv::Writer::from_writer(writer);
    for rec in rdr.records() {
        let rec = rec?;
        stats.rows += 1;
        let get = |i: usize| rec.get(i).unwrap_or("").trim();
        let (lat, lon) = match (get(c_lat).parse::<f64>(), get(c_lon).parse::<f64>()) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                stats.skipped_missing_location += 1;
                continue;
            }
        };
        let id = get(c_id).parse::<u64>();
        let date = NaiveDate::parse_from_str(get(c_date), "%m/%d/%Y");
        let viol_ok = parse_violation_field(get(c_viol)).is_ok();
        let (Ok(id), Ok(date), true) = (id, date, viol_ok) else {
            stats.skipped_unparseable += 1;
            continue;
        };
        let chain = if get(c_aka).is_empty() { get(c_dba) } else { get(c_aka) };
        w.serialize(InspectionRow {
            inspection_id: id,
            establishment_id: get(c_license).to_string(),
            name: get(c_dba).to_string(),
            chain_key: normalize_chain_key(chain),
            facility_type: get(c_facility).to_string(),
            lat,
            lon,
            inspection_date: date.format("%Y-%m-%d").to_string(),
            inspection_type: get(c_type).to_string(),
            violations: get(c_viol).to_string(),
            sanitarian_id: String::new(),
            cluster: String::new(),
        })?;
        stats.written += 1;
    }
    w.flush()?;
    Ok(stats)
}

/// Uppercase alphanumerics with single spaces: "McDonald's  #12" -> "MCDONALD S 12".
pub fn normalize_chain_key(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Index of records by inspection id.
pub fn index_by_id(records: &[InspectionRecord]) -> HashMap<u64, &InspectionRecord> {
    records.iter().map(|r| (r.inspection_id, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    const HEADER: &str = "inspection_id,establishment_id,name,chain_key,facility_type,lat,lon,inspection_date,inspection_type,violations,sanitarian_id,cluster\n";

    fn codes(xs: &[i64]) -> BTreeSet<ViolationCode> {
        xs.iter().map(|&c| ViolationCode::new(c).unwrap()).collect()
    }

    fn rec(id: u64, est: &str, date: &str, kind: InspectionType) -> InspectionRecord {
        InspectionRecord {
            inspection_id: id,
            establishment_id: est.into(),
            date: d(date),
            kind,
            violations: BTreeSet::new(),
            sanitarian: None,
            cluster: None,
            location: GeoPoint::new(41.88, -87.63).unwrap(),
            facility: FacilityMeta::default(),
        }
    }

    #[test]
    fn violation_field_examples() {
        let text = "3. POTENTIALLY HAZARDOUS FOOD MEETS TEMPERATURE REQUIREMENT DURING STORAGE - Comments: held at 52F | 32. SURFACES PROPERLY DESIGNED";
        assert_eq!(parse_violation_field(text).unwrap(), codes(&[3, 32]));
        assert!(parse_violation_field("").unwrap().is_empty());
        assert_eq!(
            parse_violation_field("14. PREVIOUS SERIOUS VIOLATION CORRECTED, 7-42-090").unwrap(),
            codes(&[14])
        );
    }

    #[test]
    fn violation_field_errors_carry_entry_index() {
        match parse_violation_field("3. OK | SURFACES") {
            Err(Error::ViolationEntry { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_violation_field("60. NEW CODE"),
            Err(Error::InvalidCode(60))
        ));
    }

    #[test]
    fn duplicate_codes_collapse() {
        assert_eq!(parse_violation_field("3. A | 3. B").unwrap(), codes(&[3]));
    }

    #[test]
    fn cutoff_drops_rows() {
        let csv = format!(
            "{HEADER}1,e1,A,A,Restaurant,41.9,-87.6,2014-01-02,Canvass,3. X,s1,purple\n\
             2,e1,A,A,Restaurant,41.9,-87.6,2018-08-01,canvass,,s1,\n\
             3,e2,B,B,Restaurant,41.9,-87.6,2015-05-05,COMPLAINT,15. Y | 33. Z,,\n"
        );
        let out = parse_inspections(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.dropped_after_cutoff, 1);
        assert_eq!(out.records[0].kind, InspectionType::Canvass);
        assert_eq!(out.records[0].cluster, Some(ClusterLabel::Purple));
        assert_eq!(out.records[1].kind, InspectionType::Complaint);
        assert_eq!(out.records[1].sanitarian, None);
    }

    #[test]
    fn unknown_type_maps_to_other() {
        let csv = format!("{HEADER}1,e1,A,A,R,41.9,-87.6,2014-01-02,Tag Removal,,,\n");
        let out = parse_inspections(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(out.records[0].kind, InspectionType::Other);
        assert_eq!(out.unknown_types, 1);
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let csv = format!(
            "{HEADER}1,e1,A,A,R,41.9,-87.6,2014-01-02,Canvass,,,\n\
             2,e1,A,A,R,north,-87.6,2014-01-03,Canvass,,,\n"
        );
        match parse_inspections(csv.as_bytes(), &IngestOptions::default()) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = format!("{HEADER}1,e1,A,A,R,41.9,-87.6,2014-13-02,Canvass,,,\n");
        assert!(matches!(
            parse_inspections(csv.as_bytes(), &IngestOptions::default()),
            Err(Error::Row { row: 2, .. })
        ));
    }

    #[test]
    fn weather_rejects_duplicates_and_range() {
        let ok = "date,tmax_f\n2014-01-01,20.5\n2014-01-02,22\n";
        assert_eq!(parse_weather(ok.as_bytes()).unwrap().len(), 2);
        let dup = "date,tmax_f\n2014-01-01,20.5\n2014-01-01,22\n";
        assert!(matches!(parse_weather(dup.as_bytes()), Err(Error::Row { row: 3, .. })));
        let hot = "date,tmax_f\n2014-01-01,131\n";
        assert!(parse_weather(hot.as_bytes()).is_err());
    }

    #[test]
    fn licenses_and_events_parse() {
        let l = "establishment_id,license_start_date,has_alcohol,has_tobacco\ne1,2009-01-01,1,0\n";
        let lic = parse_licenses(l.as_bytes()).unwrap();
        assert!(lic["e1"].has_alcohol && !lic["e1"].has_tobacco);
        let bad = "establishment_id,license_start_date,has_alcohol,has_tobacco\ne1,2009-01-01,2,0\n";
        assert!(parse_licenses(bad.as_bytes()).is_err());
        let e = "kind,date,lat,lon\nburglary,2014-01-01,41.9,-87.6\ngarbage_cart_request,2014-01-02,41.8,-87.7\n";
        let ev = parse_events(e.as_bytes()).unwrap();
        assert_eq!(ev[1].kind, EventKind::GarbageCartRequest);
        let bad = "kind,date,lat,lon\nrobbery,2014-01-01,41.9,-87.6\n";
        assert!(parse_events(bad.as_bytes()).is_err());
    }

    #[test]
    fn link_two_record_chain_and_singleton() {
        let rs = vec![
            rec(2, "a", "2012-09-10", InspectionType::Canvass),
            rec(1, "a", "2012-03-01", InspectionType::Canvass),
            rec(3, "b", "2012-05-01", InspectionType::Canvass),
        ];
        let out = link_previous_inspection(&rs);
        let by_id: HashMap<_, _> = out
            .links
            .iter()
            .map(|l| (l.current.inspection_id, l.previous.as_ref().map(|p| p.inspection_id)))
            .collect();
        assert_eq!(by_id[&2], Some(1));
        assert_eq!(by_id[&1], None);
        assert_eq!(by_id[&3], None);
    }

    #[test]
    fn link_skips_complaints() {
        let rs = vec![
            rec(1, "a", "2012-01-01", InspectionType::Canvass),
            rec(2, "a", "2012-02-01", InspectionType::Complaint),
            rec(3, "a", "2012-03-01", InspectionType::Canvass),
        ];
        // Oracle: keep canvass records, take the latest strictly earlier date.
        let canvass: Vec<_> = rs.iter().filter(|r| r.kind == InspectionType::Canvass).collect();
        let target = &rs[2];
        let expected = canvass
            .iter()
            .filter(|r| r.date < target.date)
            .max_by_key(|r| r.date)
            .map(|r| r.inspection_id);
        let out = link_previous_inspection(&rs);
        let link = out.links.iter().find(|l| l.current.inspection_id == 3).unwrap();
        assert_eq!(link.previous.as_ref().map(|p| p.inspection_id), expected);
        assert_eq!(expected, Some(1));
        assert_eq!(out.links.len(), 2);
    }

    #[test]
    fn same_day_ties_share_the_earlier_link() {
        let rs = vec![
            rec(1, "a", "2012-01-01", InspectionType::Canvass),
            rec(5, "a", "2012-03-01", InspectionType::Canvass),
            rec(4, "a", "2012-03-01", InspectionType::Canvass),
        ];
        let out = link_previous_inspection(&rs);
        assert_eq!(out.same_date_ties, 2);
        let ids: Vec<_> = out.links.iter().map(|l| l.current.inspection_id).collect();
        assert_eq!(ids, vec![1, 4, 5]);
        for l in &out.links[1..] {
            assert_eq!(l.previous.as_ref().unwrap().inspection_id, 1);
        }
    }

    #[test]
    fn window_filter() {
        let rs = vec![
            rec(1, "a", "2012-01-01", InspectionType::Canvass),
            rec(2, "a", "2013-01-01", InspectionType::Complaint),
            rec(3, "b", "2014-01-01", InspectionType::Canvass),
        ];
        let all = filter_window(&rs, d("2000-01-01"), d("2020-01-01"), InspectionType::Canvass);
        assert_eq!(all.len(), 2);
        assert!(filter_window(&rs, d("2000-01-01"), d("2001-01-01"), InspectionType::Canvass).is_empty());
        let inclusive = filter_window(&rs, d("2012-01-01"), d("2014-01-01"), InspectionType::Canvass);
        assert_eq!(inclusive.len(), 2);
    }

    #[test]
    fn portal_adapter() {
        let portal = "Inspection ID,DBA Name,AKA Name,License #,Facility Type,Risk,Address,City,State,Zip,Inspection Date,Inspection Type,Results,Violations,Latitude,Longitude,Location\n\
            100,SUBWAY,SUBWAY #12,555,Restaurant,Risk 1 (High),1 MAIN,CHICAGO,IL,60601,03/04/2014,Canvass,Fail,\"3. POTENTIALLY HAZARDOUS FOOD - Comments: 50F | 34. FLOORS\",41.88,-87.63,\n\
            101,X,,556,Restaurant,Risk 1 (High),1 MAIN,CHICAGO,IL,60601,03/04/2014,Canvass,Pass,,,,\n";
        let mut buf = Vec::new();
        let stats = convert_portal_export(portal.as_bytes(), &mut buf).unwrap();
        assert_eq!(stats.rows, 2);
        assert_eq!(stats.written, 1);
        assert_eq!(stats.skipped_missing_location, 1);
        let out = parse_inspections(buf.as_slice(), &IngestOptions::default()).unwrap();
        let r = &out.records[0];
        assert_eq!(r.inspection_id, 100);
        assert_eq!(r.establishment_id, "555");
        assert_eq!(r.facility.chain_key, "SUBWAY 12");
        assert_eq!(r.date, d("2014-03-04"));
        assert_eq!(r.violations, codes(&[3, 34]));
    }

    fn arb_record() -> impl Strategy<Value = InspectionRecord> {
        (
            1u64..1_000_000,
            "[a-z0-9]{1,6}",
            0i64..3000,
            0usize..5,
            proptest::collection::btree_set(1i64..=45, 0..6),
            proptest::option::of("[a-z]{1,4}"),
            proptest::option::of(0usize..6),
            (41.6f64..42.1, -87.9f64..-87.5),
            "[A-Za-z ,\"]{0,10}",
        )
            .prop_map(|(id, est, day, kind, cs, san, cl, (lat, lon), name)| InspectionRecord {
                inspection_id: id,
                establishment_id: est,
                date: d("2010-01-01") + chrono::Duration::days(day),
                kind: InspectionType::ALL[kind],
                violations: cs.into_iter().map(|c| ViolationCode::new(c).unwrap()).collect(),
                sanitarian: san,
                cluster: cl.map(|i| ClusterLabel::ALL[i]),
                location: GeoPoint { lat, lon },
                facility: FacilityMeta {
                    name: name.clone(),
                    chain_key: normalize_chain_key(&name),
                    facility_type: "Restaurant".into(),
                },
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_fixpoint(records in proptest::collection::vec(arb_record(), 0..20)) {
            let mut seen = BTreeSet::new();
            let records: Vec<_> = records.into_iter().filter(|r| seen.insert(r.inspection_id)).collect();
            let mut buf = Vec::new();
            write_inspections(&records, &mut buf).unwrap();
            let once = parse_inspections(buf.as_slice(), &IngestOptions::default()).unwrap().records;
            prop_assert_eq!(&once, &records);
            let mut buf2 = Vec::new();
            write_inspections(&once, &mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
        }

        #[test]
        fn links_never_cross_establishments_or_go_forward(
            raw in proptest::collection::vec((0usize..4, 0i64..60, 0usize..3), 0..40)
        ) {
            let kinds = [InspectionType::Canvass, InspectionType::Complaint, InspectionType::Canvass];
            let rs: Vec<_> = raw.iter().enumerate().map(|(i, &(e, day, k))| {
                let mut r = rec(i as u64, &format!("e{e}"), "2012-01-01", kinds[k]);
                r.date += chrono::Duration::days(day);
                r
            }).collect();
            let out = link_previous_inspection(&rs);
            let n_canvass = rs.iter().filter(|r| r.kind == InspectionType::Canvass).count();
            prop_assert_eq!(out.links.len(), n_canvass);
            for l in &out.links {
                if let Some(p) = &l.previous {
                    prop_assert_eq!(&p.establishment_id, &l.current.establishment_id);
                    prop_assert!(p.date < l.current.date);
                    prop_assert_eq!(p.kind, InspectionType::Canvass);
                    // Most recent: no canvass of the same establishment strictly between.
                    let between = rs.iter().any(|r| r.kind == InspectionType::Canvass
                        && r.establishment_id == l.current.establishment_id
                        && r.date > p.date && r.date < l.current.date);
                    prop_assert!(!between);
                } else {
                    let earlier = rs.iter().any(|r| r.kind == InspectionType::Canvass
                        && r.establishment_id == l.current.establishment_id
                        && r.date < l.current.date);
                    prop_assert!(!earlier);
                }
            }
        }

        #[test]
        fn monthly_counts_sum_to_total(days in proptest::collection::vec(0i64..2000, 0..60)) {
            let rs: Vec<_> = days.iter().enumerate().map(|(i, &day)| {
                let mut r = rec(i as u64, "a", "2011-01-01", InspectionType::Canvass);
                r.date += chrono::Duration::days(day);
                r
            }).collect();
            let filtered = filter_window(&rs, d("2011-06-01"), d("2014-06-01"), InspectionType::Canvass);
            let months = monthly_counts(filtered.iter().copied());
            prop_assert_eq!(months.values().sum::<usize>(), filtered.len());
        }
    }
}
