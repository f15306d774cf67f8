//! The 16 model predictors and the labeled train/test matrices.
//!
//! Intensity features are trailing-window sums of an isotropic bivariate
//! Gaussian kernel over nearby point events. Distances use the equirectangular
//! approximation, which stays within 0.1% of great-circle distance at city scale.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};
use log::warn;
use serde::Serialize;

use crate::domain::{fractional_years, parse_date, target_label, ClusterLabel, GeoPoint, Severity};
use crate::error::{Error, Result};
use crate::ingest::{EventKind, LicenseInfo, LinkedInspection, PointEvent};

/// Column order of the production-shaped model.
pub const FEATURE_NAMES: [&str; 16] = [
    "cluster_purple",
    "cluster_blue",
    "cluster_orange",
    "cluster_green",
    "cluster_yellow",
    "cluster_brown",
    "past_serious",
    "past_critical",
    "time_since_last",
    "age_over_4y",
    "alcohol",
    "tobacco",
    "tmax_f",
    "burglary_kde",
    "sanitation_kde",
    "garbage_kde",
];

pub const CLUSTER_FEATURES: [&str; 6] = [
    "cluster_purple",
    "cluster_blue",
    "cluster_orange",
    "cluster_green",
    "cluster_yellow",
    "cluster_brown",
];

/// The ten non-sanitarian predictors.
pub fn base_feature_names() -> &'static [&'static str] {
    &FEATURE_NAMES[6..]
}

pub fn cluster_feature_name(label: ClusterLabel) -> &'static str {
    CLUSTER_FEATURES[label.index()]
}

/// Mean Earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Intensities are stored in the feature vector as events per square
/// kilometre; [`kde_intensity`] itself returns events per square metre.
pub const SQ_METERS_PER_SQ_KM: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdeConfig {
    pub bandwidth_meters: f64,
    pub window_days: u32,
    pub kernel: Kernel,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            bandwidth_meters: 1000.0,
            window_days: 90,
            kernel: Kernel::Gaussian,
        }
    }
}

impl KdeConfig {
    pub fn new(bandwidth_meters: f64, window_days: u32) -> Result<Self> {
        let cfg = KdeConfig {
            bandwidth_meters,
            window_days,
            kernel: Kernel::Gaussian,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_meters.is_finite() && self.bandwidth_meters > 0.0) {
            return Err(Error::Config(format!(
                "bandwidth_meters must be positive, got {}",
                self.bandwidth_meters
            )));
        }
        if self.window_days < 1 {
            return Err(Error::Config("window_days must be at least 1".into()));
        }
        Ok(())
    }

    /// First day inside the half-open window `[on - window_days, on)`.
    fn window_start(&self, on: NaiveDate) -> NaiveDate {
        on - Duration::days(self.window_days as i64)
    }
}

/// Ground distance in metres, equirectangular approximation about the mean latitude.
pub fn equirectangular_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let mean_lat = ((a.lat + b.lat) / 2.0).to_radians();
    let x = (b.lon - a.lon).to_radians() * mean_lat.cos();
    let y = (b.lat - a.lat).to_radians();
    EARTH_RADIUS_M * x.hypot(y)
}

/// Bivariate isotropic Gaussian density at distance `d` from the centre.
pub fn gaussian_kernel(d: f64, h: f64) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI * h * h);
    norm * (-(d * d) / (2.0 * h * h)).exp()
}

fn kernel_value(cfg: &KdeConfig, d: f64) -> f64 {
    match cfg.kernel {
        Kernel::Gaussian => gaussian_kernel(d, cfg.bandwidth_meters),
    }
}

/// Kernel-smoothed count of `events` dated in `[on - window_days, on)`,
/// evaluated at `at`, in events per square metre.
pub fn kde_intensity(events: &[PointEvent], at: GeoPoint, on: NaiveDate, cfg: &KdeConfig) -> f64 {
    let start = cfg.window_start(on);
    events
        .iter()
        .filter(|e| e.date >= start && e.date < on)
        .map(|e| kernel_value(cfg, equirectangular_m(at, e.location)))
        .sum()
}

/// Events split by kind and sorted by date, so each window is a contiguous slice.
#[derive(Debug, Clone, Default)]
pub struct EventIndex {
    by_kind: [Vec<PointEvent>; 3],
}

impl EventIndex {
    pub fn new(events: &[PointEvent]) -> Self {
        let mut by_kind: [Vec<PointEvent>; 3] = Default::default();
        for e in events {
            by_kind[kind_slot(e.kind)].push(*e);
        }
        for v in &mut by_kind {
            v.sort_by_key(|e| e.date);
        }
        EventIndex { by_kind }
    }

    pub fn window(&self, kind: EventKind, on: NaiveDate, cfg: &KdeConfig) -> &[PointEvent] {
        let events = &self.by_kind[kind_slot(kind)];
        let start = cfg.window_start(on);
        let lo = events.partition_point(|e| e.date < start);
        let hi = events.partition_point(|e| e.date < on);
        &events[lo..hi]
    }

    pub fn intensity(&self, kind: EventKind, at: GeoPoint, on: NaiveDate, cfg: &KdeConfig) -> f64 {
        kde_intensity(self.window(kind, on, cfg), at, on, cfg)
    }
}

fn kind_slot(kind: EventKind) -> usize {
    match kind {
        EventKind::Burglary => 0,
        EventKind::SanitationComplaint => 1,
        EventKind::GarbageCartRequest => 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub past_serious: bool,
    pub past_critical: bool,
    pub time_since_last: f64,
    pub age_over_4y: bool,
    pub alcohol: bool,
    pub tobacco: bool,
    pub tmax_f: f64,
    pub burglary_kde: f64,
    pub sanitation_kde: f64,
    pub garbage_kde: f64,
    /// Indexed by [`ClusterLabel::index`].
    pub cluster_onehot: [bool; 6],
}

impl FeatureVector {
    pub fn with_cluster(mut self, cluster: Option<ClusterLabel>) -> Self {
        self.cluster_onehot = [false; 6];
        if let Some(c) = cluster {
            self.cluster_onehot[c.index()] = true;
        }
        self
    }

    pub fn cluster(&self) -> Option<ClusterLabel> {
        self.cluster_onehot
            .iter()
            .position(|&b| b)
            .and_then(ClusterLabel::from_index)
    }

    /// Values in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [f64; 16] {
        let f = |b: bool| if b { 1.0 } else { 0.0 };
        let c = self.cluster_onehot;
        [
            f(c[0]),
            f(c[1]),
            f(c[2]),
            f(c[3]),
            f(c[4]),
            f(c[5]),
            f(self.past_serious),
            f(self.past_critical),
            self.time_since_last,
            f(self.age_over_4y),
            f(self.alcohol),
            f(self.tobacco),
            self.tmax_f,
            self.burglary_kde,
            self.sanitation_kde,
            self.garbage_kde,
        ]
    }

    pub fn base_values(&self) -> [f64; 10] {
        let v = self.values();
        let mut out = [0.0; 10];
        out.copy_from_slice(&v[6..]);
        out
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|&n| n == name).map(|i| self.values()[i])
    }

    pub fn from_values(v: &[f64; 16]) -> Result<Self> {
        let flag = |i: usize| -> Result<bool> {
            match v[i] {
                0.0 => Ok(false),
                1.0 => Ok(true),
                x => Err(Error::Config(format!(
                    "feature {} must be 0 or 1, got {x}",
                    FEATURE_NAMES[i]
                ))),
            }
        };
        let mut onehot = [false; 6];
        for (i, slot) in onehot.iter_mut().enumerate() {
            *slot = flag(i)?;
        }
        if onehot.iter().filter(|&&b| b).count() > 1 {
            return Err(Error::Config("more than one cluster indicator set".into()));
        }
        Ok(FeatureVector {
            cluster_onehot: onehot,
            past_serious: flag(6)?,
            past_critical: flag(7)?,
            time_since_last: v[8],
            age_over_4y: flag(9)?,
            alcohol: flag(10)?,
            tobacco: flag(11)?,
            tmax_f: v[12],
            burglary_kde: v[13],
            sanitation_kde: v[14],
            garbage_kde: v[15],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub features: FeatureVector,
    pub label: u8,
    pub inspection_id: u64,
    pub date: NaiveDate,
    pub establishment_id: String,
    /// Sanitarian of the previous canvass, the key for per-sanitarian indicators.
    pub previous_sanitarian: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureOptions {
    pub kde: KdeConfig,
    pub allow_missing_license: bool,
    /// Used for `time_since_last` when there is no previous canvass.
    pub imputed_time_since_last: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            kde: KdeConfig::default(),
            allow_missing_license: false,
            imputed_time_since_last: 2.0,
        }
    }
}

pub struct FeatureContext<'a> {
    pub licenses: &'a BTreeMap<String, LicenseInfo>,
    pub weather: &'a BTreeMap<NaiveDate, f64>,
    pub events: EventIndex,
    pub options: FeatureOptions,
}

impl<'a> FeatureContext<'a> {
    pub fn new(
        licenses: &'a BTreeMap<String, LicenseInfo>,
        weather: &'a BTreeMap<NaiveDate, f64>,
        events: &[PointEvent],
        options: FeatureOptions,
    ) -> Result<Self> {
        options.kde.validate()?;
        if !(options.imputed_time_since_last.is_finite() && options.imputed_time_since_last >= 0.0) {
            return Err(Error::Config(
                "imputed_time_since_last must be a nonnegative number".into(),
            ));
        }
        Ok(FeatureContext {
            licenses,
            weather,
            events: EventIndex::new(events),
            options,
        })
    }
}

pub fn build_feature_vector(link: &LinkedInspection, ctx: &FeatureContext<'_>) -> Result<FeatureVector> {
    let cur = &link.current;
    let tmax_f = *ctx.weather.get(&cur.date).ok_or(Error::MissingWeather(cur.date))?;

    let (past_serious, past_critical, time_since_last, cluster) = match &link.previous {
        Some(prev) => (
            prev.has_severity(Severity::Serious),
            prev.has_severity(Severity::Critical),
            fractional_years(prev.date, cur.date)?,
            prev.cluster,
        ),
        None => (false, false, ctx.options.imputed_time_since_last, None),
    };

    let (age_over_4y, alcohol, tobacco) = match ctx.licenses.get(&cur.establishment_id) {
        Some(lic) => {
            // "More than four years": exactly 4.0 does not count. A license
            // starting after the inspection counts as new.
            let age = if lic.license_start <= cur.date {
                fractional_years(lic.license_start, cur.date)?
            } else {
                0.0
            };
            (age > 4.0, lic.has_alcohol, lic.has_tobacco)
        }
        None if ctx.options.allow_missing_license => {
            warn!(
                "no license for establishment {}; age/alcohol/tobacco set to 0",
                cur.establishment_id
            );
            (false, false, false)
        }
        None => return Err(Error::MissingLicense(cur.establishment_id.clone())),
    };

    let kde = &ctx.options.kde;
    let intensity = |kind| ctx.events.intensity(kind, cur.location, cur.date, kde) * SQ_METERS_PER_SQ_KM;

    Ok(FeatureVector {
        past_serious,
        past_critical,
        time_since_last,
        age_over_4y,
        alcohol,
        tobacco,
        tmax_f,
        burglary_kde: intensity(EventKind::Burglary),
        sanitation_kde: intensity(EventKind::SanitationComplaint),
        garbage_kde: intensity(EventKind::GarbageCartRequest),
        cluster_onehot: [false; 6],
    }
    .with_cluster(cluster))
}

pub fn build_instance(link: &LinkedInspection, ctx: &FeatureContext<'_>) -> Result<LabeledInstance> {
    Ok(LabeledInstance {
        features: build_feature_vector(link, ctx)?,
        label: target_label(&link.current),
        inspection_id: link.current.inspection_id,
        date: link.current.date,
        establishment_id: link.current.establishment_id.clone(),
        previous_sanitarian: link.previous.as_ref().and_then(|p| p.sanitarian.clone()),
    })
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::Config(format!("window start {start} is after end {end}")));
        }
        Ok(DateWindow { start, end })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        d >= self.start && d <= self.end
    }

    /// Training window of the released model: September 2011 through April 2014.
    pub fn default_train() -> Self {
        DateWindow {
            start: NaiveDate::from_ymd_opt(2011, 9, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2014, 4, 30).unwrap(),
        }
    }

    /// Test window of the released model: September through October 2014.
    pub fn default_test() -> Self {
        DateWindow {
            start: NaiveDate::from_ymd_opt(2014, 9, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2014, 10, 31).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
}

pub fn positive_rate(instances: &[LabeledInstance]) -> f64 {
    if instances.is_empty() {
        return 0.0;
    }
    instances.iter().filter(|i| i.label == 1).count() as f64 / instances.len() as f64
}

/// Canvass-only labeled instances inside each window. Training must end
/// before testing starts.
pub fn build_dataset(
    links: &[LinkedInspection],
    ctx: &FeatureContext<'_>,
    train: DateWindow,
    test: DateWindow,
) -> Result<Dataset> {
    if train.end >= test.start {
        return Err(Error::Config(format!(
            "train window ({}..{}) must end before test window ({}..{}) starts",
            train.start, train.end, test.start, test.end
        )));
    }
    let mut ds = Dataset::default();
    for link in links {
        if link.current.kind != crate::domain::InspectionType::Canvass {
            continue;
        }
        let d = link.current.date;
        if train.contains(d) {
            ds.train.push(build_instance(link, ctx)?);
        } else if test.contains(d) {
            ds.test.push(build_instance(link, ctx)?);
        }
    }
    let order = |v: &mut Vec<LabeledInstance>| v.sort_by_key(|i| (i.date, i.inspection_id));
    order(&mut ds.train);
    order(&mut ds.test);
    log::info!(
        "train: {} rows, {:.1}% positive; test: {} rows, {:.1}% positive",
        ds.train.len(),
        100.0 * positive_rate(&ds.train),
        ds.test.len(),
        100.0 * positive_rate(&ds.test)
    );
    Ok(ds)
}

const META_COLUMNS: [&str; 6] = [
    "inspection_id",
    "date",
    "establishment_id",
    "split",
    "label",
    "prev_sanitarian",
];

/// Writes `features.csv`: metadata columns, then one column per named feature.
pub fn write_features<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = META_COLUMNS.to_vec();
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (split, rows) in [("train", &ds.train), ("test", &ds.test)] {
        for inst in rows.iter() {
            let mut rec = vec![
                inst.inspection_id.to_string(),
                inst.date.format("%Y-%m-%d").to_string(),
                inst.establishment_id.clone(),
                split.to_string(),
                inst.label.to_string(),
                inst.previous_sanitarian.clone().unwrap_or_default(),
            ];
            rec.extend(inst.features.values().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `features.csv`. Columns are located by name. Rows without a `split`
/// column (or with an empty split) are treated as training rows.
pub fn read_features<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut ds = Dataset::default();
    if headers.is_empty() {
        return Ok(ds);
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::MissingFeature(name.to_string()));
    let c_id = need("inspection_id")?;
    let c_date = need("date")?;
    let c_label = need("label")?;
    let c_est = find("establishment_id");
    let c_split = find("split");
    let c_san = find("prev_sanitarian");
    let feature_cols = FEATURE_NAMES.iter().map(|n| need(n)).collect::<Result<Vec<_>>>()?;

    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let bad = |reason: String| Error::Row { row: line, reason };
        let field = |c: usize| rec.get(c).unwrap_or("");
        let mut values = [0.0; 16];
        for (slot, &c) in values.iter_mut().zip(&feature_cols) {
            *slot = field(c)
                .parse()
                .map_err(|_| bad(format!("bad number {:?}", field(c))))?;
        }
        let label: u8 = field(c_label)
            .parse()
            .ok()
            .filter(|&l| l <= 1)
            .ok_or_else(|| bad(format!("label must be 0 or 1, got {:?}", field(c_label))))?;
        let inst = LabeledInstance {
            features: FeatureVector::from_values(&values).map_err(|e| bad(e.to_string()))?,
            label,
            inspection_id: field(c_id)
                .parse()
                .map_err(|_| bad(format!("bad inspection_id {:?}", field(c_id))))?,
            date: parse_date(field(c_date)).map_err(|e| bad(e.to_string()))?,
            establishment_id: c_est.map(|c| field(c).to_string()).unwrap_or_default(),
            previous_sanitarian: c_san.map(|c| field(c).to_string()).filter(|s| !s.is_empty()),
        };
        match c_split.map(field).unwrap_or("") {
            "" | "train" => ds.train.push(inst),
            "test" => ds.test.push(inst),
            other => return Err(bad(format!("unknown split {other:?}"))),
        }
    }
    Ok(ds)
}
