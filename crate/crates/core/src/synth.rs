//! Seeded synthetic city: establishments, sanitarians, weather, point events
//! and inspections whose critical-violation labels follow a planted logistic
//! model over the production features.
//!
//! Labels are drawn from `sigmoid(eta)` where `eta` is the planted model
//! evaluated on exactly the features the pipeline will later compute, so a
//! refit on the emitted files is a consistent estimator of the planted
//! coefficients. The cluster feature enters through the previous canvass
//! inspector, as in production.
//!
//! Each purpose draws from its own ChaCha stream of the global seed; adding
//! draws to one purpose leaves the others unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::audit::monthly_temperatures;
use crate::domain::{
    target_label, ClusterLabel, FacilityMeta, GeoPoint, InspectionRecord, InspectionType, ViolationCode, YearMonth,
    LAST_CRITICAL, LAST_SERIOUS, MAX_CODE,
};
use crate::error::{Error, Result};
use crate::features::{
    base_feature_names, build_feature_vector, DateWindow, FeatureContext, FeatureOptions, FEATURE_NAMES,
};
use crate::ingest::{
    normalize_chain_key, write_events, write_inspections, write_licenses, write_weather, EventKind, LicenseInfo,
    LinkedInspection, PointEvent,
};
use crate::model::{sigmoid, LogisticModel};

/// Planted cluster coefficients, purple through brown.
pub const TABLE_CLUSTER_EFFECTS: [f64; 6] = [1.555, 0.950, 0.202, -0.244, -0.697, -1.306];

/// Planted base-feature coefficients in [`base_feature_names`] order.
pub const TABLE_BASE_COEFFICIENTS: [f64; 10] = [0.302, 0.427, 0.097, -0.164, 0.411, 0.171, 0.005, 0.002, 0.002, -0.004];

/// Relative frequency of each critical code among cited critical codes, V1..V14.
pub const CRITICAL_CODE_WEIGHTS: [f64; 14] = [
    219.0, 2233.0, 4418.0, 227.0, 8.0, 826.0, 52.0, 1239.0, 307.0, 233.0, 895.0, 1012.0, 90.0, 37.0,
];

/// |eta| beyond which a planted probability counts as degenerate.
pub const MAX_ABS_ETA: f64 = 20.0;

/// Monthly mean temperature at which the seasonal code weights are unscaled.
pub const SEASONAL_PIVOT_F: f64 = 60.0;

const LAT_RANGE: (f64, f64) = (41.80, 41.95);
const LON_RANGE: (f64, f64) = (-87.75, -87.60);
const METERS_PER_DEG_LAT: f64 = 111_195.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_establishments: usize,
    /// Records of every inspection type.
    pub n_inspections: usize,
    /// Keyed by base feature name; absent names are 0.
    pub true_coefficients: BTreeMap<String, f64>,
    pub true_intercept: f64,
    /// Purple through brown.
    pub cluster_effects: [f64; 6],
    /// Log-multiplier per °F of monthly mean temperature on the V2 and V3 weights.
    pub temperature_effect: f64,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Expected events per day.
    pub event_rates: BTreeMap<EventKind, f64>,
    pub sanitarians_per_cluster: usize,
    /// Probability an inspection goes to the establishment's district sanitarian.
    pub home_sanitarian_prob: f64,
    pub n_chains: usize,
    pub chain_share: f64,
    pub complaint_share: f64,
    pub license_share: f64,
    pub complaint_logit_shift: f64,
    /// Added to eta for inspections on or after `split`.
    pub post_split_logit_shift: f64,
    pub split: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_establishments: 2000,
            n_inspections: 20_000,
            true_coefficients: base_feature_names()
                .iter()
                .zip(TABLE_BASE_COEFFICIENTS)
                .map(|(n, c)| (n.to_string(), c))
                .collect(),
            true_intercept: -2.5,
            cluster_effects: TABLE_CLUSTER_EFFECTS,
            temperature_effect: 0.03,
            start: NaiveDate::from_ymd_opt(2011, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2015, 12, 31).unwrap(),
            event_rates: [
                (EventKind::Burglary, 12.0),
                (EventKind::SanitationComplaint, 8.0),
                (EventKind::GarbageCartRequest, 10.0),
            ]
            .into(),
            sanitarians_per_cluster: 5,
            home_sanitarian_prob: 0.8,
            n_chains: 60,
            chain_share: 0.15,
            complaint_share: 0.2,
            license_share: 0.05,
            complaint_logit_shift: 0.5,
            post_split_logit_shift: 0.0,
            split: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        }
    }
}

fn probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in [0, 1], got {p}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_establishments == 0 || self.n_inspections == 0 {
            return Err(Error::Config(
                "n_establishments and n_inspections must be positive".into(),
            ));
        }
        if self.start >= self.end {
            return Err(Error::Config(format!(
                "start {} must precede end {}",
                self.start, self.end
            )));
        }
        if self.sanitarians_per_cluster == 0 {
            return Err(Error::Config("sanitarians_per_cluster must be positive".into()));
        }
        let base: BTreeSet<&str> = base_feature_names().iter().copied().collect();
        for (name, c) in &self.true_coefficients {
            if !base.contains(name.as_str()) {
                return Err(Error::UnknownFeature(name.clone()));
            }
            if !c.is_finite() {
                return Err(Error::Config(format!("coefficient {name} is not finite")));
            }
        }
        let reals = [
            self.true_intercept,
            self.temperature_effect,
            self.complaint_logit_shift,
            self.post_split_logit_shift,
        ];
        if reals.iter().chain(&self.cluster_effects).any(|v| !v.is_finite()) {
            return Err(Error::Config("synthetic parameters must be finite".into()));
        }
        for (k, r) in &self.event_rates {
            if !(r.is_finite() && *r >= 0.0) {
                return Err(Error::Config(format!(
                    "event rate for {} must be nonnegative",
                    k.as_str()
                )));
            }
        }
        probability("home_sanitarian_prob", self.home_sanitarian_prob)?;
        probability("chain_share", self.chain_share)?;
        probability("complaint_share", self.complaint_share)?;
        probability("license_share", self.license_share)?;
        probability(
            "complaint_share + license_share",
            self.complaint_share + self.license_share,
        )?;
        if self.chain_share > 0.0 && self.n_chains == 0 {
            return Err(Error::Config("chain_share > 0 needs n_chains > 0".into()));
        }
        Ok(())
    }

    /// The planted 16-feature model.
    pub fn planted_model(&self) -> Result<LogisticModel> {
        let mut coefs = vec![0.0; FEATURE_NAMES.len()];
        coefs[..6].copy_from_slice(&self.cluster_effects);
        for (i, name) in base_feature_names().iter().enumerate() {
            coefs[6 + i] = self.true_coefficients.get(*name).copied().unwrap_or(0.0);
        }
        LogisticModel::from_coefficients(FEATURE_NAMES, coefs, self.true_intercept)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTally {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub canvass: usize,
    pub canvass_positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub sanitarian_clusters: BTreeMap<String, ClusterLabel>,
    pub establishments: usize,
    pub inspections: usize,
    pub inspections_by_type: BTreeMap<String, usize>,
    pub events_by_kind: BTreeMap<String, usize>,
    pub weather_days: usize,
    pub canvass_positives: usize,
    /// Mean planted probability over canvass records.
    pub expected_canvass_positive_rate: f64,
    /// Standard error of the realized canvass positive rate around its expectation.
    pub canvass_positive_rate_se: f64,
    pub windows: Vec<WindowTally>,
}

#[derive(Debug, Clone)]
pub struct SynthBundle {
    /// Sorted by (date, establishment id); ids are 1.. in that order.
    pub records: Vec<InspectionRecord>,
    pub licenses: BTreeMap<String, LicenseInfo>,
    pub weather: BTreeMap<NaiveDate, f64>,
    pub events: Vec<PointEvent>,
    pub manifest: SynthManifest,
}

fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

const STREAM_PLACES: u64 = 1;
const STREAM_SANITARIANS: u64 = 2;
const STREAM_WEATHER: u64 = 3;
const STREAM_EVENTS: u64 = 4;
const STREAM_DATES: u64 = 5;
const STREAM_LABELS: u64 = 6;
const STREAM_CODES: u64 = 7;

fn round_to(x: f64, scale: f64) -> f64 {
    (x * scale).round() / scale
}

fn meters_per_deg_lon(lat: f64) -> f64 {
    METERS_PER_DEG_LAT * lat.to_radians().cos()
}

struct Places {
    hotspots: Vec<(f64, f64)>,
}

impl Places {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let hotspots = (0..10).map(|_| Places::uniform_raw(rng)).collect();
        Places { hotspots }
    }

    fn uniform_raw(rng: &mut ChaCha8Rng) -> (f64, f64) {
        (
            rng.gen_range(LAT_RANGE.0..LAT_RANGE.1),
            rng.gen_range(LON_RANGE.0..LON_RANGE.1),
        )
    }

    /// Near a hotspot with probability `p_hot`, else uniform over the box.
    fn draw(&self, rng: &mut ChaCha8Rng, p_hot: f64, spread_m: f64) -> GeoPoint {
        let (lat, lon) = if rng.gen_bool(p_hot) {
            let (clat, clon) = *self.hotspots.choose(rng).unwrap();
            let n = Normal::new(0.0, spread_m).unwrap();
            (
                clat + n.sample(rng) / METERS_PER_DEG_LAT,
                clon + n.sample(rng) / meters_per_deg_lon(clat),
            )
        } else {
            Places::uniform_raw(rng)
        };
        GeoPoint::new(round_to(lat, 1e6), round_to(lon, 1e6)).expect("inside the city box")
    }
}

struct Establishment {
    id: String,
    location: GeoPoint,
    facility: FacilityMeta,
    home_sanitarian: usize,
    open_from: NaiveDate,
}

/// Sanitarian whose district grid cell contains `p`; `n` districts cut the box into vertical strips.
fn district(p: GeoPoint, n: usize) -> usize {
    let f = (p.lon - LON_RANGE.0) / (LON_RANGE.1 - LON_RANGE.0);
    ((f * n as f64).floor().max(0.0) as usize).min(n - 1)
}

fn make_establishments(
    cfg: &SynthConfig,
    places: &Places,
    rng: &mut ChaCha8Rng,
    n_sanitarians: usize,
) -> (Vec<Establishment>, BTreeMap<String, LicenseInfo>) {
    let mut ests = Vec::with_capacity(cfg.n_establishments);
    let mut licenses = BTreeMap::new();
    let last_open = cfg.end - Duration::days(((cfg.end - cfg.start).num_days() / 4).max(1));
    for i in 0..cfg.n_establishments {
        let id = format!("E{:05}", i + 1);
        let location = places.draw(rng, 0.5, 900.0);
        let name = if rng.gen_bool(cfg.chain_share) {
            format!("Chain {:02} Grill", rng.gen_range(0..cfg.n_chains) + 1)
        } else {
            format!("Diner {:05}", i + 1)
        };
        let license_start = if rng.gen_bool(0.85) {
            cfg.start - Duration::days(rng.gen_range(0..12 * 365))
        } else {
            cfg.start + Duration::days(rng.gen_range(0..=(last_open - cfg.start).num_days()))
        };
        licenses.insert(
            id.clone(),
            LicenseInfo {
                establishment_id: id.clone(),
                license_start,
                has_alcohol: rng.gen_bool(0.35),
                has_tobacco: rng.gen_bool(0.15),
            },
        );
        ests.push(Establishment {
            facility: FacilityMeta {
                chain_key: normalize_chain_key(&name),
                name,
                facility_type: "Restaurant".into(),
            },
            home_sanitarian: district(location, n_sanitarians),
            open_from: license_start.max(cfg.start),
            location,
            id,
        });
    }
    (ests, licenses)
}

fn make_weather(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> BTreeMap<NaiveDate, f64> {
    let noise = Normal::new(0.0, 7.0).unwrap();
    let mut out = BTreeMap::new();
    let mut d = cfg.start;
    while d <= cfg.end {
        let phase = 2.0 * std::f64::consts::PI * (d.ordinal() as f64 - 105.0) / 365.25;
        let t = (58.0 + 24.0 * phase.sin() + noise.sample(rng)).clamp(-20.0, 105.0);
        out.insert(d, round_to(t, 10.0));
        d += Duration::days(1);
    }
    out
}

fn make_events(cfg: &SynthConfig, places: &Places, rng: &mut ChaCha8Rng) -> Vec<PointEvent> {
    let mut out = Vec::new();
    // Events start one window early so the first inspections see a full window.
    let mut d = cfg.start - Duration::days(90);
    while d <= cfg.end {
        for (&kind, &rate) in &cfg.event_rates {
            if rate == 0.0 {
                continue;
            }
            let n = Poisson::new(rate).unwrap().sample(rng) as usize;
            for _ in 0..n {
                out.push(PointEvent {
                    kind,
                    date: d,
                    location: places.draw(rng, 0.6, 700.0),
                });
            }
        }
        d += Duration::days(1);
    }
    out
}

/// Distinct inspection dates per establishment, `n_inspections` in total.
fn make_dates(cfg: &SynthConfig, ests: &[Establishment], rng: &mut ChaCha8Rng) -> Result<Vec<BTreeSet<NaiveDate>>> {
    let mut counts = vec![0usize; ests.len()];
    for _ in 0..cfg.n_inspections {
        counts[rng.gen_range(0..ests.len())] += 1;
    }
    ests.iter()
        .zip(counts)
        .map(|(e, k)| {
            let span = (cfg.end - e.open_from).num_days() + 1;
            if k as i64 > span {
                return Err(Error::Config(format!(
                    "{k} inspections do not fit in {span} open days of {}",
                    e.id
                )));
            }
            let mut dates = BTreeSet::new();
            while dates.len() < k {
                dates.insert(e.open_from + Duration::days(rng.gen_range(0..span)));
            }
            Ok(dates)
        })
        .collect()
}

fn draw_kind(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> InspectionType {
    let u: f64 = rng.gen();
    if u < cfg.complaint_share {
        InspectionType::Complaint
    } else if u < cfg.complaint_share + cfg.license_share {
        InspectionType::License
    } else {
        InspectionType::Canvass
    }
}

fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap()
}

fn draw_codes(positive: bool, monthly_tmax: f64, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> BTreeSet<ViolationCode> {
    let mut codes = BTreeSet::new();
    let code = |c: u8| ViolationCode::new(c as i64).expect("valid code");
    if positive {
        let mut w = CRITICAL_CODE_WEIGHTS;
        let season = (cfg.temperature_effect * (monthly_tmax - SEASONAL_PIVOT_F)).exp();
        w[1] *= season;
        w[2] *= season;
        let k = 1 + usize::from(rng.gen_bool(0.25)) + usize::from(rng.gen_bool(0.08));
        for _ in 0..k {
            let i = weighted_pick(&w, rng);
            w[i] = 0.0;
            codes.insert(code(i as u8 + 1));
        }
    }
    if rng.gen_bool(0.3) {
        for _ in 0..1 + usize::from(rng.gen_bool(0.3)) {
            codes.insert(code(rng.gen_range(LAST_CRITICAL + 1..=LAST_SERIOUS)));
        }
    }
    for _ in 0..rng.gen_range(0..=4) {
        codes.insert(code(rng.gen_range(LAST_SERIOUS + 1..=MAX_CODE)));
    }
    codes
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthBundle> {
    cfg.validate()?;
    let planted = cfg.planted_model()?;

    let mut san_rng = stream(cfg.seed, STREAM_SANITARIANS);
    let n_san = 6 * cfg.sanitarians_per_cluster;
    let mut cluster_of: Vec<ClusterLabel> = ClusterLabel::ALL
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, cfg.sanitarians_per_cluster))
        .collect();
    cluster_of.shuffle(&mut san_rng);
    let san_id = |i: usize| format!("S{:02}", i + 1);

    let mut place_rng = stream(cfg.seed, STREAM_PLACES);
    let places = Places::new(&mut place_rng);
    let (ests, licenses) = make_establishments(cfg, &places, &mut place_rng, n_san);
    let weather = make_weather(cfg, &mut stream(cfg.seed, STREAM_WEATHER));
    let events = make_events(cfg, &places, &mut stream(cfg.seed, STREAM_EVENTS));
    let monthly = monthly_temperatures(&weather);

    let mut date_rng = stream(cfg.seed, STREAM_DATES);
    let dates = make_dates(cfg, &ests, &mut date_rng)?;

    let ctx = FeatureContext::new(&licenses, &weather, &events, FeatureOptions::default())?;
    let mut label_rng = stream(cfg.seed, STREAM_LABELS);
    let mut code_rng = stream(cfg.seed, STREAM_CODES);
    let mut records = Vec::with_capacity(cfg.n_inspections);
    let mut canvass_p = Vec::new();
    for (est, est_dates) in ests.iter().zip(&dates) {
        let mut last_canvass: Option<InspectionRecord> = None;
        for &date in est_dates {
            let kind = draw_kind(cfg, &mut date_rng);
            let sanitarian = if date_rng.gen_bool(cfg.home_sanitarian_prob) {
                est.home_sanitarian
            } else {
                date_rng.gen_range(0..n_san)
            };
            let mut rec = InspectionRecord {
                inspection_id: 0,
                establishment_id: est.id.clone(),
                date,
                kind,
                violations: BTreeSet::new(),
                sanitarian: Some(san_id(sanitarian)),
                cluster: Some(cluster_of[sanitarian]),
                location: est.location,
                facility: est.facility.clone(),
            };
            let link = LinkedInspection {
                current: rec.clone(),
                previous: last_canvass.clone(),
            };
            let features = build_feature_vector(&link, &ctx)?;
            let mut eta = planted.linear_predictor(&features)?;
            if kind == InspectionType::Complaint {
                eta += cfg.complaint_logit_shift;
            }
            if date >= cfg.split {
                eta += cfg.post_split_logit_shift;
            }
            if eta.is_nan() || eta.abs() > MAX_ABS_ETA {
                return Err(Error::DegenerateProbability(eta));
            }
            let p = sigmoid(eta);
            let positive = label_rng.gen::<f64>() < p;
            rec.violations = draw_codes(positive, monthly[&YearMonth::of(date)], cfg, &mut code_rng);
            if kind == InspectionType::Canvass {
                canvass_p.push(p);
                last_canvass = Some(rec.clone());
            }
            records.push(rec);
        }
    }
    records.sort_by(|a, b| (a.date, &a.establishment_id).cmp(&(b.date, &b.establishment_id)));
    for (i, r) in records.iter_mut().enumerate() {
        r.inspection_id = i as u64 + 1;
    }

    let manifest = manifest(cfg, &records, &events, &weather, &canvass_p, &cluster_of, ests.len());
    Ok(SynthBundle {
        records,
        licenses,
        weather,
        events,
        manifest,
    })
}

fn manifest(
    cfg: &SynthConfig,
    records: &[InspectionRecord],
    events: &[PointEvent],
    weather: &BTreeMap<NaiveDate, f64>,
    canvass_p: &[f64],
    cluster_of: &[ClusterLabel],
    establishments: usize,
) -> SynthManifest {
    let mut by_type = BTreeMap::new();
    for r in records {
        *by_type.entry(r.kind.as_str().to_string()).or_insert(0) += 1;
    }
    let mut by_kind = BTreeMap::new();
    for e in events {
        *by_kind.entry(e.kind.as_str().to_string()).or_insert(0) += 1;
    }
    let canvass: Vec<&InspectionRecord> = records.iter().filter(|r| r.kind == InspectionType::Canvass).collect();
    let n = canvass_p.len().max(1) as f64;
    let windows = [
        ("train", DateWindow::default_train()),
        ("test", DateWindow::default_test()),
    ]
    .into_iter()
    .map(|(name, w)| {
        let inside: Vec<_> = canvass.iter().filter(|r| w.contains(r.date)).collect();
        WindowTally {
            name: name.into(),
            start: w.start,
            end: w.end,
            canvass: inside.len(),
            canvass_positives: inside.iter().filter(|r| target_label(r) == 1).count(),
        }
    })
    .collect();
    SynthManifest {
        config: cfg.clone(),
        sanitarian_clusters: cluster_of
            .iter()
            .enumerate()
            .map(|(i, &l)| (format!("S{:02}", i + 1), l))
            .collect(),
        establishments,
        inspections: records.len(),
        inspections_by_type: by_type,
        events_by_kind: by_kind,
        weather_days: weather.len(),
        canvass_positives: canvass.iter().filter(|r| target_label(r) == 1).count(),
        expected_canvass_positive_rate: canvass_p.iter().sum::<f64>() / n,
        canvass_positive_rate_se: canvass_p.iter().map(|p| p * (1.0 - p)).sum::<f64>().sqrt() / n,
        windows,
    }
}

pub const INSPECTIONS_FILE: &str = "inspections.csv";
pub const LICENSES_FILE: &str = "licenses.csv";
pub const WEATHER_FILE: &str = "weather.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes the four canonical CSVs and `manifest.json` into `dir`.
pub fn write_bundle(bundle: &SynthBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
    write_inspections(&bundle.records, open(INSPECTIONS_FILE)?)?;
    write_licenses(&bundle.licenses, open(LICENSES_FILE)?)?;
    write_weather(&bundle.weather, open(WEATHER_FILE)?)?;
    write_events(&bundle.events, open(EVENTS_FILE)?)?;
    let mut m = open(MANIFEST_FILE)?;
    serde_json::to_writer_pretty(&mut m, &bundle.manifest)?;
    std::io::Write::write_all(&mut m, b"\n")?;
    Ok(())
}
