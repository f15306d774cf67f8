use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::NaiveDate;
use foodcast_core::audit::{
    cluster_hit_rates, code_hit_rates_by_cluster, monthly_hit_rate_series, monthly_temperatures, prepost_comparison,
    sanitarian_counterfactual, seasonal_association, top_chains, write_code_rates, write_counterfactual,
    write_hit_rate_table, write_monthly_series, write_prepost, CounterfactualReport, SeasonalAssociation,
};
use foodcast_core::features::{
    build_dataset, positive_rate, read_features, write_features, Dataset, DateWindow, FeatureContext, FeatureOptions,
};
use foodcast_core::ingest::{
    convert_portal_export, link_previous_inspection, monthly_counts, read_inspections, write_events, write_inspections,
    write_licenses, write_weather, IngestOptions, InputBundle, InputPaths,
};
use foodcast_core::model::{
    apply_assignment, cluster_sanitarians, fit_instances, fit_sanitarian_model, refit_with_clusters, score_instances,
    ClusterAssignment,
};
use foodcast_core::scheduler::{
    default_capacity, evaluate, random_average, write_hit_curves, write_schedule_csv, RandomSummary,
};
use foodcast_core::synth::{self, generate, write_bundle, SynthConfig};
use foodcast_core::{
    ClusterLabel, Error, ErrorKind, InspectionRecord, InspectionType, LabeledInstance, LogisticModel, ScheduleItem,
    ScheduleMetrics, Strategy, ViolationCode, FEATURE_NAMES,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{FileEntry, OutDir};
use crate::{AuditCommand, CliError, Command};

pub const FEATURES_FILE: &str = "features.csv";
pub const MODEL_FILE: &str = "model.json";
pub const SANITARIAN_MODEL_FILE: &str = "sanitarian_model.json";
pub const CLUSTERS_FILE: &str = "sanitarian_clusters.csv";
pub const CLUSTERED_MODEL_FILE: &str = "clustered_model.json";
pub const SCORES_FILE: &str = "scores.csv";

pub fn run(cmd: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    let out = || OutDir::create(&cfg.out);
    match cmd {
        Command::Ingest { portal } => ingest(cfg, portal.as_deref(), &out()?),
        Command::Featurize => {
            let bundle = load_bundle(cfg)?;
            featurize(cfg, &bundle, &out()?).map(drop)
        }
        Command::Train => {
            let ds = load_features(cfg)?;
            let model = fit_instances(&ds.train, &cfg.training)?;
            write_model(&out()?, MODEL_FILE, &model)
        }
        Command::ClusterSanitarians { k } => {
            let ds = load_features(cfg)?;
            cluster_step(cfg, &ds, *k, &out()?).map(drop)
        }
        Command::Score { split } => {
            let model = load_model(cfg)?;
            let ds = load_features(cfg)?;
            let rows = split_rows(&ds, split)?;
            let rows = match cfg.existing("clusters")? {
                Some(p) => apply_assignment(&rows, &read_clusters(&p)?)?,
                None => rows,
            };
            score(&model, &rows, &out()?).map(drop)
        }
        Command::Simulate { replicates } => {
            let items = read_scores(&cfg.required("scores")?)?;
            simulate(cfg, &items, *replicates, &out()?).map(drop)
        }
        Command::Audit(a) => audit(cfg, a, &out()?),
        Command::Synth {
            n_inspections,
            n_establishments,
        } => {
            let defaults = SynthConfig::default();
            let sc = SynthConfig {
                seed: cfg.seed,
                n_inspections: n_inspections.unwrap_or(defaults.n_inspections),
                n_establishments: n_establishments.unwrap_or(defaults.n_establishments),
                ..defaults
            };
            let bundle = generate(&sc)?;
            std::fs::create_dir_all(&cfg.out)?;
            write_bundle(&bundle, &cfg.out)?;
            Ok(())
        }
        Command::Report { k, replicates } => report(cfg, *k, *replicates, &out()?),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    let f =
        File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(BufReader::new(f))
}

fn ingest_options(cfg: &RunConfig) -> IngestOptions {
    IngestOptions { cutoff: cfg.cutoff }
}

fn load_bundle(cfg: &RunConfig) -> Result<InputBundle, CliError> {
    let inspections = cfg.input("inspections", synth::INSPECTIONS_FILE)?;
    let licenses = cfg.input("licenses", synth::LICENSES_FILE)?;
    let weather = cfg.input("weather", synth::WEATHER_FILE)?;
    let events = cfg.input("events", synth::EVENTS_FILE)?;
    let paths = InputPaths {
        inspections: &inspections,
        licenses: &licenses,
        weather: &weather,
        events: &events,
    };
    Ok(InputBundle::load(&paths, &ingest_options(cfg))?)
}

fn load_records(cfg: &RunConfig) -> Result<Vec<InspectionRecord>, CliError> {
    let path = cfg.input("inspections", synth::INSPECTIONS_FILE)?;
    Ok(read_inspections(&path, &ingest_options(cfg))?.records)
}

fn load_features(cfg: &RunConfig) -> Result<Dataset, CliError> {
    Ok(read_features(open(&cfg.required("features")?)?)?)
}

fn load_model(cfg: &RunConfig) -> Result<LogisticModel, CliError> {
    let model = LogisticModel::from_json_reader(open(&cfg.required("model")?)?)?;
    if let Some(missing) = FEATURE_NAMES.iter().find(|n| model.index_of(n).is_none()) {
        return Err(Error::MissingFeature((*missing).to_string()).into());
    }
    Ok(model)
}

fn write_model(out: &OutDir, name: &str, model: &LogisticModel) -> Result<(), CliError> {
    out.json(name, model)
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    cutoff: NaiveDate,
    records: usize,
    dropped_after_cutoff: usize,
    unknown_types: usize,
    by_type: BTreeMap<&'static str, usize>,
    first_date: Option<NaiveDate>,
    last_date: Option<NaiveDate>,
    monthly_records: BTreeMap<String, usize>,
    licenses: usize,
    weather_days: usize,
    events_by_kind: BTreeMap<&'a str, usize>,
}

fn ingest(cfg: &RunConfig, portal: Option<&Path>, out: &OutDir) -> Result<(), CliError> {
    if let Some(p) = portal {
        if !p.exists() {
            return Err(CliError::Usage(format!("portal export not found: {}", p.display())));
        }
        let mut w = out.file(synth::INSPECTIONS_FILE)?;
        let stats = convert_portal_export(open(p)?, &mut w)?;
        drop(w);
        return out.json("portal.json", &stats);
    }
    let b = load_bundle(cfg)?;
    let recs = &b.inspections.records;
    out.with(synth::INSPECTIONS_FILE, |w| write_inspections(recs, w))?;
    out.with(synth::LICENSES_FILE, |w| write_licenses(&b.licenses, w))?;
    out.with(synth::WEATHER_FILE, |w| write_weather(&b.weather, w))?;
    out.with(synth::EVENTS_FILE, |w| write_events(&b.events, w))?;
    let mut by_type = BTreeMap::new();
    for r in recs {
        *by_type.entry(r.kind.as_str()).or_insert(0) += 1;
    }
    let mut events_by_kind = BTreeMap::new();
    for e in &b.events {
        *events_by_kind.entry(e.kind.as_str()).or_insert(0) += 1;
    }
    let summary = IngestSummary {
        cutoff: cfg.cutoff,
        records: recs.len(),
        dropped_after_cutoff: b.inspections.dropped_after_cutoff,
        unknown_types: b.inspections.unknown_types,
        by_type,
        first_date: recs.iter().map(|r| r.date).min(),
        last_date: recs.iter().map(|r| r.date).max(),
        monthly_records: monthly_counts(recs)
            .into_iter()
            .map(|(m, n)| (m.to_string(), n))
            .collect(),
        licenses: b.licenses.len(),
        weather_days: b.weather.len(),
        events_by_kind,
    };
    out.json("ingest.json", &summary)
}

#[derive(Serialize)]
struct SplitSummary {
    start: NaiveDate,
    end: NaiveDate,
    rows: usize,
    positives: usize,
    positive_rate: f64,
}

impl SplitSummary {
    fn of(w: DateWindow, rows: &[LabeledInstance]) -> Self {
        SplitSummary {
            start: w.start,
            end: w.end,
            rows: rows.len(),
            positives: rows.iter().filter(|i| i.label == 1).count(),
            positive_rate: positive_rate(rows),
        }
    }
}

#[derive(Serialize)]
struct FeaturizeSummary {
    train: SplitSummary,
    test: SplitSummary,
    same_date_ties: usize,
    options: FeatureOptions,
    features: [&'static str; 16],
}

fn featurize(cfg: &RunConfig, b: &InputBundle, out: &OutDir) -> Result<Dataset, CliError> {
    let links = link_previous_inspection(&b.inspections.records);
    let ctx = FeatureContext::new(&b.licenses, &b.weather, &b.events, cfg.features)?;
    let ds = build_dataset(&links.links, &ctx, cfg.train, cfg.test)?;
    out.with(FEATURES_FILE, |w| write_features(&ds, w))?;
    out.json(
        "featurize.json",
        &FeaturizeSummary {
            train: SplitSummary::of(cfg.train, &ds.train),
            test: SplitSummary::of(cfg.test, &ds.test),
            same_date_ties: links.same_date_ties,
            options: cfg.features,
            features: FEATURE_NAMES,
        },
    )?;
    Ok(ds)
}

fn cluster_step(
    cfg: &RunConfig,
    ds: &Dataset,
    k: usize,
    out: &OutDir,
) -> Result<(ClusterAssignment, LogisticModel), CliError> {
    let fit = fit_sanitarian_model(&ds.train, &cfg.training)?;
    let assignment = cluster_sanitarians(&fit.coefficients, k)?;
    let refit = refit_with_clusters(&ds.train, &assignment, &cfg.training)?;
    write_model(out, SANITARIAN_MODEL_FILE, &fit.model)?;
    out.with(CLUSTERS_FILE, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["sanitarian_id", "cluster", "coefficient"])?;
        for (id, coef) in &fit.coefficients {
            let label = assignment.get(id).expect("every clustered sanitarian has a label");
            c.write_record([id.as_str(), label.as_str(), &coef.to_string()])?;
        }
        c.flush()?;
        Ok(())
    })?;
    write_model(out, CLUSTERED_MODEL_FILE, &refit)?;
    Ok((assignment, refit))
}

#[derive(Deserialize)]
struct ClusterRow {
    sanitarian_id: String,
    cluster: String,
    coefficient: f64,
}

fn read_clusters(path: &Path) -> Result<ClusterAssignment, CliError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut labels = BTreeMap::new();
    let mut members: BTreeMap<ClusterLabel, Vec<f64>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<ClusterRow>().enumerate() {
        let row = row.map_err(Error::from)?;
        let label: ClusterLabel = row.cluster.parse().map_err(|e: Error| Error::Row {
            row: i + 2,
            reason: e.to_string(),
        })?;
        members.entry(label).or_default().push(row.coefficient);
        if labels.insert(row.sanitarian_id.clone(), label).is_some() {
            return Err(Error::Row {
                row: i + 2,
                reason: format!("sanitarian {} listed twice", row.sanitarian_id),
            }
            .into());
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let means: Vec<(ClusterLabel, f64)> = members.iter().map(|(l, v)| (*l, mean(v))).collect();
    let sse = members
        .values()
        .map(|v| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    Ok(ClusterAssignment { labels, means, sse })
}

fn split_rows(ds: &Dataset, split: &str) -> Result<Vec<LabeledInstance>, CliError> {
    match split {
        "test" => Ok(ds.test.clone()),
        "train" => Ok(ds.train.clone()),
        "all" => Ok(ds.train.iter().chain(&ds.test).cloned().collect()),
        other => Err(CliError::Usage(format!(
            "--split must be train, test or all, got {other:?}"
        ))),
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreRow {
    inspection_id: u64,
    date: NaiveDate,
    establishment_id: String,
    label: u8,
    score: f64,
}

fn score(model: &LogisticModel, rows: &[LabeledInstance], out: &OutDir) -> Result<Vec<ScheduleItem>, CliError> {
    let scores = score_instances(model, rows)?;
    out.with(SCORES_FILE, |w| {
        let mut c = csv::Writer::from_writer(w);
        for (inst, s) in rows.iter().zip(&scores) {
            c.serialize(ScoreRow {
                inspection_id: inst.inspection_id,
                date: inst.date,
                establishment_id: inst.establishment_id.clone(),
                label: inst.label,
                score: *s,
            })?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(ScheduleItem::from_instances(rows, Some(&scores)))
}

fn read_scores(path: &Path) -> Result<Vec<ScheduleItem>, CliError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut items = Vec::new();
    for (i, row) in rdr.deserialize::<ScoreRow>().enumerate() {
        let row = row.map_err(Error::from)?;
        if row.label > 1 || !row.score.is_finite() {
            return Err(Error::Row {
                row: i + 2,
                reason: "label must be 0/1 and score finite".into(),
            }
            .into());
        }
        items.push(ScheduleItem {
            inspection_id: row.inspection_id,
            date: row.date,
            label: row.label,
            score: Some(row.score),
        });
    }
    if items.is_empty() {
        return Err(Error::NoInstances.into());
    }
    Ok(items)
}

#[derive(Serialize)]
struct StrategyMetrics {
    strategy: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    n_inspections: usize,
    n_hits: usize,
    hit_rate: f64,
    mean_day_reduction: f64,
    std_day_reduction: f64,
    first_half_fraction: f64,
    days: u32,
}

impl From<&ScheduleMetrics> for StrategyMetrics {
    fn from(m: &ScheduleMetrics) -> Self {
        StrategyMetrics {
            strategy: m.strategy.name(),
            seed: match m.strategy {
                Strategy::Random { seed } => Some(seed),
                _ => None,
            },
            n_inspections: m.n_inspections,
            n_hits: m.n_hits,
            hit_rate: m.hit_rate,
            mean_day_reduction: m.mean_day_reduction,
            std_day_reduction: m.std_day_reduction,
            first_half_fraction: m.first_half_fraction,
            days: m.hit_curve.last().map_or(0, |p| p.0),
        }
    }
}

#[derive(Serialize)]
struct MetricsFile {
    #[serde(flatten)]
    selected: StrategyMetrics,
    capacity: usize,
    random_average: RandomSummary,
    strategies: Vec<StrategyMetrics>,
}

#[derive(Serialize)]
pub struct SimulationSummary {
    pub first_half_fraction: f64,
    pub random_mean_first_half_fraction: f64,
}

fn simulate(
    cfg: &RunConfig,
    items: &[ScheduleItem],
    replicates: usize,
    out: &OutDir,
) -> Result<SimulationSummary, CliError> {
    let capacity = cfg.capacity.unwrap_or_else(|| default_capacity(items));
    let chosen = Strategy::parse(&cfg.strategy, cfg.seed)?;
    let mut all = Vec::new();
    let mut selected = None;
    for s in Strategy::all(cfg.seed) {
        let (schedule, metrics) = evaluate(items, s, capacity)?;
        if s == chosen {
            out.with("schedule.csv", |w| write_schedule_csv(&schedule, items, w))?;
            selected = Some(StrategyMetrics::from(&metrics));
        }
        all.push(metrics);
    }
    out.with("hitcurve.csv", |w| write_hit_curves(&all, w))?;
    let random = random_average(items, capacity, cfg.seed, replicates)?;
    let selected = selected.expect("chosen strategy is one of all()");
    let summary = SimulationSummary {
        first_half_fraction: selected.first_half_fraction,
        random_mean_first_half_fraction: random.mean_first_half_fraction,
    };
    out.json(
        "metrics.json",
        &MetricsFile {
            selected,
            capacity,
            random_average: random,
            strategies: all.iter().map(StrategyMetrics::from).collect(),
        },
    )?;
    Ok(summary)
}

fn parse_kind(kind: &str) -> Result<Option<InspectionType>, CliError> {
    if kind.eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    InspectionType::ALL
        .into_iter()
        .find(|k| k.as_str().eq_ignore_ascii_case(kind))
        .map(Some)
        .ok_or_else(|| CliError::Usage(format!("unknown inspection kind {kind:?}")))
}

fn of_kind(records: &[InspectionRecord], kind: Option<InspectionType>) -> Vec<InspectionRecord> {
    records
        .iter()
        .filter(|r| kind.is_none_or(|k| r.kind == k))
        .cloned()
        .collect()
}

fn code(n: i64) -> Result<ViolationCode, CliError> {
    let c = ViolationCode::new(n).map_err(|e| CliError::Usage(e.to_string()))?;
    if !c.is_critical() {
        return Err(CliError::Usage(format!("V{n} is not a critical code")));
    }
    Ok(c)
}

fn kind_name(kind: Option<InspectionType>) -> &'static str {
    kind.map_or("all", InspectionType::as_str)
}

fn audit_hit_rates(records: &[InspectionRecord], kind: Option<InspectionType>, out: &OutDir) -> Result<(), CliError> {
    let table = cluster_hit_rates(&of_kind(records, kind));
    out.with("hit_rates.csv", |w| write_hit_rate_table(&table, w))?;
    out.json(
        "hit_rates.json",
        &serde_json::json!({ "kind": kind_name(kind), "table": table }),
    )
}

fn audit_codes(records: &[InspectionRecord], kind: Option<InspectionType>, out: &OutDir) -> Result<(), CliError> {
    let rows = code_hit_rates_by_cluster(&of_kind(records, kind));
    out.with("code_rates.csv", |w| write_code_rates(&rows, w))?;
    out.json(
        "code_rates.json",
        &serde_json::json!({ "kind": kind_name(kind), "rows": rows }),
    )
}

fn audit_monthly(
    records: &[InspectionRecord],
    code: Option<ViolationCode>,
    kind: Option<InspectionType>,
    out: &OutDir,
) -> Result<(), CliError> {
    let series = monthly_hit_rate_series(records, code, kind);
    out.with("monthly.csv", |w| write_monthly_series(&series, w))?;
    out.json(
        "monthly.json",
        &serde_json::json!({ "code": code, "kind": kind_name(kind), "series": series }),
    )
}

fn audit_prepost(cfg: &RunConfig, records: &[InspectionRecord], out: &OutDir) -> Result<(), CliError> {
    let mut codes = vec![None];
    codes.extend(ViolationCode::critical_codes().map(Some));
    let summary = prepost_comparison(
        records,
        cfg.split,
        &[InspectionType::Canvass, InspectionType::Complaint],
        &codes,
    )?;
    out.with("prepost.csv", |w| write_prepost(&summary, w))?;
    out.json("prepost.json", &summary)
}

fn audit_seasonal(
    cfg: &RunConfig,
    records: &[InspectionRecord],
    weather: &BTreeMap<NaiveDate, f64>,
    n_chains: usize,
    codes: &[ViolationCode],
    out: &OutDir,
) -> Result<Vec<SeasonalAssociation>, CliError> {
    let canvass = of_kind(records, Some(InspectionType::Canvass));
    let chains = top_chains(&canvass, n_chains);
    let temps = monthly_temperatures(weather);
    let results = codes
        .iter()
        .map(|&c| seasonal_association(&canvass, &chains, &temps, c, &cfg.training))
        .collect::<foodcast_core::Result<Vec<_>>>()?;
    out.with("seasonal.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "code",
            "coefficient",
            "std_error",
            "n",
            "chains",
            "constant_outcome_chains",
        ])?;
        for r in &results {
            c.write_record([
                format!("V{}", r.code.get()),
                r.coefficient.to_string(),
                r.std_error.to_string(),
                r.n.to_string(),
                r.chains.len().to_string(),
                r.constant_outcome_chains.len().to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.json("seasonal.json", &results)?;
    Ok(results)
}

#[derive(Serialize)]
struct Crossing {
    threshold: usize,
    crossings: usize,
}

fn audit_counterfactual(
    cfg: &RunConfig,
    model: &LogisticModel,
    test: &[LabeledInstance],
    threshold: Option<usize>,
    out: &OutDir,
) -> Result<CounterfactualReport, CliError> {
    let report = sanitarian_counterfactual(model, test, cfg.mode)?;
    let mut thresholds = vec![test.len().div_ceil(2)];
    thresholds.extend(threshold.filter(|t| !thresholds.contains(t)));
    let crossings: Vec<Crossing> = thresholds
        .into_iter()
        .map(|t| Crossing {
            threshold: t,
            crossings: report.crossings(t),
        })
        .collect();
    out.with("counterfactual.csv", |w| write_counterfactual(&report, w))?;
    out.json(
        "counterfactual.json",
        &serde_json::json!({
            "mode": report.mode,
            "replacement": report.replacement,
            "instances": report.rows.len(),
            "crossings": crossings,
            "positions_by_cluster": report.positions_by_cluster(),
        }),
    )?;
    Ok(report)
}

fn audit(cfg: &RunConfig, cmd: &AuditCommand, out: &OutDir) -> Result<(), CliError> {
    match cmd {
        AuditCommand::HitRates { kind } => audit_hit_rates(&load_records(cfg)?, parse_kind(kind)?, out),
        AuditCommand::CodesByCluster { kind } => audit_codes(&load_records(cfg)?, parse_kind(kind)?, out),
        AuditCommand::Monthly { code: c, kind } => {
            let c = c.map(code).transpose()?;
            audit_monthly(&load_records(cfg)?, c, parse_kind(kind)?, out)
        }
        AuditCommand::Prepost => audit_prepost(cfg, &load_records(cfg)?, out),
        AuditCommand::Seasonal { chains, codes } => {
            let codes = codes.iter().map(|&c| code(c)).collect::<Result<Vec<_>, _>>()?;
            let records = load_records(cfg)?;
            let weather = foodcast_core::ingest::parse_weather(open(&cfg.input("weather", synth::WEATHER_FILE)?)?)?;
            audit_seasonal(cfg, &records, &weather, *chains, &codes, out).map(drop)
        }
        AuditCommand::Counterfactual { threshold } => {
            let model = load_model(cfg)?;
            let ds = load_features(cfg)?;
            let test = match cfg.existing("clusters")? {
                Some(p) => apply_assignment(&ds.test, &read_clusters(&p)?)?,
                None => ds.test,
            };
            audit_counterfactual(cfg, &model, &test, *threshold, out).map(drop)
        }
    }
}

#[derive(Serialize)]
struct Skipped {
    step: &'static str,
    reason: String,
}

#[derive(Serialize)]
struct ReportIndex {
    seed: u64,
    strategy: String,
    scoring_model: &'static str,
    first_half_fraction: f64,
    random_mean_first_half_fraction: f64,
    skipped: Vec<Skipped>,
    files: Vec<FileEntry>,
}

/// Optional steps may fail on data that cannot support them; numerical and
/// usage failures still abort the report.
fn optional<T>(step: &'static str, r: Result<T, CliError>, skipped: &mut Vec<Skipped>) -> Result<Option<T>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(CliError::Core(e)) if e.kind() == ErrorKind::Data || matches!(e, Error::Config(_)) => {
            log::warn!("report: skipping {step}: {e}");
            skipped.push(Skipped {
                step,
                reason: e.to_string(),
            });
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn report(cfg: &RunConfig, k: usize, replicates: usize, out: &OutDir) -> Result<(), CliError> {
    let bundle = load_bundle(cfg)?;
    let ds = featurize(cfg, &bundle, out)?;
    let plain = fit_instances(&ds.train, &cfg.training)?;
    write_model(out, MODEL_FILE, &plain)?;

    let mut skipped = Vec::new();
    let clustered = optional("cluster-sanitarians", cluster_step(cfg, &ds, k, out), &mut skipped)?;
    let (scoring_model, model, test) = match &clustered {
        Some((assignment, refit)) => {
            let test = optional(
                "cluster-assignment",
                apply_assignment(&ds.test, assignment).map_err(CliError::from),
                &mut skipped,
            )?;
            match test {
                Some(t) => ("clustered", refit, t),
                None => ("plain", &plain, ds.test.clone()),
            }
        }
        None => ("plain", &plain, ds.test.clone()),
    };
    let items = score(model, &test, out)?;
    let sim = simulate(cfg, &items, replicates, out)?;

    let records = &bundle.inspections.records;
    let canvass = Some(InspectionType::Canvass);
    audit_hit_rates(records, canvass, out)?;
    audit_codes(records, canvass, out)?;
    audit_monthly(records, None, canvass, out)?;
    optional("audit prepost", audit_prepost(cfg, records, out), &mut skipped)?;
    let seasonal_codes = [code(2)?, code(3)?];
    optional(
        "audit seasonal",
        audit_seasonal(cfg, records, &bundle.weather, 51, &seasonal_codes, out),
        &mut skipped,
    )?;
    if scoring_model == "clustered" {
        optional(
            "audit counterfactual",
            audit_counterfactual(cfg, model, &test, None, out),
            &mut skipped,
        )?;
    } else {
        skipped.push(Skipped {
            step: "audit counterfactual",
            reason: "no clustered model".into(),
        });
    }

    let index = ReportIndex {
        seed: cfg.seed,
        strategy: cfg.strategy.clone(),
        scoring_model,
        first_half_fraction: sim.first_half_fraction,
        random_mean_first_half_fraction: sim.random_mean_first_half_fraction,
        skipped,
        files: out.manifest()?,
    };
    let path = out.root().join("index.json");
    let mut text = serde_json::to_string_pretty(&index).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
