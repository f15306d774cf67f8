use std::collections::BTreeMap;

use foodcast_core::audit::{cluster_hit_rates, monthly_temperatures, seasonal_association, top_chains};
use foodcast_core::features::{build_dataset, DateWindow, FeatureContext, FeatureOptions};
use foodcast_core::ingest::{link_previous_inspection, IngestOptions, InputBundle, InputPaths};
use foodcast_core::model::{
    cluster_sanitarians, fit_instances, fit_sanitarian_model, refit_with_clusters, score_instances,
};
use foodcast_core::scheduler::{default_capacity, evaluate, random_average};
use foodcast_core::synth::{self, generate, write_bundle, SynthConfig};
use foodcast_core::{
    target_label, ClusterLabel, InspectionType, ScheduleItem, Strategy, TrainingConfig, ViolationCode,
};

fn load(dir: &std::path::Path) -> InputBundle {
    let paths = InputPaths {
        inspections: &dir.join(synth::INSPECTIONS_FILE),
        licenses: &dir.join(synth::LICENSES_FILE),
        weather: &dir.join(synth::WEATHER_FILE),
        events: &dir.join(synth::EVENTS_FILE),
    };
    InputBundle::load(&paths, &IngestOptions::default()).unwrap()
}

fn read_dir(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn mini() -> SynthConfig {
    SynthConfig {
        n_establishments: 60,
        n_inspections: 500,
        ..Default::default()
    }
}

#[test]
fn bundle_is_byte_identical_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_bundle(&generate(&mini()).unwrap(), a.path()).unwrap();
    write_bundle(&generate(&mini()).unwrap(), b.path()).unwrap();
    let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
    assert_eq!(fa.len(), 5);
    assert_eq!(fa, fb);
}

#[test]
fn ingest_reproduces_manifest_counts_and_windows() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = generate(&mini()).unwrap();
    write_bundle(&bundle, dir.path()).unwrap();
    let input = load(dir.path());
    let m = &bundle.manifest;
    assert_eq!(input.inspections.records.len(), m.inspections);
    assert_eq!(input.inspections.records, bundle.records);
    assert_eq!(input.licenses.len(), m.establishments);
    assert_eq!(input.weather.len(), m.weather_days);
    assert_eq!(input.events.len(), m.events_by_kind.values().sum::<usize>());
    let mut by_type = BTreeMap::new();
    for r in &input.inspections.records {
        *by_type.entry(r.kind.as_str().to_string()).or_insert(0) += 1;
    }
    assert_eq!(by_type, m.inspections_by_type);

    let links = link_previous_inspection(&input.inspections.records);
    let ctx = FeatureContext::new(
        &input.licenses,
        &input.weather,
        &input.events,
        FeatureOptions::default(),
    )
    .unwrap();
    let ds = build_dataset(
        &links.links,
        &ctx,
        DateWindow::default_train(),
        DateWindow::default_test(),
    )
    .unwrap();
    let tally = |name: &str| m.windows.iter().find(|w| w.name == name).unwrap();
    assert_eq!(ds.train.len(), tally("train").canvass);
    assert_eq!(ds.test.len(), tally("test").canvass);
    assert_eq!(
        ds.train.iter().filter(|i| i.label == 1).count(),
        tally("train").canvass_positives
    );
}

#[test]
fn zero_cluster_effects_give_equal_cluster_rates() {
    let cfg = SynthConfig {
        cluster_effects: [0.0; 6],
        event_rates: BTreeMap::new(),
        ..Default::default()
    };
    let b = generate(&cfg).unwrap();
    let table = cluster_hit_rates(&b.records);
    let overall = table.overall_rate();
    for row in &table.rows {
        assert!(
            (row.rate - overall).abs() < 0.03,
            "{} {} vs {}",
            row.group,
            row.rate,
            overall
        );
    }
}

#[test]
fn positive_rate_near_planted_expectation() {
    for seed in [7, 11] {
        let b = generate(&SynthConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let canvass: Vec<_> = b.records.iter().filter(|r| r.kind == InspectionType::Canvass).collect();
        let realized = canvass.iter().filter(|r| target_label(r) == 1).count() as f64 / canvass.len() as f64;
        let m = &b.manifest;
        assert!(
            (realized - m.expected_canvass_positive_rate).abs() < 3.0 * m.canvass_positive_rate_se,
            "seed {seed}: {realized} vs {}",
            m.expected_canvass_positive_rate
        );
    }
}

#[test]
fn refit_recovers_planted_coefficients() {
    let cfg = SynthConfig {
        n_establishments: 10_000,
        n_inspections: 100_000,
        complaint_share: 0.0,
        license_share: 0.0,
        event_rates: [
            (foodcast_core::ingest::EventKind::Burglary, 4.0),
            (foodcast_core::ingest::EventKind::SanitationComplaint, 3.0),
            (foodcast_core::ingest::EventKind::GarbageCartRequest, 3.0),
        ]
        .into(),
        ..Default::default()
    };
    let b = generate(&cfg).unwrap();
    let links = link_previous_inspection(&b.records);
    let ctx = FeatureContext::new(&b.licenses, &b.weather, &b.events, FeatureOptions::default()).unwrap();
    let all = DateWindow::new(cfg.start, cfg.end).unwrap();
    let after = DateWindow::new(cfg.end + chrono::Duration::days(1), cfg.end + chrono::Duration::days(2)).unwrap();
    let ds = build_dataset(&links.links, &ctx, all, after).unwrap();
    assert_eq!(ds.train.len(), 100_000);
    let fit = fit_instances(&ds.train, &TrainingConfig::default()).unwrap();
    let planted = cfg.planted_model().unwrap();
    for (name, truth) in planted.feature_names.iter().zip(&planted.coefficients) {
        let got = fit.coefficient(name).unwrap();
        assert!((got - truth).abs() < 0.1, "{name}: {got} vs {truth}");
    }
    assert!((fit.intercept - cfg.true_intercept).abs() < 0.2);
}

#[test]
fn default_city_pipeline_signals() {
    let b = generate(&SynthConfig::default()).unwrap();
    let links = link_previous_inspection(&b.records);
    let ctx = FeatureContext::new(&b.licenses, &b.weather, &b.events, FeatureOptions::default()).unwrap();
    let ds = build_dataset(
        &links.links,
        &ctx,
        DateWindow::default_train(),
        DateWindow::default_test(),
    )
    .unwrap();
    let cfg = TrainingConfig::default();

    let full = fit_sanitarian_model(&ds.train, &cfg).unwrap();
    let assignment = cluster_sanitarians(&full.coefficients, 6).unwrap();
    assert_eq!(assignment.used_labels(), ClusterLabel::ALL.to_vec());
    let refit = refit_with_clusters(&ds.train, &assignment, &cfg).unwrap();
    let betas: Vec<f64> = ClusterLabel::ALL
        .iter()
        .map(|l| {
            refit
                .coefficient(foodcast_core::features::cluster_feature_name(*l))
                .unwrap()
        })
        .collect();
    assert!(betas.windows(2).all(|w| w[0] > w[1]), "{betas:?}");

    let test = foodcast_core::model::apply_assignment(&ds.test, &assignment).unwrap();
    let scores = score_instances(&refit, &test).unwrap();
    let items = ScheduleItem::from_instances(&test, Some(&scores));
    let cap = default_capacity(&items);
    let (_, model) = evaluate(&items, Strategy::Model, cap).unwrap();
    let random = random_average(&items, cap, 7, 200).unwrap();
    assert!(
        model.first_half_fraction >= random.mean_first_half_fraction + 0.10,
        "{} vs {}",
        model.first_half_fraction,
        random.mean_first_half_fraction
    );

    let canvass: Vec<_> = b
        .records
        .iter()
        .filter(|r| r.kind == InspectionType::Canvass)
        .cloned()
        .collect();
    let chains = top_chains(&canvass, 51);
    let temps = monthly_temperatures(&b.weather);
    for code in [2, 3] {
        let s = seasonal_association(&canvass, &chains, &temps, ViolationCode::new(code).unwrap(), &cfg).unwrap();
        assert!(s.coefficient > 0.0, "V{code}: {s:?}");
    }
}
