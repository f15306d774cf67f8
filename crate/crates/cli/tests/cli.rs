use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use foodcast_core::FEATURE_NAMES;

fn foodcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foodcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) {
    let o = foodcast(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn small_city(dir: &Path) {
    ok(&[
        "synth",
        "--out",
        s(dir),
        "--n-inspections",
        "3000",
        "--n-establishments",
        "300",
    ]);
}

fn features_header() -> String {
    let mut cols = vec![
        "inspection_id",
        "date",
        "establishment_id",
        "split",
        "label",
        "prev_sanitarian",
    ];
    cols.extend(FEATURE_NAMES);
    cols.join(",")
}

#[test]
fn report_is_idempotent_and_stays_in_out() {
    let tmp = tempfile::tempdir().unwrap();
    let city = tmp.path().join("city");
    small_city(&city);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["report", "--input", s(&city), "--out", s(&a), "--replicates", "20"]);
    ok(&["report", "--input", s(&city), "--out", s(&b), "--replicates", "20"]);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa, sb);
    for name in [
        "features.csv",
        "model.json",
        "metrics.json",
        "hitcurve.csv",
        "hit_rates.csv",
        "index.json",
    ] {
        assert!(sa.contains_key(name), "missing {name}");
    }
    let index: serde_json::Value = serde_json::from_slice(&sa["index.json"]).unwrap();
    let listed: Vec<&str> = index["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap())
        .collect();
    assert_eq!(listed.len() + 1, sa.len());
    let mut top: Vec<String> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, ["a", "b", "city"]);
}

#[test]
fn stepwise_pipeline_chains_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let city = tmp.path().join("city");
    small_city(&city);
    let out = tmp.path().join("run");
    let o = s(&out);
    ok(&["ingest", "--input", s(&city), "--out", o]);
    ok(&["featurize", "--input", o, "--out", o]);
    let features = out.join("features.csv");
    ok(&["train", "--features", s(&features), "--out", o]);
    ok(&["cluster-sanitarians", "--features", s(&features), "--out", o]);
    ok(&[
        "score",
        "--features",
        s(&features),
        "--model",
        s(&out.join("clustered_model.json")),
        "--clusters",
        s(&out.join("sanitarian_clusters.csv")),
        "--out",
        o,
    ]);
    ok(&[
        "simulate",
        "--scores",
        s(&out.join("scores.csv")),
        "--strategy",
        "best",
        "--out",
        o,
    ]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["strategy"], "best");
    assert_eq!(m["first_half_fraction"], 1.0);
    assert_eq!(m["strategies"].as_array().unwrap().len(), 5);
    let ingest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("ingest.json")).unwrap()).unwrap();
    assert_eq!(ingest["records"], 3000);
    ok(&["audit", "hit-rates", "--input", o, "--out", o, "--kind", "all"]);
    ok(&["audit", "monthly", "--input", o, "--out", o, "--code", "3"]);
    ok(&[
        "audit",
        "counterfactual",
        "--features",
        s(&features),
        "--model",
        s(&out.join("clustered_model.json")),
        "--clusters",
        s(&out.join("sanitarian_clusters.csv")),
        "--mode",
        "reference_mean",
        "--out",
        o,
    ]);
    let cf: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("counterfactual.json")).unwrap()).unwrap();
    assert_eq!(cf["mode"], "reference_mean");
}

#[test]
fn empty_features_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    for content in [String::new(), features_header() + "\n"] {
        let f = tmp.path().join("features.csv");
        std::fs::write(&f, content).unwrap();
        let o = foodcast(&["train", "--features", s(&f), "--out", s(&tmp.path().join("o"))]);
        assert_eq!(o.status.code(), Some(2));
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(
            err.starts_with("error[data]: ") && err.contains("no instances"),
            "{err}"
        );
    }
}

#[test]
fn model_missing_a_feature_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let mut names: Vec<&str> = FEATURE_NAMES.to_vec();
    names.retain(|n| *n != "garbage_kde");
    let model = serde_json::json!({
        "feature_names": names,
        "coefficients": vec![0.1; 15],
        "intercept": -1.0,
        "meta": {"iterations": 0, "loglik": 0.0, "grad_norm": 0.0, "config_hash": ""}
    });
    let m = tmp.path().join("model.json");
    std::fs::write(&m, model.to_string()).unwrap();
    let f = tmp.path().join("features.csv");
    std::fs::write(&f, features_header() + "\n").unwrap();
    let o = foodcast(&[
        "score",
        "--model",
        s(&m),
        "--features",
        s(&f),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("garbage_kde"), "{}", stderr(&o));
}

#[test]
fn separation_is_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = features_header() + "\n";
    for i in 0..40 {
        let y = usize::from(i % 2 == 0);
        let mut row = vec![
            i.to_string(),
            "2013-01-01".into(),
            format!("e{i}"),
            "train".into(),
            y.to_string(),
            String::new(),
        ];
        let mut values = vec!["0".to_string(); 16];
        values[7] = y.to_string();
        values[8] = format!("{}", 0.5 + (i % 7) as f64 / 10.0);
        row.extend(values);
        text += &(row.join(",") + "\n");
    }
    let f = tmp.path().join("features.csv");
    std::fs::write(&f, text).unwrap();
    let o = foodcast(&["train", "--features", s(&f), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.lines().last().unwrap().starts_with("error[numerical]: "), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let missing = tmp.path().join("nope");
    let bad_cfg = tmp.path().join("bad.cfg");
    std::fs::write(&bad_cfg, "seed = 1\ncolour = blue\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["featurize", "--input", s(&missing), "--out", s(&out)],
        vec!["train", "--out", s(&out)],
        vec!["synth", "--config", s(&bad_cfg), "--out", s(&out)],
        vec!["synth", "--seed", "seven", "--out", s(&out)],
        vec!["simulate", "--strategy", "oracle", "--out", s(&out)],
        vec![
            "featurize",
            "--input",
            s(tmp.path()),
            "--train-end",
            "2014-12-31",
            "--out",
            s(&out),
        ],
    ];
    for args in cases {
        let o = foodcast(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error[usage]: "), "{args:?}: {}", stderr(&o));
    }
    assert!(foodcast(&["--help"]).status.success());
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# city\nseed = 3\nout = from_config\n").unwrap();
    let small = ["--n-inspections", "300", "--n-establishments", "40"];
    let mut args = vec!["synth", "--config", s(&cfg)];
    args.extend(small);
    ok(&args);
    let from_config = tmp.path().join("from_config");
    assert!(from_config.join("manifest.json").exists());

    let flagged = tmp.path().join("flagged");
    let mut args = vec!["synth", "--config", s(&cfg), "--seed", "7", "--out", s(&flagged)];
    args.extend(small);
    ok(&args);
    let plain = tmp.path().join("plain");
    let mut args = vec!["synth", "--out", s(&plain)];
    args.extend(small);
    ok(&args);
    assert_eq!(snapshot(&flagged), snapshot(&plain));
    assert_ne!(snapshot(&from_config), snapshot(&plain));
}
