//! Flat `key = value` settings: config file first, command-line flags on top.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use foodcast_core::audit::{default_split, CounterfactualMode};
use foodcast_core::features::{DateWindow, FeatureOptions};
use foodcast_core::ingest::default_cutoff;
use foodcast_core::{KdeConfig, TrainingConfig};

use crate::CliError;

/// Every key a config file may set. Flags use the same names with `-`.
pub const KEYS: [&str; 27] = [
    "out",
    "seed",
    "capacity",
    "bandwidth_meters",
    "window_days",
    "split_date",
    "cutoff_date",
    "allow_missing_license",
    "strategy",
    "mode",
    "input",
    "inspections",
    "licenses",
    "weather",
    "events",
    "features",
    "model",
    "clusters",
    "scores",
    "train_start",
    "train_end",
    "test_start",
    "test_end",
    "max_iterations",
    "gradient_tolerance",
    "ridge_epsilon",
    "imputed_time_since_last",
];

/// Keys whose values are paths; relative ones in a config file resolve
/// against the file's directory.
const PATH_KEYS: [&str; 10] = [
    "out",
    "input",
    "inspections",
    "licenses",
    "weather",
    "events",
    "features",
    "model",
    "clusters",
    "scores",
];

fn canonical_key(raw: &str) -> String {
    raw.trim().replace('-', "_")
}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse_config(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |why: String| CliError::Usage(format!("config line {}: {why}", n + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let key = canonical_key(k);
            if !KEYS.contains(&key.as_str()) {
                return Err(bad(format!("unknown key {key:?}")));
            }
            if s.values.contains_key(&key) {
                return Err(bad(format!("duplicate key {key:?}")));
            }
            let mut value = v.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            let value = if PATH_KEYS.contains(&key.as_str()) && Path::new(value).is_relative() {
                base.join(value).to_string_lossy().into_owned()
            } else {
                value.to_string()
            };
            s.values.insert(key, value);
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse_config(&text, base)
    }

    /// Flag values replace file values.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let key = canonical_key(key);
        debug_assert!(KEYS.contains(&key.as_str()), "unregistered key {key}");
        self.values.insert(key, value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("{key}: cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn date(&self, key: &str) -> Result<Option<NaiveDate>, CliError> {
        self.raw(key)
            .map(|v| {
                foodcast_core::domain::parse_date(v)
                    .map_err(|_| CliError::Usage(format!("{key}: expected YYYY-MM-DD, got {v:?}")))
            })
            .transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key).map(|v| v.trim().to_ascii_lowercase()) {
            None => Ok(false),
            Some(v) => match v.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(CliError::Usage(format!("{key}: expected true or false, got {v:?}"))),
            },
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub capacity: Option<usize>,
    pub features: FeatureOptions,
    pub cutoff: NaiveDate,
    pub split: NaiveDate,
    pub strategy: String,
    pub mode: CounterfactualMode,
    pub train: DateWindow,
    pub test: DateWindow,
    pub training: TrainingConfig,
    settings: Settings,
}

fn window(s: &Settings, start: &str, end: &str, default: DateWindow) -> Result<DateWindow, CliError> {
    let w = DateWindow::new(
        s.date(start)?.unwrap_or(default.start),
        s.date(end)?.unwrap_or(default.end),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(w)
}

impl RunConfig {
    pub fn resolve(settings: Settings) -> Result<Self, CliError> {
        let s = &settings;
        let mut kde = KdeConfig::default();
        if let Some(h) = s.get::<f64>("bandwidth_meters")? {
            kde.bandwidth_meters = h;
        }
        if let Some(w) = s.get::<u32>("window_days")? {
            kde.window_days = w;
        }
        kde.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let mut features = FeatureOptions {
            kde,
            allow_missing_license: s.flag("allow_missing_license")?,
            ..FeatureOptions::default()
        };
        if let Some(t) = s.get::<f64>("imputed_time_since_last")? {
            features.imputed_time_since_last = t;
        }

        let mut training = TrainingConfig::default();
        if let Some(v) = s.get("max_iterations")? {
            training.max_iterations = v;
        }
        if let Some(v) = s.get("gradient_tolerance")? {
            training.gradient_tolerance = v;
        }
        if let Some(v) = s.get("ridge_epsilon")? {
            training.ridge_epsilon = v;
        }
        training.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let train = window(s, "train_start", "train_end", DateWindow::default_train())?;
        let test = window(s, "test_start", "test_end", DateWindow::default_test())?;
        if train.end >= test.start {
            return Err(CliError::Usage(format!(
                "train window {}..{} must end before test window {}..{} starts",
                train.start, train.end, test.start, test.end
            )));
        }

        let capacity = s.get::<usize>("capacity")?;
        if capacity == Some(0) {
            return Err(CliError::Usage("capacity must be positive".into()));
        }
        let mode = match s.raw("mode") {
            None => CounterfactualMode::ZeroOut,
            Some(m) => CounterfactualMode::parse(m).map_err(|e| CliError::Usage(e.to_string()))?,
        };
        let strategy = s.raw("strategy").unwrap_or("model").to_string();
        foodcast_core::Strategy::parse(&strategy, 0).map_err(|e| CliError::Usage(e.to_string()))?;

        Ok(RunConfig {
            out: s.path("out").unwrap_or_else(|| PathBuf::from("out")),
            seed: s.get("seed")?.unwrap_or(7),
            capacity,
            features,
            cutoff: s.date("cutoff_date")?.unwrap_or_else(default_cutoff),
            split: s.date("split_date")?.unwrap_or_else(default_split),
            strategy,
            mode,
            train,
            test,
            training,
            settings,
        })
    }

    /// An explicitly configured path, checked to exist.
    pub fn existing(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        match self.settings.path(key) {
            None => Ok(None),
            Some(p) if p.exists() => Ok(Some(p)),
            Some(p) => Err(CliError::Usage(format!("{key} path not found: {}", p.display()))),
        }
    }

    pub fn required(&self, key: &str) -> Result<PathBuf, CliError> {
        self.existing(key)?
            .ok_or_else(|| CliError::Usage(format!("--{} is required", key.replace('_', "-"))))
    }

    /// One of the four canonical inputs: the explicit path, else `file_name`
    /// inside `--input`.
    pub fn input(&self, key: &str, file_name: &str) -> Result<PathBuf, CliError> {
        if let Some(p) = self.existing(key)? {
            return Ok(p);
        }
        match self.settings.path("input") {
            Some(dir) => {
                let p = dir.join(file_name);
                if p.exists() {
                    Ok(p)
                } else {
                    Err(CliError::Usage(format!("{key} input not found: {}", p.display())))
                }
            }
            None => Err(CliError::Usage(format!("no {key} input (set --input or --{key})"))),
        }
    }
}
