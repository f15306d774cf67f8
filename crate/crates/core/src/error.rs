use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or arguments.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// Solver failures: non-convergence, separation.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid violation code {0} (expected 1..=45)")]
    InvalidCode(i64),
    #[error("dates out of order: {earlier} is after {later}")]
    DateOrder { earlier: NaiveDate, later: NaiveDate },
    #[error("invalid location lat={lat} lon={lon}")]
    InvalidLocation { lat: f64, lon: f64 },
    #[error("violation entry {index}: no leading integer code in {entry:?}")]
    ViolationEntry { index: usize, entry: String },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("missing weather observation for {0}")]
    MissingWeather(NaiveDate),
    #[error("missing license for establishment {0}")]
    MissingLicense(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no instances")]
    NoInstances,
    #[error("training labels must contain both outcomes ({positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("no convergence after {iterations} iterations (gradient max-norm {grad_norm:e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        intercept: f64,
        coefficients: Vec<f64>,
    },
    #[error("perfect separation detected on feature {feature} (coefficient {coefficient})")]
    Separation { feature: String, coefficient: f64 },
    #[error("linear algebra failure: {0}")]
    Singular(String),
    #[error("missing feature {0}")]
    MissingFeature(String),
    #[error("unknown feature {0}")]
    UnknownFeature(String),
    #[error("unmapped sanitarian ids: {}", .0.join(","))]
    UnmappedSanitarians(Vec<String>),
    #[error("no positive-label instances; metric undefined")]
    EmptyHitSet,
    #[error("{0} period has no records")]
    EmptyPeriod(String),
    #[error("missing monthly temperature for {0}")]
    MissingTemperature(String),
    #[error("feature {0} is constant and was dropped; association unidentifiable")]
    DroppedColumn(String),
    #[error("model has no sanitarian cluster features")]
    NoClusterFeatures,
    #[error("scores are required for the model strategy")]
    MissingScores,
    #[error("degenerate probability: linear predictor {0} outside [-30, 30]")]
    DegenerateProbability(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::NonConvergence { .. } | Error::Separation { .. } | Error::Singular(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
