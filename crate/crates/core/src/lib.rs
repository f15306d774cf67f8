//! Risk scoring for routine food-establishment inspections.
//!
//! The crate covers the whole batch pipeline: canonical CSV ingest, the
//! 16-predictor feature construction (including trailing-window kernel density
//! intensities of nearby point events), a deterministic IRLS logistic trainer,
//! optimal 1D clustering of per-sanitarian coefficients, schedule simulation
//! with the day-reduction and first-half metrics, and the audit analyses
//! (cluster hit rates, monthly series, pre/post comparison, chain-controlled
//! temperature association, counterfactual rescoring). A seeded synthetic
//! city generator provides ground truth for all of it.

pub mod audit;
pub mod domain;
pub mod error;
pub mod features;
pub mod ingest;
pub mod model;
pub mod scheduler;
pub mod synth;

pub use domain::{
    fractional_years, severity_of, target_label, ClusterLabel, GeoPoint, InspectionRecord, InspectionType, Severity,
    ViolationCode, YearMonth,
};
pub use error::{Error, ErrorKind, Result};
pub use features::{FeatureVector, KdeConfig, LabeledInstance, FEATURE_NAMES};
pub use model::{ClusterAssignment, LogisticModel, TrainingConfig};
pub use scheduler::{Schedule, ScheduleItem, ScheduleMetrics, Strategy};
