//! Logistic risk model, sanitarian clustering and the cluster refit.
//!
//! The production-shaped model uses the 16 predictors in
//! [`FEATURE_NAMES`](crate::features::FEATURE_NAMES). It is obtained in two
//! steps: a full model with one indicator per previous-inspection sanitarian,
//! whose sanitarian coefficients are clustered into six color groups, then a
//! refit where the per-sanitarian indicators are replaced by cluster indicators.

mod cluster;
mod logistic;

use std::collections::{BTreeMap, BTreeSet};

pub use cluster::{cluster_sanitarians, optimal_1d, ClusterAssignment, Clustering1d};
pub use logistic::{
    fit_logistic, fit_logistic_traced, loglik, loglik_gradient, roundoff_slack, sigmoid, standard_errors, Design,
    FeatureSource, FitMeta, FitTrace, LogisticModel, StandardErrors, TrainingConfig, SEPARATION_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::features::{base_feature_names, LabeledInstance};

pub const SANITARIAN_PREFIX: &str = "sanitarian:";

/// Full model with base features and one indicator per previous sanitarian.
#[derive(Debug, Clone, PartialEq)]
pub struct SanitarianFit {
    pub model: LogisticModel,
    /// Coefficient of each sanitarian indicator that was not dropped.
    pub coefficients: BTreeMap<String, f64>,
}

pub fn sanitarian_design(instances: &[LabeledInstance]) -> (Design, Vec<String>) {
    let sanitarians: Vec<String> = instances
        .iter()
        .filter_map(|i| i.previous_sanitarian.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut names: Vec<String> = base_feature_names().iter().map(|s| s.to_string()).collect();
    names.extend(sanitarians.iter().map(|s| format!("{SANITARIAN_PREFIX}{s}")));
    let mut design = Design::new(names);
    let index: BTreeMap<&str, usize> = sanitarians.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut row = vec![0.0; 10 + sanitarians.len()];
    for inst in instances {
        row.iter_mut().for_each(|v| *v = 0.0);
        row[..10].copy_from_slice(&inst.features.base_values());
        if let Some(s) = &inst.previous_sanitarian {
            row[10 + index[s.as_str()]] = 1.0;
        }
        design.push(&row, inst.label);
    }
    (design, sanitarians)
}

pub fn fit_sanitarian_model(instances: &[LabeledInstance], cfg: &TrainingConfig) -> Result<SanitarianFit> {
    let (design, sanitarians) = sanitarian_design(instances);
    if sanitarians.is_empty() {
        return Err(Error::Config(
            "no instance carries a previous-inspection sanitarian".into(),
        ));
    }
    let model = fit_logistic(&design, cfg)?;
    let coefficients = sanitarians
        .into_iter()
        .filter_map(|s| {
            let name = format!("{SANITARIAN_PREFIX}{s}");
            if model.meta.dropped_columns.contains(&name) {
                None
            } else {
                model.coefficient(&name).ok().map(|c| (s, c))
            }
        })
        .collect();
    Ok(SanitarianFit { model, coefficients })
}

/// Rewrites each instance's cluster indicators from its previous sanitarian.
pub fn apply_assignment(instances: &[LabeledInstance], assignment: &ClusterAssignment) -> Result<Vec<LabeledInstance>> {
    let missing: BTreeSet<String> = instances
        .iter()
        .filter_map(|i| i.previous_sanitarian.as_ref())
        .filter(|s| assignment.get(s).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnmappedSanitarians(missing.into_iter().collect()));
    }
    Ok(instances
        .iter()
        .map(|i| {
            let cluster = i.previous_sanitarian.as_ref().and_then(|s| assignment.get(s));
            LabeledInstance {
                features: i.features.with_cluster(cluster),
                ..i.clone()
            }
        })
        .collect())
}

pub fn refit_with_clusters(
    instances: &[LabeledInstance],
    assignment: &ClusterAssignment,
    cfg: &TrainingConfig,
) -> Result<LogisticModel> {
    let remapped = apply_assignment(instances, assignment)?;
    fit_logistic(&Design::from_instances(&remapped), cfg)
}

pub fn fit_instances(instances: &[LabeledInstance], cfg: &TrainingConfig) -> Result<LogisticModel> {
    fit_logistic(&Design::from_instances(instances), cfg)
}

/// Probability for every instance, in input order.
pub fn score_instances(model: &LogisticModel, instances: &[LabeledInstance]) -> Result<Vec<f64>> {
    instances
        .iter()
        .map(|i| model.predict_probability(&i.features))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ClusterLabel;
    use crate::features::FeatureVector;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instances(n: usize, seed: u64) -> Vec<LabeledInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let effects = [("s1", 1.0), ("s2", 0.9), ("s3", -0.8), ("s4", -1.0)];
        (0..n)
            .map(|i| {
                let prev = rng.gen_range(0..5usize);
                let san = effects.get(prev).map(|e| e.0.to_string());
                let effect = effects.get(prev).map_or(0.0, |e| e.1);
                let fv = FeatureVector {
                    time_since_last: rng.gen_range(0.2..2.0),
                    tmax_f: rng.gen_range(20.0..90.0),
                    past_critical: rng.gen_bool(0.2),
                    ..Default::default()
                };
                let eta = -1.5 + effect + 0.4 * f64::from(u8::from(fv.past_critical));
                LabeledInstance {
                    features: fv,
                    label: u8::from(rng.gen::<f64>() < sigmoid(eta)),
                    inspection_id: i as u64,
                    date: NaiveDate::from_ymd_opt(2013, 1, 1).unwrap(),
                    establishment_id: format!("e{i}"),
                    previous_sanitarian: san,
                }
            })
            .collect()
    }

    #[test]
    fn sanitarian_model_then_refit() {
        let data = instances(8000, 1);
        let cfg = TrainingConfig::default();
        let fit = fit_sanitarian_model(&data, &cfg).unwrap();
        assert_eq!(fit.coefficients.len(), 4);
        let assignment = cluster_sanitarians(&fit.coefficients, 2).unwrap();
        assert_eq!(assignment.get("s1"), assignment.get("s2"));
        assert_eq!(assignment.get("s1"), Some(ClusterLabel::Purple));
        assert_eq!(assignment.get("s4"), Some(ClusterLabel::Blue));
        let refit = refit_with_clusters(&data, &assignment, &cfg).unwrap();
        assert!(refit.coefficient("cluster_purple").unwrap() > 0.5);
        assert!(refit.coefficient("cluster_blue").unwrap() < -0.5);
        assert!(refit.meta.dropped_columns.contains(&"cluster_brown".to_string()));
    }

    #[test]
    fn single_cluster_equals_has_previous_indicator() {
        let data = instances(3000, 2);
        let cfg = TrainingConfig::default();
        let one = ClusterAssignment {
            labels: ["s1", "s2", "s3", "s4"]
                .iter()
                .map(|s| (s.to_string(), ClusterLabel::Purple))
                .collect(),
            means: vec![(ClusterLabel::Purple, 0.0)],
            sse: 0.0,
        };
        let refit = refit_with_clusters(&data, &one, &cfg).unwrap();
        let mut design = Design::new(base_feature_names().iter().copied().chain(["has_previous"]));
        for i in &data {
            let mut row = i.features.base_values().to_vec();
            row.push(f64::from(u8::from(i.previous_sanitarian.is_some())));
            design.push(&row, i.label);
        }
        let direct = fit_logistic(&design, &cfg).unwrap();
        let a = refit.coefficient("cluster_purple").unwrap();
        let b = direct.coefficient("has_previous").unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!((refit.intercept - direct.intercept).abs() < 1e-9);
    }

    #[test]
    fn unmapped_sanitarians_are_listed() {
        let data = instances(50, 3);
        let partial = ClusterAssignment {
            labels: [("s1".to_string(), ClusterLabel::Purple)].into(),
            means: vec![(ClusterLabel::Purple, 1.0)],
            sse: 0.0,
        };
        match refit_with_clusters(&data, &partial, &TrainingConfig::default()) {
            Err(Error::UnmappedSanitarians(ids)) => assert_eq!(ids, vec!["s2", "s3", "s4"]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
