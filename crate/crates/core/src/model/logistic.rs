use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LabeledInstance, FEATURE_NAMES};

/// |coefficient| times the observed range of its column beyond which the fit
/// is declared separated. For a 0/1 indicator this is |coefficient| > 30.
pub const SEPARATION_THRESHOLD: f64 = 30.0;

/// Row-major design matrix with named columns and 0/1 labels. The intercept
/// is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    names: Vec<String>,
    data: Vec<f64>,
    labels: Vec<f64>,
}

impl Design {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Design {
            names: names.into_iter().map(Into::into).collect(),
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], label: u8) {
        assert_eq!(row.len(), self.names.len(), "row width mismatch");
        assert!(label <= 1, "labels are 0/1");
        self.data.extend_from_slice(row);
        self.labels.push(label as f64);
    }

    /// Production-shaped 16-feature design.
    pub fn from_instances(instances: &[LabeledInstance]) -> Self {
        let mut d = Design::new(FEATURE_NAMES);
        for inst in instances {
            d.push(&inst.features.values(), inst.label);
        }
        d
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    fn column_range(&self, j: usize) -> (f64, f64) {
        (0..self.n_rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = self.row(i)[j];
            (lo.min(v), hi.max(v))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub ridge_epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_iterations: 50,
            gradient_tolerance: 1e-8,
            ridge_epsilon: 1e-8,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && self.gradient_tolerance.is_finite()
            && self.gradient_tolerance > 0.0
            && self.ridge_epsilon.is_finite()
            && self.ridge_epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("training config must be positive: {self:?}")))
        }
    }

    /// Stable digest of the solver settings and the feature order.
    pub fn hash(&self, feature_names: &[String]) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "max_iterations={};gradient_tolerance={:e};ridge_epsilon={:e};features={}",
            self.max_iterations,
            self.gradient_tolerance,
            self.ridge_epsilon,
            feature_names.join(",")
        ));
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub iterations: usize,
    pub loglik: f64,
    pub grad_norm: f64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub meta: FitMeta,
}

/// Anything that can supply a feature value by name.
pub trait FeatureSource {
    fn feature(&self, name: &str) -> Option<f64>;
}

impl FeatureSource for FeatureVector {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name)
    }
}

impl FeatureSource for BTreeMap<String, f64> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl FeatureSource for HashMap<String, f64> {
    fn feature(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^eta) without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

impl LogisticModel {
    /// Model with the given coefficients and no fit history.
    pub fn from_coefficients<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        coefficients: Vec<f64>,
        intercept: f64,
    ) -> Result<Self> {
        let feature_names: Vec<String> = names.into_iter().map(Into::into).collect();
        let model = LogisticModel {
            meta: FitMeta {
                iterations: 0,
                loglik: f64::NAN,
                grad_norm: f64::NAN,
                config_hash: String::new(),
                dropped_columns: Vec::new(),
            },
            feature_names,
            coefficients,
            intercept,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.len() != self.feature_names.len() {
            return Err(Error::Config(format!(
                "{} coefficients for {} features",
                self.coefficients.len(),
                self.feature_names.len()
            )));
        }
        if !self.intercept.is_finite() || self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("model values must be finite".into()));
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn coefficient(&self, name: &str) -> Result<f64> {
        self.index_of(name)
            .map(|i| self.coefficients[i])
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn odds_ratio(&self, name: &str) -> Result<f64> {
        self.coefficient(name).map(f64::exp)
    }

    pub fn linear_predictor(&self, x: &dyn FeatureSource) -> Result<f64> {
        let mut eta = self.intercept;
        for (name, &c) in self.feature_names.iter().zip(&self.coefficients) {
            let v = x.feature(name).ok_or_else(|| Error::MissingFeature(name.clone()))?;
            eta += c * v;
        }
        Ok(eta)
    }

    /// Probability clamped into the open unit interval.
    pub fn predict_probability(&self, x: &dyn FeatureSource) -> Result<f64> {
        let p = sigmoid(self.linear_predictor(x)?);
        Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    pub fn to_json_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json_reader<R: Read>(r: R) -> Result<Self> {
        let m: LogisticModel = serde_json::from_reader(r)?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_reader(s.as_bytes())
    }
}

/// Per-iteration record of the penalized objective and accepted step length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub objective: Vec<f64>,
    pub step: Vec<f64>,
}

struct Evaluation {
    objective: f64,
    loglik: f64,
    gradient: Vec<f64>,
    hessian: Option<Vec<f64>>,
}

/// Fit state over the non-constant columns; slot 0 is the intercept.
struct Problem<'a> {
    design: &'a Design,
    active: Vec<usize>,
    ridge: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.active.len() + 1
    }

    fn eta(&self, theta: &[f64], row: &[f64]) -> f64 {
        let mut eta = theta[0];
        for (k, &j) in self.active.iter().enumerate() {
            eta += theta[k + 1] * row[j];
        }
        eta
    }

    fn evaluate(&self, theta: &[f64], with_hessian: bool) -> Evaluation {
        let p = self.dim();
        let mut loglik = 0.0;
        let mut grad = vec![0.0; p];
        let mut hess = if with_hessian { vec![0.0; p * p] } else { Vec::new() };
        let mut x = vec![0.0; p];
        x[0] = 1.0;
        for i in 0..self.design.n_rows() {
            let row = self.design.row(i);
            for (k, &j) in self.active.iter().enumerate() {
                x[k + 1] = row[j];
            }
            let y = self.design.label(i);
            let eta = self.eta(theta, row);
            loglik += y * eta - softplus(eta);
            let mu = sigmoid(eta);
            let r = y - mu;
            for a in 0..p {
                grad[a] += x[a] * r;
            }
            if with_hessian {
                let w = mu * (1.0 - mu);
                for a in 0..p {
                    let wa = w * x[a];
                    if wa == 0.0 {
                        continue;
                    }
                    for b in a..p {
                        hess[a * p + b] += wa * x[b];
                    }
                }
            }
        }
        let mut penalty = 0.0;
        for k in 1..p {
            penalty += theta[k] * theta[k];
            grad[k] -= self.ridge * theta[k];
        }
        if with_hessian {
            for k in 1..p {
                hess[k * p + k] += self.ridge;
            }
            for a in 0..p {
                for b in 0..a {
                    hess[a * p + b] = hess[b * p + a];
                }
            }
        }
        Evaluation {
            objective: loglik - 0.5 * self.ridge * penalty,
            loglik,
            gradient: grad,
            hessian: with_hessian.then_some(hess),
        }
    }
}

fn solve_spd(p: usize, hess: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let h = DMatrix::from_row_slice(p, p, hess);
    let g = DVector::from_column_slice(rhs);
    if let Some(ch) = h.clone().cholesky() {
        return Ok(ch.solve(&g).iter().copied().collect());
    }
    h.lu()
        .solve(&g)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Singular("Hessian is not invertible".into()))
}

/// Objective differences below this are indistinguishable from summation error.
pub fn roundoff_slack(objective: f64) -> f64 {
    1e-11 * (1.0 + objective.abs())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Maximum-likelihood logistic regression by Newton/IRLS with step halving.
///
/// Columns that are constant over the rows are dropped (coefficient 0,
/// listed in `meta.dropped_columns`). The intercept is never penalized;
/// coefficients carry `ridge_epsilon / 2 * beta^2` for conditioning.
pub fn fit_logistic(design: &Design, cfg: &TrainingConfig) -> Result<LogisticModel> {
    fit_logistic_traced(design, cfg).map(|(m, _)| m)
}

pub fn fit_logistic_traced(design: &Design, cfg: &TrainingConfig) -> Result<(LogisticModel, FitTrace)> {
    cfg.validate()?;
    let n = design.n_rows();
    if n == 0 {
        return Err(Error::NoInstances);
    }
    let positives = (0..n).filter(|&i| design.label(i) == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass {
            positives,
            negatives: n - positives,
        });
    }

    let mut active = Vec::new();
    let mut ranges = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..design.n_cols() {
        let (lo, hi) = design.column_range(j);
        if lo == hi {
            dropped.push(design.names()[j].clone());
        } else {
            active.push(j);
            ranges.push(hi - lo);
        }
    }
    if !dropped.is_empty() {
        warn!("dropping constant columns: {}", dropped.join(", "));
    }

    let problem = Problem {
        design,
        active,
        ridge: cfg.ridge_epsilon,
    };
    let p = problem.dim();
    let base = positives as f64 / n as f64;
    let mut theta = vec![0.0; p];
    theta[0] = (base / (1.0 - base)).ln();

    let mut trace = FitTrace::default();
    let mut eval = problem.evaluate(&theta, true);
    trace.objective.push(eval.objective);
    let mut iterations = 0;
    loop {
        let grad_norm = max_abs(&eval.gradient);
        if grad_norm < cfg.gradient_tolerance {
            break;
        }
        if iterations == cfg.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                grad_norm,
                intercept: theta[0],
                coefficients: expand(&problem, &theta, design.n_cols()),
            });
        }
        let hess = eval.hessian.as_ref().expect("hessian requested");
        let delta = solve_spd(p, hess, &eval.gradient)?;

        // Near the optimum the gain of a Newton step drops below the rounding
        // error of the summed objective; such steps are taken in full.
        let predicted: f64 = eval.gradient.iter().zip(&delta).map(|(g, d)| g * d).sum();
        let mut t = 1.0;
        let mut accepted = None;
        if predicted <= roundoff_slack(eval.objective) {
            accepted = Some(theta.iter().zip(&delta).map(|(a, d)| a + d).collect());
        }
        for _ in 0..60 {
            if accepted.is_some() {
                break;
            }
            let cand: Vec<f64> = theta.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let obj = problem.evaluate(&cand, false).objective;
            if obj >= eval.objective {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        // Without an ascent step the iterate is kept; the gradient test or
        // the iteration cap decides what happens next.
        if let Some(cand) = accepted {
            theta = cand;
        } else {
            t = 0.0;
        }
        iterations += 1;

        for (k, &range) in ranges.iter().enumerate() {
            let c = theta[k + 1];
            if (c * range).abs() > SEPARATION_THRESHOLD {
                return Err(Error::Separation {
                    feature: design.names()[problem.active[k]].clone(),
                    coefficient: c,
                });
            }
        }

        eval = problem.evaluate(&theta, true);
        trace.objective.push(eval.objective);
        trace.step.push(t);
    }

    let feature_names = design.names().to_vec();
    let model = LogisticModel {
        coefficients: expand(&problem, &theta, design.n_cols()),
        intercept: theta[0],
        meta: FitMeta {
            iterations,
            loglik: eval.loglik,
            grad_norm: max_abs(&eval.gradient),
            config_hash: cfg.hash(&feature_names),
            dropped_columns: dropped,
        },
        feature_names,
    };
    Ok((model, trace))
}

fn expand(problem: &Problem<'_>, theta: &[f64], n_cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_cols];
    for (k, &j) in problem.active.iter().enumerate() {
        out[j] = theta[k + 1];
    }
    out
}

/// Gradient of the unpenalized log-likelihood at the model's parameters,
/// ordered as `[intercept, coefficients...]` over every design column.
pub fn loglik_gradient(design: &Design, model: &LogisticModel) -> Vec<f64> {
    let p = design.n_cols();
    let mut g = vec![0.0; p + 1];
    for i in 0..design.n_rows() {
        let row = design.row(i);
        let eta = model.intercept + row.iter().zip(&model.coefficients).map(|(x, c)| x * c).sum::<f64>();
        let r = design.label(i) - sigmoid(eta);
        g[0] += r;
        for j in 0..p {
            g[j + 1] += row[j] * r;
        }
    }
    g
}

pub fn loglik(design: &Design, intercept: f64, coefficients: &[f64]) -> f64 {
    (0..design.n_rows())
        .map(|i| {
            let row = design.row(i);
            let eta = intercept + row.iter().zip(coefficients).map(|(x, c)| x * c).sum::<f64>();
            design.label(i) * eta - softplus(eta)
        })
        .sum()
}

/// Asymptotic standard errors from the inverse observed information.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardErrors {
    pub intercept: f64,
    /// `None` for dropped columns.
    pub coefficients: Vec<Option<f64>>,
}

pub fn standard_errors(design: &Design, model: &LogisticModel) -> Result<StandardErrors> {
    let active: Vec<usize> = (0..design.n_cols())
        .filter(|j| !model.meta.dropped_columns.contains(&design.names()[*j]))
        .collect();
    let p = active.len() + 1;
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut x = vec![0.0; p];
    x[0] = 1.0;
    for i in 0..design.n_rows() {
        let row = design.row(i);
        for (k, &j) in active.iter().enumerate() {
            x[k + 1] = row[j];
        }
        let eta = model.intercept + row.iter().zip(&model.coefficients).map(|(a, c)| a * c).sum::<f64>();
        let mu = sigmoid(eta);
        let w = mu * (1.0 - mu);
        for a in 0..p {
            for b in a..p {
                info[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    let cov = info
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("observed information is not positive definite".into()))?;
    let mut coefficients = vec![None; design.n_cols()];
    for (k, &j) in active.iter().enumerate() {
        coefficients[j] = Some(cov[(k + 1, k + 1)].sqrt());
    }
    Ok(StandardErrors {
        intercept: cov[(0, 0)].sqrt(),
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design_1d(rows: &[(f64, u8)]) -> Design {
        let mut d = Design::new(["x"]);
        for &(x, y) in rows {
            d.push(&[x], y);
        }
        d
    }

    #[test]
    fn balanced_binary_feature() {
        // Within both x groups the labels split 1:3, so the coefficient is 0
        // and the intercept is logit(0.25).
        let mut rows = Vec::new();
        for x in [0.0, 1.0] {
            rows.extend([(x, 1), (x, 0), (x, 0), (x, 0)]);
        }
        let m = fit_logistic(&design_1d(&rows), &TrainingConfig::default()).unwrap();
        assert!(m.coefficients[0].abs() < 1e-9);
        assert!((m.intercept - (0.25f64 / 0.75).ln()).abs() < 1e-9);
        assert!(m.meta.grad_norm < 1e-8);
    }

    #[test]
    fn objective_is_monotone_and_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Design::new(["a", "b"]);
        for _ in 0..2000 {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(0.0..1.0);
            let p = sigmoid(0.3 + 1.2 * a - 0.7 * b);
            d.push(&[a, b], u8::from(rng.gen::<f64>() < p));
        }
        let (m, trace) = fit_logistic_traced(&d, &TrainingConfig::default()).unwrap();
        assert!(trace.objective.windows(2).all(|w| w[1] >= w[0] - roundoff_slack(w[0])));
        assert!(m.meta.grad_norm < 1e-8);
        assert_eq!(trace.objective.len(), m.meta.iterations + 1);
    }

    #[test]
    fn error_paths() {
        let cfg = TrainingConfig::default();
        assert!(matches!(
            fit_logistic(&Design::new(["x"]), &cfg),
            Err(Error::NoInstances)
        ));
        let ones = design_1d(&[(0.0, 1), (1.0, 1)]);
        assert!(matches!(fit_logistic(&ones, &cfg), Err(Error::SingleClass { .. })));
        let separated = design_1d(&[(0.0, 0), (0.0, 0), (1.0, 1), (1.0, 1)]);
        assert!(matches!(fit_logistic(&separated, &cfg), Err(Error::Separation { .. })));
        let few = TrainingConfig {
            max_iterations: 1,
            ..cfg
        };
        let rows: Vec<_> = (0..40)
            .map(|i| (i as f64 / 10.0, u8::from(i % 3 == 0 || i > 30)))
            .collect();
        match fit_logistic(&design_1d(&rows), &few) {
            Err(Error::NonConvergence {
                iterations,
                grad_norm,
                coefficients,
                ..
            }) => {
                assert_eq!(iterations, 1);
                assert!(grad_norm > 0.0);
                assert_eq!(coefficients.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = TrainingConfig {
            ridge_epsilon: 0.0,
            ..cfg
        };
        assert!(matches!(fit_logistic(&design_1d(&rows), &bad), Err(Error::Config(_))));
    }

    #[test]
    fn constant_columns_are_dropped() {
        let mut d = Design::new(["x", "const", "zero"]);
        for i in 0..30 {
            d.push(&[i as f64 / 10.0, 5.0, 0.0], u8::from(i % 4 == 0 || i > 25));
        }
        let m = fit_logistic(&d, &TrainingConfig::default()).unwrap();
        assert_eq!(m.meta.dropped_columns, vec!["const".to_string(), "zero".to_string()]);
        assert_eq!(&m.coefficients[1..], &[0.0, 0.0]);
    }

    #[test]
    fn prediction_and_odds() {
        let m = LogisticModel::from_coefficients(["a", "b"], vec![0.0, 1.555], 0.0).unwrap();
        let mut x = BTreeMap::new();
        x.insert("a".to_string(), 0.0);
        x.insert("b".to_string(), 0.0);
        assert_eq!(m.predict_probability(&x).unwrap(), 0.5);
        x.insert("b".to_string(), 1.0);
        let p = m.predict_probability(&x).unwrap();
        assert!((p - 1.555f64.exp() / (1.0 + 1.555f64.exp())).abs() < 1e-15);
        assert!((p - 0.8256).abs() < 1e-4);
        assert_eq!(m.odds_ratio("a").unwrap(), 1.0);
        assert!(matches!(m.odds_ratio("c"), Err(Error::UnknownFeature(_))));
        x.remove("a");
        match m.predict_probability(&x) {
            Err(Error::MissingFeature(name)) => assert_eq!(name, "a"),
            other => panic!("unexpected {other:?}"),
        }
        let huge = LogisticModel::from_coefficients(["a"], vec![1000.0], 0.0).unwrap();
        let mut y = BTreeMap::new();
        y.insert("a".to_string(), 1.0);
        let p = huge.predict_probability(&y).unwrap();
        assert!(p > 0.0 && p < 1.0);
        y.insert("a".to_string(), -1.0);
        let p = huge.predict_probability(&y).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coefs: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let names: Vec<String> = (0..5).map(|i| format!("f{i}")).collect();
        let mut m = LogisticModel::from_coefficients(names, coefs, rng.gen()).unwrap();
        m.meta.loglik = -1_234.567_890_123_457;
        m.meta.grad_norm = 3.2e-11;
        let back = LogisticModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(LogisticModel::from_json(r#"{"feature_names":["a"],"coefficients":[],"intercept":0,"meta":{"iterations":0,"loglik":0,"grad_norm":0,"config_hash":""}}"#).is_err());
    }

    #[test]
    fn standard_errors_shrink_with_n() {
        let make = |n: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut d = Design::new(["a"]);
            for _ in 0..n {
                let a: f64 = rng.gen_range(-1.0..1.0);
                d.push(&[a], u8::from(rng.gen::<f64>() < sigmoid(0.5 * a)));
            }
            let m = fit_logistic(&d, &TrainingConfig::default()).unwrap();
            standard_errors(&d, &m).unwrap().coefficients[0].unwrap()
        };
        let (small, big) = (make(1000), make(16000));
        assert!((small / big - 4.0).abs() < 0.4, "{small} {big}");
    }
}
