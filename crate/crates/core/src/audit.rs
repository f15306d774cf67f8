//! Audits over inspection records and fitted models: cluster hit rates,
//! per-code rates, monthly series around a split date, a chain-controlled
//! temperature association and counterfactual rescoring without the
//! sanitarian-cluster contribution.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{target_label, ClusterLabel, InspectionRecord, InspectionType, ViolationCode, YearMonth};
use crate::error::{Error, Result};
use crate::features::{LabeledInstance, CLUSTER_FEATURES};
use crate::model::{fit_logistic, standard_errors, Design, LogisticModel, TrainingConfig};

pub const UNCLUSTERED: &str = "unclustered";

pub fn default_split() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()
}

fn rate(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Rate rounded half away from zero to three decimals.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn group_key(cluster: Option<ClusterLabel>) -> &'static str {
    cluster.map_or(UNCLUSTERED, ClusterLabel::as_str)
}

fn group_order(key: &str) -> usize {
    ClusterLabel::ALL
        .iter()
        .position(|l| l.as_str() == key)
        .unwrap_or(ClusterLabel::ALL.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRateRow {
    pub group: String,
    pub inspections: usize,
    pub hits: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRateTable {
    /// Clusters purple..brown, then the unclustered row; empty groups are omitted.
    pub rows: Vec<HitRateRow>,
    pub inspections: usize,
    pub hits: usize,
}

impl HitRateTable {
    pub fn row(&self, group: &str) -> Option<&HitRateRow> {
        self.rows.iter().find(|r| r.group == group)
    }

    pub fn overall_rate(&self) -> f64 {
        rate(self.hits, self.inspections)
    }
}

pub fn cluster_hit_rates(records: &[InspectionRecord]) -> HitRateTable {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = counts.entry(group_key(r.cluster)).or_default();
        e.0 += 1;
        e.1 += usize::from(target_label(r));
    }
    let mut rows: Vec<HitRateRow> = counts
        .into_iter()
        .map(|(g, (n, h))| HitRateRow {
            group: g.to_string(),
            inspections: n,
            hits: h,
            rate: rate(h, n),
        })
        .collect();
    rows.sort_by_key(|r| group_order(&r.group));
    HitRateTable {
        inspections: records.len(),
        hits: rows.iter().map(|r| r.hits).sum(),
        rows,
    }
}

/// Per-group counts of inspections citing each critical code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRateRow {
    pub group: String,
    pub inspections: usize,
    /// Index `c - 1` holds the count for code `c`.
    pub citing: [usize; 14],
}

impl CodeRateRow {
    pub fn rate(&self, code: ViolationCode) -> Option<f64> {
        code.is_critical()
            .then(|| rate(self.citing[code.get() as usize - 1], self.inspections))
    }
}

pub fn code_hit_rates_by_cluster(records: &[InspectionRecord]) -> Vec<CodeRateRow> {
    let mut acc: BTreeMap<&str, (usize, [usize; 14])> = BTreeMap::new();
    for r in records {
        let e = acc.entry(group_key(r.cluster)).or_default();
        e.0 += 1;
        for c in r.violations.iter().filter(|c| c.is_critical()) {
            e.1[c.get() as usize - 1] += 1;
        }
    }
    let mut rows: Vec<CodeRateRow> = acc
        .into_iter()
        .map(|(g, (n, citing))| CodeRateRow {
            group: g.to_string(),
            inspections: n,
            citing,
        })
        .collect();
    rows.sort_by_key(|r| group_order(&r.group));
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRate {
    pub month: YearMonth,
    pub inspections: usize,
    pub hits: usize,
    pub rate: f64,
}

/// A hit for `code = None` is any critical citation.
fn is_hit(r: &InspectionRecord, code: Option<ViolationCode>) -> bool {
    match code {
        Some(c) => r.cites(c),
        None => target_label(r) == 1,
    }
}

fn monthly<'a>(records: impl Iterator<Item = &'a InspectionRecord>, code: Option<ViolationCode>) -> Vec<MonthlyRate> {
    let mut acc: BTreeMap<YearMonth, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(YearMonth::of(r.date)).or_default();
        e.0 += 1;
        e.1 += usize::from(is_hit(r, code));
    }
    acc.into_iter()
        .map(|(month, (n, h))| MonthlyRate {
            month,
            inspections: n,
            hits: h,
            rate: rate(h, n),
        })
        .collect()
}

/// Calendar-month rates of `code` (any critical code when `None`) among
/// inspections of `kind` (every kind when `None`). Months without
/// inspections are absent.
pub fn monthly_hit_rate_series(
    records: &[InspectionRecord],
    code: Option<ViolationCode>,
    kind: Option<InspectionType>,
) -> Vec<MonthlyRate> {
    monthly(records.iter().filter(|r| kind.is_none_or(|k| r.kind == k)), code)
}

fn median_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        (x[n / 2 - 1] + x[n / 2]) / 2.0
    }
}

/// Five-number summary with Tukey hinges: for odd counts the median belongs
/// to both halves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub lower_hinge: f64,
    pub median: f64,
    pub upper_hinge: f64,
    pub max: f64,
    pub mean: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<BoxStats> {
        if values.is_empty() {
            return None;
        }
        let mut x = values.to_vec();
        x.sort_by(f64::total_cmp);
        let n = x.len();
        let half = n.div_ceil(2);
        Some(BoxStats {
            min: x[0],
            lower_hinge: median_sorted(&x[..half]),
            median: median_sorted(&x),
            upper_hinge: median_sorted(&x[n - half..]),
            max: x[n - 1],
            mean: x.iter().sum::<f64>() / n as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub months: Vec<MonthlyRate>,
    pub stats: BoxStats,
    pub inspections: usize,
    pub hits: usize,
    /// Hits over inspections for the whole period.
    pub pooled_rate: f64,
}

impl PeriodSummary {
    fn from_months(months: Vec<MonthlyRate>) -> Option<Self> {
        let rates: Vec<f64> = months.iter().map(|m| m.rate).collect();
        let stats = BoxStats::of(&rates)?;
        let inspections = months.iter().map(|m| m.inspections).sum();
        let hits = months.iter().map(|m| m.hits).sum();
        Some(PeriodSummary {
            months,
            stats,
            inspections,
            hits,
            pooled_rate: rate(hits, inspections),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrePostEntry {
    /// `None` is any critical code.
    pub code: Option<ViolationCode>,
    pub kind: InspectionType,
    pub pre: PeriodSummary,
    pub post: PeriodSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrePostSummary {
    pub split: NaiveDate,
    pub entries: Vec<PrePostEntry>,
}

impl PrePostSummary {
    pub fn get(&self, code: Option<ViolationCode>, kind: InspectionType) -> Option<&PrePostEntry> {
        self.entries.iter().find(|e| e.code == code && e.kind == kind)
    }
}

/// Monthly rate distributions before (`date < split`) and from `split` on,
/// for every code in `codes` and kind in `kinds`.
pub fn prepost_comparison(
    records: &[InspectionRecord],
    split: NaiveDate,
    kinds: &[InspectionType],
    codes: &[Option<ViolationCode>],
) -> Result<PrePostSummary> {
    let mut entries = Vec::new();
    for &kind in kinds {
        let of_kind: Vec<&InspectionRecord> = records.iter().filter(|r| r.kind == kind).collect();
        for &code in codes {
            let side = |before: bool, label: &str| {
                let months = monthly(of_kind.iter().copied().filter(|r| (r.date < split) == before), code);
                PeriodSummary::from_months(months)
                    .ok_or_else(|| Error::EmptyPeriod(format!("{label} {split}, {} inspections", kind.as_str())))
            };
            entries.push(PrePostEntry {
                code,
                kind,
                pre: side(true, "before")?,
                post: side(false, "from")?,
            });
        }
    }
    Ok(PrePostSummary { split, entries })
}

/// Mean daily maximum per calendar month.
pub fn monthly_temperatures(weather: &BTreeMap<NaiveDate, f64>) -> BTreeMap<YearMonth, f64> {
    let mut acc: BTreeMap<YearMonth, (f64, usize)> = BTreeMap::new();
    for (d, t) in weather {
        let e = acc.entry(YearMonth::of(*d)).or_default();
        e.0 += t;
        e.1 += 1;
    }
    acc.into_iter().map(|(m, (s, n))| (m, s / n as f64)).collect()
}

/// The `k` chain keys with the most records; ties break by key.
pub fn top_chains(records: &[InspectionRecord], k: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.facility.chain_key.is_empty()) {
        *counts.entry(r.facility.chain_key.as_str()).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(c, _)| c.to_string()).collect()
}

pub const TEMPERATURE_COLUMN: &str = "monthly_tmax";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalAssociation {
    pub code: ViolationCode,
    pub coefficient: f64,
    pub std_error: f64,
    /// Records entering the regression.
    pub n: usize,
    pub chains: Vec<String>,
    /// Chains whose outcome never varies; their fixed effect is unbounded and
    /// they carry no information about the temperature coefficient.
    pub constant_outcome_chains: Vec<String>,
}

/// Logit of citing `code` on chain fixed effects plus the monthly mean
/// temperature of the inspection month. Records outside `chains` are ignored.
/// The first retained chain is the reference level.
pub fn seasonal_association(
    records: &[InspectionRecord],
    chains: &[String],
    monthly_temps: &BTreeMap<YearMonth, f64>,
    code: ViolationCode,
    cfg: &TrainingConfig,
) -> Result<SeasonalAssociation> {
    let wanted: BTreeSet<&str> = chains.iter().map(String::as_str).collect();
    let selected: Vec<&InspectionRecord> = records
        .iter()
        .filter(|r| wanted.contains(r.facility.chain_key.as_str()))
        .collect();

    let mut outcome: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &selected {
        let e = outcome.entry(r.facility.chain_key.as_str()).or_default();
        e.0 += 1;
        e.1 += usize::from(r.cites(code));
    }
    let (kept, constant): (Vec<&str>, Vec<&str>) = chains
        .iter()
        .map(String::as_str)
        .filter(|c| outcome.contains_key(c))
        .partition(|c| {
            let (n, h) = outcome[c];
            h > 0 && h < n
        });
    let level: BTreeMap<&str, usize> = kept.iter().enumerate().map(|(i, c)| (*c, i)).collect();

    let mut names = vec![TEMPERATURE_COLUMN.to_string()];
    names.extend(kept.iter().skip(1).map(|c| format!("chain:{c}")));
    let mut design = Design::new(names);
    let mut row = vec![0.0; kept.len().max(1)];
    for r in selected {
        let Some(&l) = level.get(r.facility.chain_key.as_str()) else {
            continue;
        };
        let month = YearMonth::of(r.date);
        let t = *monthly_temps
            .get(&month)
            .ok_or_else(|| Error::MissingTemperature(month.to_string()))?;
        row.iter_mut().for_each(|v| *v = 0.0);
        row[0] = t;
        if l > 0 {
            row[l] = 1.0;
        }
        design.push(&row, u8::from(r.cites(code)));
    }

    let model = fit_logistic(&design, cfg)?;
    if model.meta.dropped_columns.iter().any(|c| c == TEMPERATURE_COLUMN) {
        return Err(Error::DroppedColumn(TEMPERATURE_COLUMN.into()));
    }
    let se = standard_errors(&design, &model)?;
    Ok(SeasonalAssociation {
        code,
        coefficient: model.coefficients[0],
        std_error: se.coefficients[0].expect("temperature column kept"),
        n: design.n_rows(),
        chains: kept.iter().map(|c| c.to_string()).collect(),
        constant_outcome_chains: constant.iter().map(|c| c.to_string()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterfactualMode {
    ZeroOut,
    ReferenceMean,
}

impl CounterfactualMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CounterfactualMode::ZeroOut => "zero_out",
            CounterfactualMode::ReferenceMean => "reference_mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero_out" => Ok(CounterfactualMode::ZeroOut),
            "reference_mean" => Ok(CounterfactualMode::ReferenceMean),
            other => Err(Error::Config(format!(
                "unknown counterfactual mode {other:?}; expected zero_out or reference_mean"
            ))),
        }
    }
}

fn cluster_indices(model: &LogisticModel) -> Result<[usize; 6]> {
    let mut out = [0; 6];
    for (slot, name) in out.iter_mut().zip(CLUSTER_FEATURES) {
        *slot = model.index_of(name).ok_or(Error::NoClusterFeatures)?;
    }
    Ok(out)
}

/// Inspection-count-weighted mean of the cluster coefficients over the
/// clustered instances; 0 when none is clustered.
pub fn reference_cluster_coefficient(model: &LogisticModel, instances: &[LabeledInstance]) -> Result<f64> {
    let idx = cluster_indices(model)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for c in instances.iter().filter_map(|i| i.features.cluster()) {
        sum += model.coefficients[idx[c.index()]];
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Copy of `model` with every cluster coefficient set to `value`.
pub fn with_cluster_coefficients(model: &LogisticModel, value: f64) -> Result<LogisticModel> {
    let idx = cluster_indices(model)?;
    let mut out = model.clone();
    for i in idx {
        out.coefficients[i] = value;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRow {
    pub inspection_id: u64,
    pub establishment_id: String,
    pub cluster: Option<ClusterLabel>,
    pub label: u8,
    pub baseline_probability: f64,
    pub counterfactual_probability: f64,
    /// 1-based position by descending probability, ties by inspection id.
    pub baseline_rank: usize,
    pub counterfactual_rank: usize,
}

impl CounterfactualRow {
    /// Positive when the instance moves later in the schedule.
    pub fn rank_shift(&self) -> i64 {
        self.counterfactual_rank as i64 - self.baseline_rank as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPositions {
    pub group: String,
    pub count: usize,
    pub max_baseline_rank: usize,
    pub max_counterfactual_rank: usize,
    pub mean_rank_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub mode: CounterfactualMode,
    /// Value every cluster coefficient was set to.
    pub replacement: f64,
    /// In input order.
    pub rows: Vec<CounterfactualRow>,
}

impl CounterfactualReport {
    /// Instances on different sides of position `threshold` in the two rankings.
    pub fn crossings(&self, threshold: usize) -> usize {
        self.rows
            .iter()
            .filter(|r| (r.baseline_rank <= threshold) != (r.counterfactual_rank <= threshold))
            .count()
    }

    pub fn positions_by_cluster(&self) -> Vec<ClusterPositions> {
        let mut acc: BTreeMap<&str, Vec<&CounterfactualRow>> = BTreeMap::new();
        for r in &self.rows {
            acc.entry(group_key(r.cluster)).or_default().push(r);
        }
        let mut out: Vec<ClusterPositions> = acc
            .into_iter()
            .map(|(g, rows)| ClusterPositions {
                group: g.to_string(),
                count: rows.len(),
                max_baseline_rank: rows.iter().map(|r| r.baseline_rank).max().unwrap_or(0),
                max_counterfactual_rank: rows.iter().map(|r| r.counterfactual_rank).max().unwrap_or(0),
                mean_rank_shift: rows.iter().map(|r| r.rank_shift() as f64).sum::<f64>() / rows.len() as f64,
            })
            .collect();
        out.sort_by_key(|p| group_order(&p.group));
        out
    }
}

fn ranks(probs: &[f64], ids: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(ids[a].cmp(&ids[b])));
    let mut out = vec![0; probs.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos + 1;
    }
    out
}

/// Rescores `test` with the cluster contribution removed (`ZeroOut`) or
/// replaced by the weighted mean cluster coefficient (`ReferenceMean`).
pub fn sanitarian_counterfactual(
    model: &LogisticModel,
    test: &[LabeledInstance],
    mode: CounterfactualMode,
) -> Result<CounterfactualReport> {
    let replacement = match mode {
        CounterfactualMode::ZeroOut => 0.0,
        CounterfactualMode::ReferenceMean => reference_cluster_coefficient(model, test)?,
    };
    let neutral = with_cluster_coefficients(model, replacement)?;
    let ids: Vec<u64> = test.iter().map(|i| i.inspection_id).collect();
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(Error::Config("duplicate inspection ids in test set".into()));
    }
    let base: Vec<f64> = test
        .iter()
        .map(|i| model.predict_probability(&i.features))
        .collect::<Result<_>>()?;
    let cf: Vec<f64> = test
        .iter()
        .map(|i| neutral.predict_probability(&i.features))
        .collect::<Result<_>>()?;
    let (rb, rc) = (ranks(&base, &ids), ranks(&cf, &ids));
    let rows = test
        .iter()
        .enumerate()
        .map(|(k, i)| CounterfactualRow {
            inspection_id: i.inspection_id,
            establishment_id: i.establishment_id.clone(),
            cluster: i.features.cluster(),
            label: i.label,
            baseline_probability: base[k],
            counterfactual_probability: cf[k],
            baseline_rank: rb[k],
            counterfactual_rank: rc[k],
        })
        .collect();
    Ok(CounterfactualReport {
        mode,
        replacement,
        rows,
    })
}

fn code_name(code: Option<ViolationCode>) -> String {
    code.map_or_else(|| "any".to_string(), |c| format!("V{}", c.get()))
}

/// `hit_rates.csv`: group, inspections, hits, rate, rate_3dp.
pub fn write_hit_rate_table<W: Write>(table: &HitRateTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "inspections", "hits", "rate", "rate_3dp"])?;
    for r in &table.rows {
        out.write_record([
            r.group.clone(),
            r.inspections.to_string(),
            r.hits.to_string(),
            r.rate.to_string(),
            format!("{:.3}", r.rate),
        ])?;
    }
    out.write_record([
        "all".to_string(),
        table.inspections.to_string(),
        table.hits.to_string(),
        table.overall_rate().to_string(),
        format!("{:.3}", table.overall_rate()),
    ])?;
    out.flush()?;
    Ok(())
}

/// `codes_by_cluster.csv`: group, code, inspections, citing, rate.
pub fn write_code_rates<W: Write>(rows: &[CodeRateRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "code", "inspections", "citing", "rate"])?;
    for r in rows {
        for c in ViolationCode::critical_codes() {
            out.write_record([
                r.group.clone(),
                code_name(Some(c)),
                r.inspections.to_string(),
                r.citing[c.get() as usize - 1].to_string(),
                r.rate(c).unwrap().to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `monthly.csv`: month, inspections, hits, rate.
pub fn write_monthly_series<W: Write>(series: &[MonthlyRate], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["month", "inspections", "hits", "rate"])?;
    for m in series {
        out.write_record([
            m.month.to_string(),
            m.inspections.to_string(),
            m.hits.to_string(),
            m.rate.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `prepost.csv`: code, kind, period, month, inspections, hits, rate.
pub fn write_prepost<W: Write>(summary: &PrePostSummary, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["code", "kind", "period", "month", "inspections", "hits", "rate"])?;
    for e in &summary.entries {
        for (period, s) in [("pre", &e.pre), ("post", &e.post)] {
            for m in &s.months {
                out.write_record([
                    code_name(e.code),
                    e.kind.as_str().to_string(),
                    period.to_string(),
                    m.month.to_string(),
                    m.inspections.to_string(),
                    m.hits.to_string(),
                    m.rate.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `counterfactual.csv`, one row per instance in input order.
pub fn write_counterfactual<W: Write>(report: &CounterfactualReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "inspection_id",
        "establishment_id",
        "cluster",
        "label",
        "baseline_probability",
        "counterfactual_probability",
        "baseline_rank",
        "counterfactual_rank",
        "rank_shift",
    ])?;
    for r in &report.rows {
        out.write_record([
            r.inspection_id.to_string(),
            r.establishment_id.clone(),
            group_key(r.cluster).to_string(),
            r.label.to_string(),
            r.baseline_probability.to_string(),
            r.counterfactual_probability.to_string(),
            r.baseline_rank.to_string(),
            r.counterfactual_rank.to_string(),
            r.rank_shift().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
