//! Simulated inspection schedules under equal daily capacity, and the
//! evaluation metrics: mean and standard deviation of the day reduction for
//! positive establishments, first-half fraction, and the cumulative hit curve.
//!
//! Days are simulation days: position `p` (0-based) falls on day `p / capacity + 1`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LabeledInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "strategy")]
pub enum Strategy {
    /// Order of the actual inspections.
    Usual,
    Random {
        seed: u64,
    },
    /// Hindsight: every positive first.
    Best,
    /// Hindsight: every positive last.
    Worst,
    /// Descending model score.
    Model,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Usual => "usual",
            Strategy::Random { .. } => "random",
            Strategy::Best => "best",
            Strategy::Worst => "worst",
            Strategy::Model => "model",
        }
    }

    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "usual" => Ok(Strategy::Usual),
            "random" => Ok(Strategy::Random { seed }),
            "best" => Ok(Strategy::Best),
            "worst" => Ok(Strategy::Worst),
            "model" => Ok(Strategy::Model),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }

    pub fn all(seed: u64) -> [Strategy; 5] {
        [
            Strategy::Usual,
            Strategy::Random { seed },
            Strategy::Best,
            Strategy::Worst,
            Strategy::Model,
        ]
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One test-set inspection as the scheduler sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleItem {
    pub inspection_id: u64,
    pub date: NaiveDate,
    pub label: u8,
    pub score: Option<f64>,
}

impl ScheduleItem {
    pub fn from_instances(instances: &[LabeledInstance], scores: Option<&[f64]>) -> Vec<ScheduleItem> {
        instances
            .iter()
            .enumerate()
            .map(|(i, inst)| ScheduleItem {
                inspection_id: inst.inspection_id,
                date: inst.date,
                label: inst.label,
                score: scores.map(|s| s[i]),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub ordering: Vec<u64>,
    pub capacity: usize,
    pub strategy: Strategy,
    positions: HashMap<u64, usize>,
}

impl Schedule {
    fn new(ordering: Vec<u64>, capacity: usize, strategy: Strategy) -> Self {
        let positions = ordering.iter().enumerate().map(|(p, &id)| (id, p)).collect();
        Schedule {
            ordering,
            capacity,
            strategy,
            positions,
        }
    }

    /// 0-based position in the ordering.
    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    /// 1-based simulated day.
    pub fn day_of(&self, id: u64) -> Option<u32> {
        self.position_of(id).map(|p| (p / self.capacity) as u32 + 1)
    }

    pub fn num_days(&self) -> u32 {
        self.ordering.len().div_ceil(self.capacity) as u32
    }

    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }
}

fn usual_order(items: &[ScheduleItem]) -> Vec<&ScheduleItem> {
    let mut v: Vec<&ScheduleItem> = items.iter().collect();
    v.sort_by_key(|i| (i.date, i.inspection_id));
    v
}

pub fn make_schedule(items: &[ScheduleItem], strategy: Strategy, capacity: usize) -> Result<Schedule> {
    if capacity == 0 {
        return Err(Error::Config("capacity must be positive".into()));
    }
    let mut ids = BTreeSet::new();
    if let Some(dup) = items.iter().find(|i| !ids.insert(i.inspection_id)) {
        return Err(Error::Config(format!(
            "duplicate inspection_id {} in schedule input",
            dup.inspection_id
        )));
    }
    let ordering: Vec<u64> = match strategy {
        Strategy::Usual => usual_order(items).iter().map(|i| i.inspection_id).collect(),
        Strategy::Best | Strategy::Worst => {
            let first = u8::from(strategy == Strategy::Best);
            let usual = usual_order(items);
            let (a, b): (Vec<_>, Vec<_>) = usual.into_iter().partition(|i| i.label == first);
            a.into_iter().chain(b).map(|i| i.inspection_id).collect()
        }
        Strategy::Model => {
            let mut scored = Vec::with_capacity(items.len());
            for i in items {
                match i.score {
                    Some(s) if !s.is_nan() => scored.push((s, i.inspection_id)),
                    _ => return Err(Error::MissingScores),
                }
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            scored.into_iter().map(|(_, id)| id).collect()
        }
        Strategy::Random { seed } => {
            let mut v: Vec<u64> = ids.into_iter().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            v.shuffle(&mut rng);
            v
        }
    };
    Ok(Schedule::new(ordering, capacity, strategy))
}

/// Test-set size over the number of distinct actual inspection dates, rounded up.
pub fn default_capacity(items: &[ScheduleItem]) -> usize {
    let dates: BTreeSet<NaiveDate> = items.iter().map(|i| i.date).collect();
    if dates.is_empty() {
        return 1;
    }
    items.len().div_ceil(dates.len())
}

/// Simulated day of each inspection under the usual ordering.
pub fn actual_days(items: &[ScheduleItem], capacity: usize) -> Result<HashMap<u64, u32>> {
    let usual = make_schedule(items, Strategy::Usual, capacity)?;
    Ok(usual
        .ordering
        .iter()
        .map(|&id| (id, usual.day_of(id).expect("scheduled")))
        .collect())
}

/// `actual_day - simulated_day` for every positive instance, in ordering of
/// `items`. Positive values mean the establishment is reached earlier.
pub fn day_reductions(schedule: &Schedule, actual: &HashMap<u64, u32>, items: &[ScheduleItem]) -> Result<Vec<i64>> {
    items
        .iter()
        .filter(|i| i.label == 1)
        .map(|i| {
            let id = i.inspection_id;
            match (actual.get(&id), schedule.day_of(id)) {
                (Some(&a), Some(s)) => Ok(a as i64 - s as i64),
                _ => Err(Error::Config(format!("inspection {id} missing from schedule"))),
            }
        })
        .collect()
}

/// Mean and population standard deviation of the day reductions.
pub fn day_reduction_stats(
    schedule: &Schedule,
    actual: &HashMap<u64, u32>,
    items: &[ScheduleItem],
) -> Result<(f64, f64)> {
    let r = day_reductions(schedule, actual, items)?;
    if r.is_empty() {
        return Err(Error::EmptyHitSet);
    }
    let n = r.len() as i128;
    let sum: i128 = r.iter().map(|&x| x as i128).sum();
    let sumsq: i128 = r.iter().map(|&x| (x as i128) * (x as i128)).sum();
    let mean = sum as f64 / n as f64;
    let var = (n * sumsq - sum * sum) as f64 / (n * n) as f64;
    Ok((mean, var.sqrt()))
}

/// Share of positives among the first `ceil(N/2)` positions.
pub fn first_half_fraction(schedule: &Schedule, items: &[ScheduleItem]) -> Result<f64> {
    let labels: HashMap<u64, u8> = items.iter().map(|i| (i.inspection_id, i.label)).collect();
    let total = items.iter().filter(|i| i.label == 1).count();
    if total == 0 {
        return Err(Error::EmptyHitSet);
    }
    let half = schedule.len().div_ceil(2);
    let early = schedule.ordering[..half]
        .iter()
        .filter(|id| labels.get(id) == Some(&1))
        .count();
    Ok(early as f64 / total as f64)
}

/// Cumulative positives found by the end of each simulated day.
pub fn hit_curve(schedule: &Schedule, items: &[ScheduleItem]) -> Vec<(u32, u32)> {
    let labels: HashMap<u64, u8> = items.iter().map(|i| (i.inspection_id, i.label)).collect();
    let mut curve = Vec::with_capacity(schedule.num_days() as usize);
    let mut hits = 0u32;
    for (day, chunk) in schedule.ordering.chunks(schedule.capacity).enumerate() {
        hits += chunk.iter().filter(|id| labels.get(id) == Some(&1)).count() as u32;
        curve.push((day as u32 + 1, hits));
    }
    curve
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleMetrics {
    pub strategy: Strategy,
    pub capacity: usize,
    pub n_inspections: usize,
    pub n_hits: usize,
    pub hit_rate: f64,
    pub mean_day_reduction: f64,
    pub std_day_reduction: f64,
    pub first_half_fraction: f64,
    #[serde(skip)]
    pub hit_curve: Vec<(u32, u32)>,
}

pub fn evaluate(items: &[ScheduleItem], strategy: Strategy, capacity: usize) -> Result<(Schedule, ScheduleMetrics)> {
    let schedule = make_schedule(items, strategy, capacity)?;
    let actual = actual_days(items, capacity)?;
    let (mean, std) = day_reduction_stats(&schedule, &actual, items)?;
    let n_hits = items.iter().filter(|i| i.label == 1).count();
    let metrics = ScheduleMetrics {
        strategy,
        capacity,
        n_inspections: items.len(),
        n_hits,
        hit_rate: n_hits as f64 / items.len() as f64,
        mean_day_reduction: mean,
        std_day_reduction: std,
        first_half_fraction: first_half_fraction(&schedule, items)?,
        hit_curve: hit_curve(&schedule, items),
    };
    Ok((schedule, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomSummary {
    pub replicates: usize,
    pub first_seed: u64,
    pub mean_first_half_fraction: f64,
    pub mean_day_reduction: f64,
}

/// Random-strategy metrics averaged over seeds `first_seed..first_seed + replicates`.
pub fn random_average(
    items: &[ScheduleItem],
    capacity: usize,
    first_seed: u64,
    replicates: usize,
) -> Result<RandomSummary> {
    if replicates == 0 {
        return Err(Error::Config("replicates must be positive".into()));
    }
    let actual = actual_days(items, capacity)?;
    let (mut fh, mut md) = (0.0, 0.0);
    for k in 0..replicates as u64 {
        let s = make_schedule(items, Strategy::Random { seed: first_seed + k }, capacity)?;
        fh += first_half_fraction(&s, items)?;
        md += day_reduction_stats(&s, &actual, items)?.0;
    }
    Ok(RandomSummary {
        replicates,
        first_seed,
        mean_first_half_fraction: fh / replicates as f64,
        mean_day_reduction: md / replicates as f64,
    })
}

/// `schedule.csv`: inspection_id, position (1-based), day, score, label.
pub fn write_schedule_csv<W: Write>(schedule: &Schedule, items: &[ScheduleItem], w: W) -> Result<()> {
    let by_id: HashMap<u64, &ScheduleItem> = items.iter().map(|i| (i.inspection_id, i)).collect();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["inspection_id", "position", "day", "score", "label"])?;
    for (pos, id) in schedule.ordering.iter().enumerate() {
        let item = by_id[id];
        out.write_record([
            id.to_string(),
            (pos + 1).to_string(),
            schedule.day_of(*id).unwrap().to_string(),
            item.score.map(|s| s.to_string()).unwrap_or_default(),
            item.label.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `hitcurve.csv`: strategy, day, cumulative_hits.
pub fn write_hit_curves<W: Write>(metrics: &[ScheduleMetrics], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["strategy", "day", "cumulative_hits"])?;
    for m in metrics {
        for (day, hits) in &m.hit_curve {
            out.write_record([m.strategy.name().to_string(), day.to_string(), hits.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn items(labels: &[u8], scores: &[f64]) -> Vec<ScheduleItem> {
        let base = NaiveDate::from_ymd_opt(2014, 9, 1).unwrap();
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| ScheduleItem {
                inspection_id: i as u64 + 1,
                date: base + Duration::days(i as i64),
                label: l,
                score: scores.get(i).copied(),
            })
            .collect()
    }

    #[test]
    fn model_puts_top_score_on_day_one() {
        // A, B, C, D with only C positive and scored highest.
        let it = items(&[0, 0, 1, 0], &[0.2, 0.1, 0.9, 0.05]);
        let s = make_schedule(&it, Strategy::Model, 2).unwrap();
        assert_eq!(s.day_of(3), Some(1));
        let actual = actual_days(&it, 2).unwrap();
        assert_eq!(actual[&3], 2);
        let (mean, std) = day_reduction_stats(&s, &actual, &it).unwrap();
        assert_eq!((mean, std), (1.0, 0.0));
    }

    #[test]
    fn hand_case_model_order_cabd() {
        let it = items(&[0, 0, 1, 0], &[0.5, 0.4, 0.9, 0.1]);
        let s = make_schedule(&it, Strategy::Model, 2).unwrap();
        assert_eq!(s.ordering, vec![3, 1, 2, 4]);
    }

    #[test]
    fn usual_against_itself_is_zero() {
        let it = items(&[1, 0, 1, 1, 0], &[]);
        let s = make_schedule(&it, Strategy::Usual, 2).unwrap();
        let actual = actual_days(&it, 2).unwrap();
        assert_eq!(day_reduction_stats(&s, &actual, &it).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn best_and_worst_first_half() {
        let it = items(&[0, 1, 0, 0, 1, 0, 0], &[]);
        let best = make_schedule(&it, Strategy::Best, 3).unwrap();
        let worst = make_schedule(&it, Strategy::Worst, 3).unwrap();
        assert_eq!(first_half_fraction(&best, &it).unwrap(), 1.0);
        assert_eq!(first_half_fraction(&worst, &it).unwrap(), 0.0);
        assert_eq!(hit_curve(&best, &it), vec![(1, 2), (2, 2), (3, 2)]);
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let it = items(&[0, 1, 0, 0, 1, 0, 0, 1, 1, 0], &[]);
        let a = make_schedule(&it, Strategy::Random { seed: 9 }, 2).unwrap();
        let b = make_schedule(&it, Strategy::Random { seed: 9 }, 2).unwrap();
        let c = make_schedule(&it, Strategy::Random { seed: 10 }, 2).unwrap();
        assert_eq!(a.ordering, b.ordering);
        assert_ne!(a.ordering, c.ordering);
    }

    #[test]
    fn errors() {
        let it = items(&[0, 1], &[]);
        assert!(matches!(make_schedule(&it, Strategy::Usual, 0), Err(Error::Config(_))));
        assert!(matches!(
            make_schedule(&it, Strategy::Model, 1),
            Err(Error::MissingScores)
        ));
        let none = items(&[0, 0, 0], &[]);
        let s = make_schedule(&none, Strategy::Usual, 1).unwrap();
        assert!(matches!(first_half_fraction(&s, &none), Err(Error::EmptyHitSet)));
        let actual = actual_days(&none, 1).unwrap();
        assert!(matches!(
            day_reduction_stats(&s, &actual, &none),
            Err(Error::EmptyHitSet)
        ));
        assert_eq!(hit_curve(&s, &none), vec![(1, 0), (2, 0), (3, 0)]);
    }

    #[test]
    fn capacity_default() {
        let base = NaiveDate::from_ymd_opt(2014, 9, 1).unwrap();
        let it: Vec<_> = (0..7)
            .map(|i| ScheduleItem {
                inspection_id: i,
                date: base + Duration::days((i / 3) as i64),
                label: 0,
                score: None,
            })
            .collect();
        assert_eq!(default_capacity(&it), 3); // 7 rows over 3 dates
        assert_eq!(default_capacity(&[]), 1);
    }

    #[test]
    fn six_item_curve_recount() {
        let it = items(&[0, 1, 0, 0, 0, 1], &[0.3, 0.2, 0.9, 0.8, 0.1, 0.7]);
        let s = make_schedule(&it, Strategy::Model, 2).unwrap();
        // Ordering 3, 4, 6, 1, 2, 5 -> days [3,4] [6,1] [2,5].
        assert_eq!(s.ordering, vec![3, 4, 6, 1, 2, 5]);
        assert_eq!(hit_curve(&s, &it), vec![(1, 0), (2, 1), (3, 2)]);
    }

    #[test]
    fn csv_outputs() {
        let it = items(&[0, 1, 0], &[0.1, 0.9, 0.4]);
        let (s, m) = evaluate(&it, Strategy::Model, 2).unwrap();
        let mut buf = Vec::new();
        write_schedule_csv(&s, &it, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "2,1,1,0.9,1");
        let mut buf = Vec::new();
        write_hit_curves(&[m], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("model,1,1"));
    }
}
