//! Seeded fixtures shared by the benchmarks.

use chrono::{Duration, NaiveDate};
use foodcast_core::ingest::{EventKind, PointEvent};
use foodcast_core::model::{sigmoid, Design};
use foodcast_core::{GeoPoint, ScheduleItem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2014, 1, 1).unwrap()
}

/// Logistic design with `p` columns, alternating continuous and binary.
pub fn logistic_design(n: usize, p: usize, seed: u64) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let betas: Vec<f64> = (0..p).map(|j| 0.8 - 0.3 * j as f64 / p as f64).collect();
    let mut d = Design::new((0..p).map(|j| format!("x{j}")));
    let mut row = vec![0.0; p];
    for _ in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if j % 2 == 0 {
                rng.gen_range(-1.0..1.0)
            } else {
                f64::from(u8::from(rng.gen_bool(0.3)))
            };
        }
        let eta = -1.5 + row.iter().zip(&betas).map(|(x, b)| x * b).sum::<f64>();
        d.push(&row, u8::from(rng.gen::<f64>() < sigmoid(eta)));
    }
    d
}

/// `n` burglaries scattered over roughly 10 km and a year.
pub fn events(n: usize, seed: u64) -> Vec<PointEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| PointEvent {
            kind: EventKind::Burglary,
            date: base_date() + Duration::days(rng.gen_range(0..365)),
            location: GeoPoint::new(41.84 + rng.gen_range(0.0..0.09), -87.70 + rng.gen_range(0.0..0.12)).unwrap(),
        })
        .collect()
}

pub fn coefficients(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// Test set over 40 days with a score correlated with the label.
pub fn schedule_items(n: usize, seed: u64) -> Vec<ScheduleItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = u8::from(rng.gen_bool(0.15) || i == 0);
            ScheduleItem {
                inspection_id: i as u64 + 1,
                date: base_date() + Duration::days(rng.gen_range(0..40)),
                label,
                score: Some(0.3 * f64::from(label) + rng.gen::<f64>()),
            }
        })
        .collect()
}
