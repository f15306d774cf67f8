//! SSE-optimal partition of scalar values into contiguous groups, solved by
//! dynamic programming over the sorted distinct values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::ClusterLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering1d {
    /// Cluster index per input value; clusters are numbered by ascending center.
    pub assignment: Vec<usize>,
    pub centers: Vec<f64>,
    pub sizes: Vec<usize>,
    pub sse: f64,
}

/// Splits `values` into at most `k` groups minimizing the within-group sum of
/// squared deviations. Equal values always share a group; when there are
/// fewer than `k` distinct values each one forms its own group.
pub fn optimal_1d(values: &[f64], k: usize) -> Result<Clustering1d> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if values.is_empty() {
        return Err(Error::Config("no values to cluster".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("cluster values must be finite".into()));
    }

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match distinct.last_mut() {
            Some((x, w)) if *x == v => *w += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let m = distinct.len();
    let groups = k.min(m);

    // Prefix sums of weights and of centered first/second moments.
    let shift = distinct[m / 2].0;
    let mut pw = vec![0.0; m + 1];
    let mut ps = vec![0.0; m + 1];
    let mut pq = vec![0.0; m + 1];
    for (i, &(x, w)) in distinct.iter().enumerate() {
        let (w, y) = (w as f64, x - shift);
        pw[i + 1] = pw[i] + w;
        ps[i + 1] = ps[i] + w * y;
        pq[i + 1] = pq[i] + w * y * y;
    }
    // SSE of distinct[i..j].
    let cost = |i: usize, j: usize| -> f64 {
        let w = pw[j] - pw[i];
        let s = ps[j] - ps[i];
        (pq[j] - pq[i] - s * s / w).max(0.0)
    };

    // best[g][j]: min SSE of distinct[..j] in g groups; split[g][j]: start of the last group.
    let mut best = vec![vec![f64::INFINITY; m + 1]; groups + 1];
    let mut split = vec![vec![0usize; m + 1]; groups + 1];
    best[0][0] = 0.0;
    for g in 1..=groups {
        for j in g..=m {
            for i in (g - 1)..j {
                let c = best[g - 1][i] + cost(i, j);
                if c < best[g][j] {
                    best[g][j] = c;
                    split[g][j] = i;
                }
            }
        }
    }

    let mut bounds = Vec::with_capacity(groups);
    let mut j = m;
    for g in (1..=groups).rev() {
        let i = split[g][j];
        bounds.push((i, j));
        j = i;
    }
    bounds.reverse();

    let group_of_distinct: Vec<usize> = {
        let mut out = vec![0; m];
        for (g, &(i, j)) in bounds.iter().enumerate() {
            out[i..j].iter_mut().for_each(|s| *s = g);
        }
        out
    };
    let lookup = |v: f64| {
        let idx = distinct
            .binary_search_by(|(x, _)| x.total_cmp(&v))
            .expect("value present");
        group_of_distinct[idx]
    };
    let assignment: Vec<usize> = values.iter().map(|&v| lookup(v)).collect();

    let mut sums = vec![0.0; groups];
    let mut sizes = vec![0usize; groups];
    for (&v, &g) in values.iter().zip(&assignment) {
        sums[g] += v;
        sizes[g] += 1;
    }
    let centers: Vec<f64> = sums.iter().zip(&sizes).map(|(s, &n)| s / n as f64).collect();
    let sse = values
        .iter()
        .zip(&assignment)
        .map(|(&v, &g)| (v - centers[g]).powi(2))
        .sum();
    Ok(Clustering1d {
        assignment,
        centers,
        sizes,
        sse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: BTreeMap<String, ClusterLabel>,
    /// Mean per-sanitarian coefficient of each used cluster, purple first.
    pub means: Vec<(ClusterLabel, f64)>,
    pub sse: f64,
}

impl ClusterAssignment {
    pub fn get(&self, sanitarian: &str) -> Option<ClusterLabel> {
        self.labels.get(sanitarian).copied()
    }

    pub fn used_labels(&self) -> Vec<ClusterLabel> {
        self.means.iter().map(|(l, _)| *l).collect()
    }
}

/// Groups sanitarians by their coefficients and names the groups purple (highest mean)
/// through brown (lowest).
pub fn cluster_sanitarians(coefficients: &BTreeMap<String, f64>, k: usize) -> Result<ClusterAssignment> {
    if k > ClusterLabel::ALL.len() {
        return Err(Error::Config(format!("at most 6 clusters are named, got k={k}")));
    }
    let ids: Vec<&String> = coefficients.keys().collect();
    let values: Vec<f64> = coefficients.values().copied().collect();
    let c = optimal_1d(&values, k)?;
    let g = c.centers.len();
    // Centers ascend with the group index, so the label rank is reversed.
    let label_of = |group: usize| ClusterLabel::ALL[g - 1 - group];
    let labels = ids
        .into_iter()
        .zip(&c.assignment)
        .map(|(id, &grp)| (id.clone(), label_of(grp)))
        .collect();
    let means = (0..g).rev().map(|grp| (label_of(grp), c.centers[grp])).collect();
    Ok(ClusterAssignment {
        labels,
        means,
        sse: c.sse,
    })
}
