//! One-dimensional k-means quantization.
//!
//! Data are sorted once; with sorted centroids every cluster is a contiguous
//! run of the data, so a Lloyd iteration costs `O(k log n)` with prefix sums.

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use super::{Atoms, DeterministicProfiles, QuantizedMarginal, Role, Scenario, ScenarioSet};
use crate::error::{EmsError, Result};
use crate::rng::{self, Domain};

pub const KMEANS_MAX_ITER: usize = 100;
const KMEANS_RESTARTS: u64 = 3;

fn count_distinct(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[1] != w[0]).count()
}

/// Within-cluster sum of squares of `data` against its nearest centers.
pub fn wcss(data: &[f64], centers: &[f64]) -> f64 {
    data.iter()
        .map(|x| {
            centers
                .iter()
                .map(|c| (x - c) * (x - c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

struct Prefix {
    sum: Vec<f64>,
}

impl Prefix {
    fn new(sorted: &[f64]) -> Self {
        let mut sum = Vec::with_capacity(sorted.len() + 1);
        sum.push(0.0);
        let mut acc = 0.0;
        for &x in sorted {
            acc += x;
            sum.push(acc);
        }
        Self { sum }
    }

    fn mean(&self, lo: usize, hi: usize) -> f64 {
        (self.sum[hi] - self.sum[lo]) / (hi - lo) as f64
    }
}

fn seed_plus_plus(sorted: &[f64], k: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, Domain::KMeans, 0);
    let n = sorted.len();
    let mut centers = vec![sorted[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = sorted.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if acc > target && d > 0.0 {
                pick = i;
                break;
            }
        }
        let c = sorted[pick];
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(sorted) {
            *d = d.min((x - c).powi(2));
        }
    }
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    centers
}

/// Boundaries of the contiguous clusters induced by sorted centers.
fn partition(sorted: &[f64], centers: &[f64]) -> Vec<usize> {
    let mut cuts = Vec::with_capacity(centers.len() + 1);
    cuts.push(0);
    for pair in centers.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        cuts.push(sorted.partition_point(|&x| x <= mid));
    }
    cuts.push(sorted.len());
    cuts
}

fn lloyd(sorted: &[f64], prefix: &Prefix, mut centers: Vec<f64>, max_iter: usize) -> (Vec<f64>, Vec<usize>) {
    let mut cuts = partition(sorted, &centers);
    for _ in 0..max_iter {
        for (c, w) in centers.iter_mut().zip(cuts.windows(2)) {
            if w[1] > w[0] {
                *c = prefix.mean(w[0], w[1]);
            }
        }
        let next = partition(sorted, &centers);
        if next == cuts {
            break;
        }
        cuts = next;
    }
    (centers, cuts)
}

/// Quantizes sorted data to at most `k` atoms (centroid, cluster mass).
///
/// Fewer atoms are returned when the data have fewer distinct values.
/// Deterministic for a given `seed`.
pub fn kmeans_1d(sorted: &[f64], k: usize, seed: u64) -> Atoms {
    assert!(!sorted.is_empty() && k >= 1, "k-means needs data and k >= 1");
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "data must be sorted");
    let n = sorted.len();
    let prefix = Prefix::new(sorted);
    let k = k.min(count_distinct(sorted));
    if k == 1 {
        return Atoms::point(prefix.mean(0, n));
    }
    if k == count_distinct(sorted) {
        // every distinct value is its own cluster
        let mut support = Vec::with_capacity(k);
        let mut probs = Vec::with_capacity(k);
        let mut i = 0;
        while i < n {
            let j = i + sorted[i..].partition_point(|&x| x == sorted[i]);
            support.push(sorted[i]);
            probs.push((j - i) as f64 / n as f64);
            i = j;
        }
        return Atoms { support, probs };
    }
    let mut best: Option<(f64, Vec<f64>, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let init = seed_plus_plus(sorted, k, seed.wrapping_add(restart));
        let (centers, cuts) = lloyd(sorted, &prefix, init, KMEANS_MAX_ITER);
        let cost: f64 = cuts
            .windows(2)
            .zip(&centers)
            .map(|(w, c)| sorted[w[0]..w[1]].iter().map(|x| (x - c) * (x - c)).sum::<f64>())
            .sum();
        if best.as_ref().is_none_or(|(b, _, _)| cost < *b) {
            best = Some((cost, centers, cuts));
        }
    }
    let (_, centers, cuts) = best.unwrap();
    let mut support = Vec::with_capacity(k);
    let mut probs = Vec::with_capacity(k);
    for (c, w) in centers.iter().zip(cuts.windows(2)) {
        if w[1] > w[0] {
            support.push(*c);
            probs.push((w[1] - w[0]) as f64 / n as f64);
        }
    }
    Atoms { support, probs }
}

/// Offline marginals: per-step k-means on the braking values of an
/// optimization set.
pub fn quantize_marginals(set: &ScenarioSet, k: usize, seed: u64) -> Result<QuantizedMarginal> {
    set.role().require(Role::Optimization, "quantize_marginals")?;
    if k == 0 || k > set.len() {
        return Err(EmsError::InvalidArgument(format!(
            "quantization needs 1 <= K <= {} (scenario count), got {k}",
            set.len()
        )));
    }
    let steps: Vec<Atoms> = (0..=set.horizon())
        .into_par_iter()
        .map(|t| {
            let mut values = set.braking_at(t);
            values.sort_by(f64::total_cmp);
            kmeans_1d(&values, k, seed.wrapping_add(t as u64))
        })
        .collect();
    let reduced = steps.iter().filter(|a| a.len() < k).count();
    if reduced > 0 {
        warn!("quantize_marginals: {reduced} steps have fewer than {k} distinct braking values; K reduced there");
    }
    Ok(QuantizedMarginal { steps })
}

/// Scenarios with braking drawn independently per step from `marginals`.
pub fn sample_from_marginals(
    marginals: &QuantizedMarginal,
    profiles: &DeterministicProfiles,
    role: Role,
    seed: u64,
    count: usize,
) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(EmsError::InvalidArgument("scenario count must be >= 1".into()));
    }
    if marginals.steps.len() != profiles.len() {
        return Err(EmsError::LengthMismatch("marginals and profiles differ in length".into()));
    }
    let scenarios = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Synthetic, i as u64);
            let braking: Vec<f64> = marginals
                .steps
                .iter()
                .map(|atoms| draw(atoms, rng.random::<f64>()))
                .collect();
            profiles.with_braking(&braking)
        })
        .collect::<Vec<Scenario>>();
    ScenarioSet::new(role, seed, "iid-marginals", scenarios)
}

pub(crate) fn draw(atoms: &Atoms, u: f64) -> f64 {
    let mut acc = 0.0;
    for (s, p) in atoms.iter() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    *atoms.support.last().unwrap()
}
