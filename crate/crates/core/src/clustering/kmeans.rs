//! Lloyd's k-means with k-means++ seeding, and the Kneedle elbow rule.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Final within-cluster sum of squares.
    pub wcss: f64,
    /// WCSS after every assignment step.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.iter().enumerate() {
        let d = sq_dist(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: each further centre is drawn with probability
/// proportional to the squared distance to the nearest chosen centre.
pub fn kmeans_pp<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if target < *di {
                    idx = i;
                    break;
                }
                target -= di;
            }
            idx
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::shape("kmeans", "points have different dimensions"));
    }
    Ok(())
}

/// Lloyd iterations from the given centres until the labels stop changing.
/// A cluster that loses all members keeps its previous centre, so the WCSS
/// never increases.
pub fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansFit {
    let dim = points[0].len();
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let assigned: Vec<(usize, f64)> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        history.push(assigned.iter().map(|a| a.1).sum());
        if new_labels == labels {
            break;
        }
        labels = new_labels;
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for (c, centre) in centroids.iter_mut().enumerate() {
            if counts[c] > 0 {
                *centre = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let wcss = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    if history.last() != Some(&wcss) {
        history.push(wcss);
    }
    KMeansFit {
        labels,
        centroids,
        wcss,
        history,
    }
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit> {
    validate(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_pp(points, k, &mut rng);
    Ok(lloyd(points, init, DEFAULT_MAX_ITER))
}

/// Best of `n_init` seeded runs per `k`, plus a run grown from the best
/// `k - 1` solution with the worst-fit point as the extra centre. The grown
/// run starts no worse than `k - 1`, so the returned curve is non-increasing.
pub fn wcss_curve(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
    n_init: usize,
) -> Result<BTreeMap<usize, KMeansFit>> {
    validate(points, k_max.max(1))?;
    let mut out: BTreeMap<usize, KMeansFit> = BTreeMap::new();
    let mut prev: Option<KMeansFit> = None;
    for k in 1..=k_max {
        let mut best: Option<KMeansFit> = None;
        if let Some(p) = &prev {
            let worst = points
                .iter()
                .enumerate()
                .map(|(i, pt)| (i, nearest(pt, &p.centroids).1))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let mut init = p.centroids.clone();
            init.push(points[worst].clone());
            best = Some(lloyd(points, init, DEFAULT_MAX_ITER));
        }
        for r in 0..n_init.max(1) {
            let fit = kmeans(points, k, seed.wrapping_add(1_000 * k as u64 + r as u64))?;
            if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
                best = Some(fit);
            }
        }
        let best = best.expect("at least one run");
        if k >= k_min {
            out.insert(k, best.clone());
        }
        prev = Some(best);
    }
    Ok(out)
}

/// Kneedle elbow: with `k` and `W(k)` both rescaled to `[0, 1]`, the
/// interior `k` lying farthest below the chord from `W(k_min)` to `W(k_max)`.
/// Ties go to the smaller `k`, so a straight line yields `k_min + 1`.
pub fn elbow(wcss_by_k: &BTreeMap<usize, f64>, k_min: usize, k_max: usize) -> Result<usize> {
    if k_max < k_min + 2 {
        return Err(Error::invalid("elbow needs at least three values of k"));
    }
    let mut w = Vec::new();
    for k in k_min..=k_max {
        let v = *wcss_by_k
            .get(&k)
            .ok_or_else(|| Error::invalid(format!("missing WCSS for k = {k}")))?;
        w.push(v);
    }
    for (i, pair) in w.windows(2).enumerate() {
        let tol = 1e-9 * pair[0].abs().max(1.0);
        if pair[1] > pair[0] + tol {
            return Err(Error::invalid(format!(
                "WCSS increases from k = {} to k = {}",
                k_min + i,
                k_min + i + 1
            )));
        }
    }
    let n = w.len() - 1;
    let span = w[0] - w[n];
    if span <= 0.0 {
        return Ok(k_min + 1);
    }
    let mut best = (k_min + 1, f64::NEG_INFINITY);
    for (i, &v) in w.iter().enumerate().take(n).skip(1) {
        let x = i as f64 / n as f64;
        let y = (v - w[n]) / span;
        let gap = (1.0 - x) - y;
        if gap > best.1 + 1e-12 {
            best = (k_min + i, gap);
        }
    }
    Ok(best.0)
}
