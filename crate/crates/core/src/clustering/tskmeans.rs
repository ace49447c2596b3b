//! Time-series k-means: DTW assignment, DBA centroids and optional
//! per-cluster timestamp weights.
//!
//! With weighting on, each cluster's weights are proportional to the inverse
//! of the member variance at each timestamp (regularized by a small floor)
//! and normalized to sum to the series length. A proposed weight update is
//! kept only when it does not raise the objective, which keeps the
//! objective `Σ weighted-dtw²` non-increasing across outer iterations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dba::{dba, DbaOptions};
use super::dtw::weighted_dtw_path;
use super::features::{mean, variance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsKMeansOptions {
    pub max_iter: usize,
    pub dba_iter: usize,
    pub window: Option<usize>,
    pub weighted: bool,
    /// Seeded restarts; the lowest final objective wins.
    pub n_init: usize,
}

impl Default for TsKMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 30,
            dba_iter: 5,
            window: None,
            weighted: false,
            n_init: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsKMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    /// Objective after each outer iteration.
    pub history: Vec<f64>,
    pub objective: f64,
}

fn cost(centroid: &[f64], weights: &[f64], s: &[f64], window: Option<usize>) -> Result<f64> {
    Ok(weighted_dtw_path(centroid, s, weights, window)?.cost)
}

fn validate(series: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 || k > series.len() {
        return Err(Error::invalid(format!(
            "k = {k} must lie in 1..={}",
            series.len()
        )));
    }
    let len = series[0].len();
    if len == 0 || series.iter().any(|s| s.len() != len) {
        return Err(Error::invalid("tskmeans needs non-empty series of equal length"));
    }
    Ok(())
}

fn seed_centroids(series: &[Vec<f64>], k: usize, seed: u64, window: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![1.0; series[0].len()];
    let mut chosen = vec![rng.random_range(0..series.len())];
    while chosen.len() < k {
        let mut d = Vec::with_capacity(series.len());
        for s in series {
            let mut best = f64::INFINITY;
            for &c in &chosen {
                best = best.min(cost(&series[c], &ones, s, window)?);
            }
            d.push(best);
        }
        let total: f64 = d.iter().sum();
        let pick = if total <= 0.0 {
            (0..series.len()).find(|i| !chosen.contains(i)).unwrap_or(0)
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut idx = series.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if target < *di {
                    idx = i;
                    break;
                }
                target -= di;
            }
            idx
        };
        chosen.push(pick);
    }
    Ok(chosen.into_iter().map(|i| series[i].clone()).collect())
}

fn inverse_variance_weights(members: &[&Vec<f64>], len: usize) -> Vec<f64> {
    if members.len() < 2 {
        return vec![1.0; len];
    }
    let vars: Vec<f64> = (0..len)
        .map(|t| variance(&members.iter().map(|s| s[t]).collect::<Vec<_>>()))
        .collect();
    let floor = 1e-3 * mean(&vars) + 1e-12;
    let raw: Vec<f64> = vars.iter().map(|v| 1.0 / (v + floor)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w * len as f64 / total).collect()
}

/// Runs the alternating optimization from the given centroids and weights.
pub fn tskmeans_from(
    series: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    mut weights: Vec<Vec<f64>>,
    opts: TsKMeansOptions,
) -> Result<TsKMeansFit> {
    let k = centroids.len();
    validate(series, k)?;
    let len = series[0].len();
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..opts.max_iter.max(1) {
        let mut new_labels = Vec::with_capacity(series.len());
        for s in series {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = cost(&centroids[c], &weights[c], s, opts.window)?;
                if d < best.1 {
                    best = (c, d);
                }
            }
            new_labels.push(best.0);
        }
        let converged = new_labels == labels;
        labels = new_labels;

        for c in 0..k {
            let members: Vec<&Vec<f64>> = series
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(s, _)| s)
                .collect();
            if members.is_empty() {
                continue;
            }
            let refs: Vec<&[f64]> = members.iter().map(|s| s.as_slice()).collect();
            let fit = dba(
                &refs,
                &centroids[c],
                DbaOptions {
                    max_iter: opts.dba_iter,
                    tol: 1e-9,
                    window: opts.window,
                    weights: Some(&weights[c]),
                },
            )?;
            centroids[c] = fit.barycenter;

            if opts.weighted {
                let proposal = inverse_variance_weights(&members, len);
                let mut old = 0.0;
                let mut new = 0.0;
                for s in &refs {
                    old += cost(&centroids[c], &weights[c], s, opts.window)?;
                    new += cost(&centroids[c], &proposal, s, opts.window)?;
                }
                if new <= old {
                    weights[c] = proposal;
                }
            }
        }

        let mut objective = 0.0;
        for (s, &l) in series.iter().zip(&labels) {
            objective += cost(&centroids[l], &weights[l], s, opts.window)?;
        }
        history.push(objective);
        if converged {
            break;
        }
    }
    let objective = *history.last().expect("at least one iteration");
    Ok(TsKMeansFit {
        labels,
        centroids,
        weights,
        history,
        objective,
    })
}

pub fn tskmeans(series: &[Vec<f64>], k: usize, seed: u64, opts: TsKMeansOptions) -> Result<TsKMeansFit> {
    validate(series, k)?;
    let mut best: Option<TsKMeansFit> = None;
    for r in 0..opts.n_init.max(1) {
        let run_seed = seed.wrapping_add(7_919 * r as u64);
        let centroids = seed_centroids(series, k, run_seed, opts.window)?;
        let weights = vec![vec![1.0; series[0].len()]; k];
        let fit = tskmeans_from(series, centroids, weights, opts)?;
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Best objective per `k` over seeded runs (`opts.n_init` restarts) and a run grown from the
/// best `k - 1` fit (worst-fit series added as a new centroid). The grown
/// run starts no worse than `k - 1`, so the curve is non-increasing.
pub fn objective_curve(
    series: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
    opts: TsKMeansOptions,
) -> Result<BTreeMap<usize, TsKMeansFit>> {
    validate(series, k_max.max(1))?;
    let len = series[0].len();
    let mut out = BTreeMap::new();
    let mut prev: Option<TsKMeansFit> = None;
    for k in 1..=k_max {
        let mut best: Option<TsKMeansFit> = None;
        if let Some(p) = &prev {
            let mut worst = (0, f64::NEG_INFINITY);
            for (i, (s, &l)) in series.iter().zip(&p.labels).enumerate() {
                let d = cost(&p.centroids[l], &p.weights[l], s, opts.window)?;
                if d > worst.1 {
                    worst = (i, d);
                }
            }
            let mut centroids = p.centroids.clone();
            centroids.push(series[worst.0].clone());
            let mut weights = p.weights.clone();
            weights.push(vec![1.0; len]);
            best = Some(tskmeans_from(series, centroids, weights, opts)?);
        }
        let fit = tskmeans(series, k, seed.wrapping_add(1_000 * k as u64), opts)?;
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
        let best = best.expect("at least one run");
        if k >= k_min {
            out.insert(k, best.clone());
        }
        prev = Some(best);
    }
    Ok(out)
}
