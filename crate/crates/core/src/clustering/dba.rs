//! DTW barycenter averaging.

use super::dtw::{dtw_path, weighted_dtw_path};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DbaFit {
    pub barycenter: Vec<f64>,
    /// Objective `Σ dtw(b, s)²` before the first and after every update.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbaOptions<'a> {
    pub max_iter: usize,
    pub tol: f64,
    pub window: Option<usize>,
    /// Per-position weights of the barycenter in the local cost.
    pub weights: Option<&'a [f64]>,
}

impl Default for DbaOptions<'_> {
    fn default() -> Self {
        Self {
            max_iter: 30,
            tol: 1e-6,
            window: None,
            weights: None,
        }
    }
}

fn align(b: &[f64], s: &[f64], opts: &DbaOptions) -> Result<super::dtw::Alignment> {
    match opts.weights {
        Some(w) => weighted_dtw_path(b, s, w, opts.window),
        None => dtw_path(b, s, opts.window),
    }
}

fn objective(b: &[f64], set: &[&[f64]], opts: &DbaOptions) -> Result<f64> {
    let mut total = 0.0;
    for s in set {
        total += align(b, s, opts)?.cost;
    }
    Ok(total)
}

/// Index of the series minimizing the summed squared DTW distance to all
/// others.
pub fn medoid(set: &[&[f64]], window: Option<usize>) -> Result<usize> {
    if set.is_empty() {
        return Err(Error::invalid("medoid of an empty set"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, s) in set.iter().enumerate() {
        let opts = DbaOptions {
            window,
            ..Default::default()
        };
        let total = objective(s, set, &opts)?;
        if total < best.1 {
            best = (i, total);
        }
    }
    Ok(best.0)
}

/// Iteratively replaces every barycenter coordinate by the mean of the
/// points aligned to it. Stops after `max_iter` updates or once the relative
/// objective decrease drops below `tol`.
pub fn dba(set: &[&[f64]], init: &[f64], opts: DbaOptions) -> Result<DbaFit> {
    if set.is_empty() {
        return Err(Error::invalid("dba of an empty set"));
    }
    if init.is_empty() {
        return Err(Error::invalid("dba initial barycenter is empty"));
    }
    if let Some(w) = opts.weights {
        if w.len() != init.len() {
            return Err(Error::shape("dba", "weights do not match barycenter length"));
        }
    }
    let mut b = init.to_vec();
    let mut history = vec![objective(&b, set, &opts)?];
    for _ in 0..opts.max_iter {
        let mut sums = vec![0.0; b.len()];
        let mut counts = vec![0usize; b.len()];
        for s in set {
            for (i, j) in align(&b, s, &opts)?.path {
                sums[i] += s[j];
                counts[i] += 1;
            }
        }
        let candidate: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .zip(&b)
            .map(|((s, &c), old)| if c > 0 { s / c as f64 } else { *old })
            .collect();
        let obj = objective(&candidate, set, &opts)?;
        let prev = *history.last().expect("non-empty history");
        if obj > prev {
            break;
        }
        b = candidate;
        history.push(obj);
        if prev <= 0.0 || (prev - obj) / prev < opts.tol {
            break;
        }
    }
    Ok(DbaFit {
        barycenter: b,
        objective: history,
    })
}
