//! Dynamic time warping with squared local cost and an optional
//! Sakoe-Chiba band.
//!
//! The returned distance is the square root of the minimal path sum, so a
//! zero-width band on equal lengths reduces to the Euclidean distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Alignment path as 0-based index pairs, from `(0, 0)` to
/// `(x.len() - 1, y.len() - 1)`.
pub type Path = Vec<(usize, usize)>;

fn check(x: &[f64], y: &[f64], window: Option<usize>) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("dtw requires non-empty series"));
    }
    if let Some(w) = window {
        if x.len().abs_diff(y.len()) > w {
            return Err(Error::invalid(format!(
                "band radius {w} cannot align lengths {} and {}",
                x.len(),
                y.len()
            )));
        }
    }
    Ok(())
}

#[inline]
fn in_band(i: usize, j: usize, window: Option<usize>) -> bool {
    window.is_none_or(|w| i.abs_diff(j) <= w)
}

/// Accumulated cost matrix, row-major `x.len() × y.len()`, `INFINITY`
/// outside the band. `weights`, when given, scale the local cost of each
/// `x` position.
fn accumulate(x: &[f64], y: &[f64], window: Option<usize>, weights: Option<&[f64]>) -> Vec<f64> {
    let (n, m) = (x.len(), y.len());
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        let wi = weights.map_or(1.0, |w| w[i]);
        let (lo, hi) = match window {
            Some(w) => (i.saturating_sub(w), (i + w).min(m - 1)),
            None => (0, m - 1),
        };
        for j in lo..=hi {
            let d = x[i] - y[j];
            let c = wi * d * d;
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[(i - 1) * m + j - 1]);
                }
                if i > 0 {
                    best = best.min(acc[(i - 1) * m + j]);
                }
                if j > 0 {
                    best = best.min(acc[i * m + j - 1]);
                }
                best
            };
            acc[i * m + j] = if i == 0 && j == 0 { c } else { prev + c };
        }
    }
    acc
}

fn backtrack(acc: &[f64], n: usize, m: usize, window: Option<usize>) -> Path {
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let mut best = (f64::INFINITY, (i, j));
        let mut consider = |a: usize, b: usize| {
            if in_band(a, b, window) && acc[a * m + b] < best.0 {
                best = (acc[a * m + b], (a, b));
            }
        };
        if i > 0 && j > 0 {
            consider(i - 1, j - 1);
        }
        if i > 0 {
            consider(i - 1, j);
        }
        if j > 0 {
            consider(i, j - 1);
        }
        (i, j) = best.1;
        path.push((i, j));
    }
    path.reverse();
    path
}

/// DTW distance between `x` and `y`.
pub fn dtw(x: &[f64], y: &[f64], window: Option<usize>) -> Result<f64> {
    check(x, y, window)?;
    let acc = accumulate(x, y, window, None);
    Ok(acc[x.len() * y.len() - 1].sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub path: Path,
    /// Minimal path sum of squared differences (the squared distance).
    pub cost: f64,
}

/// Optimal alignment path; ties prefer the diagonal step.
pub fn dtw_path(x: &[f64], y: &[f64], window: Option<usize>) -> Result<Alignment> {
    check(x, y, window)?;
    let acc = accumulate(x, y, window, None);
    let cost = acc[x.len() * y.len() - 1];
    Ok(Alignment {
        path: backtrack(&acc, x.len(), y.len(), window),
        cost,
    })
}

/// DTW where the local cost at position `i` of `x` is scaled by `weights[i]`.
pub fn weighted_dtw_path(
    x: &[f64],
    y: &[f64],
    weights: &[f64],
    window: Option<usize>,
) -> Result<Alignment> {
    check(x, y, window)?;
    if weights.len() != x.len() {
        return Err(Error::shape(
            "weighted_dtw",
            format!("{} weights for a series of length {}", weights.len(), x.len()),
        ));
    }
    let acc = accumulate(x, y, window, Some(weights));
    let cost = acc[x.len() * y.len() - 1];
    Ok(Alignment {
        path: backtrack(&acc, x.len(), y.len(), window),
        cost,
    })
}

pub fn weighted_dtw(x: &[f64], y: &[f64], weights: &[f64], window: Option<usize>) -> Result<f64> {
    Ok(weighted_dtw_path(x, y, weights, window)?.cost.sqrt())
}

/// Symmetric matrix of pairwise DTW distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    pub d: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn compute(ids: &[String], series: &[Vec<f64>], window: Option<usize>) -> Result<Self> {
        if ids.len() != series.len() {
            return Err(Error::shape("distance_matrix", "ids and series differ in count"));
        }
        let n = series.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let values = pairs
            .par_iter()
            .map(|&(i, j)| dtw(&series[i], &series[j], window))
            .collect::<Result<Vec<f64>>>()?;
        let mut d = vec![vec![0.0; n]; n];
        for (&(i, j), v) in pairs.iter().zip(values) {
            d[i][j] = v;
            d[j][i] = v;
        }
        Ok(Self {
            ids: ids.to_vec(),
            d,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::from("id")];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.ids.iter().zip(&self.d) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
