use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub smape: f64,
}

impl MetricSet {
    pub fn of(actual: &[f64], pred: &[f64]) -> Result<Self> {
        Ok(Self {
            mae: mae(actual, pred)?,
            smape: smape(actual, pred)?,
        })
    }
}

fn check(actual: &[f64], pred: &[f64]) -> Result<()> {
    if actual.len() != pred.len() || actual.is_empty() {
        return Err(Error::invalid(format!(
            "metrics need equal non-empty lengths, got {} actual and {} predicted",
            actual.len(),
            pred.len()
        )));
    }
    Ok(())
}

pub fn mae(actual: &[f64], pred: &[f64]) -> Result<f64> {
    check(actual, pred)?;
    Ok(actual.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / actual.len() as f64)
}

/// `mean 2|ŷ − y| / (|y| + |ŷ|)` on the `[0, 2]` scale; `0/0` counts as 0.
pub fn smape(actual: &[f64], pred: &[f64]) -> Result<f64> {
    check(actual, pred)?;
    let total: f64 = actual
        .iter()
        .zip(pred)
        .map(|(y, p)| {
            let den = y.abs() + p.abs();
            if den == 0.0 {
                0.0
            } else {
                2.0 * (p - y).abs() / den
            }
        })
        .sum();
    Ok(total / actual.len() as f64)
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
