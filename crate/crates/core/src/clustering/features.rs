//! The fourteen descriptive series features used for feature-based
//! clustering.
//!
//! Decomposition is classical and additive: the trend is a centered moving
//! average spanning two seasonal periods (half weights on the two end
//! points, which removes any period-`p` pattern exactly), the seasonal
//! component is the mean-centered per-phase mean of the detrended series,
//! and the remainder is what is left. Edges without a full moving-average
//! window are excluded from the decomposition-based features.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector14 {
    pub mean: f64,
    pub variance: f64,
    pub acf_1: f64,
    pub trend: f64,
    pub linearity: f64,
    pub curvature: f64,
    pub season: f64,
    pub peak: f64,
    pub trough: f64,
    pub entropy: f64,
    pub lumpiness: f64,
    pub spikiness: f64,
    pub f_spots: f64,
    pub c_points: f64,
    /// Set for constant input, where the strength and entropy features fall
    /// back to 0.
    #[serde(default)]
    pub degenerate: bool,
}

impl FeatureVector14 {
    pub const NAMES: [&'static str; 14] = [
        "mean",
        "variance",
        "acf_1",
        "trend",
        "linearity",
        "curvature",
        "season",
        "peak",
        "trough",
        "entropy",
        "lumpiness",
        "spikiness",
        "f_spots",
        "c_points",
    ];

    pub fn to_array(&self) -> [f64; 14] {
        [
            self.mean,
            self.variance,
            self.acf_1,
            self.trend,
            self.linearity,
            self.curvature,
            self.season,
            self.peak,
            self.trough,
            self.entropy,
            self.lumpiness,
            self.spikiness,
            self.f_spots,
            self.c_points,
        ]
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Population variance.
pub(crate) fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn strength(component_plus_rem: &[f64], remainder: &[f64], scale: f64) -> f64 {
    let total = variance(component_plus_rem);
    if total <= 1e-12 * scale {
        return 0.0;
    }
    (1.0 - variance(remainder) / total).clamp(0.0, 1.0)
}

/// Lag-1 autocorrelation with the population-variance denominator.
pub fn acf1(y: &[f64]) -> f64 {
    let m = mean(y);
    let denom: f64 = y.iter().map(|x| (x - m) * (x - m)).sum();
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = y.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / denom
}

struct Decomposition {
    /// Index of the first decomposed point in the input.
    offset: usize,
    trend: Vec<f64>,
    seasonal: Vec<f64>,
    remainder: Vec<f64>,
}

fn decompose(y: &[f64], period: usize) -> Decomposition {
    let half = period;
    let n = y.len();
    let w_mid = 1.0 / (2 * period) as f64;
    let w_end = 0.5 * w_mid;
    let trend: Vec<f64> = (half..n - half)
        .map(|t| {
            let inner: f64 = y[t - half + 1..t + half].iter().sum();
            inner * w_mid + (y[t - half] + y[t + half]) * w_end
        })
        .collect();
    let detrended: Vec<f64> = trend.iter().enumerate().map(|(i, tr)| y[i + half] - tr).collect();
    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (i, d) in detrended.iter().enumerate() {
        let phase = (i + half) % period;
        sums[phase] += d;
        counts[phase] += 1;
    }
    let phase_mean: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let centre = mean(&phase_mean);
    let seasonal: Vec<f64> = (0..detrended.len())
        .map(|i| phase_mean[(i + half) % period] - centre)
        .collect();
    let remainder = detrended.iter().zip(&seasonal).map(|(d, s)| d - s).collect();
    Decomposition {
        offset: half,
        trend,
        seasonal,
        remainder,
    }
}

/// Coefficients of the degree-1 and degree-2 orthonormal polynomials in a
/// least-squares fit of `values` on time.
fn poly_coefficients(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    let t: Vec<f64> = (0..m).map(|i| i as f64).collect();
    let q0 = vec![1.0 / (m as f64).sqrt(); m];
    let orthonormal = |mut v: Vec<f64>, basis: &[&Vec<f64>]| {
        for b in basis {
            let dot: f64 = v.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b.iter()).for_each(|(a, c)| *a -= dot * c);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        v
    };
    let q1 = orthonormal(t.clone(), &[&q0]);
    let q2 = orthonormal(t.iter().map(|x| x * x).collect(), &[&q0, &q1]);
    let dot = |q: &[f64]| values.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
    (dot(&q1), dot(&q2))
}

/// Normalized Shannon entropy of the periodogram (1 for white noise).
pub fn spectral_entropy(y: &[f64]) -> f64 {
    let n = y.len();
    let m = mean(y);
    let mut buf: Vec<Complex<f64>> = y.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if power.len() < 2 || total <= 0.0 {
        return 0.0;
    }
    let h: f64 = power
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    (h / (power.len() as f64).ln()).clamp(0.0, 1.0)
}

const LUMPINESS_BLOCK: usize = 28;

fn lumpiness(y: &[f64]) -> f64 {
    let sd = variance(y).sqrt();
    if sd <= 0.0 {
        return 0.0;
    }
    let m = mean(y);
    let scaled: Vec<f64> = y.iter().map(|v| (v - m) / sd).collect();
    let block_vars: Vec<f64> = scaled.chunks_exact(LUMPINESS_BLOCK).map(variance).collect();
    if block_vars.len() < 2 {
        return 0.0;
    }
    variance(&block_vars)
}

fn spikiness(remainder: &[f64]) -> f64 {
    let n = remainder.len();
    if n < 3 {
        return 0.0;
    }
    let s: f64 = remainder.iter().sum();
    let ss: f64 = remainder.iter().map(|v| v * v).sum();
    let k = (n - 1) as f64;
    let loo: Vec<f64> = remainder
        .iter()
        .map(|v| {
            let m = (s - v) / k;
            ((ss - v * v) / k - m * m).max(0.0)
        })
        .collect();
    variance(&loo)
}

fn flat_spots(y: &[f64]) -> f64 {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let bin = |v: f64| {
        if hi > lo {
            (((v - lo) / (hi - lo) * 10.0).floor() as usize).min(9)
        } else {
            0
        }
    };
    let mut best = 0;
    let mut run = 0;
    let mut prev = usize::MAX;
    for &v in y {
        let b = bin(v);
        run = if b == prev { run + 1 } else { 1 };
        prev = b;
        best = best.max(run);
    }
    best as f64
}

fn median(y: &[f64]) -> f64 {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn crossing_points(y: &[f64]) -> f64 {
    let m = median(y);
    y.windows(2).filter(|w| (w[0] <= m) != (w[1] <= m)).count() as f64
}

/// Computes all fourteen features of a daily series.
pub fn extract_features(y: &[f64], period: usize) -> Result<FeatureVector14> {
    if period == 0 {
        return Err(Error::invalid("period must be positive"));
    }
    if y.len() < 3 * period || y.len() < 2 * period + 2 {
        return Err(Error::InsufficientData(format!(
            "feature extraction needs at least {} points, got {}",
            3 * period,
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains missing or non-finite values"));
    }
    let var = variance(y);
    let degenerate = var <= 0.0;
    let dec = decompose(y, period);
    let scale = var.max(f64::MIN_POSITIVE);
    let tr: Vec<f64> = dec.trend.iter().zip(&dec.remainder).map(|(a, b)| a + b).collect();
    let sr: Vec<f64> = dec.seasonal.iter().zip(&dec.remainder).map(|(a, b)| a + b).collect();
    let (linearity, curvature) = poly_coefficients(&dec.trend);
    debug_assert_eq!(dec.offset + dec.trend.len() + period, y.len());
    let (peak, trough) = dec
        .seasonal
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));

    Ok(FeatureVector14 {
        mean: mean(y),
        variance: var,
        acf_1: acf1(y),
        trend: if degenerate { 0.0 } else { strength(&tr, &dec.remainder, scale) },
        linearity,
        curvature,
        season: if degenerate { 0.0 } else { strength(&sr, &dec.remainder, scale) },
        peak,
        trough: -trough,
        entropy: if degenerate { 0.0 } else { spectral_entropy(y) },
        lumpiness: lumpiness(y),
        spikiness: spikiness(&dec.remainder),
        f_spots: flat_spots(y),
        c_points: crossing_points(y),
        degenerate,
    })
}

/// Column-wise z-scores with the population standard deviation;
/// zero-variance columns map to 0.
pub fn znormalize_rows(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData("z-normalization needs at least two rows".into()));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::shape("znormalize", "rows have different lengths"));
    }
    let mut out = rows.to_vec();
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = mean(&col);
        let sd = variance(&col).sqrt();
        let degenerate = sd <= 1e-12 * m.abs().max(1.0);
        for (i, r) in out.iter_mut().enumerate() {
            r[j] = if degenerate { 0.0 } else { (col[i] - m) / sd };
        }
    }
    Ok(out)
}

pub fn znormalize(vectors: &[FeatureVector14]) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| v.to_array().to_vec()).collect();
    znormalize_rows(&rows)
}
