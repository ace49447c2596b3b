//! Seasonal ARIMA estimated by conditional sum of squares.
//!
//! Coefficients are searched in an unconstrained space and mapped through
//! partial autocorrelations (`tanh` then Durbin-Levinson), so every AR
//! polynomial is stationary and every MA polynomial invertible. The
//! objective is minimized with Nelder-Mead.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{plain_result, FittedState, ForecastResult, ModelConfig, ModelInput, SarimaOrder, SarimaSpec, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaFit {
    pub order: SarimaOrder,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sar: Vec<f64>,
    pub sma: Vec<f64>,
    /// Mean of the (undifferenced) series; only estimated when `d + D = 0`.
    pub mean: f64,
    pub sigma2: f64,
    pub css: f64,
    pub aic: f64,
    pub n_used: usize,
}

/// Outcome of [`nelder_mead`].
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead with the standard coefficients (1, 2, 0.5, 0.5).
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_iter: usize, tol: f64) -> Simplex {
    let n = x0.len();
    if n == 0 {
        return Simplex {
            x: Vec::new(),
            fx: f(x0),
            iterations: 0,
            converged: true,
        };
    }
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = (vals[n] - vals[0]).abs();
        let size = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= tol * (vals[0].abs() + tol) && size <= 1e-6 {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |k: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + k * (c - w)).collect() };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                let best = pts[0].clone();
                for i in 1..=n {
                    pts[i] = pts[i].iter().zip(&best).map(|(p, b)| b + 0.5 * (p - b)).collect();
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Simplex {
        x: pts[best].clone(),
        fx: vals[best],
        iterations,
        converged,
    }
}

/// Maps unconstrained values to coefficients of a stationary
/// `1 - Σ φ_j B^j` via partial autocorrelations `tanh(u)`.
pub fn pacf_to_coefficients(u: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(u.len());
    for (k, &uk) in u.iter().enumerate() {
        let r = uk.tanh();
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
        phi.push(r);
    }
    phi
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `1 + sign · Σ c_j B^(j·stride)` as a dense coefficient vector.
fn lag_poly(coef: &[f64], stride: usize, sign: f64) -> Vec<f64> {
    let mut p = vec![0.0; coef.len() * stride + 1];
    p[0] = 1.0;
    for (j, c) in coef.iter().enumerate() {
        p[(j + 1) * stride] = sign * c;
    }
    p
}

/// Applies `(1 - B)^d (1 - B^s)^D`.
pub fn difference(y: &[f64], d: usize, sd: usize, s: usize) -> Vec<f64> {
    let mut w = y.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    for _ in 0..sd {
        if w.len() <= s {
            return Vec::new();
        }
        w = (s..w.len()).map(|t| w[t] - w[t - s]).collect();
    }
    w
}

struct Expanded {
    /// `x_t = Σ ar[j-1] x_{t-j} + e_t + Σ ma[j-1] e_{t-j}`.
    ar: Vec<f64>,
    ma: Vec<f64>,
}

fn expand(order: &SarimaOrder, ar: &[f64], ma: &[f64], sar: &[f64], sma: &[f64]) -> Expanded {
    let a = poly_mul(&lag_poly(ar, 1, -1.0), &lag_poly(sar, order.s, -1.0));
    let m = poly_mul(&lag_poly(ma, 1, 1.0), &lag_poly(sma, order.s, 1.0));
    Expanded {
        ar: a[1..].iter().map(|v| -v).collect(),
        ma: m[1..].to_vec(),
    }
}

/// Conditional residuals of a centred series; the first `ar.len()` are zero.
fn residuals(x: &[f64], ex: &Expanded) -> Vec<f64> {
    let start = ex.ar.len();
    let mut e = vec![0.0; x.len()];
    for t in start..x.len() {
        let mut v = x[t];
        for (j, a) in ex.ar.iter().enumerate() {
            v -= a * x[t - 1 - j];
        }
        for (j, m) in ex.ma.iter().enumerate() {
            if t > j {
                v -= m * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

struct Problem<'a> {
    order: SarimaOrder,
    w: &'a [f64],
    with_mean: bool,
}

impl Problem<'_> {
    fn unpack(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let o = &self.order;
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &theta[at..at + n];
            at += n;
            s.to_vec()
        };
        let ar = pacf_to_coefficients(&take(o.p));
        let ma: Vec<f64> = pacf_to_coefficients(&take(o.q)).iter().map(|v| -v).collect();
        let sar = pacf_to_coefficients(&take(o.sp));
        let sma: Vec<f64> = pacf_to_coefficients(&take(o.sq)).iter().map(|v| -v).collect();
        let mean = if self.with_mean { theta[at] } else { 0.0 };
        (ar, ma, sar, sma, mean)
    }

    fn css(&self, theta: &[f64]) -> f64 {
        let (ar, ma, sar, sma, mean) = self.unpack(theta);
        let ex = expand(&self.order, &ar, &ma, &sar, &sma);
        let x: Vec<f64> = self.w.iter().map(|v| v - mean).collect();
        let e = residuals(&x, &ex);
        let ss: f64 = e[ex.ar.len()..].iter().map(|v| v * v).sum();
        if ss.is_finite() { ss } else { f64::MAX }
    }
}

/// Fits one order by CSS. Requires at least `10 · (p + q + P + Q + 2)`
/// observations.
pub fn fit_sarima(y: &[f64], order: SarimaOrder) -> Result<SarimaFit> {
    let need = 10 * (order.n_coefficients() + 2);
    if y.len() < need {
        return Err(Error::InsufficientData(format!(
            "SARIMA {order} needs {need} observations, got {}",
            y.len()
        )));
    }
    if order.s == 0 {
        return Err(Error::invalid("seasonal period must be positive"));
    }
    let w = difference(y, order.d, order.sd, order.s);
    let lags = order.p + order.s * order.sp;
    if w.len() <= lags + order.n_coefficients() + 2 {
        return Err(Error::InsufficientData(format!("too few observations after differencing for {order}")));
    }
    let with_mean = order.d + order.sd == 0;
    let problem = Problem {
        order,
        w: &w,
        with_mean,
    };
    let mut x0 = vec![0.0; order.n_coefficients()];
    if with_mean {
        x0.push(w.iter().sum::<f64>() / w.len() as f64);
    }
    let scale = {
        let m = w.iter().sum::<f64>() / w.len() as f64;
        (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / w.len() as f64).sqrt().max(1e-8)
    };
    // The mean is optimized in units of the series' spread.
    let objective = |t: &[f64]| {
        let mut t = t.to_vec();
        if with_mean {
            let last = t.len() - 1;
            t[last] *= scale;
        }
        problem.css(&t)
    };
    if with_mean {
        let last = x0.len() - 1;
        x0[last] /= scale;
    }
    let max_iter = 400 * (x0.len() + 1);
    let mut res = nelder_mead(objective, &x0, 0.3, max_iter, 1e-10);
    if !res.converged {
        // One restart from the best point usually settles a stalled simplex.
        let again = nelder_mead(objective, &res.x, 0.05, max_iter, 1e-10);
        res = Simplex {
            iterations: res.iterations + again.iterations,
            ..again
        };
    }
    if !res.converged {
        return Err(Error::NonConvergence {
            iterations: res.iterations,
            best_objective: res.fx,
            best_params: res.x,
        });
    }
    let mut theta = res.x.clone();
    if with_mean {
        let last = theta.len() - 1;
        theta[last] *= scale;
    }
    let (ar, ma, sar, sma, mean) = problem.unpack(&theta);
    let n_used = w.len() - lags;
    let css = res.fx;
    let sigma2 = (css / n_used as f64).max(1e-300);
    let k = theta.len() + 1;
    let aic = n_used as f64 * sigma2.ln() + 2.0 * k as f64;
    Ok(SarimaFit {
        order,
        ar,
        ma,
        sar,
        sma,
        mean,
        sigma2,
        css,
        aic,
        n_used,
    })
}

/// Every order of the automatic search, in a fixed order.
pub fn auto_grid(s: usize) -> Vec<SarimaOrder> {
    let mut out = Vec::new();
    for d in 0..=1 {
        for sd in 0..=1 {
            for p in 0..=2 {
                for q in 0..=2 {
                    for sp in 0..=2 {
                        for sq in 0..=2 {
                            out.push(SarimaOrder { p, d, q, sp, sd, sq, s });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Minimum-AIC fit over [`auto_grid`]; orders that fail to fit are skipped.
pub fn fit_sarima_auto(y: &[f64], s: usize) -> Result<SarimaFit> {
    let mut best: Option<SarimaFit> = None;
    let mut last_err = None;
    for order in auto_grid(s) {
        match fit_sarima(y, order) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.aic < b.aic) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::InsufficientData("no SARIMA order could be fitted".into())))
}

/// Point forecasts and forecast-error standard deviations for `h` steps.
pub fn forecast(fit: &SarimaFit, y: &[f64], h: usize) -> (Vec<f64>, Vec<f64>) {
    let o = &fit.order;
    let ex = expand(o, &fit.ar, &fit.ma, &fit.sar, &fit.sma);
    let w = difference(y, o.d, o.sd, o.s);
    let x: Vec<f64> = w.iter().map(|v| v - fit.mean).collect();
    let e_w = residuals(&x, &ex);
    let offset = y.len() - w.len();

    // Integrated AR polynomial acting on the levels.
    let mut full = lag_poly(&fit.ar, 1, -1.0);
    full = poly_mul(&full, &lag_poly(&fit.sar, o.s, -1.0));
    for _ in 0..o.d {
        full = poly_mul(&full, &[1.0, -1.0]);
    }
    for _ in 0..o.sd {
        let mut seasonal = vec![0.0; o.s + 1];
        seasonal[0] = 1.0;
        seasonal[o.s] = -1.0;
        full = poly_mul(&full, &seasonal);
    }
    let phi: Vec<f64> = full[1..].iter().map(|v| -v).collect();
    let constant = if o.d + o.sd == 0 {
        fit.mean * (1.0 - ex.ar.iter().sum::<f64>())
    } else {
        0.0
    };

    let n = y.len();
    let mut levels = y.to_vec();
    let mut e = vec![0.0; n];
    e[offset..].copy_from_slice(&e_w);
    for step in 0..h {
        let t = n + step;
        let mut v = constant;
        for (j, a) in phi.iter().enumerate() {
            if t > j {
                v += a * levels[t - 1 - j];
            }
        }
        for (j, m) in ex.ma.iter().enumerate() {
            if t > j && t - 1 - j < n {
                v += m * e[t - 1 - j];
            }
        }
        levels.push(v);
    }

    let mut psi = vec![1.0];
    for j in 1..h {
        let mut v = ex.ma.get(j - 1).copied().unwrap_or(0.0);
        for i in 1..=j.min(phi.len()) {
            v += phi[i - 1] * psi[j - i];
        }
        psi.push(v);
    }
    let mut acc = 0.0;
    let sd = psi
        .iter()
        .map(|p| {
            acc += p * p;
            (fit.sigma2 * acc).sqrt()
        })
        .collect();
    (levels[n..].to_vec(), sd)
}

pub(crate) fn fit_sarima_input(config: &ModelConfig, input: &ModelInput) -> Result<TrainedModel> {
    let y = input.target();
    let fit = match config.sarima {
        SarimaSpec::Auto => fit_sarima_auto(y, config.period)?,
        SarimaSpec::Order(order) => fit_sarima(y, order)?,
    };
    Ok(TrainedModel::shell(config, input, FittedState::Sarima(fit)))
}

pub(crate) fn predict_sarima(model: &TrainedModel, input: &ModelInput) -> Result<ForecastResult> {
    let FittedState::Sarima(fit) = &model.state else {
        return Err(Error::WrongModelKind {
            expected: "sarima".into(),
            actual: model.kind.as_str().into(),
        });
    };
    let (point, sd) = forecast(fit, input.target(), input.horizon);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z: Vec<f64> = model.config.quantiles.iter().map(|q| normal.inverse_cdf(*q)).collect();
    let band = point
        .iter()
        .zip(&sd)
        .map(|(p, s)| z.iter().map(|zq| if *zq == 0.0 { *p } else { p + zq * s }).collect())
        .collect();
    Ok(plain_result(model, input, band))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..n + 100 {
            let z: f64 = StandardNormal.sample(&mut rng);
            prev = phi * prev + z;
            y.push(prev);
        }
        y.split_off(100)
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let r = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), &[0.0, 0.0], 0.5, 2000, 1e-14);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] + 2.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn pacf_transform_yields_stationary_polynomials() {
        let phi = pacf_to_coefficients(&[0.3]);
        assert!((phi[0] - 0.3f64.tanh()).abs() < 1e-15);
        // AR(2) stationarity triangle: |φ2| < 1, φ1 + φ2 < 1, φ2 - φ1 < 1.
        for u in [[-3.0, 2.0], [2.5, 2.5], [0.1, -4.0], [5.0, -5.0]] {
            let phi = pacf_to_coefficients(&u);
            assert!(phi[1].abs() < 1.0 && phi[0] + phi[1] < 1.0 && phi[1] - phi[0] < 1.0, "{phi:?}");
        }
    }

    #[test]
    fn differencing_by_hand() {
        assert_eq!(difference(&[1.0, 4.0, 9.0, 16.0], 1, 0, 7), vec![3.0, 5.0, 7.0]);
        let y: Vec<f64> = (0..10).map(|t| (t % 3) as f64 + t as f64).collect();
        let w = difference(&y, 0, 1, 3);
        assert!(w.iter().all(|v| (*v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let y = ar1(0.8, 1000, 42);
        let fit = fit_sarima(&y, SarimaOrder::arima(1, 0, 0)).unwrap();
        assert!((0.74..=0.86).contains(&fit.ar[0]), "{}", fit.ar[0]);
    }

    #[test]
    fn random_walk_forecast_is_flat_at_last_value() {
        let steps = ar1(0.0, 500, 3);
        let mut y = vec![10.0];
        for s in steps {
            let next = y[y.len() - 1] + s;
            y.push(next);
        }
        let fit = fit_sarima(&y, SarimaOrder::arima(0, 1, 0)).unwrap();
        let (point, sd) = forecast(&fit, &y, 30);
        let last = *y.last().unwrap();
        assert!(point.iter().all(|p| *p == last));
        assert!(sd.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn white_noise_auto_forecast_is_near_the_mean() {
        let y: Vec<f64> = ar1(0.0, 400, 8).iter().map(|v| 5.0 + v).collect();
        let fit = fit_sarima_auto(&y, 7).unwrap();
        let (point, _) = forecast(&fit, &y, 14);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        let avg = point.iter().sum::<f64>() / point.len() as f64;
        assert!((avg - mean).abs() <= 0.05 * sd, "{} {avg} vs {mean}", fit.order);
    }

    #[test]
    fn seasonal_model_tracks_weekly_pattern() {
        let pattern = [1.0, 3.0, 2.0, 5.0, 4.0, 0.0, 2.5];
        let noise = ar1(0.0, 420, 5);
        let y: Vec<f64> = (0..420).map(|t| 10.0 + pattern[t % 7] + 0.05 * noise[t]).collect();
        let fit = fit_sarima(&y, SarimaOrder { p: 0, d: 0, q: 0, sp: 0, sd: 1, sq: 1, s: 7 }).unwrap();
        let (point, _) = forecast(&fit, &y, 7);
        for (t, p) in point.iter().enumerate() {
            assert!((p - 10.0 - pattern[(420 + t) % 7]).abs() < 0.1, "{t}: {p}");
        }
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(fit_sarima(&[1.0; 15], SarimaOrder::arima(1, 0, 1)), Err(Error::InsufficientData(_))));
    }
}
