//! Seasonal naive baseline.

use super::{plain_result, FittedState, ForecastResult, ModelConfig, ModelInput, TrainedModel};
use crate::error::{Error, Result};

/// `forecast[t] = history[len - period + (t mod period)]`.
pub fn snaive(history: &[f64], horizon: usize, period: usize) -> Result<Vec<f64>> {
    if period == 0 || history.len() < period {
        return Err(Error::InsufficientData(format!(
            "seasonal naive needs at least {period} observations, got {}",
            history.len()
        )));
    }
    let base = history.len() - period;
    Ok((0..horizon).map(|t| history[base + t % period]).collect())
}

pub(crate) fn fit_snaive(config: &ModelConfig, input: &ModelInput) -> Result<TrainedModel> {
    snaive(input.target(), 1, config.period)?;
    Ok(TrainedModel::shell(config, input, FittedState::Snaive))
}

pub(crate) fn predict_snaive(model: &TrainedModel, input: &ModelInput) -> Result<ForecastResult> {
    let point = snaive(input.target(), input.horizon, model.config.period)?;
    let q = model.config.quantiles.len();
    let band = point.iter().map(|v| vec![*v; q]).collect();
    Ok(plain_result(model, input, band))
}
