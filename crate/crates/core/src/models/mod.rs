//! Forecasters: seasonal naive, SARIMA, gradient-boosted trees, an LSTM and
//! a reduced Temporal Fusion Transformer.
//!
//! Every model is fitted on one advertiser's [`ModelInput`] by [`fit`] and
//! produces a [`ForecastResult`] through [`predict`]. A [`TrainedModel`]
//! serializes to JSON and reproduces its predictions bit for bit after a
//! reload.

mod config;
pub mod gbdt;
mod input;
pub mod lstm;
pub mod nn;
pub mod sarima;
pub mod snaive;
pub mod tft;

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use config::{GbdtParams, LossKind, ModelConfig, ModelKind, SarimaOrder, SarimaSpec};
pub use input::{ChannelStats, ModelInput, BUDGET_PLAN};
pub(crate) use input::Standardized;

use crate::autodiff::Checkpoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub model_kind: ModelKind,
    pub dates: Vec<NaiveDate>,
    /// Median-quantile forecast.
    pub point: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// `H × Q`, rows non-decreasing.
    pub quantile_band: Vec<Vec<f64>>,
    pub encoder_names: Vec<String>,
    pub encoder_importance: Vec<f64>,
    pub decoder_names: Vec<String>,
    pub decoder_importance: Vec<f64>,
    /// Weight per encoder day, oldest first.
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedState {
    Snaive,
    Sarima(sarima::SarimaFit),
    Gbdt(gbdt::GbdtModel),
    /// Weights live in [`TrainedModel::parameters`].
    Neural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub advertiser_id: String,
    pub composition: String,
    pub past_names: Vec<String>,
    pub known_names: Vec<String>,
    pub static_names: Vec<String>,
    pub past_stats: Vec<ChannelStats>,
    pub known_stats: Vec<ChannelStats>,
    pub parameters: Checkpoint,
    pub state: FittedState,
    pub training_log: Vec<EpochLog>,
}

impl TrainedModel {
    pub(crate) fn shell(config: &ModelConfig, input: &ModelInput, state: FittedState) -> Self {
        Self {
            kind: config.kind,
            config: config.clone(),
            advertiser_id: input.advertiser_id.clone(),
            composition: input.composition.clone(),
            past_names: input.past_names.clone(),
            known_names: input.known_names.clone(),
            static_names: input.static_names.clone(),
            past_stats: input.past_stats.clone(),
            known_stats: input.known_stats.clone(),
            parameters: Checkpoint::new(),
            state,
            training_log: Vec::new(),
        }
    }

    pub fn has_budget_channel(&self) -> bool {
        self.known_names.iter().any(|n| n == BUDGET_PLAN)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        if input.past_names != self.past_names || input.known_names != self.known_names {
            return Err(Error::invalid(format!(
                "input channels {:?} / {:?} do not match the model's {:?} / {:?}",
                input.past_names, input.known_names, self.past_names, self.known_names
            )));
        }
        if input.static_names != self.static_names {
            return Err(Error::invalid("input categories do not match the model's"));
        }
        Ok(())
    }
}

/// Fits `config.kind` on `input`. The input horizon must equal
/// `config.horizon`.
pub fn fit(config: &ModelConfig, input: &ModelInput) -> Result<TrainedModel> {
    config.validate()?;
    if input.horizon != config.horizon {
        return Err(Error::invalid(format!(
            "input horizon {} differs from configured horizon {}",
            input.horizon, config.horizon
        )));
    }
    match config.kind {
        ModelKind::Snaive => snaive::fit_snaive(config, input),
        ModelKind::Sarima => sarima::fit_sarima_input(config, input),
        ModelKind::Gbdt => gbdt::fit_gbdt_input(config, input),
        ModelKind::Lstm => lstm::fit_lstm(config, input),
        ModelKind::Tft => tft::fit_tft(config, input),
    }
}

/// Forecasts the `input.horizon` days after the input's history.
pub fn predict(model: &TrainedModel, input: &ModelInput) -> Result<ForecastResult> {
    model.check_input(input)?;
    if input.horizon != model.config.horizon {
        return Err(Error::invalid(format!(
            "input horizon {} differs from the model's {}",
            input.horizon, model.config.horizon
        )));
    }
    match model.kind {
        ModelKind::Snaive => snaive::predict_snaive(model, input),
        ModelKind::Sarima => sarima::predict_sarima(model, input),
        ModelKind::Gbdt => gbdt::predict_gbdt_input(model, input),
        ModelKind::Lstm => lstm::predict_lstm(model, input),
        ModelKind::Tft => tft::predict_tft(model, input),
    }
}

/// Mean pinball loss `max(q e, (q - 1) e)` with `e = actual - pred`.
pub fn pinball(pred: &[f64], actual: &[f64], q: f64) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::invalid(format!(
            "pinball needs equal non-empty lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile {q} outside (0, 1)")));
    }
    let total: f64 = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| {
            let e = a - p;
            (q * e).max((q - 1.0) * e)
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Monotone rearrangement: sorts each row so quantiles never cross.
pub fn rearrange_quantiles(band: &mut [Vec<f64>]) {
    for row in band {
        row.sort_by(f64::total_cmp);
    }
}

pub(crate) fn uniform(n: usize) -> Vec<f64> {
    if n == 0 {
        Vec::new()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Normalizes non-negative weights to sum to one; all-zero becomes uniform.
pub(crate) fn normalize(weights: &[f64]) -> Vec<f64> {
    let s: f64 = weights.iter().sum();
    if s > 0.0 {
        weights.iter().map(|w| w / s).collect()
    } else {
        uniform(weights.len())
    }
}

/// A result with flat importances and attention, for models without
/// their own interpretability outputs.
pub(crate) fn plain_result(
    model: &TrainedModel,
    input: &ModelInput,
    mut band: Vec<Vec<f64>>,
) -> ForecastResult {
    rearrange_quantiles(&mut band);
    let mid = model.config.median_index();
    let point = band.iter().map(|row| row[mid]).collect();
    let encoder_names: Vec<String> = model.past_names.iter().chain(&model.known_names).cloned().collect();
    ForecastResult {
        model_kind: model.kind,
        dates: input.forecast_dates().to_vec(),
        point,
        quantiles: model.config.quantiles.clone(),
        quantile_band: band,
        encoder_importance: uniform(encoder_names.len()),
        encoder_names,
        decoder_importance: uniform(model.known_names.len()),
        decoder_names: model.known_names.clone(),
        attention: uniform(model.config.encoder),
    }
}

#[cfg(test)]
mod tests;
