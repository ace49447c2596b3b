use chrono::NaiveDate;
use cpc_core::models::{self, ForecastResult, ModelInput};
use cpc_core::pipeline::{self, cell_input, GridConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::store::{ModelBundle, RunStore};

/// Planned budget for one forecast day, in the units of the panel's
/// monthly budget channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub date: NaiveDate,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    pub advertiser_id: String,
    pub config_tag: String,
    pub horizon: usize,
    #[serde(default)]
    pub budget_plan: Option<Vec<PlanEntry>>,
}

/// The forecast from the stored plan, plus the scenario and its delta when
/// the request carries a budget plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub advertiser_id: String,
    pub config_tag: String,
    pub horizon: usize,
    /// Last observed day of the history the forecast is conditioned on.
    pub history_end: NaiveDate,
    #[serde(flatten)]
    pub forecast: ForecastResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_plan: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_plan: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<ForecastResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ForecastResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

/// Input for forecasting the `horizon` days after the end of the panel,
/// composed the way the bundle's models were trained.
pub fn current_input(store: &RunStore, bundle: &ModelBundle, horizon: usize) -> Result<ModelInput> {
    let gc: GridConfig = bundle.config_tag.parse()?;
    let panel = store.panel();
    let last = *panel
        .dates()
        .last()
        .ok_or_else(|| ServiceError::validation("the run has an empty panel"))?;
    let origin = last.succ_opt().ok_or_else(|| ServiceError::validation("panel ends at the last representable date"))?;
    let clusters = store.frozen_clusters()?;
    if let Some(method) = gc.composition.cluster_method() {
        if !clusters.contains_key(&method) {
            return Err(ServiceError::NotComputed(format!("{} clusters", method.as_str())));
        }
    }
    Ok(cell_input(
        panel,
        &clusters,
        gc,
        &bundle.advertiser_id,
        origin,
        horizon,
        &store.config().backtest,
    )?)
}

/// Overlays `entries` on `stored`; entries must be consecutive days inside
/// `dates`.
pub fn apply_plan(dates: &[NaiveDate], stored: &[f64], entries: &[PlanEntry]) -> Result<Vec<f64>> {
    let mut plan = stored.to_vec();
    let Some(first) = entries.first() else {
        return Ok(plan);
    };
    let start = dates
        .iter()
        .position(|d| *d == first.date)
        .ok_or_else(|| ServiceError::validation(format!("plan date {} is outside the forecast horizon", first.date)))?;
    for (k, e) in entries.iter().enumerate() {
        match dates.get(start + k) {
            Some(d) if *d == e.date => {}
            Some(_) => return Err(ServiceError::validation(format!("plan dates are not contiguous at {}", e.date))),
            None => {
                return Err(ServiceError::validation(format!(
                    "plan date {} is outside the forecast horizon",
                    e.date
                )))
            }
        }
        if !e.amount.is_finite() || e.amount < 0.0 {
            return Err(ServiceError::validation(format!("plan amount on {} must be finite and non-negative", e.date)));
        }
        plan[start + k] = e.amount;
    }
    Ok(plan)
}

pub fn forecast(store: &RunStore, bundle: &ModelBundle, request: &ForecastRequest) -> Result<ForecastResponse> {
    let model = bundle.models.get(&request.horizon).ok_or_else(|| {
        let have: Vec<String> = bundle.models.keys().map(usize::to_string).collect();
        ServiceError::validation(format!(
            "horizon {} is not trained for {}; available: {}",
            request.horizon,
            bundle.config_tag,
            have.join(", ")
        ))
    })?;
    let input = current_input(store, bundle, request.horizon)?;
    let mut response = ForecastResponse {
        advertiser_id: bundle.advertiser_id.clone(),
        config_tag: bundle.config_tag.clone(),
        horizon: request.horizon,
        history_end: input.dates[input.history_len - 1],
        forecast: models::predict(model, &input)?,
        baseline_plan: None,
        scenario_plan: None,
        baseline: None,
        scenario: None,
        delta: None,
    };
    if let Some(entries) = &request.budget_plan {
        if !model.has_budget_channel() {
            return Err(cpc_core::Error::NoBudgetChannel.into());
        }
        let stored = input.budget_plan().ok_or(cpc_core::Error::NoBudgetChannel)?;
        let plan = apply_plan(input.forecast_dates(), stored, entries)?;
        let w = pipeline::whatif(model, &input, &plan)?;
        response.baseline_plan = Some(stored.to_vec());
        response.scenario_plan = Some(plan);
        response.forecast = w.baseline.clone();
        response.baseline = Some(w.baseline);
        response.scenario = Some(w.scenario);
        response.delta = Some(w.delta);
    }
    Ok(response)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn days(n: usize) -> Vec<NaiveDate> {
        NaiveDate::from_ymd_opt(2021, 3, 1).unwrap().iter_days().take(n).collect()
    }

    #[test]
    fn plan_overlays_a_contiguous_span() {
        let d = days(5);
        let entries = [
            PlanEntry { date: d[1], amount: 7.0 },
            PlanEntry { date: d[2], amount: 8.0 },
        ];
        assert_eq!(apply_plan(&d, &[1.0; 5], &entries).unwrap(), vec![1.0, 7.0, 8.0, 1.0, 1.0]);
        assert_eq!(apply_plan(&d, &[1.0; 5], &[]).unwrap(), vec![1.0; 5]);
    }

    #[test]
    fn plan_gaps_and_overruns_are_rejected() {
        let d = days(3);
        let gap = [
            PlanEntry { date: d[0], amount: 1.0 },
            PlanEntry { date: d[2], amount: 1.0 },
        ];
        assert!(apply_plan(&d, &[0.0; 3], &gap).is_err());
        let late = [PlanEntry { date: d[2] + chrono::Duration::days(1), amount: 1.0 }];
        assert!(apply_plan(&d, &[0.0; 3], &late).is_err());
        let over = [
            PlanEntry { date: d[2], amount: 1.0 },
            PlanEntry { date: d[2] + chrono::Duration::days(1), amount: 1.0 },
        ];
        assert!(apply_plan(&d, &[0.0; 3], &over).is_err());
        let negative = [PlanEntry { date: d[0], amount: -1.0 }];
        assert!(apply_plan(&d, &[0.0; 3], &negative).is_err());
    }
}
