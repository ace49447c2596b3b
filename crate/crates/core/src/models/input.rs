use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the known-future channel carrying the planned budget.
pub const BUDGET_PLAN: &str = "adbudget_plan";

/// Z-score parameters of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    pub const IDENTITY: ChannelStats = ChannelStats { mean: 0.0, std: 1.0 };

    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn restore(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Inputs for one advertiser under one composition.
///
/// `past` holds the observed channels over the `history_len` days before
/// the forecast origin, target CPC first. `known` covers those days plus
/// the `horizon` days being forecast. Statistics are taken from the
/// history only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub advertiser_id: String,
    pub composition: String,
    pub dates: Vec<NaiveDate>,
    pub history_len: usize,
    pub horizon: usize,
    pub past_names: Vec<String>,
    pub past: Vec<Vec<f64>>,
    pub known_names: Vec<String>,
    pub known: Vec<Vec<f64>>,
    /// Standardization is skipped for known channels flagged here
    /// (calendar encodings are already bounded).
    pub known_scaled: Vec<bool>,
    pub static_names: Vec<String>,
    pub static_onehot: Vec<f64>,
    pub past_stats: Vec<ChannelStats>,
    pub known_stats: Vec<ChannelStats>,
    /// Set when competition channels fell back to the advertiser's own CPC.
    pub peers_degenerate: bool,
    pub peer_ids: Vec<String>,
}

impl ModelInput {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        advertiser_id: impl Into<String>,
        composition: impl Into<String>,
        dates: Vec<NaiveDate>,
        history_len: usize,
        past: Vec<(String, Vec<f64>)>,
        known: Vec<(String, Vec<f64>, bool)>,
        static_names: Vec<String>,
        static_onehot: Vec<f64>,
    ) -> Result<Self> {
        let horizon = dates
            .len()
            .checked_sub(history_len)
            .ok_or_else(|| Error::invalid("history longer than the date index"))?;
        if past.is_empty() {
            return Err(Error::invalid("model input needs at least the target channel"));
        }
        for (name, v) in &past {
            if v.len() != history_len {
                return Err(Error::shape(
                    "model_input",
                    format!("past channel {name} has {} values, expected {history_len}", v.len()),
                ));
            }
        }
        for (name, v, _) in &known {
            if v.len() != dates.len() {
                return Err(Error::shape(
                    "model_input",
                    format!("known channel {name} has {} values, expected {}", v.len(), dates.len()),
                ));
            }
        }
        if static_names.len() != static_onehot.len() {
            return Err(Error::shape("model_input", "static names and values differ in length"));
        }
        let all = past.iter().map(|(n, v)| (n, v.as_slice())).chain(known.iter().map(|(n, v, _)| (n, v.as_slice())));
        for (name, v) in all {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("channel {name} has missing or non-finite values")));
            }
        }
        let past_stats = past.iter().map(|(_, v)| ChannelStats::of(v)).collect();
        let known_stats = known
            .iter()
            .map(|(_, v, scaled)| {
                if *scaled {
                    ChannelStats::of(&v[..history_len])
                } else {
                    ChannelStats::IDENTITY
                }
            })
            .collect();
        let (past_names, past) = past.into_iter().unzip();
        let mut known_names = Vec::new();
        let mut known_values = Vec::new();
        let mut known_scaled = Vec::new();
        for (n, v, s) in known {
            known_names.push(n);
            known_values.push(v);
            known_scaled.push(s);
        }
        Ok(Self {
            advertiser_id: advertiser_id.into(),
            composition: composition.into(),
            dates,
            history_len,
            horizon,
            past_names,
            past,
            known_names,
            known: known_values,
            known_scaled,
            static_names,
            static_onehot,
            past_stats,
            known_stats,
            peers_degenerate: false,
            peer_ids: Vec::new(),
        })
    }

    pub fn target(&self) -> &[f64] {
        &self.past[0]
    }

    pub fn forecast_dates(&self) -> &[NaiveDate] {
        &self.dates[self.history_len..]
    }

    pub fn n_past(&self) -> usize {
        self.past.len()
    }

    pub fn n_known(&self) -> usize {
        self.known.len()
    }

    pub fn budget_index(&self) -> Option<usize> {
        self.known_names.iter().position(|n| n == BUDGET_PLAN)
    }

    /// Copy with the planned budget over the forecast days replaced.
    pub fn with_budget_plan(&self, plan: &[f64]) -> Result<Self> {
        let idx = self.budget_index().ok_or(Error::NoBudgetChannel)?;
        if plan.len() != self.horizon {
            return Err(Error::invalid(format!(
                "budget plan has {} days, horizon is {}",
                plan.len(),
                self.horizon
            )));
        }
        if plan.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("budget plan values must be finite and non-negative"));
        }
        let mut out = self.clone();
        out.known[idx][self.history_len..].copy_from_slice(plan);
        Ok(out)
    }

    /// The stored plan over the forecast days.
    pub fn budget_plan(&self) -> Option<&[f64]> {
        self.budget_index().map(|i| &self.known[i][self.history_len..])
    }

    /// Truncates to a shorter horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon > self.horizon {
            return Err(Error::invalid(format!(
                "cannot extend horizon {} to {horizon}",
                self.horizon
            )));
        }
        let mut out = self.clone();
        let end = self.history_len + horizon;
        out.dates.truncate(end);
        for k in &mut out.known {
            k.truncate(end);
        }
        out.horizon = horizon;
        Ok(out)
    }
}

/// Channels standardized with a fixed set of statistics.
#[derive(Debug, Clone)]
pub(crate) struct Standardized {
    /// `[channel][day]` over the history.
    pub past: Vec<Vec<f64>>,
    /// `[channel][day]` over history and forecast days.
    pub known: Vec<Vec<f64>>,
}

impl Standardized {
    pub fn new(input: &ModelInput, past_stats: &[ChannelStats], known_stats: &[ChannelStats]) -> Self {
        let past = input
            .past
            .iter()
            .zip(past_stats)
            .map(|(v, s)| v.iter().map(|x| s.standardize(*x)).collect())
            .collect();
        let known = input
            .known
            .iter()
            .zip(known_stats)
            .map(|(v, s)| v.iter().map(|x| s.standardize(*x)).collect())
            .collect();
        Self { past, known }
    }
}
