use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backtest::{actuals, frozen_clusters, score, train_cell, BacktestOptions, GridConfig};
use super::compose::CompositionTag;
use super::metrics::mean_std;
use crate::error::{Error, Result};
use crate::models::{self, ForecastResult, ModelInput, ModelKind, TrainedModel};
use crate::panel::{DateRange, PanelDataset};
use crate::simgen::{GroundTruth, ShockWindows};

/// The two configurations compared around the shock.
pub fn robustness_configs() -> [GridConfig; 2] {
    [
        GridConfig::new(ModelKind::Tft, CompositionTag::Multivar),
        GridConfig::new(ModelKind::Tft, CompositionTag::CompDist),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCell {
    pub window: String,
    pub start: chrono::NaiveDate,
    pub end: chrono::NaiveDate,
    pub config: String,
    pub smape_mean: f64,
    pub smape_std: f64,
    pub n: usize,
}

/// Window × config table of SMAPE over the shocked advertisers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub advertisers: Vec<String>,
    pub configs: Vec<String>,
    pub windows: Vec<String>,
    /// Window-major.
    pub cells: Vec<RobustnessCell>,
    /// `[window][config][advertiser]`.
    pub smape: Vec<Vec<Vec<f64>>>,
}

impl RobustnessTable {
    pub fn cell(&self, window: &str, config: &str) -> Option<&RobustnessCell> {
        self.cells.iter().find(|c| c.window == window && c.config == config)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Paper-style layout: one row per window, `mean ± std` per config.
    pub fn render(&self) -> String {
        let mut out = format!("{:<8}", "window");
        for c in &self.configs {
            out.push_str(&format!(" {c:>26}"));
        }
        out.push('\n');
        for w in &self.windows {
            out.push_str(&format!("{w:<8}"));
            for c in &self.configs {
                let cell = self.cell(w, c).expect("every cell is filled");
                let s = format!("{:.3} ± {:.3}", cell.smape_mean, cell.smape_std);
                out.push_str(&format!(" {s:>26}"));
            }
            out.push('\n');
        }
        out
    }
}

/// For each window, trains `configs` on data before the window start and
/// forecasts the whole window for every shocked advertiser. Clusters are
/// recomputed before each window's origin.
pub fn robustness_experiment(
    panel: &PanelDataset,
    truth: &GroundTruth,
    configs: &[GridConfig],
    windows: &ShockWindows,
    opts: &BacktestOptions,
) -> Result<RobustnessTable> {
    let advertisers: Vec<String> = truth
        .shocked_advertisers
        .iter()
        .filter(|id| panel.get(id).is_some())
        .filter(|id| opts.advertisers.as_ref().is_none_or(|keep| keep.contains(id)))
        .cloned()
        .collect();
    if advertisers.is_empty() {
        return Err(Error::InsufficientData("no shocked advertisers in the panel".into()));
    }
    let mut cells = Vec::new();
    let mut smape = Vec::new();
    for (name, range) in windows.labelled() {
        let DateRange { start: origin, .. } = range;
        let horizon = range.len_days();
        let mut wopts = opts.clone();
        wopts.origin = Some(origin);
        wopts.horizons = vec![horizon];
        if wopts.model.encoder < horizon {
            wopts.model.encoder = horizon;
        }
        wopts.resolve_origin(panel)?;
        let clusters = frozen_clusters(panel, configs, origin, &wopts.clustering)?;
        let mut per_config = Vec::new();
        for gc in configs {
            let values = advertisers
                .par_iter()
                .map(|a| {
                    let (model, input) = train_cell(panel, &clusters, *gc, a, origin, horizon, &wopts)?;
                    Ok(score(&model, &input, &actuals(panel, a, origin, horizon)?)?.smape)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (m, s) = mean_std(&values);
            cells.push(RobustnessCell {
                window: name.to_string(),
                start: range.start,
                end: range.end,
                config: gc.tag(),
                smape_mean: m,
                smape_std: s,
                n: values.len(),
            });
            per_config.push(values);
        }
        smape.push(per_config);
    }
    Ok(RobustnessTable {
        advertisers,
        configs: configs.iter().map(GridConfig::tag).collect(),
        windows: windows.labelled().iter().map(|(n, _)| n.to_string()).collect(),
        cells,
        smape,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub baseline: ForecastResult,
    pub scenario: ForecastResult,
    /// `scenario.point − baseline.point`.
    pub delta: Vec<f64>,
}

/// Forecasts with the stored budget plan and with `budget_plan` in its
/// place.
pub fn whatif(model: &TrainedModel, input: &ModelInput, budget_plan: &[f64]) -> Result<WhatIf> {
    if !model.has_budget_channel() {
        return Err(Error::NoBudgetChannel);
    }
    let baseline = models::predict(model, input)?;
    let scenario = models::predict(model, &input.with_budget_plan(budget_plan)?)?;
    let delta = scenario.point.iter().zip(&baseline.point).map(|(s, b)| s - b).collect();
    Ok(WhatIf {
        baseline,
        scenario,
        delta,
    })
}
