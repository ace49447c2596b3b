use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use cpc_core::clustering::{cluster_panel, ClusterAssignment, ClusterMethod};
use cpc_core::models::TrainedModel;
use cpc_core::panel;
use cpc_core::pipeline::{
    actuals, cell_input, frozen_clusters, paper_grid, robustness_configs, robustness_experiment, score, train_cell,
    BacktestReport, BacktestRow, GridConfig, RobustnessTable,
};
use cpc_core::simgen::{inject_shock_window_labels, simulate, MarketConfig};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Result, ServiceError};
use crate::forecast::{self, ForecastRequest, ForecastResponse, PlanEntry};
use crate::store::{ModelBundle, RunConfig, RunStore};

/// Simulates a market into a new run. A config without `market` uses the
/// default simulator.
pub fn simulate_run(config: RunConfig, out: &Path) -> Result<RunStore> {
    let market = config.market.clone().unwrap_or_default();
    let (panel, truth) = simulate(&market)?;
    let config = RunConfig {
        market: Some(market),
        ..config
    };
    RunStore::create(out, config, panel, Some(&truth))
}

/// Ingests and cleans a panel CSV into a new run.
pub fn ingest_run(csv: &Path, config: RunConfig, out: &Path) -> Result<RunStore> {
    let file = std::fs::File::open(csv).map_err(|e| ServiceError::validation(format!("{}: {e}", csv.display())))?;
    let panel = panel::clean(&panel::ingest_csv(file)?, config.max_missing_frac)?;
    RunStore::create(out, RunConfig { market: None, ..config }, panel, None)
}

/// Clusters the whole panel and stores the result as `clusters.json`.
pub fn cluster_run(store: &RunStore, method: ClusterMethod) -> Result<ClusterAssignment> {
    let c = cluster_panel(store.panel(), method, None, &store.config().backtest.clustering)?;
    store.write_clusters(&c)?;
    Ok(c)
}

/// `grid.json`: either a list of config tags or an object with `configs`
/// and optional `horizons`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum GridFile {
    Tags(Vec<String>),
    Spec {
        configs: Vec<String>,
        #[serde(default)]
        horizons: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub configs: Vec<GridConfig>,
    pub horizons: Option<Vec<usize>>,
}

impl GridSpec {
    pub fn paper() -> Self {
        Self {
            configs: paper_grid(),
            horizons: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: GridFile =
            serde_json::from_str(text).map_err(|e| ServiceError::validation(format!("grid file: {e}")))?;
        let (tags, horizons) = match file {
            GridFile::Tags(t) => (t, None),
            GridFile::Spec { configs, horizons } => (configs, horizons),
        };
        if tags.is_empty() {
            return Err(ServiceError::validation("grid file lists no configs"));
        }
        let mut configs = Vec::new();
        for t in &tags {
            let gc: GridConfig = t.parse()?;
            if !configs.contains(&gc) {
                configs.push(gc);
            }
        }
        Ok(Self { configs, horizons })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub origin: chrono::NaiveDate,
    pub bundles: usize,
    pub models: usize,
}

/// Trains every grid config, horizon and advertiser on data before the
/// backtest origin and stores one bundle per advertiser and config.
pub fn train_run(store: &RunStore, grid: &GridSpec) -> Result<TrainSummary> {
    let mut opts = store.config().backtest.clone();
    if let Some(h) = &grid.horizons {
        opts.horizons = h.clone();
    }
    if opts.horizons.is_empty() {
        return Err(ServiceError::validation("no horizons to train"));
    }
    let panel = store.panel();
    let origin = opts.resolve_origin(panel)?;
    let clusters = frozen_clusters(panel, &grid.configs, origin, &opts.clustering)?;
    store.write_frozen_clusters(&clusters)?;
    let advertisers = opts.advertisers(panel)?;
    let mut cells = Vec::new();
    for gc in &grid.configs {
        for a in &advertisers {
            for &h in &opts.horizons {
                cells.push((*gc, *a, h));
            }
        }
    }
    let fitted: Vec<TrainedModel> = cells
        .par_iter()
        .map(|&(gc, a, h)| Ok(train_cell(panel, &clusters, gc, a, origin, h, &opts)?.0))
        .collect::<Result<_>>()?;
    let mut bundles: BTreeMap<(String, String), ModelBundle> = BTreeMap::new();
    for ((gc, a, h), model) in cells.iter().zip(fitted) {
        bundles
            .entry((a.to_string(), gc.tag()))
            .or_insert_with(|| ModelBundle {
                advertiser_id: a.to_string(),
                config_tag: gc.tag(),
                origin,
                models: BTreeMap::new(),
            })
            .models
            .insert(*h, model);
    }
    for b in bundles.values() {
        store.save_bundle(b)?;
    }
    Ok(TrainSummary {
        origin,
        bundles: bundles.len(),
        models: cells.len(),
    })
}

/// Scores the stored models on the days after their training origin and
/// writes `reports/backtest.csv` and `reports/summary.csv`.
pub fn backtest_run(store: &RunStore, horizons: &[usize]) -> Result<BacktestReport> {
    let started = Instant::now();
    let keys = store.bundle_keys()?;
    if keys.is_empty() {
        return Err(ServiceError::NoModels(store.root().display().to_string()));
    }
    let panel = store.panel();
    let clusters = store.frozen_clusters()?;
    let opts = &store.config().backtest;
    let mut bundles = Vec::new();
    for (adv, tag) in &keys {
        let b = store
            .load_bundle(adv, tag)?
            .ok_or_else(|| ServiceError::Validation(format!("model {tag} for {adv} vanished")))?;
        let gc: GridConfig = tag.parse()?;
        bundles.push((gc, b));
    }
    let origin = bundles[0].1.origin;
    if let Some((_, b)) = bundles.iter().find(|(_, b)| b.origin != origin) {
        return Err(ServiceError::validation(format!(
            "models were trained at different origins ({origin} and {} for {} {})",
            b.origin, b.advertiser_id, b.config_tag
        )));
    }
    let horizons: Vec<usize> = if horizons.is_empty() {
        let mut all: Vec<usize> = bundles.iter().flat_map(|(_, b)| b.models.keys().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    } else {
        horizons.to_vec()
    };
    for (_, b) in &bundles {
        if let Some(h) = horizons.iter().find(|h| !b.models.contains_key(h)) {
            return Err(ServiceError::validation(format!(
                "{} for {} has no model at horizon {h}",
                b.config_tag, b.advertiser_id
            )));
        }
    }

    // Paper grid order first, then any other configs by tag.
    let grid = paper_grid();
    let mut configs: Vec<GridConfig> = bundles.iter().map(|(gc, _)| *gc).collect();
    configs.sort_by_key(|gc| (grid.iter().position(|g| g == gc).unwrap_or(usize::MAX), gc.tag()));
    configs.dedup();
    let ids = panel.ids();
    let mut cells = Vec::new();
    for gc in &configs {
        for &h in &horizons {
            for (bgc, b) in &bundles {
                if bgc == gc {
                    cells.push((*gc, h, b));
                }
            }
        }
    }
    cells.sort_by_key(|(gc, h, b)| {
        (
            configs.iter().position(|c| c == gc),
            *h,
            ids.iter().position(|id| *id == b.advertiser_id),
        )
    });
    let rows = cells
        .par_iter()
        .map(|&(gc, h, b)| {
            let input = cell_input(panel, &clusters, gc, &b.advertiser_id, b.origin, h, opts)?;
            let m = score(&b.models[&h], &input, &actuals(panel, &b.advertiser_id, b.origin, h)?)?;
            Ok(BacktestRow {
                config: gc.tag(),
                horizon: h,
                advertiser: b.advertiser_id.clone(),
                mae: m.mae,
                smape: m.smape,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = BacktestReport {
        origin,
        horizons,
        configs: configs.iter().map(GridConfig::tag).collect(),
        rows,
        elapsed_secs: started.elapsed().as_secs_f64(),
    };
    let mut buf = Vec::new();
    report.write_backtest_csv(&mut buf)?;
    store.write_report("backtest.csv", &buf)?;
    let mut buf = Vec::new();
    report.write_summary_csv(&mut buf)?;
    store.write_report("summary.csv", &buf)?;
    Ok(report)
}

/// Runs the shock robustness experiment and writes
/// `reports/robustness.csv`.
pub fn robustness_run(store: &RunStore) -> Result<RobustnessTable> {
    let market: &MarketConfig = store
        .config()
        .market
        .as_ref()
        .ok_or_else(|| ServiceError::validation("robustness needs a simulated run with a shock"))?;
    let truth = store
        .ground_truth()?
        .ok_or_else(|| ServiceError::validation("robustness needs ground_truth.json"))?;
    let windows = inject_shock_window_labels(market, store.config().windows)?;
    let table = robustness_experiment(
        store.panel(),
        &truth,
        &robustness_configs(),
        &windows,
        &store.config().backtest,
    )?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    store.write_report("robustness.csv", &buf)?;
    Ok(table)
}

/// `plan.json`: a list of `{date, amount}` entries or of plain amounts
/// starting at the first forecast day.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum PlanFile {
    Entries(Vec<PlanEntry>),
    Amounts(Vec<f64>),
}

pub fn read_plan(path: &Path, store: &RunStore) -> Result<Vec<PlanEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| ServiceError::validation(format!("{}: {e}", path.display())))?;
    let plan: PlanFile = serde_json::from_str(&text).map_err(|e| ServiceError::validation(format!("plan file: {e}")))?;
    Ok(match plan {
        PlanFile::Entries(e) => e,
        PlanFile::Amounts(a) => {
            let last = *store
                .panel()
                .dates()
                .last()
                .ok_or_else(|| ServiceError::validation("the run has an empty panel"))?;
            last.iter_days()
                .skip(1)
                .zip(a)
                .map(|(date, amount)| PlanEntry { date, amount })
                .collect()
        }
    })
}

/// Budget scenario for one advertiser. Without an explicit horizon the
/// smallest trained horizon covering the plan is used.
pub fn whatif_run(
    store: &RunStore,
    advertiser_id: &str,
    config_tag: &str,
    horizon: Option<usize>,
    plan: Vec<PlanEntry>,
) -> Result<ForecastResponse> {
    if store.panel().get(advertiser_id).is_none() {
        return Err(cpc_core::Error::UnknownAdvertiser(advertiser_id.to_string()).into());
    }
    let bundle = store
        .load_bundle(advertiser_id, config_tag)?
        .ok_or_else(|| ServiceError::UnknownModel {
            advertiser_id: advertiser_id.to_string(),
            config_tag: config_tag.to_string(),
        })?;
    let horizon = match horizon {
        Some(h) => h,
        None => {
            let last = *store.panel().dates().last().expect("non-empty panel");
            let needed = plan
                .iter()
                .map(|e| (e.date - last).num_days().max(0) as usize)
                .max()
                .unwrap_or(1);
            *bundle
                .models
                .keys()
                .find(|h| **h >= needed)
                .ok_or_else(|| ServiceError::validation(format!("plan spans {needed} days, beyond every trained horizon")))?
        }
    };
    let request = ForecastRequest {
        advertiser_id: advertiser_id.to_string(),
        config_tag: config_tag.to_string(),
        horizon,
        budget_plan: Some(plan),
    };
    forecast::forecast(store, &bundle, &request)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_files_accept_lists_and_objects() {
        let g = GridSpec::parse(r#"["TFT.univar", "XGB.multivar.comp.dist", "TFT.univar"]"#).unwrap();
        assert_eq!(g.configs.len(), 2);
        assert_eq!(g.horizons, None);
        let g = GridSpec::parse(r#"{"configs": ["SARIMA.univar"], "horizons": [14]}"#).unwrap();
        assert_eq!(g.horizons, Some(vec![14]));
        assert!(GridSpec::parse(r#"["SARIMA.multivar"]"#).is_err());
        assert!(GridSpec::parse("[]").is_err());
        assert_eq!(GridSpec::paper().configs.len(), 16);
    }
}
