use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compose::{compose, history_before, CompositionKind, CompositionTag};
use super::metrics::{mean_std, MetricSet};
use crate::clustering::{cluster_panel, ClusterAssignment, ClusterMethod, ClusteringOptions};
use crate::error::{Error, Result};
use crate::models::{self, ModelConfig, ModelInput, ModelKind, TrainedModel};
use crate::panel::PanelDataset;

/// One cell of the experiment grid, written `TFT.multivar.comp.dist`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridConfig {
    pub model: ModelKind,
    pub composition: CompositionTag,
}

impl GridConfig {
    pub fn new(model: ModelKind, composition: CompositionTag) -> Self {
        Self { model, composition }
    }

    pub fn tag(&self) -> String {
        format!("{}.{}", self.model.label(), self.composition)
    }

    /// SARIMA only runs on the target alone.
    pub fn validate(&self) -> Result<()> {
        if self.model == ModelKind::Sarima && self.composition != CompositionTag::Univar {
            return Err(Error::Config(vec![format!("{} is only defined univariate", self.tag())]));
        }
        Ok(())
    }
}

impl std::fmt::Display for GridConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.tag())
    }
}

impl std::str::FromStr for GridConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (model, comp) = s
            .split_once('.')
            .ok_or_else(|| Error::invalid(format!("config tag `{s}` lacks a composition")))?;
        let gc = GridConfig::new(model.parse()?, comp.parse()?);
        gc.validate()?;
        Ok(gc)
    }
}

/// SARIMA univariate plus XGB, LSTM and TFT under all five compositions.
pub fn paper_grid() -> Vec<GridConfig> {
    let mut grid = vec![GridConfig::new(ModelKind::Sarima, CompositionTag::Univar)];
    for model in [ModelKind::Gbdt, ModelKind::Lstm, ModelKind::Tft] {
        for comp in CompositionTag::ALL {
            grid.push(GridConfig::new(model, comp));
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestOptions {
    pub horizons: Vec<usize>,
    /// First forecast day; defaults to the latest origin that leaves room
    /// for the longest horizon.
    pub origin: Option<NaiveDate>,
    /// Caps the training history to this many days before the origin.
    pub history_days: Option<usize>,
    /// Template for every model; kind, horizon and seed are set per cell.
    pub model: ModelConfig,
    pub peer_limit: usize,
    pub seed: u64,
    /// Restricts the backtest to these advertisers.
    pub advertisers: Option<Vec<String>>,
    pub clustering: ClusteringOptions,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self {
            horizons: vec![14, 30, 60],
            origin: None,
            history_days: None,
            model: ModelConfig::default(),
            peer_limit: 5,
            seed: 0,
            advertisers: None,
            clustering: ClusteringOptions::default(),
        }
    }
}

impl BacktestOptions {
    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    pub fn composition(&self, tag: CompositionTag) -> CompositionKind {
        CompositionKind {
            tag,
            peer_limit: self.peer_limit,
            seed: self.seed,
        }
    }

    pub fn advertisers<'a>(&'a self, panel: &'a PanelDataset) -> Result<Vec<&'a str>> {
        match &self.advertisers {
            None => Ok(panel.ids()),
            Some(list) => list
                .iter()
                .map(|id| {
                    panel
                        .get(id)
                        .map(|a| a.advertiser_id.as_str())
                        .ok_or_else(|| Error::UnknownAdvertiser(id.clone()))
                })
                .collect(),
        }
    }

    /// Model configuration for one cell. The seed mixes the run seed with
    /// the cell identity so cells are independent of execution order.
    pub fn cell_config(&self, gc: GridConfig, horizon: usize, advertiser: &str) -> ModelConfig {
        let mut cfg = self.model.clone();
        cfg.kind = gc.model;
        cfg.horizon = horizon;
        cfg.seed = mix(self.seed, &format!("{}|{horizon}|{advertiser}", gc.tag()));
        cfg
    }

    /// The configured origin, checked against the panel span.
    pub fn resolve_origin(&self, panel: &PanelDataset) -> Result<NaiveDate> {
        let dates = panel.dates();
        let h = self.max_horizon();
        if h == 0 {
            return Err(Error::Config(vec!["at least one positive horizon is required".into()]));
        }
        let origin = match self.origin {
            Some(o) => o,
            None => *dates.len().checked_sub(h).and_then(|i| dates.get(i)).ok_or_else(|| {
                Error::InsufficientData(format!("panel of {} days is shorter than horizon {h}", dates.len()))
            })?,
        };
        let idx = panel
            .index_of(origin)
            .ok_or_else(|| Error::InsufficientData(format!("origin {origin} is outside the panel")))?;
        if idx + h > dates.len() {
            return Err(Error::InsufficientData(format!(
                "horizon {h} from origin {origin} needs {} days after the panel end",
                idx + h - dates.len()
            )));
        }
        let need = crate::panel::LAG_WARMUP + self.model.encoder + h + 1;
        if idx < need {
            return Err(Error::InsufficientData(format!(
                "{idx} days before origin {origin}; at least {need} are needed, {} short",
                need - idx
            )));
        }
        Ok(origin)
    }
}

fn mix(seed: u64, s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325 ^ seed, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Clusters for every competition composition in `grid`, computed on the
/// days before `origin` and then frozen.
pub fn frozen_clusters(
    panel: &PanelDataset,
    grid: &[GridConfig],
    origin: NaiveDate,
    opts: &ClusteringOptions,
) -> Result<BTreeMap<ClusterMethod, ClusterAssignment>> {
    let end = panel
        .index_of(origin)
        .ok_or_else(|| Error::InsufficientData(format!("origin {origin} is outside the panel")))?;
    let mut out = BTreeMap::new();
    for m in grid.iter().filter_map(|g| g.composition.cluster_method()) {
        if !out.contains_key(&m) {
            out.insert(m, cluster_panel(panel, m, Some(end), opts)?);
        }
    }
    Ok(out)
}

/// Composes the input for one cell: history before `origin`, `horizon`
/// forecast days after it.
pub fn cell_input(
    panel: &PanelDataset,
    clusters: &BTreeMap<ClusterMethod, ClusterAssignment>,
    gc: GridConfig,
    advertiser: &str,
    origin: NaiveDate,
    horizon: usize,
    opts: &BacktestOptions,
) -> Result<ModelInput> {
    let history = history_before(panel, origin, opts.history_days)?;
    let c = gc.composition.cluster_method().and_then(|m| clusters.get(&m));
    compose(panel, advertiser, &opts.composition(gc.composition), c, history, horizon)
}

/// Actual CPC over `[origin, origin + horizon)`.
pub fn actuals(panel: &PanelDataset, advertiser: &str, origin: NaiveDate, horizon: usize) -> Result<Vec<f64>> {
    let a = panel
        .get(advertiser)
        .ok_or_else(|| Error::UnknownAdvertiser(advertiser.to_string()))?;
    let i = a
        .index_of(origin)
        .ok_or_else(|| Error::InsufficientData(format!("origin {origin} is outside the panel")))?;
    a.cpc
        .get(i..i + horizon)
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::InsufficientData(format!("no actuals for {horizon} days after {origin}")))
}

/// Fits one grid cell on data strictly before `origin`.
pub fn train_cell(
    panel: &PanelDataset,
    clusters: &BTreeMap<ClusterMethod, ClusterAssignment>,
    gc: GridConfig,
    advertiser: &str,
    origin: NaiveDate,
    horizon: usize,
    opts: &BacktestOptions,
) -> Result<(TrainedModel, ModelInput)> {
    gc.validate()?;
    let input = cell_input(panel, clusters, gc, advertiser, origin, horizon, opts)?;
    let model = models::fit(&opts.cell_config(gc, horizon, advertiser), &input)?;
    Ok((model, input))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    pub config: String,
    pub horizon: usize,
    pub advertiser: String,
    pub mae: f64,
    pub smape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: String,
    pub horizon: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub smape_mean: f64,
    pub smape_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub origin: NaiveDate,
    pub horizons: Vec<usize>,
    pub configs: Vec<String>,
    /// Ordered by config, horizon, then advertiser as given.
    pub rows: Vec<BacktestRow>,
    pub elapsed_secs: f64,
}

impl BacktestReport {
    /// Mean and sample standard deviation over advertisers per cell.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut cells: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in &self.rows {
            let ci = self.configs.iter().position(|c| *c == r.config).unwrap_or(usize::MAX);
            let e = cells.entry((ci, r.horizon)).or_default();
            e.0.push(r.mae);
            e.1.push(r.smape);
        }
        cells
            .into_iter()
            .map(|((ci, horizon), (mae, smape))| {
                let (mae_mean, mae_std) = mean_std(&mae);
                let (smape_mean, smape_std) = mean_std(&smape);
                SummaryRow {
                    config: self.configs.get(ci).cloned().unwrap_or_default(),
                    horizon,
                    mae_mean,
                    mae_std,
                    smape_mean,
                    smape_std,
                }
            })
            .collect()
    }

    pub fn cell(&self, config: &str, horizon: usize) -> Option<SummaryRow> {
        self.summary().into_iter().find(|s| s.config == config && s.horizon == horizon)
    }

    pub fn write_backtest_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(writer, &self.rows)
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(writer, &self.summary())
    }
}

fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_backtest_csv<R: Read>(reader: R) -> Result<Vec<BacktestRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Scores a fitted model on the days after its input's history.
pub fn score(model: &TrainedModel, input: &ModelInput, actual: &[f64]) -> Result<MetricSet> {
    let forecast = models::predict(model, input)?;
    MetricSet::of(actual, &forecast.point)
}

/// Rolling-origin backtest at a single origin: every advertiser, grid
/// config and horizon is trained on data before the origin and scored on
/// the days after it. Cells run in parallel and are reported in grid order.
pub fn backtest(panel: &PanelDataset, grid: &[GridConfig], opts: &BacktestOptions) -> Result<BacktestReport> {
    let origin = opts.resolve_origin(panel)?;
    let clusters = frozen_clusters(panel, grid, origin, &opts.clustering)?;
    backtest_with_clusters(panel, grid, opts, &clusters)
}

pub fn backtest_with_clusters(
    panel: &PanelDataset,
    grid: &[GridConfig],
    opts: &BacktestOptions,
    clusters: &BTreeMap<ClusterMethod, ClusterAssignment>,
) -> Result<BacktestReport> {
    let started = Instant::now();
    for gc in grid {
        gc.validate()?;
    }
    let origin = opts.resolve_origin(panel)?;
    let advertisers = opts.advertisers(panel)?;
    let mut cells = Vec::new();
    for gc in grid {
        for &h in &opts.horizons {
            for a in &advertisers {
                cells.push((*gc, h, *a));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(gc, h, a)| {
            let (model, input) = train_cell(panel, clusters, gc, a, origin, h, opts)?;
            let m = score(&model, &input, &actuals(panel, a, origin, h)?)?;
            Ok(BacktestRow {
                config: gc.tag(),
                horizon: h,
                advertiser: a.to_string(),
                mae: m.mae,
                smape: m.smape,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BacktestReport {
        origin,
        horizons: opts.horizons.clone(),
        configs: grid.iter().map(GridConfig::tag).collect(),
        rows,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}
