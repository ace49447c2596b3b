//! Fit every model family on one simulated advertiser and score its
//! forecast against the held-out days.
//!
//! ```text
//! cargo run --release --example forecast_models -- [horizon]
//! ```

use std::time::Instant;

use cpc_core::models::{predict, tft::interpret_tft, ModelKind};
use cpc_core::pipeline::{actuals, frozen_clusters, train_cell, BacktestOptions, GridConfig, MetricSet};
use cpc_core::simgen::{simulate, MarketConfig};

fn main() -> cpc_core::Result<()> {
    let horizon = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(14);
    let (panel, _) = simulate(&MarketConfig::default())?;
    let mut opts = BacktestOptions { horizons: vec![horizon], ..Default::default() };
    opts.model.epochs = 20;
    let origin = opts.resolve_origin(&panel)?;
    let advertiser = panel.ids()[0].to_string();
    let truth = actuals(&panel, &advertiser, origin, horizon)?;

    let tags = [
        "SNAIVE.univar",
        "SARIMA.univar",
        "XGB.multivar.comp.dist",
        "LSTM.multivar.comp.dist",
        "TFT.multivar.comp.dist",
    ];
    let grid: Vec<GridConfig> = tags.iter().map(|t| t.parse()).collect::<cpc_core::Result<_>>()?;
    let clusters = frozen_clusters(&panel, &grid, origin, &opts.clustering)?;
    println!("{advertiser}, origin {origin}, horizon {horizon}");
    for gc in grid {
        let start = Instant::now();
        let (model, input) = train_cell(&panel, &clusters, gc, &advertiser, origin, horizon, &opts)?;
        let forecast = predict(&model, &input)?;
        let m = MetricSet::of(&truth, &forecast.point)?;
        println!(
            "  {:<24} MAE {:.4}  SMAPE {:.4}  ({:.1?})",
            gc.tag(),
            m.mae,
            m.smape,
            start.elapsed()
        );
        if gc.model == ModelKind::Tft {
            let why = interpret_tft(&model, &input)?;
            let mut top = why.encoder.clone();
            top.sort_by(|a, b| b.1.total_cmp(&a.1));
            println!("    top encoder channels {:?}", &top[..top.len().min(4)]);
            println!("    competitor share {:.3}", why.competitor_share);
        }
    }
    Ok(())
}
