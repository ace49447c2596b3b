//! Train a budget-aware TFT and compare its forecast under the stored
//! budget plan with a scaled plan.
//!
//! ```text
//! cargo run --release --example budget_whatif -- [scale]
//! ```

use cpc_core::pipeline::{frozen_clusters, train_cell, whatif, BacktestOptions, GridConfig};
use cpc_core::simgen::{simulate, MarketConfig};

fn main() -> cpc_core::Result<()> {
    let scale: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let (panel, truth) = simulate(&MarketConfig::default())?;
    let gc: GridConfig = "TFT.multivar.comp.dist".parse()?;
    let mut opts = BacktestOptions { horizons: vec![30], ..Default::default() };
    opts.model.epochs = 20;
    let origin = opts.resolve_origin(&panel)?;
    let clusters = frozen_clusters(&panel, &[gc], origin, &opts.clustering)?;

    let advertiser = panel.ids()[0].to_string();
    let (model, input) = train_cell(&panel, &clusters, gc, &advertiser, origin, 30, &opts)?;
    let plan: Vec<f64> = input.budget_plan().unwrap_or_default().iter().map(|b| b * scale).collect();
    let w = whatif(&model, &input, &plan)?;

    println!(
        "{advertiser}: planted elasticity sign {}, budget x{scale}",
        truth.elasticity_sign[&advertiser]
    );
    for (i, d) in w.baseline.dates.iter().enumerate().step_by(5) {
        println!(
            "  {d}  baseline {:.4}  scenario {:.4}  delta {:+.4}",
            w.baseline.point[i], w.scenario.point[i], w.delta[i]
        );
    }
    let mean = w.delta.iter().sum::<f64>() / w.delta.len() as f64;
    println!("mean delta {mean:+.4}");
    Ok(())
}
