//! Forecast accuracy before, right after and months after a demand shock.
//!
//! ```text
//! cargo run --release --example shock_robustness -- [seed]
//! ```

use cpc_core::pipeline::{robustness_configs, robustness_experiment, BacktestOptions};
use cpc_core::simgen::{inject_shock_window_labels, simulate, MarketConfig, WindowOffsets};

fn main() -> cpc_core::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let market = MarketConfig { seed, ..Default::default() }.with_default_shock();
    let (panel, truth) = simulate(&market)?;
    let windows = inject_shock_window_labels(&market, WindowOffsets::default())?;
    let mut opts = BacktestOptions { seed, ..Default::default() };
    opts.model.epochs = 20;

    let table = robustness_experiment(&panel, &truth, &robustness_configs(), &windows, &opts)?;
    println!("{} shocked advertisers", table.advertisers.len());
    print!("{}", table.render());
    Ok(())
}
