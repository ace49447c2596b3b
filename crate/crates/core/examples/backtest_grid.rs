//! Rolling-origin backtest of the full configuration grid on a market with
//! planted cross-advertiser dependence.
//!
//! ```text
//! cargo run --release --example backtest_grid -- [seed] [advertisers]
//! ```

use cpc_core::pipeline::{backtest, paper_grid, BacktestOptions};
use cpc_core::simgen::{simulate, MarketConfig};

fn main() -> cpc_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);

    let (panel, _) = simulate(&MarketConfig { seed, ..Default::default() }.with_planted_dependence())?;
    let mut opts = BacktestOptions { seed, horizons: vec![14, 60], history_days: Some(730), ..Default::default() };
    opts.model.epochs = 30;
    opts.model.encoder = 60;
    opts.advertisers = Some(panel.ids()[..n].iter().map(|s| s.to_string()).collect());

    let report = backtest(&panel, &paper_grid(), &opts)?;
    report.write_summary_csv(std::io::stdout())?;
    Ok(())
}
