//! Input composition, forecast metrics, single-origin backtests over the
//! configuration grid, the demand-shock robustness experiment and budget
//! what-if scenarios.

mod backtest;
mod compose;
mod experiments;
mod metrics;

pub use backtest::{
    actuals, backtest, backtest_with_clusters, cell_input, frozen_clusters, paper_grid, read_backtest_csv,
    read_summary_csv, score, train_cell, BacktestOptions, BacktestReport, BacktestRow, GridConfig, SummaryRow,
};
pub use compose::{compose, history_before, CompositionKind, CompositionTag, CALENDAR_CHANNELS};
pub use experiments::{robustness_configs, robustness_experiment, whatif, RobustnessCell, RobustnessTable, WhatIf};
pub use metrics::{mae, mean_std, smape, MetricSet};

#[cfg(test)]
mod tests;
