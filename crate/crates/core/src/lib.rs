//! Daily cost-per-click (CPC) forecasting for search advertisers.
//!
//! The crate covers the whole modelling loop:
//!
//! - [`panel`]: advertiser panels, CSV ingestion, cleaning and derived channels.
//! - [`simgen`]: a seeded synthetic market with planted competitor clusters,
//!   budget regimes and an optional demand shock.
//! - [`clustering`]: competitor discovery by category, by extracted series
//!   features with k-means, and by DTW time-series k-means.
//! - [`autodiff`]: a small reverse-mode differentiation tape used by the
//!   neural forecasters.
//! - [`models`]: seasonal naive, SARIMA, gradient-boosted trees, LSTM and a
//!   compact temporal fusion transformer with interpretability exports.
//! - [`pipeline`]: input composition, metrics, rolling-origin backtests, the
//!   shock robustness experiment and budget what-if scenarios.

pub mod autodiff;
pub mod clustering;
pub mod error;
pub mod models;
pub mod panel;
pub mod pipeline;
pub mod simgen;

pub use error::{Error, Result};
