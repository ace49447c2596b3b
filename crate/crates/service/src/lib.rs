//! Run directories, the scenario-planner HTTP API and the `cpcfc` command
//! line over [`cpc_core`].

pub mod api;
pub mod cli;
pub mod error;
pub mod forecast;
pub mod ops;
pub mod store;

pub use error::{Result, ServiceError};
pub use forecast::{ForecastRequest, ForecastResponse, PlanEntry};
pub use store::{Manifest, ModelBundle, RunConfig, RunStore};
