//! Build a small run directory, then exercise the planner HTTP API in
//! process: list advertisers, read clusters, and ask for a what-if forecast
//! with a doubled budget.
//!
//! ```text
//! cargo run --release -p cpc-service --example planner_api -- [run-dir]
//! ```
//!
//! `cpcfc serve --run <run-dir>` serves the same router over TCP.

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use cpc_core::clustering::ClusterMethod;
use cpc_core::simgen::MarketConfig;
use cpc_service::api::{router, AppState};
use cpc_service::ops::{self, GridSpec};
use cpc_service::RunConfig;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, req: Request<Body>) -> Value {
    let res = app.clone().oneshot(req).await.expect("router is infallible");
    let bytes = res.into_body().collect().await.expect("body").to_bytes();
    serde_json::from_slice(&bytes).expect("json body")
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "planner-run".into());
    let mut config = RunConfig {
        market: Some(MarketConfig { n_advertisers: 8, n_clusters: 2, n_categories: 2, ..Default::default() }),
        ..Default::default()
    };
    config.backtest.horizons = vec![30];
    config.backtest.advertisers = Some(vec!["adv000".into()]);
    config.backtest.clustering.k_max = 5;
    config.backtest.model.epochs = 15;

    let store = ops::simulate_run(config, dir.as_ref())?;
    ops::cluster_run(&store, ClusterMethod::Distance)?;
    let grid = GridSpec::parse(r#"["TFT.multivar.comp.dist"]"#)?;
    ops::train_run(&store, &grid)?;
    println!("run {} in {dir}", store.manifest().run_id);

    let app = router(Arc::new(AppState::new(store)?));
    let advertisers = call(&app, Request::get("/advertisers").body(Body::empty())?).await;
    println!("advertisers: {}", advertisers.as_array().map_or(0, Vec::len));
    let clusters = call(&app, Request::get("/clusters").body(Body::empty())?).await;
    println!(
        "clusters: k = {}, ARI vs category {:.3}",
        clusters["k"],
        clusters["ari_vs_category"].as_f64().unwrap_or(f64::NAN)
    );

    let request = json!({"advertiser_id": "adv000", "config_tag": "TFT.multivar.comp.dist", "horizon": 30});
    // An empty overlay echoes the stored plan next to its dates.
    let mut echo = request.clone();
    echo["budget_plan"] = json!([]);
    let stored = call(&app, post(&echo)?).await;
    let amounts: Vec<f64> = serde_json::from_value(stored["baseline_plan"].clone())?;
    let doubled: Vec<Value> = stored["dates"]
        .as_array()
        .into_iter()
        .flatten()
        .zip(&amounts)
        .map(|(d, a)| json!({"date": d, "amount": 2.0 * a}))
        .collect();
    let mut scenario = request.clone();
    scenario["budget_plan"] = Value::from(doubled);
    let answer = call(&app, post(&scenario)?).await;
    let delta: Vec<f64> = serde_json::from_value(answer["delta"].clone())?;
    println!(
        "doubling the budget moves the 30-day forecast by {:+.4} on average",
        delta.iter().sum::<f64>() / delta.len() as f64
    );
    println!("attention over {} encoder days", answer["attention"].as_array().map_or(0, Vec::len));
    Ok(())
}

fn post(body: &Value) -> Result<Request<Body>, axum::http::Error> {
    Request::post("/forecast").header("content-type", "application/json").body(Body::from(body.to_string()))
}
