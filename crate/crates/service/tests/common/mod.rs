#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use cpc_core::clustering::ClusterMethod;
use cpc_core::simgen::MarketConfig;
use cpc_service::ops::{self, GridSpec};
use cpc_service::{RunConfig, RunStore};

pub const GRID: &str = r#"{"configs": ["SARIMA.univar", "XGB.multivar.comp.dist", "TFT.univar", "TFT.multivar.comp.dist"], "horizons": [14]}"#;

pub fn small_config() -> RunConfig {
    let mut config = RunConfig {
        market: Some(MarketConfig {
            n_advertisers: 6,
            n_clusters: 2,
            n_categories: 2,
            n_days: 420,
            seed: 11,
            ..Default::default()
        }),
        ..Default::default()
    };
    let b = &mut config.backtest;
    b.horizons = vec![14];
    b.history_days = Some(300);
    b.seed = 5;
    b.advertisers = Some(vec!["adv000".into(), "adv001".into()]);
    b.clustering.k_max = 4;
    b.model.epochs = 2;
    b.model.windows_per_epoch = 16;
    b.model.batch_size = 8;
    b.model.hidden = 8;
    b.model.gbdt.rounds = 10;
    config
}

/// Simulated, clustered, trained and backtested run shared by a test binary.
pub fn trained_run() -> &'static Path {
    static RUN: OnceLock<PathBuf> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let store = ops::simulate_run(small_config(), &dir).unwrap();
        ops::cluster_run(&store, ClusterMethod::Distance).unwrap();
        ops::train_run(&store, &GridSpec::parse(GRID).unwrap()).unwrap();
        ops::backtest_run(&store, &[]).unwrap();
        dir
    })
}

pub fn open(path: &Path) -> RunStore {
    RunStore::open(path).unwrap()
}
