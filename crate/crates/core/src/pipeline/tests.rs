use chrono::NaiveDate;

use super::*;
use crate::clustering::{category_clusters, ClusterAssignment, ClusterMethod};
use crate::models::{self, ModelConfig, ModelKind, BUDGET_PLAN};
use crate::panel::{derive_cpc, extract_budget, AdvertiserSeries, DateRange, PanelDataset};
use crate::simgen::{inject_shock_window_labels, simulate, MarketConfig, WindowOffsets};

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

fn sim(n: usize, days: usize, seed: u64) -> (PanelDataset, crate::simgen::GroundTruth) {
    simulate(&MarketConfig {
        n_advertisers: n,
        n_days: days,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Strictly weekly-periodic CPC with constant clicks.
fn periodic_panel(days: usize) -> PanelDataset {
    let dates: Vec<NaiveDate> = d(2021, 1, 4).iter_days().take(days).collect();
    let advertisers = (0..3)
        .map(|i| {
            let cost: Vec<f64> = (0..days).map(|t| 100.0 * (1.0 + 0.1 * ((t + i) % 7) as f64)).collect();
            let raw = AdvertiserSeries::from_raw(format!("p{i}"), "cat", dates.clone(), cost, vec![100.0; days], vec![1000.0; days])
                .unwrap();
            extract_budget(&derive_cpc(&raw).unwrap()).unwrap()
        })
        .collect();
    PanelDataset::new(advertisers).unwrap()
}

fn fast_opts() -> BacktestOptions {
    BacktestOptions {
        horizons: vec![7, 14],
        model: ModelConfig {
            encoder: 28,
            hidden: 8,
            epochs: 4,
            windows_per_epoch: 32,
            batch_size: 16,
            ..ModelConfig::default()
        },
        ..BacktestOptions::default()
    }
}

fn history(panel: &PanelDataset, origin: NaiveDate) -> DateRange {
    history_before(panel, origin, None).unwrap()
}

#[test]
fn composition_channel_counts() {
    let (panel, _) = sim(12, 300, 1);
    let clusters = frozen_clusters(&panel, &paper_grid(), d(2018, 8, 1), &Default::default()).unwrap();
    let h = history(&panel, d(2018, 8, 1));
    let id = "adv000";
    let uni = compose(&panel, id, &CompositionKind::new(CompositionTag::Univar), None, h, 14).unwrap();
    assert_eq!(uni.past_names, ["cpc", "lag7_cpc"]);
    assert_eq!(uni.budget_index(), None);
    assert_eq!(uni.known_names, CALENDAR_CHANNELS);
    let multi = compose(&panel, id, &CompositionKind::new(CompositionTag::Multivar), None, h, 14).unwrap();
    assert_eq!(multi.past_names, ["cpc", "lag7_cpc", "adcost", "adclicks", "impressions", "adbudget"]);
    assert_eq!(multi.known_names[0], BUDGET_PLAN);
    assert_eq!(multi.history_len + 14, multi.dates.len());
    assert_eq!(*multi.dates.last().unwrap(), d(2018, 8, 14));

    for tag in [CompositionTag::CompCat, CompositionTag::CompExtr, CompositionTag::CompDist] {
        let c = &clusters[&tag.cluster_method().unwrap()];
        let input = compose(&panel, id, &CompositionKind::new(tag), Some(c), h, 14).unwrap();
        let own = c.cluster_of(id).unwrap();
        let peers = c.members(own).len() - 1;
        assert_eq!(input.n_past(), 6 + peers.min(5) + 1, "{tag}");
        assert_eq!(input.peer_ids.len(), peers.min(5));
        for p in &input.peer_ids {
            assert_eq!(c.cluster_of(p), Some(own), "{tag} peer outside the cluster");
        }
        assert_eq!(input.past_names.last().unwrap(), "cluster_mean_cpc");
    }
}

#[test]
fn twelve_member_cluster_gives_six_competition_channels() {
    let (panel, _) = sim(12, 200, 2);
    let labels = panel.ids().into_iter().map(|id| (id.to_string(), 0)).collect();
    let one = ClusterAssignment {
        method: ClusterMethod::Distance,
        k: 1,
        labels,
        wcss_by_k: Default::default(),
        centroids: None,
        timestamp_weights: None,
    };
    let h = history(&panel, d(2018, 5, 1));
    let input = compose(&panel, "adv003", &CompositionKind::new(CompositionTag::CompDist), Some(&one), h, 14).unwrap();
    assert_eq!(input.n_past() - 6, 6);
    assert!(!input.peers_degenerate);
    // Peers are ordered by DTW distance to the target.
    let own = crate::clustering::prepare_series(&input.past[0], true);
    let dist: Vec<f64> = (6..11)
        .map(|k| crate::clustering::dtw(&own, &crate::clustering::prepare_series(&input.past[k], true), Some(1)).unwrap())
        .collect();
    assert!(dist.windows(2).all(|w| w[0] <= w[1]), "{dist:?}");
}

#[test]
fn lone_advertiser_falls_back_to_own_cpc() {
    let (panel, _) = sim(6, 200, 3);
    let labels = panel.ids().into_iter().enumerate().map(|(i, id)| (id.to_string(), i)).collect();
    let singletons = ClusterAssignment {
        method: ClusterMethod::Distance,
        k: 6,
        labels,
        wcss_by_k: Default::default(),
        centroids: None,
        timestamp_weights: None,
    };
    let h = history(&panel, d(2018, 5, 1));
    let input = compose(&panel, "adv001", &CompositionKind::new(CompositionTag::CompDist), Some(&singletons), h, 7).unwrap();
    assert!(input.peers_degenerate);
    assert_eq!(input.n_past(), 7);
    assert_eq!(input.past[6], input.past[0]);
}

#[test]
fn competition_needs_matching_clusters() {
    let (panel, _) = sim(6, 200, 4);
    let h = history(&panel, d(2018, 5, 1));
    let kind = CompositionKind::new(CompositionTag::CompDist);
    assert!(matches!(compose(&panel, "adv000", &kind, None, h, 7), Err(crate::Error::Config(_))));
    let cat = category_clusters(&panel);
    assert!(matches!(compose(&panel, "adv000", &kind, Some(&cat), h, 7), Err(crate::Error::Config(_))));
    assert!(matches!(
        compose(&panel, "nobody", &CompositionKind::new(CompositionTag::Univar), None, h, 7),
        Err(crate::Error::UnknownAdvertiser(_))
    ));
}

#[test]
fn category_peers_are_seeded() {
    let (panel, _) = sim(12, 200, 5);
    let cat = category_clusters(&panel);
    let h = history(&panel, d(2018, 5, 1));
    let id = cat.labels.keys().find(|id| cat.members(cat.cluster_of(id).unwrap()).len() > 2).unwrap().clone();
    let mut kind = CompositionKind::new(CompositionTag::CompCat);
    let a = compose(&panel, &id, &kind, Some(&cat), h, 7).unwrap();
    let b = compose(&panel, &id, &kind, Some(&cat), h, 7).unwrap();
    assert_eq!(a.peer_ids, b.peer_ids);
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..12 {
        kind.seed = seed;
        seen.insert(compose(&panel, &id, &kind, Some(&cat), h, 7).unwrap().peer_ids);
    }
    assert!(seen.len() > 1, "peer order never changes with the seed");
}

#[test]
fn grid_has_sixteen_configs_and_tags_round_trip() {
    let grid = paper_grid();
    assert_eq!(grid.len(), 16);
    for g in &grid {
        assert_eq!(g.tag().parse::<GridConfig>().unwrap(), *g);
    }
    assert_eq!(grid[0].tag(), "SARIMA.univar");
    assert!("SARIMA.multivar".parse::<GridConfig>().is_err());
    assert!("TFT".parse::<GridConfig>().is_err());
}

#[test]
fn snaive_on_weekly_periodic_panel_is_exact() {
    let panel = periodic_panel(200);
    let grid = [GridConfig::new(ModelKind::Snaive, CompositionTag::Univar)];
    let mut opts = BacktestOptions {
        horizons: vec![14, 30, 60],
        ..fast_opts()
    };
    opts.model.encoder = 60;
    let report = backtest(&panel, &grid, &opts).unwrap();
    assert_eq!(report.rows.len(), 9);
    for r in &report.rows {
        assert_eq!(r.smape, 0.0);
        assert_eq!(r.mae, 0.0);
    }
}

#[test]
fn summary_recomputes_and_csv_round_trips() {
    let (panel, _) = sim(5, 200, 6);
    let grid = [
        GridConfig::new(ModelKind::Snaive, CompositionTag::Univar),
        GridConfig::new(ModelKind::Gbdt, CompositionTag::Multivar),
    ];
    let report = backtest(&panel, &grid, &fast_opts()).unwrap();
    assert_eq!(report.rows.len(), 2 * 2 * 5);
    let summary = report.summary();
    assert_eq!(summary.len(), 4);
    for s in &summary {
        let v: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.config == s.config && r.horizon == s.horizon)
            .map(|r| r.smape)
            .collect();
        assert_eq!(mean_std(&v), (s.smape_mean, s.smape_std));
    }
    let mut buf = Vec::new();
    report.write_backtest_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("config,horizon,advertiser,mae,smape\n"));
    assert_eq!(read_backtest_csv(buf.as_slice()).unwrap(), report.rows);
    let mut buf = Vec::new();
    report.write_summary_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("config,horizon,mae_mean,mae_std,smape_mean,smape_std\n"));
    assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), summary);
}

#[test]
fn insufficient_span_names_the_shortfall() {
    let (panel, _) = sim(4, 120, 7);
    let opts = BacktestOptions {
        horizons: vec![60],
        ..BacktestOptions::default()
    };
    let err = opts.resolve_origin(&panel).unwrap_err().to_string();
    assert!(err.contains("short"), "{err}");
}

/// Replaces every value at or after `from` except the budget.
fn perturb_after(panel: &PanelDataset, from: usize) -> PanelDataset {
    let mut out = panel.clone();
    for a in &mut out.advertisers {
        for v in [&mut a.cpc, &mut a.adcost, &mut a.adclicks, &mut a.impressions, &mut a.lag7_cpc] {
            for (k, x) in v[from..].iter_mut().enumerate() {
                *x = 1.0 + (k % 5) as f64 * 37.0;
            }
        }
    }
    out
}

#[test]
fn backtest_never_reads_past_the_origin() {
    let (panel, _) = sim(8, 260, 8);
    let opts = fast_opts();
    let origin = opts.resolve_origin(&panel).unwrap();
    let shifted = perturb_after(&panel, panel.index_of(origin).unwrap());
    for gc in [
        GridConfig::new(ModelKind::Gbdt, CompositionTag::CompDist),
        GridConfig::new(ModelKind::Tft, CompositionTag::CompExtr),
        GridConfig::new(ModelKind::Sarima, CompositionTag::Univar),
    ] {
        let mut o = opts.clone();
        o.advertisers = Some(vec!["adv002".into()]);
        o.horizons = vec![7];
        o.model.sarima = crate::models::SarimaSpec::Order(crate::models::SarimaOrder::arima(1, 0, 1));
        let forecast = |p: &PanelDataset| {
            let clusters = frozen_clusters(p, &[gc], origin, &o.clustering).unwrap();
            let (model, input) = train_cell(p, &clusters, gc, "adv002", origin, 7, &o).unwrap();
            models::predict(&model, &input).unwrap()
        };
        assert_eq!(forecast(&panel), forecast(&shifted), "{gc} leaked post-origin data");
    }
}

#[test]
fn zero_peers_without_cluster_mean_reproduces_multivar() {
    let (panel, _) = sim(8, 260, 9);
    let opts = fast_opts();
    let origin = opts.resolve_origin(&panel).unwrap();
    let clusters = frozen_clusters(&panel, &paper_grid(), origin, &opts.clustering).unwrap();
    let h = history(&panel, origin);
    let mut kind = opts.composition(CompositionTag::CompDist);
    kind.peer_limit = 0;
    let mut comp = compose(&panel, "adv001", &kind, clusters.get(&ClusterMethod::Distance), h, 7).unwrap();
    let multi = compose(&panel, "adv001", &opts.composition(CompositionTag::Multivar), None, h, 7).unwrap();
    assert_eq!(comp.past_names.pop().as_deref(), Some("cluster_mean_cpc"));
    comp.past.pop();
    comp.past_stats.pop();
    comp.composition = multi.composition.clone();
    comp.peers_degenerate = multi.peers_degenerate;
    assert_eq!(comp, multi);
    for kind in [ModelKind::Gbdt, ModelKind::Tft] {
        let cfg = ModelConfig {
            kind,
            horizon: 7,
            ..opts.model.clone()
        };
        let a = models::predict(&models::fit(&cfg, &comp).unwrap(), &comp).unwrap();
        let b = models::predict(&models::fit(&cfg, &multi).unwrap(), &multi).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn whatif_identity_and_univariate_error() {
    let (panel, _) = sim(4, 260, 10);
    let opts = fast_opts();
    let origin = opts.resolve_origin(&panel).unwrap();
    let clusters = Default::default();
    let gc = GridConfig::new(ModelKind::Gbdt, CompositionTag::Multivar);
    let (model, input) = train_cell(&panel, &clusters, gc, "adv000", origin, 7, &opts).unwrap();
    let stored = input.budget_plan().unwrap().to_vec();
    let w = whatif(&model, &input, &stored).unwrap();
    assert_eq!(w.delta, vec![0.0; 7]);
    assert_eq!(w.scenario.dates, w.baseline.dates);
    let doubled: Vec<f64> = stored.iter().map(|v| 2.0 * v).collect();
    assert_eq!(whatif(&model, &input, &doubled).unwrap().delta.len(), 7);

    let uni = GridConfig::new(ModelKind::Gbdt, CompositionTag::Univar);
    let (model, input) = train_cell(&panel, &clusters, uni, "adv000", origin, 7, &opts).unwrap();
    let err = whatif(&model, &input, &stored).unwrap_err();
    assert_eq!(err.to_string(), "model has no budget channel");
}

#[test]
fn robustness_table_shape() {
    let cfg = MarketConfig {
        n_advertisers: 8,
        seed: 11,
        ..MarketConfig::default().with_default_shock()
    };
    let (panel, truth) = simulate(&cfg).unwrap();
    assert!(!truth.shocked_advertisers.is_empty());
    let windows = inject_shock_window_labels(&cfg, WindowOffsets::default()).unwrap();
    let configs = [
        GridConfig::new(ModelKind::Snaive, CompositionTag::Multivar),
        GridConfig::new(ModelKind::Gbdt, CompositionTag::CompDist),
    ];
    let opts = BacktestOptions {
        history_days: Some(365),
        ..fast_opts()
    };
    let table = robustness_experiment(&panel, &truth, &configs, &windows, &opts).unwrap();
    assert_eq!(table.windows, ["pre", "post1", "post2"]);
    assert_eq!(table.cells.len(), 6);
    for c in &table.cells {
        assert_eq!(c.n, truth.shocked_advertisers.len());
        assert!((0.0..=2.0).contains(&c.smape_mean));
    }
    assert_eq!(table.render().lines().count(), 4);
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);

    let none = crate::simgen::GroundTruth {
        shocked_advertisers: vec![],
        ..truth
    };
    assert!(robustness_experiment(&panel, &none, &configs, &windows, &opts).is_err());
}
