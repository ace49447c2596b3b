use cpc_core::clustering::{adjusted_rand_index, dtw, ClusterMethod};
use cpc_core::models::{predict, ModelKind};
use cpc_core::panel::{clean, ingest_csv};
use cpc_core::pipeline::{backtest, frozen_clusters, smape, train_cell, whatif, BacktestOptions, GridConfig};
use cpc_core::simgen::{simulate, MarketConfig};
use proptest::prelude::*;

fn small_market(seed: u64) -> MarketConfig {
    MarketConfig {
        n_advertisers: 6,
        n_clusters: 2,
        n_categories: 2,
        n_days: 400,
        seed,
        ..Default::default()
    }
}

fn small_options() -> BacktestOptions {
    let mut opts = BacktestOptions { horizons: vec![14], history_days: Some(300), ..Default::default() };
    opts.advertisers = Some(vec!["adv000".into(), "adv003".into()]);
    opts.clustering.k_max = 4;
    opts.model.epochs = 3;
    opts.model.windows_per_epoch = 32;
    opts.model.encoder = 28;
    opts.model.gbdt.rounds = 20;
    opts
}

#[test]
fn csv_round_trip_preserves_the_simulated_panel() {
    let (panel, _) = simulate(&small_market(4)).unwrap();
    let mut buf = Vec::new();
    panel.write_csv(&mut buf).unwrap();
    let back = clean(&ingest_csv(buf.as_slice()).unwrap(), 1.0).unwrap();
    assert_eq!(back.ids(), panel.ids());
    for (a, b) in panel.advertisers.iter().zip(&back.advertisers) {
        assert_eq!(a.dates, b.dates);
        for (x, y) in a.cpc.iter().zip(&b.cpc) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn backtest_is_deterministic_and_covers_the_grid() {
    let (panel, _) = simulate(&small_market(5)).unwrap();
    let grid: Vec<GridConfig> = ["SNAIVE.univar", "XGB.multivar.comp.extr", "LSTM.multivar.comp.dist", "TFT.univar"]
        .iter()
        .map(|t| t.parse().unwrap())
        .collect();
    let opts = small_options();
    let a = backtest(&panel, &grid, &opts).unwrap();
    let b = backtest(&panel, &grid, &opts).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows.len(), grid.len() * 2);
    assert!(a.rows.iter().all(|r| r.smape.is_finite() && (0.0..=2.0).contains(&r.smape)));
    let summary = a.summary();
    assert_eq!(summary.len(), grid.len());
}

#[test]
fn frozen_clusters_cover_only_the_methods_the_grid_needs() {
    let (panel, _) = simulate(&small_market(6)).unwrap();
    let opts = small_options();
    let origin = opts.resolve_origin(&panel).unwrap();
    let grid = ["XGB.multivar.comp.dist".parse::<GridConfig>().unwrap()];
    let clusters = frozen_clusters(&panel, &grid, origin, &opts.clustering).unwrap();
    assert_eq!(clusters.keys().copied().collect::<Vec<_>>(), vec![ClusterMethod::Distance]);
}

#[test]
fn whatif_with_the_stored_plan_is_the_identity() {
    let (panel, _) = simulate(&small_market(7)).unwrap();
    let opts = small_options();
    let origin = opts.resolve_origin(&panel).unwrap();
    let gc = GridConfig::new(ModelKind::Gbdt, cpc_core::pipeline::CompositionTag::Multivar);
    let clusters = frozen_clusters(&panel, &[gc], origin, &opts.clustering).unwrap();
    let (model, input) = train_cell(&panel, &clusters, gc, "adv000", origin, 14, &opts).unwrap();
    let stored = input.budget_plan().unwrap().to_vec();
    let w = whatif(&model, &input, &stored).unwrap();
    assert!(w.delta.iter().all(|d| *d == 0.0));
    assert_eq!(w.baseline, predict(&model, &input).unwrap());
}

#[test]
fn simulation_is_a_function_of_the_seed() {
    let a = simulate(&small_market(8)).unwrap();
    let b = simulate(&small_market(8)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, simulate(&small_market(9)).unwrap().0);
}

proptest! {
    #[test]
    fn dtw_is_a_symmetric_premetric(
        x in prop::collection::vec(-10.0f64..10.0, 1..20),
        y in prop::collection::vec(-10.0f64..10.0, 1..20),
    ) {
        let d = dtw(&x, &y, None).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, dtw(&y, &x, None).unwrap());
        prop_assert_eq!(dtw(&x, &x, None).unwrap(), 0.0);
    }

    #[test]
    fn band_never_beats_the_unconstrained_path(
        x in prop::collection::vec(-5.0f64..5.0, 8),
        y in prop::collection::vec(-5.0f64..5.0, 8),
        w in 0usize..8,
    ) {
        prop_assert!(dtw(&x, &y, Some(w)).unwrap() >= dtw(&x, &y, None).unwrap());
    }

    #[test]
    fn smape_is_bounded_and_symmetric(
        pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..30),
    ) {
        let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = smape(&y, &p).unwrap();
        prop_assert!((0.0..=2.0).contains(&s));
        prop_assert_eq!(s, smape(&p, &y).unwrap());
    }

    #[test]
    fn ari_is_invariant_to_relabeling(labels in prop::collection::vec(0usize..4, 2..30)) {
        let renamed: Vec<usize> = labels.iter().map(|l| 3 - l).collect();
        prop_assert!((adjusted_rand_index(&labels, &renamed) - 1.0).abs() < 1e-12
            || labels.iter().all(|l| *l == labels[0]));
    }
}
