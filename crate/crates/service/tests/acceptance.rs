//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails. Pass criterion names as arguments to run a
//! subset:
//!
//! ```text
//! cargo test --release -p cpc-service --test acceptance -- dtw sarima
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cpc_core::autodiff::{grad_check, Axis, Graph, ParamStore, Tensor, Var};
use cpc_core::clustering::{
    adjusted_rand_index, dba, distance_clusters, dtw, kmeans, tskmeans, ClusteringOptions, DbaOptions,
    TsKMeansOptions,
};
use cpc_core::models::{nn, sarima, ModelKind, SarimaOrder};
use cpc_core::pipeline::{
    backtest_with_clusters, frozen_clusters, mae, robustness_configs, robustness_experiment, smape,
    train_cell, whatif, BacktestOptions, CompositionTag, GridConfig,
};
use cpc_core::simgen::{inject_shock_window_labels, simulate, MarketConfig, WindowOffsets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn within(limit: Duration, elapsed: Duration) -> (bool, String) {
    (elapsed < limit, format!("{:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs()))
}

// DTW

/// Minimum over every monotone warping path, each summed from (0, 0).
fn dtw_exhaustive(x: &[f64], y: &[f64]) -> f64 {
    fn walk(x: &[f64], y: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let d = x[i] - y[j];
        let acc = if i == 0 && j == 0 { d * d } else { acc + d * d };
        if i + 1 == x.len() && j + 1 == y.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < x.len() && j + 1 < y.len() {
            walk(x, y, i + 1, j + 1, acc, best);
        }
        if i + 1 < x.len() {
            walk(x, y, i + 1, j, acc, best);
        }
        if j + 1 < y.len() {
            walk(x, y, i, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(x, y, 0, 0, 0.0, &mut best);
    best.sqrt()
}

fn dtw_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=8);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        if dtw(&x, &y, None).unwrap().to_bits() != dtw_exhaustive(&x, &y).to_bits() {
            mismatches += 1;
        }
    }
    let (fast, time) = within(Duration::from_secs(10), t.elapsed());
    outcome(mismatches == 0 && fast, format!("{mismatches} of 500 pairs differ; {time}"))
}

// Gradients

fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries with magnitude in [0.1, 1), away from the kinks of relu and elu.
fn off_kink(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let data = (0..r * c)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(r, c, data).unwrap()
}

fn project(g: &mut Graph, out: Var, seed: u64) -> cpc_core::Result<Var> {
    let [r, c] = g.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random_tensor(&mut rng, r, c));
    let m = g.mul(out, w)?;
    Ok(g.sum(m))
}

type OpFn = fn(&mut Graph, &ParamStore, Var, Var) -> cpc_core::Result<Var>;

fn op_cases() -> Vec<(&'static str, OpFn)> {
    vec![
        ("add", |g, _, a, b| g.add(a, b)),
        ("sub", |g, _, a, b| g.sub(a, b)),
        ("mul", |g, _, a, b| g.mul(a, b)),
        ("add_scalar", |g, s, a, _| {
            let k = g.param(s, "s")?;
            g.add_scalar(a, k)
        }),
        ("mul_scalar", |g, s, a, _| {
            let k = g.param(s, "s")?;
            g.mul_scalar(a, k)
        }),
        ("scale", |g, _, a, _| Ok(g.scale(a, -1.7))),
        ("matmul", |g, s, a, _| {
            let m = g.param(s, "m")?;
            g.matmul(a, m)
        }),
        ("transpose", |g, _, a, _| Ok(g.transpose(a))),
        ("sigmoid", |g, _, a, _| Ok(g.sigmoid(a))),
        ("tanh", |g, _, a, _| Ok(g.tanh(a))),
        ("relu", |g, _, a, _| Ok(g.relu(a))),
        ("elu", |g, _, a, _| Ok(g.elu(a))),
        ("softmax_rows", |g, _, a, _| Ok(g.softmax(a, Axis::Rows))),
        ("softmax_cols", |g, _, a, _| Ok(g.softmax(a, Axis::Cols))),
        ("concat_rows", |g, _, a, b| g.concat(&[a, b], Axis::Rows)),
        ("concat_cols", |g, _, a, b| g.concat(&[a, b, a], Axis::Cols)),
        ("slice", |g, _, a, _| g.slice(a, 1..3, 0..2)),
        ("sum", |g, _, a, _| Ok(g.sum(a))),
        ("mean", |g, _, a, _| Ok(g.mean(a))),
        ("affine", |g, s, a, _| {
            let (m, bias) = (g.param(s, "m")?, g.param(s, "bias")?);
            g.affine(a, m, bias)
        }),
        ("spread_cols", |g, s, _, _| {
            let col = g.param(s, "col")?;
            g.spread_cols(col, 4)
        }),
        ("gather_rows", |g, _, a, _| g.gather_rows(a, &[2, 0, 0, 1, 2])),
        ("reshape", |g, _, a, _| g.reshape(a, 4, 3)),
    ]
}

fn block_cases() -> Vec<(&'static str, f64)> {
    const EPS: f64 = 1e-5;
    let mut out = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    nn::init_lstm(&mut store, "cell", 3, 4, &mut rng);
    let (x, h, c) = (random_tensor(&mut rng, 2, 3), random_tensor(&mut rng, 2, 4), random_tensor(&mut rng, 2, 4));
    let err = grad_check(&store, EPS, |g, s| {
        let (x, h, c) = (g.constant(x.clone()), g.constant(h.clone()), g.constant(c.clone()));
        let (h1, c1) = nn::lstm_cell(g, s, "cell", x, h, c)?;
        let (h2, _) = nn::lstm_cell(g, s, "cell", x, h1, c1)?;
        project(g, h2, 9)
    });
    out.push(("lstm_cell", err.unwrap()));

    let mut store = ParamStore::new();
    nn::init_grn(&mut store, "grn", 3, 5, 4, Some(2), &mut rng);
    let (a, ctx) = (random_tensor(&mut rng, 6, 3), random_tensor(&mut rng, 6, 2));
    let err = grad_check(&store, EPS, |g, s| {
        let (a, c) = (g.constant(a.clone()), g.constant(ctx.clone()));
        let out = nn::grn(g, s, "grn", a, Some(c))?;
        project(g, out, 3)
    });
    out.push(("grn", err.unwrap()));

    let mut store = ParamStore::new();
    nn::init_vsn(&mut store, "vsn", 4, 3, Some(3), &mut rng);
    let (x, ctx) = (random_tensor(&mut rng, 5, 4), random_tensor(&mut rng, 5, 3));
    let err = grad_check(&store, EPS, |g, s| {
        let (x, c) = (g.constant(x.clone()), g.constant(ctx.clone()));
        let (out, w) = nn::vsn(g, s, "vsn", x, Some(c))?;
        let a = project(g, out, 4)?;
        let b = project(g, w, 5)?;
        g.add(a, b)
    });
    out.push(("vsn", err.unwrap()));

    let mut store = ParamStore::new();
    nn::init_attention(&mut store, "attn", 4, 2, &mut rng);
    let (q, k) = (random_tensor(&mut rng, 6, 4), random_tensor(&mut rng, 10, 4));
    let err = grad_check(&store, EPS, |g, s| {
        let (q, k) = (g.constant(q.clone()), g.constant(k.clone()));
        let (out, w) = nn::attention(g, s, "attn", q, k, 2, 2)?;
        let a = project(g, out, 6)?;
        let b = project(g, w[1], 7)?;
        g.add(a, b)
    });
    out.push(("attention", err.unwrap()));

    let mut store = ParamStore::new();
    nn::init_linear(&mut store, "head", 4, 3, &mut rng);
    let x = random_tensor(&mut rng, 6, 4);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let pred = nn::linear(&mut g, &store, "head", xv).unwrap();
    let target: Vec<f64> = (0..6)
        .map(|r| {
            let row = g.value(pred).row_slice(r);
            match r % 3 {
                0 => row.iter().copied().fold(f64::MIN, f64::max) + 0.5,
                1 => row.iter().copied().fold(f64::MAX, f64::min) - 0.5,
                _ => row[1] + 0.7,
            }
        })
        .collect();
    let err = grad_check(&store, EPS, |g, s| {
        let xv = g.constant(x.clone());
        let p = nn::linear(g, s, "head", xv)?;
        let y = g.constant(Tensor::column(&target));
        nn::pinball_loss(g, p, y, &[0.1, 0.5, 0.9])
    });
    out.push(("quantile_head", err.unwrap()));
    out
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut worst = ("", 0.0f64);
    for (name, f) in op_cases() {
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut store = ParamStore::new();
            store.insert("a", off_kink(&mut rng, 3, 4));
            store.insert("b", off_kink(&mut rng, 3, 4));
            store.insert("s", Tensor::scalar(rng.random_range(0.5..1.5)));
            store.insert("m", random_tensor(&mut rng, 4, 3));
            store.insert("bias", random_tensor(&mut rng, 1, 3));
            store.insert("col", random_tensor(&mut rng, 3, 1));
            let err = grad_check(&store, 1e-5, |g, s| {
                let a = g.param(s, "a")?;
                let b = g.param(s, "b")?;
                let out = f(g, s, a, b)?;
                project(g, out, seed + 100)
            })
            .unwrap();
            if err > worst.1 {
                worst = (name, err);
            }
        }
    }
    for (name, err) in block_cases() {
        if err > worst.1 {
            worst = (name, err);
        }
    }
    let (fast, time) = within(Duration::from_secs(60), t.elapsed());
    outcome(
        worst.1 <= 1e-4 && fast,
        format!("max relative error {:.2e} ({}); {time}", worst.1, worst.0),
    )
}

// Metrics

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = smape(&y, &p).unwrap();
        if smape(&y, &y).unwrap() != 0.0 {
            failures.push("smape(y, y) != 0");
        }
        if s != smape(&p, &y).unwrap() {
            failures.push("asymmetric");
        }
        if !(0.0..=2.0).contains(&s) {
            failures.push("outside [0, 2]");
        }
    }
    let (y, p) = ([1.0, 2.0, 4.0], [2.0, 2.0, 1.0]);
    if mae(&y, &p).unwrap() != 4.0 / 3.0 {
        failures.push("mae fixture");
    }
    let expected = (2.0 / 3.0 + 0.0 + 6.0 / 5.0) / 3.0;
    if (smape(&y, &p).unwrap() - expected).abs() > 1e-15 {
        failures.push("smape fixture");
    }
    if smape(&[0.0, 1.0], &[0.0, -1.0]).unwrap() != 1.0 {
        failures.push("smape zero and sign fixture");
    }
    failures.dedup();
    outcome(failures.is_empty(), if failures.is_empty() { "1000 random pairs and fixtures".into() } else { failures.join(", ") })
}

// Clustering

fn cluster_recovery() -> Outcome {
    let t = Instant::now();
    let aris: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            let (panel, truth) = simulate(&MarketConfig { seed, ..Default::default() }).unwrap();
            let fit = distance_clusters(&panel, None, &ClusteringOptions { seed, ..Default::default() }).unwrap();
            let ids = panel.ids();
            let found: Vec<usize> = ids.iter().map(|id| fit.labels[*id]).collect();
            let planted: Vec<usize> = ids.iter().map(|id| truth.cluster_of[*id]).collect();
            adjusted_rand_index(&found, &planted)
        })
        .collect();
    let m = median(aris.clone());
    let (fast, time) = within(Duration::from_secs(300), t.elapsed());
    outcome(m >= 0.8 && fast, format!("median ARI {m:.3} over {aris:.3?}; {time}"))
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12)
}

fn monotonicity() -> Outcome {
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let centre = (i % 4) as f64 * 2.0;
                (0..3).map(|_| centre + rng.random_range(-1.5..1.5)).collect()
            })
            .collect();
        if !non_increasing(&kmeans(&points, 4, seed).unwrap().history) {
            failures.push(format!("kmeans seed {seed}"));
        }
        let series: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let shift = rng.random_range(0..4) as f64;
                (0..24)
                    .map(|t| ((t as f64 + shift) * (1.0 + (i % 3) as f64) / 6.0).sin() + 0.3 * rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        for weighted in [false, true] {
            let opts = TsKMeansOptions { weighted, n_init: 1, ..Default::default() };
            if !non_increasing(&tskmeans(&series, 3, seed, opts).unwrap().history) {
                failures.push(format!("tskmeans seed {seed} weighted {weighted}"));
            }
        }
        let set: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        for window in [None, Some(3)] {
            let fit = dba(&set, &series[0], DbaOptions { window, ..Default::default() }).unwrap();
            if !non_increasing(&fit.objective) {
                failures.push(format!("dba seed {seed} window {window:?}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() { "kmeans, tskmeans and DBA on 10 fixtures each".into() } else { failures.join(", ") },
    )
}

// Ordering

fn ordering_options(seed: u64, panel: &cpc_core::panel::PanelDataset) -> BacktestOptions {
    let mut opts = BacktestOptions { seed, horizons: vec![14, 60], history_days: Some(730), ..Default::default() };
    opts.model.epochs = 40;
    opts.model.encoder = 60;
    opts.model.windows_per_epoch = 96;
    opts.model.lr = 0.01;
    opts.model.batch_size = 16;
    opts.advertisers = Some(panel.ids()[..6].iter().map(|s| s.to_string()).collect());
    opts
}

fn ordering() -> Vec<(&'static str, Outcome)> {
    let t = Instant::now();
    let families = [ModelKind::Gbdt, ModelKind::Lstm, ModelKind::Tft];
    let grid: Vec<GridConfig> = families
        .iter()
        .flat_map(|&f| CompositionTag::ALL.into_iter().map(move |c| GridConfig::new(f, c)))
        .collect();
    // tag -> per-seed (smape14, smape60)
    let mut results: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for seed in SEEDS {
        let (panel, _) = simulate(&MarketConfig { seed, ..Default::default() }.with_planted_dependence()).unwrap();
        let opts = ordering_options(seed, &panel);
        let origin = opts.resolve_origin(&panel).unwrap();
        let clusters = frozen_clusters(&panel, &grid, origin, &opts.clustering).unwrap();
        let report = backtest_with_clusters(&panel, &grid, &opts, &clusters).unwrap();
        for gc in &grid {
            let tag = gc.tag();
            let h14 = report.cell(&tag, 14).unwrap().smape_mean;
            let h60 = report.cell(&tag, 60).unwrap().smape_mean;
            println!("  ordering seed {seed} {tag:<24} h14 {h14:.4} h60 {h60:.4}");
            results.entry(tag).or_default().push((h14, h60));
        }
    }
    let elapsed = t.elapsed();

    let gains: Vec<f64> = results["TFT.univar"]
        .iter()
        .zip(&results["TFT.multivar.comp.dist"])
        .map(|(u, d)| (u.1 - d.1) / u.1)
        .collect();
    let gain = median(gains.clone());

    let degradation = |tag: &str| median(results[tag].iter().map(|(a, b)| b - a).collect());
    let mut violations = Vec::new();
    let mut summary = Vec::new();
    for f in families {
        let uni = degradation(&GridConfig::new(f, CompositionTag::Univar).tag());
        summary.push(format!("{} univar {uni:+.4}", f.as_str()));
        for c in CompositionTag::ALL.into_iter().filter(|c| c.is_multivariate()) {
            let tag = GridConfig::new(f, c).tag();
            let d = degradation(&tag);
            if d >= uni {
                violations.push(format!("{tag} {d:+.4}"));
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(30 * 60), elapsed);
    vec![
        (
            "ordering.tft_comp_dist_beats_univar_h60",
            outcome(gain >= 0.05, format!("median relative gain {:.1}% over {:.3?}", gain * 100.0, gains)),
        ),
        (
            "ordering.univar_degrades_most",
            outcome(
                violations.is_empty(),
                format!(
                    "median 14-to-60 SMAPE increase: {}; {}",
                    summary.join(", "),
                    if violations.is_empty() { "no violations".into() } else { format!("not below univar: {}", violations.join(", ")) }
                ),
            ),
        ),
        ("ordering.runtime", outcome(fast, time)),
    ]
}

// Robustness

fn robustness() -> Vec<(&'static str, Outcome)> {
    let mut produced = true;
    // config -> per-seed (post1 - pre)
    let mut post1_rise: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut post2_margin = Vec::new();
    for seed in SEEDS {
        let market = MarketConfig { seed, ..Default::default() }.with_default_shock();
        let (panel, truth) = simulate(&market).unwrap();
        let windows = inject_shock_window_labels(&market, WindowOffsets::default()).unwrap();
        let mut opts = BacktestOptions { seed, ..Default::default() };
        opts.model.epochs = 20;
        opts.model.windows_per_epoch = 64;
        let table = robustness_experiment(&panel, &truth, &robustness_configs(), &windows, &opts).unwrap();
        produced &= table.windows.len() == 3 && table.configs.len() == 2 && table.cells.len() == 6;
        let get = |w: &str, c: &str| table.cell(w, c).unwrap().smape_mean;
        for c in &table.configs {
            post1_rise.entry(c.clone()).or_default().push(get("post1", c) - get("pre", c));
        }
        let (multivar, dist) = (&table.configs[0], &table.configs[1]);
        post2_margin.push(get("post2", multivar) - get("post2", dist));
        println!("  robustness seed {seed}\n{}", table.render());
    }
    let rises: Vec<String> = post1_rise
        .iter()
        .map(|(c, v)| format!("{c} {:+.4} over {v:+.3?}", median(v.clone())))
        .collect();
    let rise_ok = post1_rise.values().all(|v| median(v.clone()) > 0.0);
    let m = median(post2_margin.clone());
    vec![
        ("robustness.table", outcome(produced, "3 windows x 2 configs on every seed")),
        (
            "robustness.post1_exceeds_pre",
            outcome(rise_ok, format!("median post1 minus pre SMAPE: {}", rises.join("; "))),
        ),
        (
            "robustness.comp_dist_post2",
            outcome(m >= 0.0, format!("median multivar minus comp.dist SMAPE {m:+.4} over {post2_margin:+.4?}")),
        ),
    ]
}

// What-if

fn whatif_sign() -> Outcome {
    let gc: GridConfig = "TFT.multivar.comp.dist".parse().unwrap();
    let mut means = Vec::new();
    for seed in SEEDS {
        let (panel, _) = simulate(&MarketConfig { seed, ..Default::default() }).unwrap();
        let mut opts = BacktestOptions { seed, horizons: vec![30], ..Default::default() };
        opts.model.epochs = 20;
        let origin = opts.resolve_origin(&panel).unwrap();
        let clusters = frozen_clusters(&panel, &[gc], origin, &opts.clustering).unwrap();
        let id = panel.ids()[0].to_string();
        let (model, input) = train_cell(&panel, &clusters, gc, &id, origin, 30, &opts).unwrap();
        let doubled: Vec<f64> = input.budget_plan().unwrap().iter().map(|b| 2.0 * b).collect();
        let w = whatif(&model, &input, &doubled).unwrap();
        means.push(w.delta.iter().sum::<f64>() / w.delta.len() as f64);
    }
    let negative = means.iter().filter(|m| **m < 0.0).count();
    outcome(negative >= 4, format!("{negative} of 5 seeds negative; mean deltas {means:+.4?}"))
}

// SARIMA

fn sarima_recovery() -> Vec<(&'static str, Outcome)> {
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let mut y = vec![0.0];
    for _ in 1..1000 {
        let prev = *y.last().unwrap();
        y.push(0.8 * prev + std_normal(&mut rng));
    }
    let fit = sarima::fit_sarima(&y, SarimaOrder::arima(1, 0, 0)).unwrap();
    let phi = fit.ar[0];

    let mut walk = vec![5.0];
    for _ in 1..300 {
        let prev = *walk.last().unwrap();
        walk.push(prev + std_normal(&mut rng));
    }
    let rw = sarima::fit_sarima(&walk, SarimaOrder::arima(0, 1, 0)).unwrap();
    let (mean, _) = sarima::forecast(&rw, &walk, 30);
    let last = *walk.last().unwrap();
    vec![
        ("sarima.ar1", outcome((0.74..=0.86).contains(&phi), format!("phi hat {phi:.4}"))),
        (
            "sarima.random_walk_flat",
            outcome(mean.iter().all(|v| *v == last), format!("30 steps at last value {last:.4}")),
        ),
    ]
}

/// Box-Muller standard normal.
fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// CLI

fn cpcfc(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_cpcfc")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut config = cpc_service::RunConfig::default();
    config.backtest.seed = 3;
    config.backtest.horizons = vec![14];
    config.backtest.advertisers = Some(vec!["adv000".into(), "adv005".into()]);
    config.backtest.model.epochs = 5;
    std::fs::write(dir.join("config.json"), serde_json::to_string(&config).unwrap()).unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let run = |name: &str| {
        let run = dir.join(name);
        cpcfc(&["simulate", "--config", &s(&dir.join("config.json")), "--out", &s(&run)]);
        for method in ["extr", "dist"] {
            cpcfc(&["cluster", "--run", &s(&run), "--method", method]);
        }
        cpcfc(&["train", "--run", &s(&run)]);
        cpcfc(&["backtest", "--run", &s(&run)]);
        std::fs::read(run.join("reports/summary.csv")).unwrap()
    };
    let (a, b) = (run("first"), run("second"));
    let rows = String::from_utf8_lossy(&a).lines().count().saturating_sub(1);
    outcome(a == b && rows == 16, format!("{rows} summary rows, identical: {}", a == b))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.starts_with(f.as_str()));
    let mut lines: Vec<(String, Outcome)> = Vec::new();
    let mut run_one = |name: &'static str, f: fn() -> Outcome| {
        if wanted(name) {
            let o = f();
            println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            lines.push((name.into(), o));
        }
    };
    run_one("dtw_oracle", dtw_oracle);
    run_one("gradients", gradients);
    run_one("metrics", metrics);
    run_one("cluster_recovery", cluster_recovery);
    run_one("monotonicity", monotonicity);
    run_one("whatif_sign", whatif_sign);
    run_one("cli_determinism", cli_determinism);
    let groups: [(&str, fn() -> Vec<(&'static str, Outcome)>); 3] =
        [("sarima", sarima_recovery), ("robustness", robustness), ("ordering", ordering)];
    for (prefix, f) in groups {
        if wanted(prefix) {
            for (name, o) in f() {
                println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                lines.push((name.into(), o));
            }
        }
    }
    let failed: Vec<&str> = lines.iter().filter(|(_, o)| !o.pass).map(|(n, _)| n.as_str()).collect();
    println!("\n{} criteria, {} failed", lines.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
