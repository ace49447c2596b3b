use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nn;
use super::*;
use crate::autodiff::{grad_check, Graph, ParamStore, Tensor, Var};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn project(g: &mut Graph, out: Var, seed: u64) -> crate::Result<Var> {
    let [r, c] = g.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random_tensor(&mut rng, r, c));
    let m = g.mul(out, w)?;
    Ok(g.sum(m))
}

#[test]
fn snaive_fixture() {
    let h = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
    assert_eq!(snaive::snaive(&h, 5, 7).unwrap(), vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    assert_eq!(snaive::snaive(&h, 3, 1).unwrap(), vec![9.0; 3]);
    assert!(snaive::snaive(&h[..3], 2, 7).is_err());
}

#[test]
fn pinball_fixtures() {
    assert_eq!(pinball(&[3.0], &[1.0], 0.5).unwrap(), 1.0);
    assert!((pinball(&[1.0], &[3.0], 0.9).unwrap() - 1.8).abs() < 1e-12);
    assert!((pinball(&[3.0], &[1.0], 0.9).unwrap() - 0.2).abs() < 1e-12);
    assert_eq!(pinball(&[2.0, 2.0], &[2.0, 2.0], 0.1).unwrap(), 0.0);
    assert!(pinball(&[1.0], &[], 0.5).is_err());
    assert!(pinball(&[1.0], &[1.0], 1.0).is_err());
}

#[test]
fn graph_pinball_matches_scalar_pinball() {
    let qs = [0.1, 0.5, 0.9];
    let pred = [[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]];
    let y = [2.5, 0.5];
    let mut g = Graph::new();
    let p = g.constant(Tensor::from_rows(&pred.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap());
    let t = g.constant(Tensor::column(&y));
    let l = nn::pinball_loss(&mut g, p, t, &qs).unwrap();
    let expected: f64 = qs
        .iter()
        .enumerate()
        .map(|(k, q)| pinball(&[pred[0][k], pred[1][k]], &y, *q).unwrap())
        .sum();
    assert!((g.value(l).data()[0] - expected).abs() < 1e-12);
}

#[test]
fn rearrangement_sorts_rows() {
    let mut band = vec![vec![3.0, 1.0, 2.0], vec![0.0, 0.0, -1.0]];
    rearrange_quantiles(&mut band);
    assert_eq!(band, vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 0.0]]);
}

#[test]
fn lstm_cell_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    nn::init_lstm(&mut store, "cell", 3, 4, &mut rng);
    let x = random_tensor(&mut rng, 2, 3);
    let h = random_tensor(&mut rng, 2, 4);
    let c = random_tensor(&mut rng, 2, 4);
    let err = grad_check(&store, EPS, |g, s| {
        let x = g.constant(x.clone());
        let h = g.constant(h.clone());
        let c = g.constant(c.clone());
        let (h1, c1) = nn::lstm_cell(g, s, "cell", x, h, c)?;
        let (h2, _) = nn::lstm_cell(g, s, "cell", x, h1, c1)?;
        project(g, h2, 9)
    })
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn grn_grad_check_with_context_and_projected_skip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    nn::init_grn(&mut store, "grn", 3, 5, 4, Some(2), &mut rng);
    let a = random_tensor(&mut rng, 6, 3);
    let ctx = random_tensor(&mut rng, 6, 2);
    let err = grad_check(&store, EPS, |g, s| {
        let a = g.constant(a.clone());
        let c = g.constant(ctx.clone());
        let out = nn::grn(g, s, "grn", a, Some(c))?;
        project(g, out, 3)
    })
    .unwrap();
    assert!(err < TOL, "{err}");
}

#[test]
fn vsn_grad_check_and_weights_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    nn::init_vsn(&mut store, "vsn", 4, 3, Some(3), &mut rng);
    let x = random_tensor(&mut rng, 5, 4);
    let ctx = random_tensor(&mut rng, 5, 3);
    let err = grad_check(&store, EPS, |g, s| {
        let x = g.constant(x.clone());
        let c = g.constant(ctx.clone());
        let (out, w) = nn::vsn(g, s, "vsn", x, Some(c))?;
        let a = project(g, out, 4)?;
        let b = project(g, w, 5)?;
        g.add(a, b)
    })
    .unwrap();
    assert!(err < TOL, "{err}");

    let mut g = Graph::new();
    let xv = g.constant(x);
    let cv = g.constant(ctx);
    let (_, w) = nn::vsn(&mut g, &store, "vsn", xv, Some(cv)).unwrap();
    for r in 0..5 {
        assert!((g.value(w).row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn attention_grad_check_and_row_stochastic_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    nn::init_attention(&mut store, "attn", 4, 2, &mut rng);
    let q = random_tensor(&mut rng, 2 * 3, 4);
    let k = random_tensor(&mut rng, 2 * 5, 4);
    let err = grad_check(&store, EPS, |g, s| {
        let q = g.constant(q.clone());
        let k = g.constant(k.clone());
        let (out, _) = nn::attention(g, s, "attn", q, k, 2, 2)?;
        project(g, out, 6)
    })
    .unwrap();
    assert!(err < TOL, "{err}");

    let mut g = Graph::new();
    let qv = g.constant(q);
    let kv = g.constant(k);
    let (_, weights) = nn::attention(&mut g, &store, "attn", qv, kv, 2, 2).unwrap();
    assert_eq!(weights.len(), 2);
    for w in weights {
        assert_eq!(g.shape(w), [3, 5]);
        for r in 0..3 {
            assert!((g.value(w).row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn quantile_head_with_pinball_grad_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    nn::init_linear(&mut store, "head", 4, 3, &mut rng);
    let x = random_tensor(&mut rng, 6, 4);
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let pred = nn::linear(&mut g, &store, "head", xv).unwrap();
    // Targets sit at least 0.5 away from every prediction, off the kink.
    let target: Vec<f64> = (0..6)
        .map(|r| {
            let row = g.value(pred).row_slice(r);
            if r % 2 == 0 {
                row.iter().copied().fold(f64::MIN, f64::max) + 0.5
            } else {
                row.iter().copied().fold(f64::MAX, f64::min) - 0.5
            }
        })
        .collect();
    let mid: Vec<f64> = (0..6).map(|r| g.value(pred).row_slice(r)[1] + if r % 3 == 0 { 0.7 } else { -0.7 }).collect();
    for t in [target, mid] {
        let err = grad_check(&store, EPS, |g, s| {
            let xv = g.constant(x.clone());
            let p = nn::linear(g, s, "head", xv)?;
            let y = g.constant(Tensor::column(&t));
            nn::pinball_loss(g, p, y, &[0.1, 0.5, 0.9])
        })
        .unwrap();
        assert!(err < TOL, "{err}");
    }
}

/// A weekly-seasonal CPC series whose next-week level follows the budget.
pub(crate) fn synthetic_input(days: usize, horizon: usize, budget_effect: f64, seed: u64) -> ModelInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
    let total = days + horizon;
    let dates: Vec<NaiveDate> = (0..total).map(|i| start.checked_add_days(Days::new(i as u64)).unwrap()).collect();
    let budget: Vec<f64> = (0..total).map(|i| if (i / 20) % 2 == 0 { 100.0 } else { 160.0 }).collect();
    let cpc: Vec<f64> = (0..days)
        .map(|i| {
            1.0 + 0.2 * (std::f64::consts::TAU * i as f64 / 7.0).sin()
                + budget_effect * (budget[i] - 130.0) / 30.0
                + 0.02 * rng.random_range(-1.0..1.0)
        })
        .collect();
    let lag7: Vec<f64> = (0..days).map(|i| cpc[i.saturating_sub(7)]).collect();
    let dow_sin: Vec<f64> = (0..total).map(|i| (std::f64::consts::TAU * i as f64 / 7.0).sin()).collect();
    let dow_cos: Vec<f64> = (0..total).map(|i| (std::f64::consts::TAU * i as f64 / 7.0).cos()).collect();
    ModelInput::new(
        "a1",
        "multivar",
        dates,
        days,
        vec![("cpc".into(), cpc), ("lag7_cpc".into(), lag7)],
        vec![
            ("dow_sin".into(), dow_sin, false),
            ("dow_cos".into(), dow_cos, false),
            (BUDGET_PLAN.into(), budget, true),
        ],
        vec!["cat_a".into(), "cat_b".into()],
        vec![1.0, 0.0],
    )
    .unwrap()
}

fn small(kind: ModelKind, horizon: usize) -> ModelConfig {
    ModelConfig {
        encoder: 28,
        hidden: 8,
        epochs: 15,
        windows_per_epoch: 64,
        batch_size: 16,
        lr: 1e-2,
        ..ModelConfig::new(kind, horizon)
    }
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn every_model_fits_and_reloads_bit_exact() {
    let input = synthetic_input(200, 7, 0.0, 1);
    for kind in [ModelKind::Snaive, ModelKind::Sarima, ModelKind::Gbdt, ModelKind::Lstm, ModelKind::Tft] {
        let mut cfg = small(kind, 7);
        if kind == ModelKind::Sarima {
            cfg.sarima = SarimaSpec::Order(SarimaOrder {
                sp: 1,
                ..SarimaOrder::arima(1, 0, 0)
            });
        }
        let model = fit(&cfg, &input).unwrap();
        let r = predict(&model, &input).unwrap();
        assert_eq!(r.point.len(), 7);
        assert_eq!(r.dates, input.forecast_dates());
        for row in &r.quantile_band {
            assert!(row.windows(2).all(|w| w[0] <= w[1]), "{kind:?} band not monotone");
        }
        assert!((r.encoder_importance.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let r2 = predict(&back, &input).unwrap();
        assert_eq!(r2, r, "{kind:?} reload changed the forecast");
    }
}

#[test]
fn neural_models_learn_the_weekly_pattern() {
    let input = synthetic_input(220, 7, 0.0, 2);
    let truth: Vec<f64> = (220..227)
        .map(|i| 1.0 + 0.2 * (std::f64::consts::TAU * i as f64 / 7.0).sin())
        .collect();
    for kind in [ModelKind::Lstm, ModelKind::Tft] {
        let mut cfg = small(kind, 7);
        cfg.epochs = 40;
        let model = fit(&cfg, &input).unwrap();
        let first = model.training_log[0].train_loss;
        let best = model.training_log.iter().map(|l| l.train_loss).fold(f64::MAX, f64::min);
        assert!(best < 0.5 * first, "{kind:?} {first} -> {best}");
        let r = predict(&model, &input).unwrap();
        assert!(mae(&r.point, &truth) < 0.08, "{kind:?} mae {}", mae(&r.point, &truth));
    }
}

#[test]
fn tft_and_gbdt_respond_to_the_budget_plan() {
    let input = synthetic_input(240, 14, 0.3, 3);
    for kind in [ModelKind::Gbdt, ModelKind::Tft] {
        let mut cfg = small(kind, 14);
        cfg.epochs = 40;
        let model = fit(&cfg, &input).unwrap();
        let low = predict(&model, &input.with_budget_plan(&[100.0; 14]).unwrap()).unwrap();
        let high = predict(&model, &input.with_budget_plan(&[160.0; 14]).unwrap()).unwrap();
        let diff = high.point.iter().sum::<f64>() - low.point.iter().sum::<f64>();
        assert!(diff > 14.0 * 0.2, "{kind:?} budget effect {diff}");
    }
}

#[test]
fn univariate_input_has_no_budget_channel() {
    let input = synthetic_input(120, 7, 0.0, 4);
    let mut uni = input.clone();
    uni.known_names.pop();
    uni.known.pop();
    uni.known_scaled.pop();
    uni.known_stats.pop();
    assert!(matches!(uni.with_budget_plan(&[1.0; 7]), Err(crate::Error::NoBudgetChannel)));
    let model = fit(&small(ModelKind::Snaive, 7), &uni).unwrap();
    assert!(!model.has_budget_channel());
}

#[test]
fn mismatched_channels_and_horizons_are_rejected() {
    let input = synthetic_input(120, 7, 0.0, 5);
    let model = fit(&small(ModelKind::Snaive, 7), &input).unwrap();
    let mut other = input.clone();
    other.past_names[1] = "adcost".into();
    assert!(predict(&model, &other).is_err());
    assert!(fit(&small(ModelKind::Snaive, 5), &input).is_err());
    let cfg = ModelConfig {
        encoder: 3,
        ..ModelConfig::new(ModelKind::Tft, 7)
    };
    assert!(matches!(fit(&cfg, &input), Err(crate::Error::Config(_))));
}

#[test]
fn too_short_history_is_insufficient_data() {
    let input = synthetic_input(40, 7, 0.0, 6);
    let err = fit(&small(ModelKind::Tft, 7), &input).unwrap_err();
    assert!(matches!(err, crate::Error::InsufficientData(_)), "{err}");
}

#[test]
fn early_stopping_restores_the_best_epoch() {
    let input = synthetic_input(200, 7, 0.0, 7);
    let mut cfg = small(ModelKind::Lstm, 7);
    cfg.epochs = 30;
    cfg.patience = 3;
    let model = fit(&cfg, &input).unwrap();
    let vals: Vec<f64> = model.training_log.iter().map(|l| l.val_loss.unwrap()).collect();
    let best = vals.iter().copied().fold(f64::MAX, f64::min);
    let best_at = vals.iter().position(|v| *v == best).unwrap();
    assert!(vals.len() <= best_at + 1 + cfg.patience);

    // The restored parameters reproduce the best validation loss.
    let src = nn::WindowSource::new(
        Standardized::new(&input, &model.past_stats, &model.known_stats),
        &input.static_onehot,
        cfg.encoder,
        cfg.horizon,
        input.history_len,
    );
    let (_, val) = src.split(cfg.val_frac).unwrap();
    let store = ParamStore::from_checkpoint(&model.parameters).unwrap();
    let mut total = 0.0;
    for chunk in val.chunks(cfg.batch_size) {
        let batch = src.batch(chunk).unwrap();
        let mut g = Graph::new();
        let pred = lstm::forward(&mut g, &store, &cfg, &batch).unwrap();
        let t = g.constant(batch.target.clone());
        let l = nn::loss_of(&mut g, &cfg, pred, t).unwrap();
        total += g.value(l).data()[0] * chunk.len() as f64;
    }
    assert!((total / val.len() as f64 - best).abs() < 1e-12);
}

#[test]
fn divergence_is_reported() {
    let input = synthetic_input(200, 7, 0.0, 8);
    let mut cfg = small(ModelKind::Lstm, 7);
    cfg.lr = f64::INFINITY;
    cfg.grad_clip = 0.0;
    assert!(matches!(fit(&cfg, &input), Err(crate::Error::Divergence { epoch: 0 })));
}
