//! A reduced Temporal Fusion Transformer.
//!
//! Static category context drives variable selection and the initial LSTM
//! state. Encoder and decoder inputs each pass through a variable selection
//! network, a sequence-to-sequence LSTM with a gated skip, and one layer of
//! interpretable multi-head attention from decoder steps to encoder steps,
//! followed by a position-wise GRN and a linear quantile head. Layer
//! normalization is omitted.

use serde::{Deserialize, Serialize};

use super::nn::{self, Batch, WindowSource};
use super::{normalize, rearrange_quantiles, ChannelStats, FittedState, ForecastResult, ModelConfig, ModelInput, ModelKind, Standardized, TrainedModel};
use crate::autodiff::{Axis, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

pub(crate) struct TftOutput {
    /// `(B·H) × Q`, sample-major.
    pub pred: Var,
    /// `(E·B) × V_enc` selection weights.
    pub encoder_weights: Var,
    /// `(H·B) × V_dec` selection weights.
    pub decoder_weights: Var,
    /// Per sample, head-averaged `H × E` attention.
    pub attention: Vec<Var>,
}

fn init(store: &mut ParamStore, config: &ModelConfig, n_past: usize, n_known: usize, n_static: usize) {
    let mut rng = nn::rng_for(config);
    let d = config.hidden;
    nn::init_projection(store, "static_sel", n_static, d, &mut rng);
    nn::init_projection(store, "static_h", n_static, d, &mut rng);
    nn::init_projection(store, "static_c", n_static, d, &mut rng);
    nn::init_vsn(store, "vsn_enc", n_past + n_known, d, Some(d), &mut rng);
    nn::init_vsn(store, "vsn_dec", n_known, d, Some(d), &mut rng);
    nn::init_lstm(store, "lstm_enc", d, d, &mut rng);
    nn::init_lstm(store, "lstm_dec", d, d, &mut rng);
    nn::init_glu(store, "gate_lstm", d, d, &mut rng);
    nn::init_attention(store, "attn", d, config.heads, &mut rng);
    nn::init_glu(store, "gate_attn", d, d, &mut rng);
    nn::init_grn(store, "ffn", d, d, d, None, &mut rng);
    nn::init_linear(store, "head", d, config.quantiles.len(), &mut rng);
}

/// Row `t · B + b` of a step-major tensor goes to row `b · steps + t`.
fn sample_major(steps: usize, batch: usize) -> Vec<usize> {
    (0..batch).flat_map(|b| (0..steps).map(move |t| t * batch + b)).collect()
}

fn repeat_per_step(steps: usize, batch: usize) -> Vec<usize> {
    (0..steps).flat_map(|_| 0..batch).collect()
}

pub(crate) fn forward(g: &mut Graph, store: &ParamStore, config: &ModelConfig, batch: &Batch) -> Result<TftOutput> {
    let b = batch.size;
    let e = config.encoder;
    let h = config.horizon;
    let past = g.constant(batch.past_enc.clone());
    let known_enc = g.constant(batch.known_enc.clone());
    let known_dec = g.constant(batch.known_dec.clone());
    let statics = g.constant(batch.statics.clone());

    let cs = nn::projection(g, store, "static_sel", statics)?;
    let cs_enc = g.gather_rows(cs, &repeat_per_step(e, b))?;
    let cs_dec = g.gather_rows(cs, &repeat_per_step(h, b))?;
    let x_enc = g.concat(&[past, known_enc], Axis::Cols)?;
    let (emb_enc, w_enc) = nn::vsn(g, store, "vsn_enc", x_enc, Some(cs_enc))?;
    let (emb_dec, w_dec) = nn::vsn(g, store, "vsn_dec", known_dec, Some(cs_dec))?;

    let h0 = nn::projection(g, store, "static_h", statics)?;
    let c0 = nn::projection(g, store, "static_c", statics)?;
    let (enc_h, state) = nn::lstm_sequence(g, store, "lstm_enc", emb_enc, b, (h0, c0))?;
    let (dec_h, _) = nn::lstm_sequence(g, store, "lstm_dec", emb_dec, b, state)?;
    let enc_gate = nn::glu(g, store, "gate_lstm", enc_h)?;
    let enc_phi = g.add(enc_gate, emb_enc)?;
    let dec_gate = nn::glu(g, store, "gate_lstm", dec_h)?;
    let dec_phi = g.add(dec_gate, emb_dec)?;

    let enc_sm = g.gather_rows(enc_phi, &sample_major(e, b))?;
    let dec_sm = g.gather_rows(dec_phi, &sample_major(h, b))?;
    let (att, weights) = nn::attention(g, store, "attn", dec_sm, enc_sm, b, config.heads)?;
    let att_gate = nn::glu(g, store, "gate_attn", att)?;
    let post = g.add(att_gate, dec_sm)?;
    let ffn = nn::grn(g, store, "ffn", post, None)?;
    let head = nn::linear(g, store, "head", ffn)?;
    let pred = nn::add_level(g, head, batch)?;
    Ok(TftOutput {
        pred,
        encoder_weights: w_enc,
        decoder_weights: w_dec,
        attention: weights,
    })
}

fn source(stats: (&[ChannelStats], &[ChannelStats]), config: &ModelConfig, input: &ModelInput) -> WindowSource {
    let std = Standardized::new(input, stats.0, stats.1);
    WindowSource::new(std, &input.static_onehot, config.encoder, config.horizon, input.history_len)
}

pub(crate) fn fit_tft(config: &ModelConfig, input: &ModelInput) -> Result<TrainedModel> {
    if input.n_known() == 0 {
        return Err(Error::invalid("the TFT needs at least one known-future channel"));
    }
    let src = source((&input.past_stats, &input.known_stats), config, input);
    let mut store = ParamStore::new();
    init(&mut store, config, src.n_past(), src.n_known(), src.statics.len());
    let log = nn::train_network(config, &mut store, &src, |g, s, b| Ok(forward(g, s, config, b)?.pred))?;
    let mut model = TrainedModel::shell(config, input, FittedState::Neural);
    model.parameters = store.to_checkpoint();
    model.training_log = log;
    Ok(model)
}

fn column_means(t: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; t.cols()];
    for r in 0..t.rows() {
        for (o, v) in out.iter_mut().zip(t.row_slice(r)) {
            *o += v;
        }
    }
    out.iter().map(|v| v / t.rows().max(1) as f64).collect()
}

pub(crate) fn predict_tft(model: &TrainedModel, input: &ModelInput) -> Result<ForecastResult> {
    if model.kind != ModelKind::Tft {
        return Err(Error::WrongModelKind {
            expected: "tft".into(),
            actual: model.kind.as_str().into(),
        });
    }
    let config = &model.config;
    let src = source((&model.past_stats, &model.known_stats), config, input);
    let store = ParamStore::from_checkpoint(&model.parameters)?;
    let batch = src.forecast_batch()?;
    let mut g = Graph::new();
    let out = forward(&mut g, &store, config, &batch)?;
    let t = model.past_stats[0];
    let mut band = nn::restore_band(g.value(out.pred), config.horizon, t.mean, t.std);
    rearrange_quantiles(&mut band);
    let mid = config.median_index();
    let attention = column_means(g.value(out.attention[0]));
    Ok(ForecastResult {
        model_kind: model.kind,
        dates: input.forecast_dates().to_vec(),
        point: band.iter().map(|r| r[mid]).collect(),
        quantiles: config.quantiles.clone(),
        quantile_band: band,
        encoder_names: model.past_names.iter().chain(&model.known_names).cloned().collect(),
        encoder_importance: normalize(&column_means(g.value(out.encoder_weights))),
        decoder_names: model.known_names.clone(),
        decoder_importance: normalize(&column_means(g.value(out.decoder_weights))),
        attention: normalize(&attention),
    })
}

/// Variable importances and attention of one forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TftInterpretation {
    pub encoder: Vec<(String, f64)>,
    pub decoder: Vec<(String, f64)>,
    /// Weight per encoder day, oldest first.
    pub attention: Vec<f64>,
    /// Summed encoder importance of the competitor channels.
    pub competitor_share: f64,
}

/// True for channels carrying competitor information.
pub fn is_competitor_channel(name: &str) -> bool {
    name.starts_with("peer") || name.starts_with("cluster_mean")
}

pub fn interpret_tft(model: &TrainedModel, input: &ModelInput) -> Result<TftInterpretation> {
    let r = super::predict(model, input)?;
    if r.model_kind != ModelKind::Tft {
        return Err(Error::WrongModelKind {
            expected: "tft".into(),
            actual: r.model_kind.as_str().into(),
        });
    }
    let competitor_share = r
        .encoder_names
        .iter()
        .zip(&r.encoder_importance)
        .filter(|(n, _)| is_competitor_channel(n))
        .map(|(_, w)| w)
        .sum();
    Ok(TftInterpretation {
        encoder: r.encoder_names.into_iter().zip(r.encoder_importance).collect(),
        decoder: r.decoder_names.into_iter().zip(r.decoder_importance).collect(),
        attention: r.attention,
        competitor_share,
    })
}
