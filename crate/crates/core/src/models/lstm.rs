//! Sequence-to-vector LSTM: one recurrent layer over the encoder window
//! feeding a dense head that emits every step and quantile at once, as
//! offsets from the level of the window's last week.

use super::nn::{self, Batch, WindowSource};
use super::{plain_result, FittedState, ForecastResult, ModelConfig, ModelInput, Standardized, TrainedModel};
use crate::autodiff::{Axis, Graph, ParamStore, Var};
use crate::error::{Error, Result};

fn init(store: &mut ParamStore, config: &ModelConfig, n_inputs: usize, n_static: usize) {
    let mut rng = nn::rng_for(config);
    let d = config.hidden;
    nn::init_lstm(store, "lstm", n_inputs, d, &mut rng);
    nn::init_projection(store, "static_h", n_static, d, &mut rng);
    nn::init_projection(store, "static_c", n_static, d, &mut rng);
    nn::init_linear(store, "head", d, config.horizon * config.quantiles.len(), &mut rng);
}

/// `(B·H) × Q` standardized predictions, sample-major.
pub(crate) fn forward(g: &mut Graph, store: &ParamStore, config: &ModelConfig, batch: &Batch) -> Result<Var> {
    let past = g.constant(batch.past_enc.clone());
    let known = g.constant(batch.known_enc.clone());
    let x = if batch.known_enc.cols() > 0 {
        g.concat(&[past, known], Axis::Cols)?
    } else {
        past
    };
    let statics = g.constant(batch.statics.clone());
    let h0 = nn::projection(g, store, "static_h", statics)?;
    let c0 = nn::projection(g, store, "static_c", statics)?;
    let (_, (h, _)) = nn::lstm_sequence(g, store, "lstm", x, batch.size, (h0, c0))?;
    let out = nn::linear(g, store, "head", h)?;
    let out = g.reshape(out, batch.size * config.horizon, config.quantiles.len())?;
    nn::add_level(g, out, batch)
}

fn source(model_stats: (&[super::ChannelStats], &[super::ChannelStats]), config: &ModelConfig, input: &ModelInput) -> WindowSource {
    let std = Standardized::new(input, model_stats.0, model_stats.1);
    WindowSource::new(std, &input.static_onehot, config.encoder, config.horizon, input.history_len)
}

pub(crate) fn fit_lstm(config: &ModelConfig, input: &ModelInput) -> Result<TrainedModel> {
    let src = source((&input.past_stats, &input.known_stats), config, input);
    let mut store = ParamStore::new();
    init(&mut store, config, src.n_past() + src.n_known(), src.statics.len());
    let log = nn::train_network(config, &mut store, &src, |g, s, b| forward(g, s, config, b))?;
    let mut model = TrainedModel::shell(config, input, FittedState::Neural);
    model.parameters = store.to_checkpoint();
    model.training_log = log;
    Ok(model)
}

pub(crate) fn predict_lstm(model: &TrainedModel, input: &ModelInput) -> Result<ForecastResult> {
    if model.kind != super::ModelKind::Lstm {
        return Err(Error::WrongModelKind {
            expected: "lstm".into(),
            actual: model.kind.as_str().into(),
        });
    }
    let config = &model.config;
    let src = source((&model.past_stats, &model.known_stats), config, input);
    let store = ParamStore::from_checkpoint(&model.parameters)?;
    let batch = src.forecast_batch()?;
    let mut g = Graph::new();
    let pred = forward(&mut g, &store, config, &batch)?;
    let t = model.past_stats[0];
    let band = nn::restore_band(g.value(pred), config.horizon, t.mean, t.std);
    Ok(plain_result(model, input, band))
}
