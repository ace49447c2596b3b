//! Network blocks on top of [`crate::autodiff`] and the shared training
//! loop for the LSTM and TFT forecasters.
//!
//! Parameters are addressed by dotted names (`"vsn_enc.sel.l1.w"`). Every
//! block has an `init_*` function that creates its parameters and a forward
//! function that binds them into a [`Graph`].

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EpochLog, LossKind, ModelConfig, Standardized};
use crate::autodiff::{AdamConfig, Axis, Checkpoint, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

fn p(name: &str, part: &str) -> String {
    format!("{name}.{part}")
}

pub fn init_linear<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) {
    store.init_glorot(p(name, "w"), input, output, rng);
    store.init_zeros(p(name, "b"), 1, output);
}

pub fn linear(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &p(name, "w"))?;
    let b = g.param(store, &p(name, "b"))?;
    g.affine(x, w, b)
}

/// Bias-free projection.
pub fn init_projection<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) {
    store.init_glorot(p(name, "w"), input, output, rng);
}

pub fn projection(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &p(name, "w"))?;
    g.matmul(x, w)
}

pub fn init_glu<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) {
    init_linear(store, &p(name, "value"), input, output, rng);
    init_linear(store, &p(name, "gate"), input, output, rng);
}

/// `σ(x W_g + b_g) ⊙ (x W_v + b_v)`.
pub fn glu(g: &mut Graph, store: &ParamStore, name: &str, x: Var) -> Result<Var> {
    let v = linear(g, store, &p(name, "value"), x)?;
    let gate = linear(g, store, &p(name, "gate"), x)?;
    let gate = g.sigmoid(gate);
    g.mul(gate, v)
}

/// Gated residual network. The skip connection is projected when the input
/// and output widths differ; `context` adds a bias-free term inside the ELU.
pub fn init_grn<R: Rng>(
    store: &mut ParamStore,
    name: &str,
    input: usize,
    hidden: usize,
    output: usize,
    context: Option<usize>,
    rng: &mut R,
) {
    init_linear(store, &p(name, "l2"), input, hidden, rng);
    if let Some(c) = context {
        init_projection(store, &p(name, "l3"), c, hidden, rng);
    }
    init_linear(store, &p(name, "l1"), hidden, hidden, rng);
    init_glu(store, &p(name, "glu"), hidden, output, rng);
    if input != output {
        init_linear(store, &p(name, "skip"), input, output, rng);
    }
}

/// `skip(a) + GLU(W₁ ELU(W₂ a + b₂ + W₃ c) + b₁)`.
pub fn grn(g: &mut Graph, store: &ParamStore, name: &str, a: Var, context: Option<Var>) -> Result<Var> {
    let mut z = linear(g, store, &p(name, "l2"), a)?;
    if let Some(c) = context {
        let zc = projection(g, store, &p(name, "l3"), c)?;
        z = g.add(z, zc)?;
    }
    let z = g.elu(z);
    let z = linear(g, store, &p(name, "l1"), z)?;
    let gated = glu(g, store, &p(name, "glu"), z)?;
    let skip = if store.get(&p(name, "skip.w")).is_some() {
        linear(g, store, &p(name, "skip"), a)?
    } else {
        a
    };
    g.add(skip, gated)
}

pub fn init_vsn<R: Rng>(store: &mut ParamStore, name: &str, vars: usize, d: usize, context: Option<usize>, rng: &mut R) {
    init_grn(store, &p(name, "sel"), vars, d, vars, context, rng);
    store.init_glorot(p(name, "emb.w"), vars, d, rng);
    store.init_glorot(p(name, "emb.b"), vars, d, rng);
}

/// Variable selection over the `N × V` scalar inputs `x`.
///
/// Returns the `N × d` combination `Σ_v w_v (x_v e_v + c_v)` and the
/// `N × V` softmax weights.
pub fn vsn(g: &mut Graph, store: &ParamStore, name: &str, x: Var, context: Option<Var>) -> Result<(Var, Var)> {
    let logits = grn(g, store, &p(name, "sel"), x, context)?;
    let w = g.softmax(logits, Axis::Cols);
    let wx = g.mul(w, x)?;
    let emb_w = g.param(store, &p(name, "emb.w"))?;
    let emb_b = g.param(store, &p(name, "emb.b"))?;
    let a = g.matmul(wx, emb_w)?;
    let b = g.matmul(w, emb_b)?;
    Ok((g.add(a, b)?, w))
}

/// Gates ordered input, forget, cell, output; the forget bias starts at one.
pub fn init_lstm<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) {
    store.init_glorot(p(name, "w"), input + hidden, 4 * hidden, rng);
    let mut b = Tensor::zeros(1, 4 * hidden);
    for j in hidden..2 * hidden {
        b.set(0, j, 1.0);
    }
    store.insert(p(name, "b"), b);
}

pub fn lstm_cell(g: &mut Graph, store: &ParamStore, name: &str, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let hd = g.shape(h)[1];
    let xh = g.concat(&[x, h], Axis::Cols)?;
    let w = g.param(store, &p(name, "w"))?;
    let b = g.param(store, &p(name, "b"))?;
    let z = g.affine(xh, w, b)?;
    let i = g.slice_cols(z, 0..hd)?;
    let i = g.sigmoid(i);
    let f = g.slice_cols(z, hd..2 * hd)?;
    let f = g.sigmoid(f);
    let u = g.slice_cols(z, 2 * hd..3 * hd)?;
    let u = g.tanh(u);
    let o = g.slice_cols(z, 3 * hd..4 * hd)?;
    let o = g.sigmoid(o);
    let fc = g.mul(f, c)?;
    let iu = g.mul(i, u)?;
    let c_next = g.add(fc, iu)?;
    let tc = g.tanh(c_next);
    let h_next = g.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// Runs the cell over step-major rows (`step · batch + sample`) and returns
/// the stacked hidden states plus the final state.
pub fn lstm_sequence(
    g: &mut Graph,
    store: &ParamStore,
    name: &str,
    x: Var,
    batch: usize,
    state: (Var, Var),
) -> Result<(Var, (Var, Var))> {
    let steps = g.shape(x)[0] / batch;
    let (mut h, mut c) = state;
    let mut outs = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = g.slice_rows(x, t * batch..(t + 1) * batch)?;
        (h, c) = lstm_cell(g, store, name, xt, h, c)?;
        outs.push(h);
    }
    Ok((g.concat(&outs, Axis::Rows)?, (h, c)))
}

pub fn attention_key_width(d: usize, heads: usize) -> usize {
    (d / heads).max(1)
}

pub fn init_attention<R: Rng>(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut R) {
    let dk = attention_key_width(d, heads);
    for hd in 0..heads {
        init_projection(store, &format!("{name}.q{hd}"), d, dk, rng);
        init_projection(store, &format!("{name}.k{hd}"), d, dk, rng);
    }
    init_projection(store, &p(name, "v"), d, d, rng);
    init_projection(store, &p(name, "o"), d, d, rng);
}

/// Interpretable multi-head attention: per-head queries and keys, one
/// shared value projection, heads averaged before the output projection.
///
/// `queries` is `(B·Hq) × d` and `keys` `(B·Tk) × d`, both sample-major.
/// Returns the `(B·Hq) × d` output and each sample's head-averaged
/// `Hq × Tk` weights.
pub fn attention(
    g: &mut Graph,
    store: &ParamStore,
    name: &str,
    queries: Var,
    keys: Var,
    batch: usize,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let hq = g.shape(queries)[0] / batch;
    let tk = g.shape(keys)[0] / batch;
    let dk = attention_key_width(g.shape(queries)[1], heads);
    let scale = 1.0 / (dk as f64).sqrt();
    let mut q_all = Vec::with_capacity(heads);
    let mut k_all = Vec::with_capacity(heads);
    for hd in 0..heads {
        q_all.push(projection(g, store, &format!("{name}.q{hd}"), queries)?);
        k_all.push(projection(g, store, &format!("{name}.k{hd}"), keys)?);
    }
    let v_all = projection(g, store, &p(name, "v"), keys)?;
    let mut outs = Vec::with_capacity(batch);
    let mut weights = Vec::with_capacity(batch);
    for b in 0..batch {
        let vb = g.slice_rows(v_all, b * tk..(b + 1) * tk)?;
        let mut avg: Option<Var> = None;
        for hd in 0..heads {
            let qb = g.slice_rows(q_all[hd], b * hq..(b + 1) * hq)?;
            let kb = g.slice_rows(k_all[hd], b * tk..(b + 1) * tk)?;
            let kt = g.transpose(kb);
            let s = g.matmul(qb, kt)?;
            let s = g.scale(s, scale);
            let a = g.softmax(s, Axis::Cols);
            avg = Some(match avg {
                Some(acc) => g.add(acc, a)?,
                None => a,
            });
        }
        let a = g.scale(avg.expect("at least one head"), 1.0 / heads as f64);
        outs.push(g.matmul(a, vb)?);
        weights.push(a);
    }
    let out = g.concat(&outs, Axis::Rows)?;
    Ok((projection(g, store, &p(name, "o"), out)?, weights))
}

/// Mean pinball loss of the `N × Q` predictions against the `N × 1`
/// target, written with ReLUs so it is differentiable almost everywhere.
pub fn pinball_loss(g: &mut Graph, pred: Var, target: Var, quantiles: &[f64]) -> Result<Var> {
    let [n, q] = g.shape(pred);
    if q != quantiles.len() || g.shape(target) != [n, 1] {
        return Err(Error::shape(
            "pinball_loss",
            format!("pred {:?}, target {:?}, {} quantiles", g.shape(pred), g.shape(target), quantiles.len()),
        ));
    }
    let y = g.spread_cols(target, q)?;
    let e = g.sub(y, pred)?;
    let under = g.relu(e);
    let neg = g.scale(e, -1.0);
    let over = g.relu(neg);
    let qs: Vec<f64> = (0..n).flat_map(|_| quantiles.iter().copied()).collect();
    let qm = g.constant(Tensor::new(n, q, qs.clone())?);
    let q1 = g.constant(Tensor::new(n, q, qs.iter().map(|v| 1.0 - v).collect())?);
    let a = g.mul(qm, under)?;
    let b = g.mul(q1, over)?;
    let s = g.add(a, b)?;
    let total = g.sum(s);
    Ok(g.scale(total, 1.0 / n as f64))
}

/// Mean squared error of every quantile column against the target.
pub fn mse_loss(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let q = g.shape(pred)[1];
    let y = g.spread_cols(target, q)?;
    let e = g.sub(pred, y)?;
    let sq = g.mul(e, e)?;
    Ok(g.mean(sq))
}

/// Standardized channels of one advertiser, sliced into training windows.
#[derive(Debug, Clone)]
pub(crate) struct WindowSource {
    pub past: Vec<Vec<f64>>,
    pub known: Vec<Vec<f64>>,
    /// Leading constant one, then the category one-hot.
    pub statics: Vec<f64>,
    pub encoder: usize,
    pub horizon: usize,
    pub history_len: usize,
}

/// Days averaged into [`Batch::level`].
const LEVEL_DAYS: usize = 7;

/// Adds the window level to every quantile column of `(B·H) × Q`
/// predictions, so heads forecast offsets from the recent level.
pub(crate) fn add_level(g: &mut Graph, pred: Var, batch: &Batch) -> Result<Var> {
    let [rows, q] = g.shape(pred);
    let mut data = Vec::with_capacity(rows * q);
    for r in 0..rows {
        data.extend(std::iter::repeat_n(batch.level[r], q));
    }
    let level = g.constant(Tensor::new(rows, q, data)?);
    g.add(pred, level)
}

/// One mini-batch. Encoder and decoder inputs are step-major
/// (`step · B + sample`); the target is sample-major (`sample · H + step`).
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub size: usize,
    pub past_enc: Tensor,
    pub known_enc: Tensor,
    pub known_dec: Tensor,
    pub statics: Tensor,
    pub target: Tensor,
    /// Mean standardized target over the last week of each encoder window,
    /// repeated per decoder step (`B·H × 1`, sample-major).
    pub level: Tensor,
}

impl WindowSource {
    pub fn new(std: Standardized, static_onehot: &[f64], encoder: usize, horizon: usize, history_len: usize) -> Self {
        let mut statics = vec![1.0];
        statics.extend_from_slice(static_onehot);
        Self {
            past: std.past,
            known: std.known,
            statics,
            encoder,
            horizon,
            history_len,
        }
    }

    pub fn n_past(&self) -> usize {
        self.past.len()
    }

    pub fn n_known(&self) -> usize {
        self.known.len()
    }

    /// Windows whose encoder starts at each anchor. Targets are read only
    /// when they fall inside the history; later days get zero.
    pub fn batch(&self, anchors: &[usize]) -> Result<Batch> {
        let (e, h, b) = (self.encoder, self.horizon, anchors.len());
        let np = self.n_past();
        let nk = self.n_known();
        let mut past_enc = Vec::with_capacity(e * b * np);
        let mut known_enc = Vec::with_capacity(e * b * nk);
        for t in 0..e {
            for &s in anchors {
                past_enc.extend(self.past.iter().map(|c| c[s + t]));
                known_enc.extend(self.known.iter().map(|c| c[s + t]));
            }
        }
        let mut known_dec = Vec::with_capacity(h * b * nk);
        for t in 0..h {
            for &s in anchors {
                known_dec.extend(self.known.iter().map(|c| c[s + e + t]));
            }
        }
        let mut target = Vec::with_capacity(b * h);
        let mut level = Vec::with_capacity(b * h);
        let mut statics = Vec::with_capacity(b * self.statics.len());
        let week = e.clamp(1, LEVEL_DAYS);
        for &s in anchors {
            target.extend((0..h).map(|t| self.past[0].get(s + e + t).copied().unwrap_or(0.0)));
            let recent = &self.past[0][s + e - week..s + e];
            let m = recent.iter().sum::<f64>() / week as f64;
            level.extend(std::iter::repeat_n(m, h));
            statics.extend_from_slice(&self.statics);
        }
        Ok(Batch {
            size: b,
            past_enc: Tensor::new(e * b, np, past_enc)?,
            known_enc: Tensor::new(e * b, nk, known_enc)?,
            known_dec: Tensor::new(h * b, nk, known_dec)?,
            statics: Tensor::new(b, self.statics.len(), statics)?,
            target: Tensor::new(b * h, 1, target)?,
            level: Tensor::new(b * h, 1, level)?,
        })
    }

    /// The window ending at the forecast origin.
    pub fn forecast_batch(&self) -> Result<Batch> {
        if self.history_len < self.encoder {
            return Err(Error::InsufficientData(format!(
                "{} history days are fewer than the encoder length {}",
                self.history_len, self.encoder
            )));
        }
        self.batch(&[self.history_len - self.encoder])
    }

    /// Training and validation anchors. Validation windows are those whose
    /// decoder ends in the last `max(⌈val_frac · T⌉, H)` history days.
    pub fn split(&self, val_frac: f64) -> Result<(Vec<usize>, Vec<usize>)> {
        let (e, h, t) = (self.encoder, self.horizon, self.history_len);
        let n_val = if val_frac > 0.0 {
            ((val_frac * t as f64).ceil() as usize).max(h)
        } else {
            0
        };
        if t < e + h + n_val + 1 {
            return Err(Error::InsufficientData(format!(
                "{t} history days cannot hold an encoder of {e}, horizon {h} and {n_val} validation days"
            )));
        }
        let cut = t - n_val;
        let train: Vec<usize> = (0..=cut - e - h).collect();
        let val_all: Vec<usize> = (cut + 1 - e - h..=t - e - h).filter(|_| n_val > 0).collect();
        let max_val = 32;
        let val = if val_all.len() > max_val {
            (0..max_val).map(|i| val_all[i * (val_all.len() - 1) / (max_val - 1)]).collect()
        } else {
            val_all
        };
        Ok((train, val))
    }
}

pub(crate) fn loss_of(g: &mut Graph, config: &ModelConfig, pred: Var, target: Var) -> Result<Var> {
    match config.loss {
        LossKind::Pinball => pinball_loss(g, pred, target, &config.quantiles),
        LossKind::Mse => mse_loss(g, pred, target),
    }
}

/// Adam with gradient clipping and early stopping; the parameters of the
/// best validation epoch are restored on return.
///
/// `forward` maps a batch to its `(B·H) × Q` sample-major predictions.
pub(crate) fn train_network<F>(
    config: &ModelConfig,
    store: &mut ParamStore,
    source: &WindowSource,
    forward: F,
) -> Result<Vec<EpochLog>>
where
    F: Fn(&mut Graph, &ParamStore, &Batch) -> Result<Var>,
{
    let (train, val) = source.split(config.val_frac)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_7a1e);
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let evaluate = |store: &ParamStore, anchors: &[usize]| -> Result<f64> {
        let mut total = 0.0;
        for chunk in anchors.chunks(config.batch_size) {
            let batch = source.batch(chunk)?;
            let mut g = Graph::new();
            let pred = forward(&mut g, store, &batch)?;
            let target = g.constant(batch.target.clone());
            let loss = loss_of(&mut g, config, pred, target)?;
            total += g.value(loss).data()[0] * chunk.len() as f64;
        }
        Ok(total / anchors.len() as f64)
    };

    let mut log = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let picks: Vec<usize> = (0..config.windows_per_epoch.max(1))
            .map(|_| *train.choose(&mut rng).expect("non-empty training anchors"))
            .collect();
        let mut train_loss = 0.0;
        for chunk in picks.chunks(config.batch_size) {
            let batch = source.batch(chunk)?;
            let mut g = Graph::new();
            let pred = forward(&mut g, store, &batch)?;
            let target = g.constant(batch.target.clone());
            let loss = loss_of(&mut g, config, pred, target)?;
            let value = g.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            train_loss += value * chunk.len() as f64;
            g.backward(loss, store)?;
            if config.grad_clip > 0.0 {
                store.clip_grad_norm(config.grad_clip);
            }
            store.adam_step(&adam)?;
            if !params_finite(store) {
                return Err(Error::Divergence { epoch });
            }
        }
        train_loss /= picks.len() as f64;
        let val_loss = if val.is_empty() { None } else { Some(evaluate(store, &val)?) };
        if val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, store.to_checkpoint()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if let Some((_, ck)) = best {
        *store = ParamStore::from_checkpoint(&ck)?;
    }
    Ok(log)
}

fn params_finite(store: &ParamStore) -> bool {
    store
        .names()
        .all(|n| store.get(n).is_some_and(|t| t.data().iter().all(|v| v.is_finite())))
}

/// Restores standardized `(B·H) × Q` predictions to the target scale as
/// `H × Q` rows for the first sample.
pub(crate) fn restore_band(pred: &Tensor, horizon: usize, mean: f64, std: f64) -> Vec<Vec<f64>> {
    (0..horizon)
        .map(|t| pred.row_slice(t).iter().map(|z| z * std + mean).collect())
        .collect()
}

pub(crate) fn rng_for(config: &ModelConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(config.seed)
}
