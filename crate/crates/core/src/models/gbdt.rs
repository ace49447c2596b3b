//! Gradient-boosted regression trees with exact greedy splits, fitted
//! separately for every forecast step.

use serde::{Deserialize, Serialize};

use super::{normalize, rearrange_quantiles, FittedState, ForecastResult, GbdtParams, ModelConfig, ModelInput, TrainedModel};
use crate::error::{Error, Result};

/// Design matrix for one forecast step.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabular {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    /// Index of the last observed day of each row.
    pub anchors: Vec<usize>,
}

fn feature_names(input: &ModelInput, lags: &[usize]) -> Vec<String> {
    let mut names: Vec<String> = lags.iter().map(|l| format!("{}@lag{l}", input.past_names[0])).collect();
    names.extend(input.past_names[1..].iter().map(|n| format!("{n}@lag1")));
    names.extend(input.known_names.iter().map(|n| format!("{n}@target")));
    names
}

/// Features for a row whose last observed day is `i`, predicting `i + step`.
fn row(input: &ModelInput, lags: &[usize], i: usize, step: usize) -> Vec<f64> {
    let y = input.target();
    let mut r: Vec<f64> = lags.iter().map(|l| y[i + 1 - l]).collect();
    r.extend(input.past[1..].iter().map(|c| c[i]));
    r.extend(input.known.iter().map(|c| c[i + step]));
    r
}

/// One row per history day with a full lag window and an observed label
/// `step` days later: lagged CPC, the other past channels at lag one and
/// every known channel at the target date.
pub fn tabularize(input: &ModelInput, step: usize, lags: &[usize]) -> Result<Tabular> {
    let max_lag = *lags.iter().max().ok_or_else(|| Error::invalid("no lags"))?;
    if step == 0 || lags.contains(&0) {
        return Err(Error::invalid("step and lags must be positive"));
    }
    let t = input.history_len;
    if t < max_lag + step {
        return Err(Error::InsufficientData(format!(
            "{t} history days cannot cover lag {max_lag} and step {step}"
        )));
    }
    let anchors: Vec<usize> = (max_lag - 1..t - step).collect();
    let x = anchors.iter().map(|&i| row(input, lags, i, step)).collect();
    let y = anchors.iter().map(|&i| input.target()[i + step]).collect();
    Ok(Tabular {
        x,
        y,
        feature_names: feature_names(input, lags),
        anchors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, gain: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    k = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub base: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

impl Booster {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// `½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| if h + lambda > 0.0 { g * g / (h + lambda) } else { 0.0 };
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

fn leaf_value(g: f64, h: f64, lambda: f64, lr: f64) -> f64 {
    if h + lambda > 0.0 { -g / (h + lambda) * lr } else { 0.0 }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Squared-error boosting: gradients `ŷ − y`, unit hessians.
pub fn fit_gbdt(x: &[Vec<f64>], y: &[f64], params: &GbdtParams) -> Result<Booster> {
    let n = y.len();
    if n == 0 || x.len() != n {
        return Err(Error::InsufficientData("gradient boosting needs at least one labelled row".into()));
    }
    let f = x[0].len();
    if x.iter().any(|r| r.len() != f) {
        return Err(Error::shape("fit_gbdt", "ragged design matrix"));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("gradient boosting input has missing values"));
    }
    let sorted: Vec<Vec<usize>> = (0..f)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][j].total_cmp(&x[b][j]));
            idx
        })
        .collect();

    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        let grad: Vec<f64> = pred.iter().zip(y).map(|(p, t)| p - t).collect();
        let tree = grow_tree(x, &grad, &sorted, params);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += tree.predict(&x[i]);
        }
        trees.push(tree);
    }
    Ok(Booster {
        base,
        trees,
        n_features: f,
    })
}

fn grow_tree(x: &[Vec<f64>], grad: &[f64], sorted: &[Vec<usize>], p: &GbdtParams) -> Tree {
    let n = grad.len();
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut pos = vec![0usize; n];
    let mut frontier = vec![0usize];
    let mut totals = vec![(grad.iter().sum::<f64>(), n as f64)];

    for _ in 0..p.depth {
        if frontier.is_empty() {
            break;
        }
        let slot_of = |node: usize| frontier.iter().position(|&k| k == node);
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        for (j, order) in sorted.iter().enumerate() {
            let mut gl = vec![0.0; frontier.len()];
            let mut hl = vec![0.0; frontier.len()];
            let mut last: Vec<Option<f64>> = vec![None; frontier.len()];
            for &i in order {
                let Some(s) = slot_of(pos[i]) else { continue };
                let v = x[i][j];
                if let Some(prev) = last[s] {
                    if v > prev && hl[s] >= p.min_child {
                        let (g, h) = totals[pos[i]];
                        let (gr, hr) = (g - gl[s], h - hl[s]);
                        if hr >= p.min_child {
                            let gain = split_gain(gl[s], hl[s], gr, hr, p.lambda, p.gamma);
                            if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: j,
                                    threshold: prev + (v - prev) / 2.0,
                                });
                            }
                        }
                    }
                }
                gl[s] += grad[i];
                hl[s] += 1.0;
                last[s] = Some(v);
            }
        }
        let mut next = Vec::new();
        for (s, &node) in frontier.iter().enumerate() {
            let Some(c) = best[s] else { continue };
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes.push(TreeNode::Leaf { value: 0.0 });
            totals.push((0.0, 0.0));
            totals.push((0.0, 0.0));
            nodes[node] = TreeNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                gain: c.gain,
                left,
                right,
            };
            next.push(left);
            next.push(right);
        }
        for i in 0..n {
            if let TreeNode::Split { feature, threshold, left, right, .. } = nodes[pos[i]] {
                if slot_of(pos[i]).is_some() {
                    let child = if x[i][feature] < threshold { left } else { right };
                    pos[i] = child;
                    totals[child].0 += grad[i];
                    totals[child].1 += 1.0;
                }
            }
        }
        frontier = next;
    }
    for (k, node) in nodes.iter_mut().enumerate() {
        if let TreeNode::Leaf { value } = node {
            let (g, h) = totals[k];
            *value = leaf_value(g, h, p.lambda, p.lr);
        }
    }
    Tree { nodes }
}

pub fn predict_gbdt(model: &Booster, x: &[Vec<f64>]) -> Vec<f64> {
    x.iter().map(|r| model.predict_row(r)).collect()
}

/// One booster per forecast step plus residual quantiles for the band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub lags: Vec<usize>,
    pub feature_names: Vec<String>,
    pub steps: Vec<Booster>,
    /// `[step][quantile]` empirical quantiles of in-sample residuals.
    pub residual_quantiles: Vec<Vec<f64>>,
}

/// Total split gain per feature over all trees and steps, summing to one.
pub fn gbdt_importance(model: &GbdtModel) -> Vec<f64> {
    let mut total = vec![0.0; model.feature_names.len()];
    for tree in model.steps.iter().flat_map(|b| &b.trees) {
        for node in &tree.nodes {
            if let TreeNode::Split { feature, gain, .. } = node {
                total[*feature] += gain;
            }
        }
    }
    normalize(&total)
}

fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn fit_gbdt_input(config: &ModelConfig, input: &ModelInput) -> Result<TrainedModel> {
    let lags = config.gbdt.lags.clone();
    let mut steps = Vec::with_capacity(config.horizon);
    let mut residual_quantiles = Vec::with_capacity(config.horizon);
    let mut names = Vec::new();
    for step in 1..=config.horizon {
        let tab = tabularize(input, step, &lags)?;
        let booster = fit_gbdt(&tab.x, &tab.y, &config.gbdt)?;
        let mut resid: Vec<f64> = predict_gbdt(&booster, &tab.x)
            .iter()
            .zip(&tab.y)
            .map(|(p, y)| y - p)
            .collect();
        resid.sort_by(f64::total_cmp);
        residual_quantiles.push(config.quantiles.iter().map(|q| empirical_quantile(&resid, *q)).collect());
        steps.push(booster);
        names = tab.feature_names;
    }
    let state = GbdtModel {
        lags,
        feature_names: names,
        steps,
        residual_quantiles,
    };
    Ok(TrainedModel::shell(config, input, FittedState::Gbdt(state)))
}

pub(crate) fn predict_gbdt_input(model: &TrainedModel, input: &ModelInput) -> Result<ForecastResult> {
    let FittedState::Gbdt(g) = &model.state else {
        return Err(Error::WrongModelKind {
            expected: "gbdt".into(),
            actual: model.kind.as_str().into(),
        });
    };
    let max_lag = g.lags.iter().copied().max().unwrap_or(1);
    if input.history_len < max_lag {
        return Err(Error::InsufficientData(format!("history shorter than lag {max_lag}")));
    }
    let last = input.history_len - 1;
    let mut band: Vec<Vec<f64>> = (1..=input.horizon)
        .map(|step| {
            let p = g.steps[step - 1].predict_row(&row(input, &g.lags, last, step));
            g.residual_quantiles[step - 1].iter().map(|r| p + r).collect()
        })
        .collect();
    rearrange_quantiles(&mut band);
    let mid = model.config.median_index();
    let point: Vec<f64> = (1..=input.horizon)
        .map(|step| g.steps[step - 1].predict_row(&row(input, &g.lags, last, step)))
        .collect();
    // The point forecast is the booster's mean; the band is centred on it.
    for (b, p) in band.iter_mut().zip(&point) {
        b[mid] = *p;
    }
    rearrange_quantiles(&mut band);

    let imp = gbdt_importance(g);
    let channel_of = |f: &str| f.split('@').next().unwrap_or(f).to_string();
    let encoder_names: Vec<String> = model.past_names.iter().chain(&model.known_names).cloned().collect();
    let mut encoder = vec![0.0; encoder_names.len()];
    for (name, w) in g.feature_names.iter().zip(&imp) {
        let ch = channel_of(name);
        if let Some(k) = encoder_names.iter().position(|n| *n == ch) {
            encoder[k] += w;
        }
    }
    let decoder: Vec<f64> = model
        .known_names
        .iter()
        .map(|n| encoder[encoder_names.iter().position(|e| e == n).expect("known channel listed")])
        .collect();
    Ok(ForecastResult {
        model_kind: model.kind,
        dates: input.forecast_dates().to_vec(),
        point,
        quantiles: model.config.quantiles.clone(),
        quantile_band: band,
        encoder_importance: normalize(&encoder),
        encoder_names,
        decoder_importance: normalize(&decoder),
        decoder_names: model.known_names.clone(),
        attention: super::uniform(model.config.encoder),
    })
}
