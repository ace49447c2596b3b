use std::f64::consts::TAU;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{dtw, prepare_series, ClusterAssignment, ClusterMethod};
use crate::error::{Error, Result};
use crate::models::{ModelInput, BUDGET_PLAN};
use crate::panel::{AdvertiserSeries, DateRange, PanelDataset, LAG_WARMUP};

/// Which channels a model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompositionTag {
    #[serde(rename = "univar")]
    Univar,
    #[serde(rename = "multivar")]
    Multivar,
    #[serde(rename = "multivar.comp.cat")]
    CompCat,
    #[serde(rename = "multivar.comp.extr")]
    CompExtr,
    #[serde(rename = "multivar.comp.dist")]
    CompDist,
}

impl CompositionTag {
    pub const ALL: [CompositionTag; 5] = [
        CompositionTag::Univar,
        CompositionTag::Multivar,
        CompositionTag::CompCat,
        CompositionTag::CompExtr,
        CompositionTag::CompDist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CompositionTag::Univar => "univar",
            CompositionTag::Multivar => "multivar",
            CompositionTag::CompCat => "multivar.comp.cat",
            CompositionTag::CompExtr => "multivar.comp.extr",
            CompositionTag::CompDist => "multivar.comp.dist",
        }
    }

    /// Clustering method the competitor channels come from.
    pub fn cluster_method(self) -> Option<ClusterMethod> {
        match self {
            CompositionTag::CompCat => Some(ClusterMethod::Category),
            CompositionTag::CompExtr => Some(ClusterMethod::Extracted),
            CompositionTag::CompDist => Some(ClusterMethod::Distance),
            _ => None,
        }
    }

    pub fn is_multivariate(self) -> bool {
        self != CompositionTag::Univar
    }
}

impl std::fmt::Display for CompositionTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CompositionTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CompositionTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown composition `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionKind {
    pub tag: CompositionTag,
    /// Maximum number of peer CPC channels.
    pub peer_limit: usize,
    /// Seed for random peer choice under category clusters.
    pub seed: u64,
}

impl CompositionKind {
    pub fn new(tag: CompositionTag) -> Self {
        Self {
            tag,
            peer_limit: 5,
            seed: 0,
        }
    }
}

/// Known-future calendar channels, already bounded and left unscaled.
pub const CALENDAR_CHANNELS: [&str; 4] = ["dow_sin", "dow_cos", "doy_sin", "doy_cos"];

fn calendar(dates: &[NaiveDate]) -> Vec<(String, Vec<f64>, bool)> {
    let dow = |d: &NaiveDate| d.weekday().num_days_from_monday() as f64 / 7.0;
    let doy = |d: &NaiveDate| (d.ordinal() - 1) as f64 / 365.25;
    let enc = |f: &dyn Fn(&NaiveDate) -> f64, trig: fn(f64) -> f64| {
        dates.iter().map(|d| trig(TAU * f(d))).collect::<Vec<f64>>()
    };
    vec![
        (CALENDAR_CHANNELS[0].into(), enc(&dow, f64::sin), false),
        (CALENDAR_CHANNELS[1].into(), enc(&dow, f64::cos), false),
        (CALENDAR_CHANNELS[2].into(), enc(&doy, f64::sin), false),
        (CALENDAR_CHANNELS[3].into(), enc(&doy, f64::cos), false),
    ]
}

/// Panel values over `[start, end)`; days after the panel end repeat the
/// last observed value.
fn extend(values: &[f64], start: usize, end: usize) -> Vec<f64> {
    let last = values.len() - 1;
    (start..end).map(|i| values[i.min(last)]).collect()
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Same-cluster peers ordered by DTW distance of their prepared training
/// CPC to the target's, ties broken by id; random under category clusters.
fn select_peers<'a>(
    panel: &'a PanelDataset,
    target: &AdvertiserSeries,
    clusters: &ClusterAssignment,
    kind: &CompositionKind,
    span: (usize, usize),
) -> Result<Vec<&'a AdvertiserSeries>> {
    let cluster = clusters
        .cluster_of(&target.advertiser_id)
        .ok_or_else(|| Error::UnknownAdvertiser(target.advertiser_id.clone()))?;
    let mut peers: Vec<&AdvertiserSeries> = clusters
        .members(cluster)
        .into_iter()
        .filter(|id| *id != target.advertiser_id)
        .filter_map(|id| panel.get(id))
        .collect();
    if clusters.method == ClusterMethod::Category {
        let mut rng = ChaCha8Rng::seed_from_u64(kind.seed ^ fnv(&target.advertiser_id));
        peers.shuffle(&mut rng);
    } else {
        let own = prepare_series(&target.cpc[span.0..span.1], true);
        let mut scored = peers
            .into_iter()
            .map(|p| Ok((dtw(&own, &prepare_series(&p.cpc[span.0..span.1], true), Some(1))?, p)))
            .collect::<Result<Vec<_>>>()?;
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.advertiser_id.cmp(&b.1.advertiser_id)));
        peers = scored.into_iter().map(|(_, p)| p).collect();
    }
    peers.truncate(kind.peer_limit);
    Ok(peers)
}

/// Builds one advertiser's model input from the training `history` and the
/// `horizon` days that follow it.
///
/// Days in the lag warm-up at the start of the panel are dropped from the
/// history. Only the budget and calendar channels are read after the
/// history end; the budget is carried forward beyond the panel.
pub fn compose(
    panel: &PanelDataset,
    advertiser_id: &str,
    kind: &CompositionKind,
    clusters: Option<&ClusterAssignment>,
    history: DateRange,
    horizon: usize,
) -> Result<ModelInput> {
    let a = panel
        .get(advertiser_id)
        .ok_or_else(|| Error::UnknownAdvertiser(advertiser_id.to_string()))?;
    let first = *panel.dates().first().ok_or(Error::NoAdvertisers)?;
    let last = *panel.dates().last().ok_or(Error::NoAdvertisers)?;
    if history.start > history.end || history.end > last || history.end < first {
        return Err(Error::invalid(format!(
            "history {}..{} is not inside the panel range {first}..{last}",
            history.start, history.end
        )));
    }
    let start = panel.index_of(history.start).unwrap_or(0).max(LAG_WARMUP);
    let end = panel.index_of(history.end).expect("checked range") + 1;
    if end <= start {
        return Err(Error::InsufficientData(format!(
            "history ending {} leaves no days after the lag warm-up",
            history.end
        )));
    }
    let t = end - start;
    let dates: Vec<NaiveDate> = panel.dates()[start].iter_days().take(t + horizon).collect();

    let mut past: Vec<(String, Vec<f64>)> = vec![
        ("cpc".into(), a.cpc[start..end].to_vec()),
        ("lag7_cpc".into(), a.lag7_cpc[start..end].to_vec()),
    ];
    let mut known = Vec::new();
    if kind.tag.is_multivariate() {
        for (name, v) in [
            ("adcost", &a.adcost),
            ("adclicks", &a.adclicks),
            ("impressions", &a.impressions),
            ("adbudget", &a.adbudget),
        ] {
            past.push((name.into(), v[start..end].to_vec()));
        }
        known.push((BUDGET_PLAN.to_string(), extend(&a.adbudget, start, end + horizon), true));
    }
    known.extend(calendar(&dates));

    let mut degenerate = false;
    let mut peer_ids = Vec::new();
    if let Some(method) = kind.tag.cluster_method() {
        let clusters = clusters.ok_or_else(|| {
            Error::Config(vec![format!("composition {} needs {} clusters", kind.tag, method.as_str())])
        })?;
        if clusters.method != method {
            return Err(Error::Config(vec![format!(
                "composition {} needs {} clusters, got {}",
                kind.tag,
                method.as_str(),
                clusters.method.as_str()
            )]));
        }
        let peers = select_peers(panel, a, clusters, kind, (start, end))?;
        for (i, p) in peers.iter().enumerate() {
            past.push((format!("peer{}_cpc", i + 1), p.cpc[start..end].to_vec()));
            peer_ids.push(p.advertiser_id.clone());
        }
        let members: Vec<&AdvertiserSeries> = match clusters.cluster_of(advertiser_id) {
            Some(c) => clusters.members(c).into_iter().filter_map(|id| panel.get(id)).collect(),
            None => vec![a],
        };
        degenerate = members.len() <= 1;
        let mean: Vec<f64> = (start..end)
            .map(|i| members.iter().map(|m| m.cpc[i]).sum::<f64>() / members.len() as f64)
            .collect();
        past.push(("cluster_mean_cpc".into(), mean));
    }

    let static_names: Vec<String> = panel.categories.iter().cloned().collect();
    let static_onehot = static_names.iter().map(|c| if *c == a.category { 1.0 } else { 0.0 }).collect();
    let mut input = ModelInput::new(
        advertiser_id,
        kind.tag.as_str(),
        dates,
        t,
        past,
        known,
        static_names,
        static_onehot,
    )?;
    input.peers_degenerate = degenerate;
    input.peer_ids = peer_ids;
    Ok(input)
}

/// History ending the day before `origin`, optionally capped in length.
pub fn history_before(panel: &PanelDataset, origin: NaiveDate, max_days: Option<usize>) -> Result<DateRange> {
    let first = *panel.dates().first().ok_or(Error::NoAdvertisers)?;
    let end = origin.pred_opt().ok_or_else(|| Error::invalid("origin has no previous day"))?;
    if end < first {
        return Err(Error::InsufficientData(format!("origin {origin} precedes the panel start {first}")));
    }
    let start = match max_days {
        Some(n) => {
            let s = end - chrono::Duration::days(n as i64 - 1);
            s.max(first)
        }
        None => first,
    };
    Ok(DateRange::new(start, end))
}
