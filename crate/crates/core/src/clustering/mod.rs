//! Competitor discovery.
//!
//! Three routes produce a [`ClusterAssignment`]: the advertisers' native
//! categories, k-means over z-normalized extracted features, and
//! time-series k-means under DTW. For the latter two the cluster count
//! comes from the elbow of the objective curve.

pub mod compare;
pub mod dba;
pub mod dtw;
pub mod features;
pub mod kmeans;
pub mod tskmeans;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use compare::{adjusted_rand_index, compare_assignments, AssignmentComparison};
pub use dba::{dba, medoid, DbaFit, DbaOptions};
pub use dtw::{dtw, dtw_path, weighted_dtw, Alignment, DistanceMatrix};
pub use features::{extract_features, znormalize, FeatureVector14};
pub use kmeans::{elbow, kmeans, KMeansFit};
pub use tskmeans::{tskmeans, TsKMeansFit, TsKMeansOptions};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    Category,
    Extracted,
    Distance,
}

impl ClusterMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterMethod::Category => "category",
            ClusterMethod::Extracted => "extracted",
            ClusterMethod::Distance => "distance",
        }
    }
}

impl std::str::FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cat" | "category" => Ok(ClusterMethod::Category),
            "extr" | "extracted" => Ok(ClusterMethod::Extracted),
            "dist" | "distance" => Ok(ClusterMethod::Distance),
            other => Err(Error::invalid(format!("unknown clustering method `{other}`"))),
        }
    }
}

/// Persisted as `clusters.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub method: ClusterMethod,
    pub k: usize,
    pub labels: BTreeMap<String, usize>,
    #[serde(default)]
    pub wcss_by_k: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_weights: Option<Vec<Vec<f64>>>,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, advertiser_id: &str) -> Option<usize> {
        self.labels.get(advertiser_id).copied()
    }

    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|(_, &c)| c == cluster)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Relabels clusters densely in order of first appearance by id.
    fn densify(labels: BTreeMap<String, usize>) -> (BTreeMap<String, usize>, usize) {
        let mut map = BTreeMap::new();
        let labels = labels
            .into_iter()
            .map(|(id, l)| {
                let next = map.len();
                (id, *map.entry(l).or_insert(next))
            })
            .collect();
        (labels, map.len())
    }
}

/// One cluster per distinct category, numbered in sorted category order.
pub fn category_clusters(panel: &PanelDataset) -> ClusterAssignment {
    let index: BTreeMap<&str, usize> = panel
        .categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let labels = panel
        .advertisers
        .iter()
        .map(|a| (a.advertiser_id.clone(), index[a.category.as_str()]))
        .collect();
    ClusterAssignment {
        method: ClusterMethod::Category,
        k: index.len(),
        labels,
        wcss_by_k: BTreeMap::new(),
        centroids: None,
        timestamp_weights: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub n_init: usize,
    /// Average CPC into weekly means before DTW clustering.
    pub smooth: bool,
    /// Sakoe-Chiba band radius in points of the prepared series (weeks when
    /// `smooth`).
    pub window: Option<usize>,
    pub weighted: bool,
    /// Seasonal period for feature extraction.
    pub period: usize,
}

impl Default for ClusteringOptions {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 12,
            seed: 0,
            n_init: 3,
            smooth: true,
            window: Some(1),
            weighted: true,
            period: 7,
        }
    }
}

/// Weekly means (when `smooth`) followed by per-series z-normalization, so
/// DTW compares CPC shape rather than price level.
pub fn prepare_series(cpc: &[f64], smooth: bool) -> Vec<f64> {
    let base: Vec<f64> = if smooth {
        cpc.chunks_exact(7).map(features::mean).collect()
    } else {
        cpc.to_vec()
    };
    let m = features::mean(&base);
    let sd = features::variance(&base).sqrt();
    if sd <= 0.0 {
        return vec![0.0; base.len()];
    }
    base.iter().map(|v| (v - m) / sd).collect()
}

fn cpc_window(panel: &PanelDataset, end: Option<usize>) -> Vec<(String, Vec<f64>)> {
    panel
        .advertisers
        .iter()
        .map(|a| {
            let end = end.unwrap_or(a.len()).min(a.len());
            (a.advertiser_id.clone(), a.cpc[..end].to_vec())
        })
        .collect()
}

fn k_range(n: usize, opts: &ClusteringOptions) -> Result<(usize, usize)> {
    let k_max = opts.k_max.min(n);
    if k_max < opts.k_min + 2 {
        return Err(Error::InsufficientData(format!(
            "{n} advertisers are too few for an elbow over k >= {}",
            opts.k_min
        )));
    }
    Ok((opts.k_min, k_max))
}

/// k-means on the z-normalized fourteen-feature vectors of each CPC series,
/// restricted to days before `end` when given.
pub fn extracted_clusters(
    panel: &PanelDataset,
    end: Option<usize>,
    opts: &ClusteringOptions,
) -> Result<ClusterAssignment> {
    let data = cpc_window(panel, end);
    let feats = data
        .iter()
        .map(|(_, y)| extract_features(y, opts.period))
        .collect::<Result<Vec<_>>>()?;
    let points = znormalize(&feats)?;
    let (k_min, k_max) = k_range(points.len(), opts)?;
    let curve = kmeans::wcss_curve(&points, k_min, k_max, opts.seed, opts.n_init)?;
    let wcss_by_k: BTreeMap<usize, f64> = curve.iter().map(|(k, f)| (*k, f.wcss)).collect();
    let k = elbow(&wcss_by_k, k_min, k_max)?;
    let fit = &curve[&k];
    let labels = data
        .iter()
        .zip(&fit.labels)
        .map(|((id, _), &l)| (id.clone(), l))
        .collect();
    let (labels, k) = ClusterAssignment::densify(labels);
    Ok(ClusterAssignment {
        method: ClusterMethod::Extracted,
        k,
        labels,
        wcss_by_k,
        centroids: Some(fit.centroids.clone()),
        timestamp_weights: None,
    })
}

/// Time-series k-means under DTW on prepared CPC series.
pub fn distance_clusters(
    panel: &PanelDataset,
    end: Option<usize>,
    opts: &ClusteringOptions,
) -> Result<ClusterAssignment> {
    let data = cpc_window(panel, end);
    let series: Vec<Vec<f64>> = data.iter().map(|(_, y)| prepare_series(y, opts.smooth)).collect();
    if series.first().is_none_or(|s| s.len() < 2) {
        return Err(Error::InsufficientData("series too short for DTW clustering".into()));
    }
    let (k_min, k_max) = k_range(series.len(), opts)?;
    let ts_opts = TsKMeansOptions {
        window: opts.window,
        weighted: opts.weighted,
        n_init: opts.n_init,
        ..Default::default()
    };
    let curve = tskmeans::objective_curve(&series, k_min, k_max, opts.seed, ts_opts)?;
    let wcss_by_k: BTreeMap<usize, f64> = curve.iter().map(|(k, f)| (*k, f.objective)).collect();
    let k = elbow(&wcss_by_k, k_min, k_max)?;
    let fit = &curve[&k];
    let labels = data
        .iter()
        .zip(&fit.labels)
        .map(|((id, _), &l)| (id.clone(), l))
        .collect();
    let (labels, dense_k) = ClusterAssignment::densify(labels);
    let keep = dense_k == fit.centroids.len();
    Ok(ClusterAssignment {
        method: ClusterMethod::Distance,
        k: dense_k,
        labels,
        wcss_by_k,
        centroids: keep.then(|| fit.centroids.clone()),
        timestamp_weights: (keep && opts.weighted).then(|| fit.weights.clone()),
    })
}

/// Dispatches on `method`; `end` excludes days at or after that index.
pub fn cluster_panel(
    panel: &PanelDataset,
    method: ClusterMethod,
    end: Option<usize>,
    opts: &ClusteringOptions,
) -> Result<ClusterAssignment> {
    match method {
        ClusterMethod::Category => Ok(category_clusters(panel)),
        ClusterMethod::Extracted => extracted_clusters(panel, end, opts),
        ClusterMethod::Distance => distance_clusters(panel, end, opts),
    }
}
