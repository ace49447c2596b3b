//! On-disk layout of a run:
//!
//! ```text
//! run/
//!   manifest.json        run id, config hash, dataset fingerprint
//!   config.json          RunConfig
//!   dataset.csv          cleaned panel in the ingestion schema
//!   ground_truth.json    simulated runs only
//!   clusters.json        latest `cluster` result
//!   clusters/<method>.json   assignments frozen at the training origin
//!   models/<advertiser>/<config tag>.json
//!   reports/{backtest,summary,robustness}.csv
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use cpc_core::clustering::{ClusterAssignment, ClusterMethod};
use cpc_core::models::TrainedModel;
use cpc_core::panel::{self, PanelDataset};
use cpc_core::pipeline::BacktestOptions;
use cpc_core::simgen::{GroundTruth, MarketConfig, WindowOffsets};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

const MANIFEST: &str = "manifest.json";
const CONFIG: &str = "config.json";
const DATASET: &str = "dataset.csv";
const GROUND_TRUTH: &str = "ground_truth.json";
const CLUSTERS: &str = "clusters.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Simulator settings; absent for ingested runs.
    pub market: Option<MarketConfig>,
    pub backtest: BacktestOptions,
    pub windows: WindowOffsets,
    /// Advertisers missing more than this fraction of days are dropped at
    /// ingestion.
    pub max_missing_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            market: None,
            backtest: BacktestOptions::default(),
            windows: WindowOffsets::default(),
            max_missing_frac: 0.2,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ServiceError::validation(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ServiceError::validation(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    /// SHA-256 of `config.json`.
    pub config_hash: String,
    /// SHA-256 of `dataset.csv`.
    pub dataset_fingerprint: String,
    pub created_at: String,
}

/// Every trained horizon of one advertiser and grid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub advertiser_id: String,
    pub config_tag: String,
    /// First forecast day of the training cut.
    pub origin: NaiveDate,
    pub models: BTreeMap<usize, TrainedModel>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| ServiceError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| ServiceError::json(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| ServiceError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| ServiceError::json(path, e))?;
    write_file(path, &text)
}

/// File-name-safe form of an advertiser id or config tag.
fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

/// A loaded run directory. The panel and config are immutable once loaded.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
    manifest: Manifest,
    config: RunConfig,
    panel: PanelDataset,
}

impl RunStore {
    /// Writes a fresh run, replacing any config and dataset already at
    /// `root`.
    pub fn create(root: &Path, config: RunConfig, panel: PanelDataset, truth: Option<&GroundTruth>) -> Result<Self> {
        let config_bytes = serde_json::to_vec_pretty(&config).map_err(|e| ServiceError::json(root, e))?;
        let mut dataset = Vec::new();
        panel.write_csv(&mut dataset)?;
        let config_hash = sha256_hex(&config_bytes);
        let dataset_fingerprint = sha256_hex(&dataset);
        let manifest = Manifest {
            run_id: sha256_hex(format!("{config_hash}{dataset_fingerprint}").as_bytes())[..12].to_string(),
            config_hash,
            dataset_fingerprint,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        write_file(&root.join(CONFIG), &config_bytes)?;
        write_file(&root.join(DATASET), &dataset)?;
        match truth {
            Some(t) => write_json(&root.join(GROUND_TRUTH), t)?,
            None => {
                let _ = fs::remove_file(root.join(GROUND_TRUTH));
            }
        }
        write_json(&root.join(MANIFEST), &manifest)?;
        // A stored panel always reloads to the same values.
        let panel = load_panel(&root.join(DATASET))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            config,
            panel,
        })
    }

    /// Loads a run, checking the config and dataset against the manifest.
    pub fn open(root: &Path) -> Result<Self> {
        let manifest_path = root.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(ServiceError::validation(format!(
                "{} is not a run directory (no {MANIFEST})",
                root.display()
            )));
        }
        let manifest: Manifest = read_json(&manifest_path)?;
        let config_bytes = read_bytes(&root.join(CONFIG))?;
        if sha256_hex(&config_bytes) != manifest.config_hash {
            return Err(ServiceError::validation(format!("{CONFIG} does not match the manifest hash")));
        }
        if sha256_hex(&read_bytes(&root.join(DATASET))?) != manifest.dataset_fingerprint {
            return Err(ServiceError::validation(format!("{DATASET} does not match the manifest fingerprint")));
        }
        let config = serde_json::from_slice(&config_bytes).map_err(|e| ServiceError::json(&root.join(CONFIG), e))?;
        let panel = load_panel(&root.join(DATASET))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            config,
            panel,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn panel(&self) -> &PanelDataset {
        &self.panel
    }

    pub fn ground_truth(&self) -> Result<Option<GroundTruth>> {
        let path = self.root.join(GROUND_TRUTH);
        if path.is_file() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn write_clusters(&self, clusters: &ClusterAssignment) -> Result<()> {
        self.check_labels(clusters)?;
        write_json(&self.root.join(CLUSTERS), clusters)
    }

    pub fn clusters(&self) -> Result<Option<ClusterAssignment>> {
        let path = self.root.join(CLUSTERS);
        if path.is_file() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    fn frozen_path(&self, method: ClusterMethod) -> PathBuf {
        self.root.join("clusters").join(format!("{}.json", method.as_str()))
    }

    /// Stores the assignments the models were trained with.
    pub fn write_frozen_clusters(&self, clusters: &BTreeMap<ClusterMethod, ClusterAssignment>) -> Result<()> {
        for (method, c) in clusters {
            self.check_labels(c)?;
            write_json(&self.frozen_path(*method), c)?;
        }
        Ok(())
    }

    pub fn frozen_clusters(&self) -> Result<BTreeMap<ClusterMethod, ClusterAssignment>> {
        let mut out = BTreeMap::new();
        for method in [ClusterMethod::Category, ClusterMethod::Extracted, ClusterMethod::Distance] {
            let path = self.frozen_path(method);
            if path.is_file() {
                out.insert(method, read_json(&path)?);
            }
        }
        Ok(out)
    }

    fn check_labels(&self, clusters: &ClusterAssignment) -> Result<()> {
        match clusters.labels.keys().find(|id| self.panel.get(id).is_none()) {
            Some(id) => Err(ServiceError::validation(format!("clusters reference unknown advertiser {id}"))),
            None => Ok(()),
        }
    }

    pub fn model_path(&self, advertiser_id: &str, config_tag: &str) -> PathBuf {
        self.root
            .join("models")
            .join(file_stem(advertiser_id))
            .join(format!("{}.json", file_stem(config_tag)))
    }

    pub fn save_bundle(&self, bundle: &ModelBundle) -> Result<()> {
        if self.panel.get(&bundle.advertiser_id).is_none() {
            return Err(ServiceError::validation(format!(
                "model references unknown advertiser {}",
                bundle.advertiser_id
            )));
        }
        let path = self.model_path(&bundle.advertiser_id, &bundle.config_tag);
        let text = serde_json::to_vec(bundle).map_err(|e| ServiceError::json(&path, e))?;
        write_file(&path, &text)
    }

    pub fn load_bundle(&self, advertiser_id: &str, config_tag: &str) -> Result<Option<ModelBundle>> {
        let path = self.model_path(advertiser_id, config_tag);
        if path.is_file() {
            read_json(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    /// `(advertiser, config tag)` of every stored bundle, sorted.
    pub fn bundle_keys(&self) -> Result<Vec<(String, String)>> {
        let dir = self.root.join("models");
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut keys = Vec::new();
        for adv in self.panel.ids() {
            let adv_dir = dir.join(file_stem(adv));
            if !adv_dir.is_dir() {
                continue;
            }
            for entry in fs::read_dir(&adv_dir).map_err(|e| ServiceError::io(&adv_dir, e))? {
                let path = entry.map_err(|e| ServiceError::io(&adv_dir, e))?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let bundle: ModelBundle = read_json(&path)?;
                    keys.push((bundle.advertiser_id, bundle.config_tag));
                }
            }
        }
        keys.sort();
        Ok(keys)
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn write_report(&self, name: &str, bytes: &[u8]) -> Result<()> {
        write_file(&self.report_path(name), bytes)
    }

    pub fn read_report(&self, name: &str) -> Result<Option<Vec<u8>>> {
        let path = self.report_path(name);
        if path.is_file() {
            read_bytes(&path).map(Some)
        } else {
            Ok(None)
        }
    }
}

fn load_panel(path: &Path) -> Result<PanelDataset> {
    let file = fs::File::open(path).map_err(|e| ServiceError::io(path, e))?;
    Ok(panel::clean(&panel::ingest_csv(file)?, 1.0)?)
}
