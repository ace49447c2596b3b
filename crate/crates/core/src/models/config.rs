use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Snaive,
    Sarima,
    Gbdt,
    Lstm,
    Tft,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Snaive => "snaive",
            ModelKind::Sarima => "sarima",
            ModelKind::Gbdt => "gbdt",
            ModelKind::Lstm => "lstm",
            ModelKind::Tft => "tft",
        }
    }

    /// Name used in configuration tags, matching the paper's labels.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Snaive => "SNAIVE",
            ModelKind::Sarima => "SARIMA",
            ModelKind::Gbdt => "XGB",
            ModelKind::Lstm => "LSTM",
            ModelKind::Tft => "TFT",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Lstm | ModelKind::Tft)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "snaive" => Ok(ModelKind::Snaive),
            "sarima" => Ok(ModelKind::Sarima),
            "gbdt" | "xgb" => Ok(ModelKind::Gbdt),
            "lstm" => Ok(ModelKind::Lstm),
            "tft" => Ok(ModelKind::Tft),
            other => Err(Error::invalid(format!("unknown model kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Pinball,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub rounds: usize,
    pub depth: usize,
    pub lr: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Minimum hessian sum (= sample count) per child.
    pub min_child: f64,
    /// Target lags used as features.
    pub lags: Vec<usize>,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            rounds: 60,
            depth: 3,
            lr: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            min_child: 5.0,
            lags: vec![1, 2, 3, 7, 14, 28],
        }
    }
}

/// `(p, d, q) × (P, D, Q)_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SarimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    #[serde(rename = "P")]
    pub sp: usize,
    #[serde(rename = "D")]
    pub sd: usize,
    #[serde(rename = "Q")]
    pub sq: usize,
    pub s: usize,
}

impl SarimaOrder {
    pub fn arima(p: usize, d: usize, q: usize) -> Self {
        Self {
            p,
            d,
            q,
            sp: 0,
            sd: 0,
            sq: 0,
            s: 7,
        }
    }

    pub fn n_coefficients(&self) -> usize {
        self.p + self.q + self.sp + self.sq
    }
}

impl std::fmt::Display for SarimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({},{},{})({},{},{})[{}]",
            self.p, self.d, self.q, self.sp, self.sd, self.sq, self.s
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SarimaSpec {
    /// AIC search over p, q, P, Q ∈ {0, 1, 2} and d, D ∈ {0, 1}.
    Auto,
    Order(SarimaOrder),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub horizon: usize,
    pub encoder: usize,
    pub hidden: usize,
    pub heads: usize,
    pub quantiles: Vec<f64>,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// Training windows sampled per epoch.
    pub windows_per_epoch: usize,
    /// Fraction of the training span held out for early stopping.
    pub val_frac: f64,
    pub grad_clip: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub gbdt: GbdtParams,
    pub sarima: SarimaSpec,
    /// Seasonal period of the naive baseline.
    pub period: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Tft,
            horizon: 14,
            encoder: 90,
            hidden: 16,
            heads: 2,
            quantiles: vec![0.1, 0.5, 0.9],
            lr: 3e-3,
            epochs: 40,
            patience: 10,
            batch_size: 32,
            windows_per_epoch: 128,
            val_frac: 0.1,
            grad_clip: 1.0,
            loss: LossKind::Pinball,
            seed: 0,
            gbdt: GbdtParams::default(),
            sarima: SarimaSpec::Auto,
            period: 7,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind, horizon: usize) -> Self {
        Self {
            kind,
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.horizon == 0 {
            problems.push("horizon must be positive".to_string());
        }
        if self.encoder < self.horizon {
            problems.push(format!(
                "encoder length {} must be at least the horizon {}",
                self.encoder, self.horizon
            ));
        }
        if self.quantiles.is_empty() {
            problems.push("quantiles must not be empty".to_string());
        }
        if self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            problems.push("quantiles must lie in (0, 1)".to_string());
        }
        if self.quantiles.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("quantiles must be strictly increasing".to_string());
        }
        if self.kind.is_neural() {
            if self.hidden == 0 || self.heads == 0 || self.batch_size == 0 {
                problems.push("hidden, heads and batch_size must be positive".to_string());
            }
            if !(self.lr > 0.0) {
                problems.push("lr must be positive".to_string());
            }
            if !(0.0..1.0).contains(&self.val_frac) {
                problems.push("val_frac must lie in [0, 1)".to_string());
            }
        }
        if self.kind == ModelKind::Gbdt {
            if self.gbdt.lags.is_empty() || self.gbdt.lags.contains(&0) {
                problems.push("gbdt lags must be non-empty and positive".to_string());
            }
            if self.gbdt.lambda < 0.0 || self.gbdt.lr <= 0.0 {
                problems.push("gbdt lambda must be >= 0 and lr > 0".to_string());
            }
        }
        if self.period == 0 {
            problems.push("period must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Index of the quantile reported as the point forecast: the one
    /// closest to the median.
    pub fn median_index(&self) -> usize {
        let mut best = 0;
        for (i, q) in self.quantiles.iter().enumerate() {
            if (q - 0.5).abs() < (self.quantiles[best] - 0.5).abs() {
                best = i;
            }
        }
        best
    }
}
