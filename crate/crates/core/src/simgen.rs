//! Seeded synthetic search-advertising market.
//!
//! Each planted cluster shares a latent CPC level: a persistent AR(1)
//! log-level plus a cluster-specific annual swing, trend and weekly
//! pattern. An advertiser's CPC follows its cluster level (optionally with a
//! short lag), responds to its own monthly budget through a constant
//! elasticity, and spikes on special days. Advertisers spend their monthly
//! budget, so clicks are spend divided by CPC and the realized monthly cost
//! tracks the plan.
//!
//! `noise_scale` multiplies every random market movement: the AR(1)
//! innovations, the cluster swings and trends, the spread of base CPCs and
//! the daily CPC and spend noise.
//!
//! All draws come from ChaCha8 streams derived from the single config seed:
//! stream 0 for market-wide structure, `1 + c` for cluster `c` and
//! `1000 + i` for advertiser `i`.

use std::collections::BTreeMap;

use chrono::{Datelike, Months, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::features::extract_features;
use crate::error::{Error, Result};
use crate::panel::{self, AdvertiserSeries, DateRange, PanelDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockConfig {
    pub date: NaiveDate,
    pub affected_categories: Vec<String>,
    /// Multiplier on daily spend right after the shock.
    pub budget_multiplier: f64,
    /// Multiplier on CPC right after the shock.
    pub cpc_multiplier: f64,
    /// Days over which spend returns linearly to its planned level.
    #[serde(default = "default_recovery_days")]
    pub budget_recovery_days: u32,
    /// Fraction of the CPC drop regained, linearly over
    /// `cpc_recovery_days`; 0 keeps the drop in place.
    #[serde(default)]
    pub cpc_recovery: f64,
    #[serde(default = "default_recovery_days")]
    pub cpc_recovery_days: u32,
}

fn default_recovery_days() -> u32 {
    120
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecialDay {
    pub doy: u32,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketConfig {
    pub n_advertisers: usize,
    pub n_clusters: usize,
    /// Number of category labels; cluster `c` has home category `cat_c`.
    pub n_categories: usize,
    /// Probability that an advertiser carries its cluster's home category.
    pub category_purity: f64,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
    /// Exponent of CPC with respect to the advertiser's relative budget.
    pub budget_elasticity: f64,
    /// Exponent of daily spend with respect to the monthly budget.
    pub alpha: f64,
    /// Probability of a budget regime change at each month start.
    pub budget_change_prob: f64,
    /// Regime multipliers are `exp(U(-s, s))`.
    pub budget_change_scale: f64,
    pub weekly_amp_range: (f64, f64),
    pub special_days: Vec<SpecialDay>,
    pub shock: Option<ShockConfig>,
    pub noise_scale: f64,
    /// Innovation scale of the shared AR(1) log level, before `noise_scale`.
    pub level_ar_sigma: f64,
    /// Time constant in days of CPC's adjustment to a budget change; 0 is
    /// immediate.
    pub budget_response_days: f64,
    /// Followers see their cluster level delayed by up to this many days.
    pub max_lag_days: usize,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            n_advertisers: 20,
            n_clusters: 4,
            n_categories: 4,
            category_purity: 0.75,
            n_days: 1100,
            start_date: NaiveDate::from_ymd_opt(2017, 11, 1).expect("valid date"),
            seed: 7,
            budget_elasticity: -0.4,
            alpha: 1.0,
            budget_change_prob: 0.3,
            budget_change_scale: 0.6,
            weekly_amp_range: (0.04, 0.12),
            special_days: vec![
                SpecialDay { doy: 358, multiplier: 1.5 },
                SpecialDay { doy: 359, multiplier: 1.5 },
            ],
            shock: None,
            noise_scale: 1.0,
            level_ar_sigma: 0.05,
            budget_response_days: 0.0,
            max_lag_days: 7,
        }
    }
}

impl MarketConfig {
    /// Default market with a pandemic-style shock on 2020-03-15 hitting the
    /// home category of cluster 0.
    pub fn with_default_shock(mut self) -> Self {
        self.shock = Some(ShockConfig {
            date: NaiveDate::from_ymd_opt(2020, 3, 15).expect("valid date"),
            affected_categories: vec!["cat_0".into()],
            budget_multiplier: 0.5,
            cpc_multiplier: 0.6,
            budget_recovery_days: default_recovery_days(),
            cpc_recovery: 0.75,
            cpc_recovery_days: 150,
        });
        self
    }

    /// Market where long-horizon CPC is predictable only from other series:
    /// followers trail their cluster level by up to eight weeks, and CPC
    /// drifts toward frequent, large budget changes over about a month.
    pub fn with_planted_dependence(mut self) -> Self {
        self.n_advertisers = 16;
        self.level_ar_sigma = 0.02;
        self.max_lag_days = 56;
        self.budget_elasticity = -1.0;
        self.budget_change_prob = 0.5;
        self.budget_change_scale = 0.8;
        self.budget_response_days = 30.0;
        self
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + chrono::Duration::days(self.n_days as i64 - 1)
    }

    pub fn category_names(&self) -> Vec<String> {
        (0..self.n_categories).map(|c| format!("cat_{c}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_advertisers == 0 {
            problems.push("n_advertisers must be positive".to_string());
        }
        if self.n_clusters == 0 || self.n_clusters > self.n_advertisers {
            problems.push("n_clusters must be in 1..=n_advertisers".to_string());
        }
        if self.n_categories == 0 {
            problems.push("n_categories must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.category_purity) {
            problems.push("category_purity must lie in [0, 1]".to_string());
        }
        if self.n_days < 120 {
            problems.push("n_days must be at least 120".to_string());
        }
        if !(0.0..=1.0).contains(&self.budget_change_prob) {
            problems.push("budget_change_prob must lie in [0, 1]".to_string());
        }
        if !(self.budget_response_days >= 0.0) {
            problems.push("budget_response_days must be non-negative".to_string());
        }
        if !(self.level_ar_sigma >= 0.0) {
            problems.push("level_ar_sigma must be non-negative".to_string());
        }
        if self.budget_change_scale < 0.0 {
            problems.push("budget_change_scale must be non-negative".to_string());
        }
        let (lo, hi) = self.weekly_amp_range;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            problems.push("weekly_amp_range must satisfy 0 <= lo <= hi < 1".to_string());
        }
        if self.special_days.iter().any(|s| s.multiplier <= 0.0 || !(1..=366).contains(&s.doy)) {
            problems.push("special day multipliers must be > 0 with doy in 1..=366".to_string());
        }
        if let Some(shock) = &self.shock {
            if shock.budget_multiplier <= 0.0 || shock.cpc_multiplier <= 0.0 {
                problems.push("shock multipliers must be > 0".to_string());
            }
            if !(0.0..=1.0).contains(&shock.cpc_recovery) {
                problems.push("shock cpc_recovery must lie in [0, 1]".to_string());
            }
        }
        if !(self.noise_scale >= 0.0) {
            problems.push("noise_scale must be >= 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cluster_of: BTreeMap<String, usize>,
    pub shock_date: Option<NaiveDate>,
    pub elasticity_sign: BTreeMap<String, i8>,
    /// Advertisers whose category the shock hits.
    #[serde(default)]
    pub shocked_advertisers: Vec<String>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct ClusterLevel {
    /// Log level indexed from `-max_lag_days`.
    log_level: Vec<f64>,
    weekly: [f64; 7],
}

fn cluster_level(cfg: &MarketConfig, c: usize) -> ClusterLevel {
    let mut rng = stream(cfg.seed, 1 + c as u64);
    let n = cfg.n_days + cfg.max_lag_days;
    let phi = 0.99;
    let sigma = cfg.level_ar_sigma * cfg.noise_scale;
    let annual_amp = cfg.noise_scale * rng.random_range(0.1..0.3);
    let annual_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let slope = cfg.noise_scale * rng.random_range(-0.3..0.3);
    let mut ar = 0.0;
    let mut log_level = Vec::with_capacity(n);
    for t in 0..n {
        ar = phi * ar + sigma * normal(&mut rng);
        let x = t as f64;
        let shape = annual_amp * (std::f64::consts::TAU * x / 365.25 + annual_phase).sin()
            + slope * x / n as f64;
        log_level.push(ar + shape);
    }
    let (lo, hi) = cfg.weekly_amp_range;
    let amp = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut weekly = [1.0; 7];
    for (d, w) in weekly.iter_mut().enumerate() {
        *w = 1.0 + amp * (std::f64::consts::TAU * d as f64 / 7.0 + phase).sin();
    }
    ClusterLevel { log_level, weekly }
}

fn month_key(d: NaiveDate) -> (i32, u32) {
    (d.year(), d.month())
}

/// Generates a cleaned panel and its ground truth.
pub fn simulate(cfg: &MarketConfig) -> Result<(PanelDataset, GroundTruth)> {
    cfg.validate()?;
    let dates: Vec<NaiveDate> = cfg.start_date.iter_days().take(cfg.n_days).collect();
    let categories = cfg.category_names();

    let mut market = stream(cfg.seed, 0);
    let mut cluster_ids: Vec<usize> = (0..cfg.n_advertisers).map(|i| i % cfg.n_clusters).collect();
    cluster_ids.shuffle(&mut market);

    let levels: Vec<ClusterLevel> = (0..cfg.n_clusters).map(|c| cluster_level(cfg, c)).collect();

    let shock_index = cfg
        .shock
        .as_ref()
        .map(|s| (s.date - cfg.start_date).num_days());

    let mut advertisers = Vec::with_capacity(cfg.n_advertisers);
    let mut truth = GroundTruth {
        cluster_of: BTreeMap::new(),
        shock_date: cfg.shock.as_ref().map(|s| s.date),
        elasticity_sign: BTreeMap::new(),
        shocked_advertisers: Vec::new(),
    };
    for (i, &c) in cluster_ids.iter().enumerate() {
        let mut rng = stream(cfg.seed, 1000 + i as u64);
        let id = format!("adv{i:03}");
        let home = c % cfg.n_categories;
        let category = if rng.random_bool(cfg.category_purity) {
            categories[home].clone()
        } else {
            categories[rng.random_range(0..cfg.n_categories)].clone()
        };
        let base_cpc = (0.4 * cfg.noise_scale * normal(&mut rng)).exp();
        let base_budget = (3000f64.ln() + 0.8 * normal(&mut rng)).exp();
        let lag = if cfg.max_lag_days > 0 {
            rng.random_range(0..=cfg.max_lag_days)
        } else {
            0
        };
        let ctr = rng.random_range(0.02..0.08);
        let shocked = cfg
            .shock
            .as_ref()
            .is_some_and(|s| s.affected_categories.contains(&category));

        let mut budgets: BTreeMap<(i32, u32), f64> = BTreeMap::new();
        let s = cfg.budget_change_scale;
        let mut current = base_budget * if s > 0.0 { rng.random_range(-s..s).exp() } else { 1.0 };
        for d in &dates {
            let key = month_key(*d);
            if budgets.contains_key(&key) {
                continue;
            }
            if !budgets.is_empty() && rng.random_bool(cfg.budget_change_prob) && s > 0.0 {
                current = base_budget * rng.random_range(-s..s).exp();
            }
            budgets.insert(key, current);
        }

        let mut cost = Vec::with_capacity(cfg.n_days);
        let mut clicks = Vec::with_capacity(cfg.n_days);
        let mut impressions = Vec::with_capacity(cfg.n_days);
        let mut felt = (budgets[&month_key(dates[0])] / base_budget).ln();
        for (t, d) in dates.iter().enumerate() {
            let plan = budgets[&month_key(*d)];
            let level = &levels[c];
            let lagged = level.log_level[t + cfg.max_lag_days - lag].exp();
            let weekly = level.weekly[d.weekday().num_days_from_monday() as usize];
            let relative = plan / base_budget;
            felt += (relative.ln() - felt) / cfg.budget_response_days.max(1.0);
            let mut cpc = base_cpc * lagged * weekly * (cfg.budget_elasticity * felt).exp();
            for sd in &cfg.special_days {
                if d.ordinal() == sd.doy {
                    cpc *= sd.multiplier;
                }
            }
            let mut spend_mult = 1.0;
            if let (true, Some(shock), Some(t0)) = (shocked, cfg.shock.as_ref(), shock_index) {
                let since = t as i64 - t0;
                if since >= 0 {
                    let regained = (since as f64 / shock.cpc_recovery_days.max(1) as f64).min(1.0) * shock.cpc_recovery;
                    cpc *= shock.cpc_multiplier + (1.0 - shock.cpc_multiplier) * regained;
                    let recovery = (since as f64 / shock.budget_recovery_days.max(1) as f64).min(1.0);
                    spend_mult = shock.budget_multiplier + (1.0 - shock.budget_multiplier) * recovery;
                }
            }
            cpc *= (0.10 * cfg.noise_scale * normal(&mut rng)).exp();
            let days = days_in_month(*d) as f64;
            let spend = base_budget / days
                * relative.powf(cfg.alpha)
                * spend_mult
                * (0.15 * cfg.noise_scale * normal(&mut rng)).exp();
            let n_clicks = (spend / cpc).round().max(1.0);
            cost.push(cpc * n_clicks);
            clicks.push(n_clicks);
            impressions.push((n_clicks / ctr).round());
        }
        let raw = AdvertiserSeries::from_raw(id.clone(), category, dates.clone(), cost, clicks, impressions)?;
        let series = panel::extract_budget(&panel::derive_cpc(&raw)?)?;
        advertisers.push(series);
        if shocked {
            truth.shocked_advertisers.push(id.clone());
        }
        truth.cluster_of.insert(id.clone(), c);
        truth
            .elasticity_sign
            .insert(id, cfg.budget_elasticity.signum() as i8);
    }
    Ok((PanelDataset::new(advertisers)?, truth))
}

fn days_in_month(d: NaiveDate) -> u32 {
    let first = d.with_day(1).expect("day 1 exists");
    let next = first + Months::new(1);
    (next - first).num_days() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Mean over advertisers of the Pearson correlation between daily clicks
    /// and the monthly budget; `None` when every advertiser is degenerate.
    pub clicks_budget_corr: Option<f64>,
    pub impressions_budget_corr: Option<f64>,
    /// Advertisers skipped because a channel is constant.
    pub degenerate: Vec<String>,
    /// Weekly seasonal strength of each advertiser's CPC.
    pub weekly_strength: Vec<f64>,
    pub weekly_strength_median: f64,
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let scale = mx.abs().max(my.abs()).max(1.0);
    if sxx <= 1e-24 * scale * n || syy <= 1e-24 * scale * n {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Compares the panel's channel relationships with the calibration targets.
pub fn validate_calibration(panel: &PanelDataset) -> Result<CalibrationReport> {
    if panel.advertisers.len() < 2 {
        return Err(Error::InsufficientData(
            "calibration needs at least two advertisers".into(),
        ));
    }
    let mut clicks = Vec::new();
    let mut impressions = Vec::new();
    let mut degenerate = Vec::new();
    let mut weekly_strength = Vec::new();
    for a in &panel.advertisers {
        match (
            pearson(&a.adclicks, &a.adbudget),
            pearson(&a.impressions, &a.adbudget),
        ) {
            (Some(c), Some(i)) => {
                clicks.push(c);
                impressions.push(i);
            }
            _ => degenerate.push(a.advertiser_id.clone()),
        }
        if a.len() >= 21 {
            weekly_strength.push(extract_features(&a.cpc, 7)?.season);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let mut sorted = weekly_strength.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        0.0
    } else {
        sorted[sorted.len() / 2]
    };
    Ok(CalibrationReport {
        clicks_budget_corr: mean(&clicks),
        impressions_budget_corr: mean(&impressions),
        degenerate,
        weekly_strength,
        weekly_strength_median: median,
    })
}

/// Month offsets of the three evaluation windows relative to the shock month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOffsets {
    pub pre: i32,
    pub post1: i32,
    pub post2: i32,
    pub months: u32,
}

impl Default for WindowOffsets {
    fn default() -> Self {
        Self {
            pre: -6,
            post1: 2,
            post2: 6,
            months: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShockWindows {
    pub pre: DateRange,
    pub post1: DateRange,
    pub post2: DateRange,
}

impl ShockWindows {
    pub fn labelled(&self) -> [(&'static str, DateRange); 3] {
        [("pre", self.pre), ("post1", self.post1), ("post2", self.post2)]
    }
}

fn shift_months(d: NaiveDate, offset: i32) -> NaiveDate {
    if offset >= 0 {
        d + Months::new(offset as u32)
    } else {
        d - Months::new(offset.unsigned_abs())
    }
}

/// Two-month evaluation windows before, right after, and some months after
/// the configured shock.
pub fn inject_shock_window_labels(cfg: &MarketConfig, offsets: WindowOffsets) -> Result<ShockWindows> {
    let shock = cfg.shock.as_ref().ok_or(Error::NoShock)?;
    if offsets.months == 0 || !(offsets.pre + offsets.months as i32 <= 0 && 0 < offsets.post1 && offsets.post1 + offsets.months as i32 <= offsets.post2) {
        return Err(Error::Config(vec![
            "window offsets must be ordered pre < shock < post1 < post2 without overlap".into(),
        ]));
    }
    let month_start = shock.date.with_day(1).expect("day 1 exists");
    let window = |offset: i32| {
        let start = shift_months(month_start, offset);
        let end = shift_months(start, offsets.months as i32) - chrono::Duration::days(1);
        DateRange::new(start, end)
    };
    let windows = ShockWindows {
        pre: window(offsets.pre),
        post1: window(offsets.post1),
        post2: window(offsets.post2),
    };
    if windows.pre.start < cfg.start_date || windows.post2.end > cfg.end_date() {
        return Err(Error::InsufficientData(format!(
            "simulated range {}..{} does not cover windows {}..{}",
            cfg.start_date,
            cfg.end_date(),
            windows.pre.start,
            windows.post2.end
        )));
    }
    Ok(windows)
}
