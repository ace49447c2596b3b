//! Advertiser panels: ingestion, cleaning and derived channels.
//!
//! Missing daily values are represented as `NaN` until the cleaning steps
//! ([`filter_missing`], [`interpolate_linear`], [`derive_cpc`],
//! [`extract_budget`]) have run. A cleaned panel has no `NaN` in any channel
//! except the first seven days of `lag7_cpc`, which are warm-up.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of the panel CSV.
pub const CSV_HEADER: [&str; 6] = [
    "advertiser_id",
    "date",
    "category",
    "adcost",
    "adclicks",
    "impressions",
];

/// Default cut-off for [`filter_missing`]: advertisers with more than one
/// percent missing days are dropped.
pub const DEFAULT_MAX_MISSING_FRAC: f64 = 0.01;

/// Number of leading days of `lag7_cpc` that have no lagged value.
pub const LAG_WARMUP: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Cpc,
    AdCost,
    AdClicks,
    Impressions,
    AdBudget,
    Lag7Cpc,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Cpc => "cpc",
            Channel::AdCost => "adcost",
            Channel::AdClicks => "adclicks",
            Channel::Impressions => "impressions",
            Channel::AdBudget => "adbudget",
            Channel::Lag7Cpc => "lag7_cpc",
        }
    }
}

/// One advertiser's aligned daily series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdvertiserSeries {
    pub advertiser_id: String,
    pub category: String,
    pub dates: Vec<NaiveDate>,
    pub adcost: Vec<f64>,
    pub adclicks: Vec<f64>,
    pub impressions: Vec<f64>,
    pub cpc: Vec<f64>,
    /// Monthly budget proxy, constant within each calendar month.
    pub adbudget: Vec<f64>,
    pub lag7_cpc: Vec<f64>,
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Structural equality: missing (`NaN`) values compare equal to each other.
impl PartialEq for AdvertiserSeries {
    fn eq(&self, other: &Self) -> bool {
        self.advertiser_id == other.advertiser_id
            && self.category == other.category
            && self.dates == other.dates
            && same_bits(&self.adcost, &other.adcost)
            && same_bits(&self.adclicks, &other.adclicks)
            && same_bits(&self.impressions, &other.impressions)
            && same_bits(&self.cpc, &other.cpc)
            && same_bits(&self.adbudget, &other.adbudget)
            && same_bits(&self.lag7_cpc, &other.lag7_cpc)
    }
}

impl AdvertiserSeries {
    /// Creates a series with raw channels only; derived channels start out
    /// missing.
    pub fn from_raw(
        advertiser_id: impl Into<String>,
        category: impl Into<String>,
        dates: Vec<NaiveDate>,
        adcost: Vec<f64>,
        adclicks: Vec<f64>,
        impressions: Vec<f64>,
    ) -> Result<Self> {
        let n = dates.len();
        if adcost.len() != n || adclicks.len() != n || impressions.len() != n {
            return Err(Error::invalid("raw channels must match the date index length"));
        }
        check_consecutive(&dates)?;
        Ok(Self {
            advertiser_id: advertiser_id.into(),
            category: category.into(),
            dates,
            adcost,
            adclicks,
            impressions,
            cpc: vec![f64::NAN; n],
            adbudget: vec![f64::NAN; n],
            lag7_cpc: vec![f64::NAN; n],
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Cpc => &self.cpc,
            Channel::AdCost => &self.adcost,
            Channel::AdClicks => &self.adclicks,
            Channel::Impressions => &self.impressions,
            Channel::AdBudget => &self.adbudget,
            Channel::Lag7Cpc => &self.lag7_cpc,
        }
    }

    fn channel_mut(&mut self, channel: Channel) -> &mut Vec<f64> {
        match channel {
            Channel::Cpc => &mut self.cpc,
            Channel::AdCost => &mut self.adcost,
            Channel::AdClicks => &mut self.adclicks,
            Channel::Impressions => &mut self.impressions,
            Channel::AdBudget => &mut self.adbudget,
            Channel::Lag7Cpc => &mut self.lag7_cpc,
        }
    }

    /// Index of `date` in this series, if inside its range.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let first = *self.dates.first()?;
        let offset = (date - first).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    /// Fraction of days on which any raw channel is missing.
    pub fn missing_fraction(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let missing = (0..self.len())
            .filter(|&t| {
                self.adcost[t].is_nan() || self.adclicks[t].is_nan() || self.impressions[t].is_nan()
            })
            .count();
        missing as f64 / self.len() as f64
    }
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn len_days(&self) -> usize {
        ((self.end - self.start).num_days() + 1).max(0) as usize
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Calendar fields derived from a daily date index. Monday is day 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFrame {
    pub dates: Vec<NaiveDate>,
    pub dow: Vec<u32>,
    pub doy: Vec<u32>,
    pub month: Vec<u32>,
}

impl CalendarFrame {
    pub fn from_dates(dates: &[NaiveDate]) -> Self {
        Self {
            dates: dates.to_vec(),
            dow: dates.iter().map(|d| d.weekday().num_days_from_monday()).collect(),
            doy: dates.iter().map(|d| d.ordinal()).collect(),
            month: dates.iter().map(|d| d.month()).collect(),
        }
    }
}

/// Advertisers sharing one global daily date range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub advertisers: Vec<AdvertiserSeries>,
    pub calendar: CalendarFrame,
    pub categories: BTreeSet<String>,
}

impl PanelDataset {
    /// Validates the shared-range and unique-id invariants.
    pub fn new(advertisers: Vec<AdvertiserSeries>) -> Result<Self> {
        let first = advertisers.first().ok_or(Error::NoAdvertisers)?;
        let dates = first.dates.clone();
        check_consecutive(&dates)?;
        let mut ids = BTreeSet::new();
        for a in &advertisers {
            if a.dates != dates {
                return Err(Error::invalid(format!(
                    "advertiser {} does not span the panel date range",
                    a.advertiser_id
                )));
            }
            let n = a.len();
            for ch in [
                Channel::AdCost,
                Channel::AdClicks,
                Channel::Impressions,
                Channel::Cpc,
                Channel::AdBudget,
                Channel::Lag7Cpc,
            ] {
                if a.channel(ch).len() != n {
                    return Err(Error::invalid(format!(
                        "channel {} of {} has wrong length",
                        ch.name(),
                        a.advertiser_id
                    )));
                }
            }
            if !ids.insert(a.advertiser_id.clone()) {
                return Err(Error::invalid(format!(
                    "duplicate advertiser id {}",
                    a.advertiser_id
                )));
            }
        }
        let categories = advertisers.iter().map(|a| a.category.clone()).collect();
        Ok(Self {
            calendar: CalendarFrame::from_dates(&dates),
            advertisers,
            categories,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.calendar.dates
    }

    pub fn len_days(&self) -> usize {
        self.calendar.dates.len()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.advertisers.iter().map(|a| a.advertiser_id.as_str()).collect()
    }

    pub fn get(&self, advertiser_id: &str) -> Option<&AdvertiserSeries> {
        self.advertisers.iter().find(|a| a.advertiser_id == advertiser_id)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.advertisers.first().and_then(|a| a.index_of(date))
    }

    /// Writes the panel in the ingestion CSV schema.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for a in &self.advertisers {
            for t in 0..a.len() {
                w.write_record([
                    a.advertiser_id.clone(),
                    a.dates[t].format("%Y-%m-%d").to_string(),
                    a.category.clone(),
                    fmt_value(a.adcost[t]),
                    fmt_value(a.adclicks[t]),
                    fmt_value(a.impressions[t]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn check_consecutive(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if (w[1] - w[0]).num_days() != 1 {
            return Err(Error::invalid(format!(
                "dates are not consecutive between {} and {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

fn parse_value(field: &str, line: u64, column: &str) -> Result<f64> {
    let field = field.trim();
    if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {column}: `{field}` is not a number"),
    })?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Parse {
            line,
            message: format!("column {column}: value {v} must be finite and non-negative"),
        });
    }
    Ok(v)
}

struct RawRow {
    adcost: f64,
    adclicks: f64,
    impressions: f64,
}

/// Reads a panel CSV. Calendar days absent for an advertiser inside the
/// global (union) date range become missing rows.
pub fn ingest_csv<R: Read>(source: R) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, got `{}`", CSV_HEADER.join(","), names.join(",")),
        });
    }

    let mut rows: BTreeMap<String, (String, BTreeMap<NaiveDate, RawRow>)> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", CSV_HEADER.len(), record.len()),
            });
        }
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty advertiser_id".into(),
            });
        }
        let date = NaiveDate::parse_from_str(record[1].trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            message: format!("invalid date `{}`: {e}", record[1].trim()),
        })?;
        let category = record[2].trim().to_string();
        let row = RawRow {
            adcost: parse_value(&record[3], line, "adcost")?,
            adclicks: parse_value(&record[4], line, "adclicks")?,
            impressions: parse_value(&record[5], line, "impressions")?,
        };
        let entry = rows
            .entry(id.clone())
            .or_insert_with(|| (category.clone(), BTreeMap::new()));
        if entry.0 != category {
            return Err(Error::Parse {
                line,
                message: format!(
                    "advertiser {id} has category `{category}` but earlier rows say `{}`",
                    entry.0
                ),
            });
        }
        if entry.1.insert(date, row).is_some() {
            return Err(Error::DuplicateRow {
                advertiser_id: id,
                date,
            });
        }
    }

    let start = rows
        .values()
        .filter_map(|(_, r)| r.keys().next().copied())
        .min()
        .ok_or(Error::NoAdvertisers)?;
    let end = rows
        .values()
        .filter_map(|(_, r)| r.keys().next_back().copied())
        .max()
        .ok_or(Error::NoAdvertisers)?;
    let dates: Vec<NaiveDate> = start.iter_days().take_while(|d| *d <= end).collect();

    let mut advertisers = Vec::with_capacity(rows.len());
    for (id, (category, by_date)) in rows {
        let mut cost = Vec::with_capacity(dates.len());
        let mut clicks = Vec::with_capacity(dates.len());
        let mut impressions = Vec::with_capacity(dates.len());
        for d in &dates {
            match by_date.get(d) {
                Some(r) => {
                    cost.push(r.adcost);
                    clicks.push(r.adclicks);
                    impressions.push(r.impressions);
                }
                None => {
                    cost.push(f64::NAN);
                    clicks.push(f64::NAN);
                    impressions.push(f64::NAN);
                }
            }
        }
        advertisers.push(AdvertiserSeries::from_raw(
            id,
            category,
            dates.clone(),
            cost,
            clicks,
            impressions,
        )?);
    }
    PanelDataset::new(advertisers)
}

/// Drops advertisers whose share of missing days exceeds `max_missing_frac`.
pub fn filter_missing(panel: &PanelDataset, max_missing_frac: f64) -> Result<PanelDataset> {
    let kept: Vec<AdvertiserSeries> = panel
        .advertisers
        .iter()
        .filter(|a| a.missing_fraction() <= max_missing_frac)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::NoAdvertisers);
    }
    PanelDataset::new(kept)
}

/// Fills `NaN` gaps in place by straight lines between the nearest observed
/// neighbours; leading and trailing gaps take the nearest observed value.
/// Returns `false` when nothing is observed.
pub fn fill_linear(values: &mut [f64]) -> bool {
    let observed: Vec<usize> = (0..values.len()).filter(|&i| !values[i].is_nan()).collect();
    let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
        return values.is_empty();
    };
    let (head, tail) = (values[first], values[last]);
    values[..first].iter_mut().for_each(|v| *v = head);
    values[last + 1..].iter_mut().for_each(|v| *v = tail);
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a < 2 {
            continue;
        }
        let (va, vb) = (values[a], values[b]);
        let span = (b - a) as f64;
        for i in a + 1..b {
            values[i] = va + (vb - va) * (i - a) as f64 / span;
        }
    }
    true
}

/// Linearly interpolates the raw channels, and `cpc` when it has been derived.
pub fn interpolate_linear(series: &AdvertiserSeries) -> Result<AdvertiserSeries> {
    let mut out = series.clone();
    for ch in [Channel::AdCost, Channel::AdClicks, Channel::Impressions] {
        if !fill_linear(out.channel_mut(ch)) {
            return Err(Error::MissingChannel {
                advertiser_id: series.advertiser_id.clone(),
                channel: ch.name().into(),
            });
        }
    }
    if out.cpc.iter().any(|v| !v.is_nan()) {
        fill_linear(&mut out.cpc);
    }
    Ok(out)
}

/// CPC = cost / clicks. Zero-click days are treated as missing and filled by
/// interpolation; `lag7_cpc` is the CPC shifted by one week.
pub fn derive_cpc(series: &AdvertiserSeries) -> Result<AdvertiserSeries> {
    if series.adcost.iter().chain(&series.adclicks).any(|v| v.is_nan()) {
        let channel = if series.adcost.iter().any(|v| v.is_nan()) {
            Channel::AdCost
        } else {
            Channel::AdClicks
        };
        return Err(Error::MissingChannel {
            advertiser_id: series.advertiser_id.clone(),
            channel: format!("{} (interpolate before deriving cpc)", channel.name()),
        });
    }
    let mut out = series.clone();
    out.cpc = series
        .adcost
        .iter()
        .zip(&series.adclicks)
        .map(|(&cost, &clicks)| if clicks > 0.0 { cost / clicks } else { f64::NAN })
        .collect();
    if !fill_linear(&mut out.cpc) {
        return Err(Error::AllZeroClicks(series.advertiser_id.clone()));
    }
    out.lag7_cpc = (0..out.len())
        .map(|t| if t >= LAG_WARMUP { out.cpc[t - LAG_WARMUP] } else { f64::NAN })
        .collect();
    Ok(out)
}

fn days_in_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    let next = NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid month start");
    let this = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month start");
    (next - this).num_days() as u32
}

/// Monthly budget proxy: total ad cost of each calendar month written to
/// every day of that month. Months cut by the panel edges are scaled up to
/// their full length.
pub fn extract_budget(series: &AdvertiserSeries) -> Result<AdvertiserSeries> {
    if series.adcost.iter().any(|v| v.is_nan()) {
        return Err(Error::MissingChannel {
            advertiser_id: series.advertiser_id.clone(),
            channel: Channel::AdCost.name().into(),
        });
    }
    let mut totals: BTreeMap<(i32, u32), (f64, u32)> = BTreeMap::new();
    for (d, &c) in series.dates.iter().zip(&series.adcost) {
        let e = totals.entry((d.year(), d.month())).or_insert((0.0, 0));
        e.0 += c;
        e.1 += 1;
    }
    let mut out = series.clone();
    out.adbudget = series
        .dates
        .iter()
        .map(|d| {
            let (sum, observed) = totals[&(d.year(), d.month())];
            let full = days_in_month(d.year(), d.month());
            if observed == full {
                sum
            } else {
                sum * full as f64 / observed as f64
            }
        })
        .collect();
    Ok(out)
}

/// Runs the full cleaning chain: missing-day filter, interpolation, CPC and
/// budget derivation.
pub fn clean(panel: &PanelDataset, max_missing_frac: f64) -> Result<PanelDataset> {
    let filtered = filter_missing(panel, max_missing_frac)?;
    let cleaned = filtered
        .advertisers
        .iter()
        .map(|a| {
            let a = interpolate_linear(a)?;
            let a = derive_cpc(&a)?;
            extract_budget(&a)
        })
        .collect::<Result<Vec<_>>>()?;
    PanelDataset::new(cleaned)
}
