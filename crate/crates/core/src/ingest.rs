//! Case/death and mobility ingestion.
//!
//! Two CSV inputs per run:
//!
//! - cases: `date,region_id,cumulative_cases,cumulative_deaths`
//! - mobility: `date,region_id,metric,value`, `metric` one of
//!   `completely_home`, `full_time_work`, `restaurant_visits`
//!
//! plus a JSON manifest mapping region ids to populations. [`load_region`]
//! turns them into a [`TimeSeriesBundle`]: daily counts by differencing,
//! a modeling window chosen by the start-day rule, and smoothed,
//! standardized covariates aligned to that window.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::likelihood::Observations;

/// Days before the first modeled day whose reported cases make up the
/// initial detected count.
pub const PRIOR_DAYS: usize = 5;
pub const COUNTY_DAILY_THRESHOLD: u64 = 6;
pub const STATE_CUMULATIVE_THRESHOLD: u64 = 100;
/// Longest run of missing covariate days filled by interpolation.
pub const MAX_INTERPOLATED_GAP: i64 = 3;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("region '{region}' not found in {path}")]
    MissingRegion { region: String, path: PathBuf },
    #[error("region '{region}': date {date} appears twice")]
    DuplicateDate { region: String, date: NaiveDate },
    #[error("region '{region}': case series has no row for {date}")]
    DateGap { region: String, date: NaiveDate },
    #[error("{mode} start threshold is never reached")]
    ThresholdNeverReached { mode: StartMode },
    #[error("no cases reported in the {PRIOR_DAYS} days before the start date {date}; the initial detected count would be 0")]
    ZeroInitialDetected { date: NaiveDate },
    #[error("start date {date} is outside the case series")]
    StartOutOfRange { date: NaiveDate },
    #[error("covariate '{metric}' has no value for {date}")]
    MissingCovariate { metric: Metric, date: NaiveDate },
    #[error("covariate '{metric}' is missing {days} consecutive days after {after}")]
    CovariateGap {
        metric: Metric,
        after: NaiveDate,
        days: i64,
    },
    #[error("covariate '{metric}' is constant over the modeling window")]
    ConstantCovariate { metric: Metric },
    #[error("invalid ingest option: {0}")]
    InvalidOption(String),
}

/// The three mobility measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CompletelyHome,
    FullTimeWork,
    RestaurantVisits,
}

impl Metric {
    pub const ALL: [Metric; 3] = [
        Metric::CompletelyHome,
        Metric::FullTimeWork,
        Metric::RestaurantVisits,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CompletelyHome => "completely_home",
            Metric::FullTimeWork => "full_time_work",
            Metric::RestaurantVisits => "restaurant_visits",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Start-day rule: first day with at least 6 new cases (county) or the day
/// after the cumulative count first exceeds 100 (state).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    County,
    State,
}

impl fmt::Display for StartMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StartMode::County => "county",
            StartMode::State => "state",
        })
    }
}

/// Daily counts from a cumulative series. Negative differences (downward
/// corrections in the source) are clamped to 0 and logged.
pub fn difference_cumulative(cumulative: &[i64]) -> Vec<u64> {
    let mut prev = 0i64;
    cumulative
        .iter()
        .enumerate()
        .map(|(t, &c)| {
            let d = c - prev;
            prev = c;
            if d < 0 {
                warn!("day {t}: cumulative count fell from {} to {c}; daily count clamped to 0", c - d);
                0
            } else {
                d as u64
            }
        })
        .collect()
}

/// Sum of the reported cases in the (up to) five days before `start`.
pub fn initial_detected(daily_cases: &[u64], start: usize) -> u64 {
    daily_cases[start.saturating_sub(PRIOR_DAYS)..start].iter().sum()
}

/// Index of the first modeled day and the initial detected count.
pub fn select_start(daily_cases: &[u64], mode: StartMode) -> Result<(usize, u64), IngestError> {
    let start = match mode {
        StartMode::County => daily_cases
            .iter()
            .position(|&c| c >= COUNTY_DAILY_THRESHOLD),
        StartMode::State => {
            let mut total = 0u64;
            daily_cases
                .iter()
                .position(|&c| {
                    total += c;
                    total > STATE_CUMULATIVE_THRESHOLD
                })
                .map(|t| t + 1)
                .filter(|&t| t < daily_cases.len())
        }
    }
    .ok_or(IngestError::ThresholdNeverReached { mode })?;
    Ok((start, initial_detected(daily_cases, start)))
}

/// Nadaraya-Watson smoother with a Gaussian kernel over the day index.
pub fn smooth_covariate(raw: &[f64], bandwidth_days: f64) -> Vec<f64> {
    assert!(bandwidth_days > 0.0, "bandwidth must be positive");
    (0..raw.len())
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for (j, &x) in raw.iter().enumerate() {
                let z = (i as f64 - j as f64) / bandwidth_days;
                let w = (-0.5 * z * z).exp();
                num += w * x;
                den += w;
            }
            num / den
        })
        .collect()
}

/// Linearly fills internal gaps of at most [`MAX_INTERPOLATED_GAP`] days in a
/// dated series. The result covers every day from the first to the last
/// observation.
pub fn fill_gaps(
    metric: Metric,
    series: &BTreeMap<NaiveDate, f64>,
) -> Result<BTreeMap<NaiveDate, f64>, IngestError> {
    let mut out = BTreeMap::new();
    let mut prev: Option<(NaiveDate, f64)> = None;
    for (&date, &value) in series {
        if let Some((d0, v0)) = prev {
            let span = (date - d0).num_days();
            let missing = span - 1;
            if missing > MAX_INTERPOLATED_GAP {
                return Err(IngestError::CovariateGap {
                    metric,
                    after: d0,
                    days: missing,
                });
            }
            if missing > 0 {
                warn!("covariate '{metric}': interpolating {missing} missing day(s) after {d0}");
            }
            for k in 1..span {
                let w = k as f64 / span as f64;
                out.insert(d0 + Days::new(k as u64), (1.0 - w) * v0 + w * value);
            }
        }
        out.insert(date, value);
        prev = Some((date, value));
    }
    Ok(out)
}

/// One covariate over the modeling window, standardized to mean 0 and
/// sample SD 1; `raw = mean + sd * values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub metric: Metric,
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl Covariate {
    pub fn standardize(metric: Metric, raw: &[f64]) -> Result<Covariate, IngestError> {
        let n = raw.len() as f64;
        let mean = raw.iter().sum::<f64>() / n;
        let sd = (raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(IngestError::ConstantCovariate { metric });
        }
        Ok(Covariate {
            metric,
            values: raw.iter().map(|x| (x - mean) / sd).collect(),
            mean,
            sd,
        })
    }

    /// Converts a coefficient on the standardized scale to one per raw unit.
    pub fn per_raw_unit(&self, coefficient: f64) -> f64 {
        coefficient / self.sd
    }
}

/// Aligned daily data for one region over the modeling window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesBundle {
    pub region_id: String,
    pub population: u64,
    pub dates: Vec<NaiveDate>,
    pub daily_cases: Vec<u64>,
    pub daily_deaths: Vec<u64>,
    pub covariates: Vec<Covariate>,
    /// Detected infectious individuals on the day before the window.
    pub i_d0: u64,
}

impl TimeSeriesBundle {
    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn covariate_series(&self) -> Vec<Vec<f64>> {
        self.covariates.iter().map(|c| c.values.clone()).collect()
    }

    pub fn observations(&self) -> Observations {
        Observations {
            cases: self.daily_cases.clone(),
            deaths: self.daily_deaths.clone(),
            population: self.population as f64,
            i_d0: self.i_d0 as f64,
        }
    }

    pub fn from_json(path: &Path) -> Result<TimeSeriesBundle, IngestError> {
        let text = read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| IngestError::Json {
            path: path.to_owned(),
            source,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self).expect("bundle serializes");
        write_file(path, text.as_bytes())
    }
}

/// Region id to population.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionManifest(pub BTreeMap<String, u64>);

impl RegionManifest {
    pub fn from_json(path: &Path) -> Result<RegionManifest, IngestError> {
        let text = read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| IngestError::Json {
            path: path.to_owned(),
            source,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(path, text.as_bytes())
    }

    pub fn population(&self, region: &str, path: &Path) -> Result<u64, IngestError> {
        self.0
            .get(region)
            .copied()
            .ok_or_else(|| IngestError::MissingRegion {
                region: region.to_owned(),
                path: path.to_owned(),
            })
    }
}

/// How [`load_region`] builds the modeling window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub mode: StartMode,
    /// Overrides the start-day rule; the initial detected count is still the
    /// five-prior-day sum.
    pub start_date: Option<NaiveDate>,
    /// Caps the window length; by default it runs to the last case row.
    pub max_days: Option<usize>,
    /// Gaussian kernel bandwidth in days; `None` leaves covariates unsmoothed.
    pub bandwidth_days: Option<f64>,
    pub metrics: Vec<Metric>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            mode: StartMode::County,
            start_date: None,
            max_days: None,
            bandwidth_days: Some(7.0),
            metrics: Metric::ALL.to_vec(),
        }
    }
}

impl IngestOptions {
    pub fn validate(&self) -> Result<(), IngestError> {
        if let Some(h) = self.bandwidth_days {
            if !(h > 0.0 && h.is_finite()) {
                return Err(IngestError::InvalidOption(format!(
                    "bandwidth_days must be positive, got {h}"
                )));
            }
        }
        if self.max_days == Some(0) {
            return Err(IngestError::InvalidOption("max_days must be at least 1".into()));
        }
        let mut seen = self.metrics.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.metrics.len() {
            return Err(IngestError::InvalidOption("metrics listed twice".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct CaseRow {
    date: NaiveDate,
    region_id: String,
    cumulative_cases: i64,
    cumulative_deaths: i64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MobilityRow {
    date: NaiveDate,
    region_id: String,
    metric: Metric,
    value: f64,
}

fn read_to_string(path: &Path) -> Result<String, IngestError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?;
    Ok(text)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })
}

fn csv_error(path: &Path, err: csv::Error) -> IngestError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(source) => IngestError::Io {
            path: path.to_owned(),
            source,
        },
        csv::ErrorKind::Deserialize { err, .. } => IngestError::Parse {
            path: path.to_owned(),
            line,
            message: err.to_string(),
        },
        kind => IngestError::Parse {
            path: path.to_owned(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

/// Cumulative rows of one region, sorted and checked for gaps.
fn region_cases(path: &Path, region: &str) -> Result<Vec<CaseRow>, IngestError> {
    let mut rows: Vec<CaseRow> = read_rows::<CaseRow>(path)?
        .into_iter()
        .filter(|r| r.region_id == region)
        .collect();
    if rows.is_empty() {
        return Err(IngestError::MissingRegion {
            region: region.to_owned(),
            path: path.to_owned(),
        });
    }
    rows.sort_by_key(|r| r.date);
    for pair in rows.windows(2) {
        let next = pair[0].date + Days::new(1);
        if pair[1].date == pair[0].date {
            return Err(IngestError::DuplicateDate {
                region: region.to_owned(),
                date: pair[0].date,
            });
        }
        if pair[1].date != next {
            return Err(IngestError::DateGap {
                region: region.to_owned(),
                date: next,
            });
        }
    }
    Ok(rows)
}

/// Raw mobility series per metric for one region, gaps filled.
fn region_mobility(
    path: &Path,
    region: &str,
) -> Result<BTreeMap<Metric, BTreeMap<NaiveDate, f64>>, IngestError> {
    let mut series: BTreeMap<Metric, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut found = false;
    for row in read_rows::<MobilityRow>(path)? {
        if row.region_id != region {
            continue;
        }
        found = true;
        if series
            .entry(row.metric)
            .or_default()
            .insert(row.date, row.value)
            .is_some()
        {
            return Err(IngestError::DuplicateDate {
                region: region.to_owned(),
                date: row.date,
            });
        }
    }
    if !found {
        return Err(IngestError::MissingRegion {
            region: region.to_owned(),
            path: path.to_owned(),
        });
    }
    series
        .into_iter()
        .map(|(m, s)| Ok((m, fill_gaps(m, &s)?)))
        .collect()
}

/// Cases reported by a region over its whole series, after correction
/// clamping. The ratio of two such totals is the prior scale ratio.
pub fn total_cases(cases_path: &Path, region_id: &str) -> Result<u64, IngestError> {
    let cumulative: Vec<i64> = region_cases(cases_path, region_id)?
        .iter()
        .map(|r| r.cumulative_cases)
        .collect();
    Ok(difference_cumulative(&cumulative).iter().sum())
}

/// Loads, cleans and aligns one region.
pub fn load_region(
    cases_path: &Path,
    mobility_path: &Path,
    region_id: &str,
    population: u64,
    options: &IngestOptions,
) -> Result<TimeSeriesBundle, IngestError> {
    options.validate()?;
    let rows = region_cases(cases_path, region_id)?;
    let dates: Vec<NaiveDate> = rows.iter().map(|r| r.date).collect();
    let cumulative_cases: Vec<i64> = rows.iter().map(|r| r.cumulative_cases).collect();
    let cumulative_deaths: Vec<i64> = rows.iter().map(|r| r.cumulative_deaths).collect();
    let cases = difference_cumulative(&cumulative_cases);
    let deaths = difference_cumulative(&cumulative_deaths);

    let (start, i_d0) = match options.start_date {
        Some(date) => {
            let start = dates
                .iter()
                .position(|&d| d == date)
                .ok_or(IngestError::StartOutOfRange { date })?;
            (start, initial_detected(&cases, start))
        }
        None => select_start(&cases, options.mode)?,
    };
    if i_d0 == 0 {
        return Err(IngestError::ZeroInitialDetected { date: dates[start] });
    }
    let end = options
        .max_days
        .map_or(dates.len(), |n| (start + n).min(dates.len()));
    let window = &dates[start..end];

    let mobility = if options.metrics.is_empty() {
        BTreeMap::new()
    } else {
        region_mobility(mobility_path, region_id)?
    };
    let mut covariates = Vec::with_capacity(options.metrics.len());
    for &metric in &options.metrics {
        let series = mobility.get(&metric).ok_or(IngestError::MissingCovariate {
            metric,
            date: window[0],
        })?;
        for &date in [window[0], window[window.len() - 1]].iter() {
            if !series.contains_key(&date) {
                return Err(IngestError::MissingCovariate { metric, date });
            }
        }
        // Smooth over everything available so the window edges see real
        // neighbours, then cut the window.
        let all_dates: Vec<NaiveDate> = series.keys().copied().collect();
        let raw: Vec<f64> = series.values().copied().collect();
        let smoothed = match options.bandwidth_days {
            Some(h) => smooth_covariate(&raw, h),
            None => raw,
        };
        let offset = all_dates
            .binary_search(&window[0])
            .expect("window start checked above");
        let values = &smoothed[offset..offset + window.len()];
        covariates.push(Covariate::standardize(metric, values)?);
    }

    Ok(TimeSeriesBundle {
        region_id: region_id.to_owned(),
        population,
        dates: window.to_vec(),
        daily_cases: cases[start..end].to_vec(),
        daily_deaths: deaths[start..end].to_vec(),
        covariates,
        i_d0,
    })
}

/// Writes a cases file for one region whose window starts at `start`.
/// Five history days before `start` carry `i_d0` cases between them (and no
/// deaths), so loading with `start_date = start` reproduces the window
/// counts and the initial detected count exactly.
pub fn write_cases_csv(
    path: &Path,
    region_id: &str,
    start: NaiveDate,
    i_d0: u64,
    cases: &[u64],
    deaths: &[u64],
) -> Result<(), IngestError> {
    assert_eq!(cases.len(), deaths.len(), "case and death series differ in length");
    let k = PRIOR_DAYS as u64;
    let history = (0..k).map(|j| i_d0 / k + u64::from(j < i_d0 % k));
    let first = start - Days::new(k);
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(["date", "region_id", "cumulative_cases", "cumulative_deaths"])
        .map_err(|e| csv_error(path, e))?;
    let (mut cum_c, mut cum_d) = (0u64, 0u64);
    let daily = history.map(|c| (c, 0)).chain(cases.iter().copied().zip(deaths.iter().copied()));
    for (t, (c, d)) in daily.enumerate() {
        cum_c += c;
        cum_d += d;
        let date = first + Days::new(t as u64);
        writer
            .write_record([
                date.to_string(),
                region_id.to_owned(),
                cum_c.to_string(),
                cum_d.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes covariate series for one region, one row per (date, metric).
pub fn write_mobility_csv(
    path: &Path,
    region_id: &str,
    start: NaiveDate,
    series: &[(Metric, Vec<f64>)],
) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (metric, values) in series {
        for (t, &value) in values.iter().enumerate() {
            writer
                .serialize(MobilityRow {
                    date: start + Days::new(t as u64),
                    region_id: region_id.to_owned(),
                    metric: *metric,
                    value,
                })
                .map_err(|e| csv_error(path, e))?;
        }
    }
    writer.flush().map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn differencing() {
        assert_eq!(difference_cumulative(&[5, 5, 8, 8, 12]), vec![5, 0, 3, 0, 4]);
        assert_eq!(difference_cumulative(&[5, 3]), vec![5, 0]);
        assert_eq!(difference_cumulative(&[7, 7, 7, 7]), vec![7, 0, 0, 0]);
    }

    #[test]
    fn county_start_uses_available_history() {
        assert_eq!(select_start(&[1, 2, 6, 9], StartMode::County).unwrap(), (2, 3));
        let daily = [1, 1, 1, 1, 1, 1, 1, 7];
        assert_eq!(select_start(&daily, StartMode::County).unwrap(), (7, 5));
    }

    #[test]
    fn zero_series_never_starts() {
        assert!(matches!(
            select_start(&[0; 30], StartMode::County),
            Err(IngestError::ThresholdNeverReached { .. })
        ));
        assert!(select_start(&[0; 30], StartMode::State).is_err());
    }

    #[test]
    fn state_start_is_day_after_exceeding_100() {
        let daily = difference_cumulative(&[50, 90, 101, 130]);
        assert_eq!(select_start(&daily, StartMode::State).unwrap(), (3, 101));
        // Exactly 100 is not "exceeded".
        let daily = difference_cumulative(&[50, 100, 120, 130]);
        assert_eq!(select_start(&daily, StartMode::State).unwrap().0, 3);
        // Exceeded on the last day: no modeled day left.
        assert!(select_start(&difference_cumulative(&[50, 101]), StartMode::State).is_err());
    }

    #[test]
    fn smoother_reproduces_constants() {
        let xs = vec![3.25; 40];
        for h in [0.5, 2.0, 7.0, 50.0] {
            for y in smooth_covariate(&xs, h) {
                assert!((y - 3.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothed_impulse_is_symmetric_and_mass_preserving() {
        let mut xs = vec![0.0; 101];
        xs[50] = 1.0;
        let ys = smooth_covariate(&xs, 2.0);
        for k in 1..=50 {
            assert!((ys[50 + k] - ys[50 - k]).abs() < 1e-15);
        }
        let total: f64 = ys.iter().sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
        assert!(ys[50] > ys[51] && ys[51] > ys[52]);
    }

    #[test]
    fn tiny_bandwidth_is_identity() {
        let xs: Vec<f64> = (0..30).map(|t| (t as f64 * 0.7).sin()).collect();
        for (x, y) in xs.iter().zip(smooth_covariate(&xs, 1e-3)) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn gaps_up_to_three_days_are_interpolated() {
        let mut s = BTreeMap::new();
        s.insert(date("2020-03-01"), 1.0);
        s.insert(date("2020-03-03"), 3.0);
        s.insert(date("2020-03-07"), 7.0);
        let filled = fill_gaps(Metric::FullTimeWork, &s).unwrap();
        assert_eq!(filled.len(), 7);
        assert_eq!(filled[&date("2020-03-02")], 2.0);
        assert!((filled[&date("2020-03-05")] - 5.0).abs() < 1e-12);
        s.insert(date("2020-03-12"), 12.0);
        assert!(matches!(
            fill_gaps(Metric::FullTimeWork, &s),
            Err(IngestError::CovariateGap { days: 4, .. })
        ));
    }

    #[test]
    fn standardization_stores_constants() {
        let raw = [2.0, 4.0, 6.0, 8.0];
        let c = Covariate::standardize(Metric::CompletelyHome, &raw).unwrap();
        assert_eq!(c.mean, 5.0);
        assert!((c.sd - (20.0f64 / 3.0).sqrt()).abs() < 1e-12);
        for (x, z) in raw.iter().zip(&c.values) {
            assert!((c.mean + c.sd * z - x).abs() < 1e-12);
        }
        assert!(Covariate::standardize(Metric::CompletelyHome, &[1.0; 5]).is_err());
    }

    proptest! {
        #[test]
        fn differencing_then_summing(xs in prop::collection::vec(-50i64..500, 1..60)) {
            let daily = difference_cumulative(&xs);
            // Clamping only ever drops downward corrections, so the
            // re-summed series never falls below the input.
            let mut total = 0i64;
            for (x, d) in xs.iter().zip(&daily) {
                total += *d as i64;
                prop_assert!(total >= *x);
            }
            let mut sorted = xs.clone();
            sorted.sort();
            if sorted[0] >= 0 {
                let daily = difference_cumulative(&sorted);
                let resummed: Vec<i64> = daily.iter().scan(0i64, |s, d| { *s += *d as i64; Some(*s) }).collect();
                prop_assert_eq!(resummed, sorted);
            }
        }

        #[test]
        fn standardized_moments(xs in prop::collection::vec(-100.0f64..100.0, 3..80)) {
            prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-3));
            let c = Covariate::standardize(Metric::RestaurantVisits, &xs).unwrap();
            let n = xs.len() as f64;
            let mean = c.values.iter().sum::<f64>() / n;
            let sd = (c.values.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((sd - 1.0).abs() < 1e-10);
        }

        #[test]
        fn smoothing_is_idempotent_on_constants(c in -1e3f64..1e3, h in 0.1f64..30.0, n in 2usize..60) {
            let once = smooth_covariate(&vec![c; n], h);
            let twice = smooth_covariate(&once, h);
            for y in twice {
                prop_assert!((y - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }
    }
}
