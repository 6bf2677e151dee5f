//! Rainfall and covariate series: CSV loading, validation, annual maxima,
//! year alignment, covariate standardization and bias correction.

mod quantile_map;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, sample_sd};

pub use quantile_map::{quantile_map_bias_correct, BiasCorrection, EmpiricalQuantiles};

/// Default fraction of days that must be present for a year to count.
pub const DEFAULT_MIN_COVERAGE: f64 = 0.9;

/// Hours in the averaging window of a daily depth.
const HOURS_PER_DAY: f64 = 24.0;

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidParameter(format!(
                "year range start {start} is after end {end}"
            )));
        }
        Ok(YearRange { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        year >= self.start && year <= self.end
    }
}

/// How a missing daily value is written in the input file. Blank fields and
/// `NA`/`NaN` are always treated as missing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MissingMarker {
    pub sentinel: Option<f64>,
}

impl MissingMarker {
    fn is_missing(&self, raw: &str) -> bool {
        let raw = raw.trim();
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
            return true;
        }
        match (self.sentinel, raw.parse::<f64>()) {
            (Some(s), Ok(v)) => v == s,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub station_id: String,
    pub dates: Vec<NaiveDate>,
    /// Daily depth in mm; `None` marks a missing observation.
    pub values: Vec<Option<f64>>,
    pub missing_marker: MissingMarker,
}

impl DailySeries {
    pub fn new(
        station_id: impl Into<String>,
        dates: Vec<NaiveDate>,
        values: Vec<Option<f64>>,
        missing_marker: MissingMarker,
    ) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        for (d, v) in dates.iter().zip(&values) {
            if let Some(v) = v {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidSeries(format!("invalid depth {v} on {d}")));
                }
            }
        }
        Ok(DailySeries {
            station_id: station_id.into(),
            dates,
            values,
            missing_marker,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualMaximaSeries {
    pub station_id: String,
    pub years: Vec<i32>,
    /// Annual maximum 24-hour average intensity, mm/hr.
    pub intensities: Vec<f64>,
}

impl AnnualMaximaSeries {
    pub fn new(station_id: impl Into<String>, years: Vec<i32>, intensities: Vec<f64>) -> Result<Self> {
        check_years(&years, intensities.len())?;
        if let Some((y, v)) = years
            .iter()
            .zip(&intensities)
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidSeries(format!(
                "intensity {v} in {y} must be positive and finite"
            )));
        }
        Ok(AnnualMaximaSeries {
            station_id: station_id.into(),
            years,
            intensities,
        })
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn value_in(&self, year: i32) -> Option<f64> {
        self.years
            .binary_search(&year)
            .ok()
            .map(|i| self.intensities[i])
    }

    pub fn mean(&self) -> f64 {
        mean(&self.intensities)
    }
}

/// Physical drivers offered as candidate covariates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum CovariateName {
    GlobalMeanTemp,
    LocalTemp,
    MdrSst,
    Nao,
    Pdo,
    Nino34,
    Soi,
    AtlTcCount,
    Custom(String),
}

impl fmt::Display for CovariateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CovariateName::GlobalMeanTemp => "global_mean_temp",
            CovariateName::LocalTemp => "local_temp",
            CovariateName::MdrSst => "mdr_sst",
            CovariateName::Nao => "nao",
            CovariateName::Pdo => "pdo",
            CovariateName::Nino34 => "nino34",
            CovariateName::Soi => "soi",
            CovariateName::AtlTcCount => "atl_tc_count",
            CovariateName::Custom(s) => s,
        };
        f.write_str(s)
    }
}

impl FromStr for CovariateName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidParameter("empty covariate name".into()));
        }
        Ok(match s.to_ascii_lowercase().as_str() {
            "global_mean_temp" | "gmst" => CovariateName::GlobalMeanTemp,
            "local_temp" => CovariateName::LocalTemp,
            "mdr_sst" | "mdr" => CovariateName::MdrSst,
            "nao" => CovariateName::Nao,
            "pdo" => CovariateName::Pdo,
            "nino34" | "nino3.4" => CovariateName::Nino34,
            "soi" => CovariateName::Soi,
            "atl_tc_count" | "tc_count" => CovariateName::AtlTcCount,
            _ => CovariateName::Custom(s.to_string()),
        })
    }
}

impl From<CovariateName> for String {
    fn from(n: CovariateName) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for CovariateName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSeries {
    pub name: CovariateName,
    pub years: Vec<i32>,
    pub values: Vec<f64>,
    pub standardized: bool,
}

/// Z-score constants estimated over the historical fitting window, reused
/// verbatim for projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
    pub window: YearRange,
}

impl Standardization {
    pub fn apply(&self, series: &CovariateSeries) -> CovariateSeries {
        CovariateSeries {
            name: series.name.clone(),
            years: series.years.clone(),
            values: series.values.iter().map(|v| self.transform(*v)).collect(),
            standardized: true,
        }
    }

    pub fn transform(&self, value: f64) -> f64 {
        (value - self.mean) / self.sd
    }
}

impl CovariateSeries {
    pub fn new(name: CovariateName, years: Vec<i32>, values: Vec<f64>) -> Result<Self> {
        check_years(&years, values.len())?;
        if let Some((y, v)) = years.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("covariate value {v} in {y} is not finite")));
        }
        Ok(CovariateSeries {
            name,
            years,
            values,
            standardized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn value_in(&self, year: i32) -> Option<f64> {
        self.years.binary_search(&year).ok().map(|i| self.values[i])
    }

    /// Fit z-score constants on `window` (sample standard deviation) and
    /// apply them to the whole series.
    pub fn standardize(&self, window: YearRange) -> Result<(CovariateSeries, Standardization)> {
        let in_window: Vec<f64> = self
            .years
            .iter()
            .zip(&self.values)
            .filter(|(y, _)| window.contains(**y))
            .map(|(_, v)| *v)
            .collect();
        if in_window.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "covariate {} has {} values in {}-{}; need at least 2 to standardize",
                self.name,
                in_window.len(),
                window.start,
                window.end
            )));
        }
        let m = mean(&in_window);
        let sd = sample_sd(&in_window);
        if !(sd > 0.0) {
            return Err(Error::InvalidSeries(format!(
                "covariate {} is constant over the standardization window",
                self.name
            )));
        }
        let z = Standardization { mean: m, sd, window };
        Ok((z.apply(self), z))
    }

    /// Values for `years` consecutive years starting at `start_year`. Years
    /// past the end of the series hold the last available value; those years
    /// are returned alongside the path.
    pub fn path(&self, start_year: i32, years: usize) -> Result<(Vec<f64>, Vec<i32>)> {
        let first = *self
            .years
            .first()
            .ok_or_else(|| Error::InvalidSeries(format!("covariate {} is empty", self.name)))?;
        if start_year < first {
            return Err(Error::InvalidSeries(format!(
                "covariate {} starts in {first}, after requested start {start_year}",
                self.name
            )));
        }
        let mut path = Vec::with_capacity(years);
        let mut held = Vec::new();
        let mut last = None;
        for offset in 0..years {
            let year = start_year + offset as i32;
            match self.value_in(year) {
                Some(v) => {
                    last = Some(v);
                    path.push(v);
                }
                None => {
                    let v = match last {
                        Some(v) => v,
                        None => {
                            // a hole before any value in range: fall back to the nearest earlier year
                            let idx = self.years.partition_point(|y| *y < year);
                            self.values[idx.saturating_sub(1)]
                        }
                    };
                    held.push(year);
                    last = Some(v);
                    path.push(v);
                }
            }
        }
        Ok((path, held))
    }
}

/// Annual maxima paired with the covariate on identical years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDataset {
    pub maxima: AnnualMaximaSeries,
    pub covariate: CovariateSeries,
}

impl AlignedDataset {
    /// A dataset for stationary fits: the covariate is identically zero.
    pub fn without_covariate(maxima: AnnualMaximaSeries) -> Self {
        let covariate = CovariateSeries {
            name: CovariateName::Custom("none".into()),
            years: maxima.years.clone(),
            values: vec![0.0; maxima.len()],
            standardized: true,
        };
        AlignedDataset { maxima, covariate }
    }

    pub fn len(&self) -> usize {
        self.maxima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maxima.is_empty()
    }

    pub fn intensities(&self) -> &[f64] {
        &self.maxima.intensities
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariate.values
    }
}

fn check_years(years: &[i32], n_values: usize) -> Result<()> {
    if years.len() != n_values {
        return Err(Error::InvalidSeries(format!(
            "{} years but {} values",
            years.len(),
            n_values
        )));
    }
    if let Some(w) = years.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSeries(format!(
            "years not strictly increasing at {}",
            w[1]
        )));
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, first: &str) -> Result<()> {
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || !headers[0].eq_ignore_ascii_case(first) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{first},<value>`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(())
}

fn parse_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: err.to_string(),
    }
}

/// Load a two-column `date,value_mm` file. The station id is the file stem.
pub fn load_daily_csv(path: impl AsRef<Path>) -> Result<DailySeries> {
    let path = path.as_ref();
    let station = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_daily_csv_with(path, station, MissingMarker::default())
}

pub fn load_daily_csv_with(
    path: impl AsRef<Path>,
    station_id: impl Into<String>,
    marker: MissingMarker,
) -> Result<DailySeries> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, "date")?;
    let mut rows: BTreeMap<NaiveDate, Option<f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| bad(format!("malformed date `{}`: {e}", &record[0])))?;
        let raw = &record[1];
        let value = if marker.is_missing(raw) {
            None
        } else {
            let v: f64 = raw
                .parse()
                .map_err(|_| bad(format!("malformed value `{raw}`")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value `{raw}`")));
            }
            if v < 0.0 {
                return Err(Error::NegativeRainfall {
                    date: date.to_string(),
                    value: v,
                    line,
                });
            }
            Some(v)
        };
        if rows.insert(date, value).is_some() {
            return Err(Error::Duplicate {
                what: "date",
                key: date.to_string(),
                line,
            });
        }
    }
    let (dates, values) = rows.into_iter().unzip();
    DailySeries::new(station_id, dates, values, marker)
}

/// Load a two-column `year,value` file, sorted by year.
pub fn load_annual_csv(path: impl AsRef<Path>) -> Result<(Vec<i32>, Vec<f64>)> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, "year")?;
    let mut rows: BTreeMap<i32, f64> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let year: i32 = record[0]
            .parse()
            .map_err(|_| bad(format!("malformed year `{}`", &record[0])))?;
        let value: f64 = record[1]
            .parse()
            .map_err(|_| bad(format!("malformed value `{}`", &record[1])))?;
        if !value.is_finite() {
            return Err(bad(format!("non-finite value `{}`", &record[1])));
        }
        if rows.insert(year, value).is_some() {
            return Err(Error::Duplicate {
                what: "year",
                key: year.to_string(),
                line,
            });
        }
    }
    Ok(rows.into_iter().unzip())
}

pub fn load_maxima_csv(path: impl AsRef<Path>, station_id: impl Into<String>) -> Result<AnnualMaximaSeries> {
    let (years, values) = load_annual_csv(path)?;
    AnnualMaximaSeries::new(station_id, years, values)
}

pub fn load_covariate_csv(path: impl AsRef<Path>, name: CovariateName) -> Result<CovariateSeries> {
    let (years, values) = load_annual_csv(path)?;
    CovariateSeries::new(name, years, values)
}

/// Write a `year,value` file.
pub fn write_annual_csv(path: impl AsRef<Path>, years: &[i32], values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["year", "value"])?;
    for (y, v) in years.iter().zip(values) {
        w.write_record([y.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Annual maxima plus the years dropped on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualMaximaOutcome {
    pub series: AnnualMaximaSeries,
    /// Years with too few observed days.
    pub low_coverage_years: Vec<i32>,
    /// Years that met coverage but recorded no rain at all.
    pub dry_years: Vec<i32>,
}

fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}

/// Per-year maximum daily depth converted to 24-hour average intensity.
pub fn annual_maxima(series: &DailySeries, min_coverage: f64) -> Result<AnnualMaximaOutcome> {
    if !(min_coverage > 0.0 && min_coverage <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "min_coverage {min_coverage} must lie in (0, 1]"
        )));
    }
    // year -> (observed days, max depth)
    let mut per_year: BTreeMap<i32, (u32, f64)> = BTreeMap::new();
    for (date, value) in series.dates.iter().zip(&series.values) {
        let entry = per_year.entry(date.year()).or_insert((0, 0.0));
        if let Some(v) = value {
            entry.0 += 1;
            entry.1 = entry.1.max(*v);
        }
    }
    let mut years = Vec::new();
    let mut intensities = Vec::new();
    let mut low_coverage_years = Vec::new();
    let mut dry_years = Vec::new();
    for (year, (present, max_depth)) in per_year {
        let coverage = f64::from(present) / f64::from(days_in_year(year));
        if coverage < min_coverage {
            low_coverage_years.push(year);
        } else if max_depth <= 0.0 {
            dry_years.push(year);
        } else {
            years.push(year);
            intensities.push(max_depth / HOURS_PER_DAY);
        }
    }
    if years.is_empty() {
        return Err(Error::NoValidYears { min_coverage });
    }
    Ok(AnnualMaximaOutcome {
        series: AnnualMaximaSeries::new(series.station_id.clone(), years, intensities)?,
        low_coverage_years,
        dry_years,
    })
}

/// Restrict both series to their common years.
pub fn align(maxima: &AnnualMaximaSeries, covariate: &CovariateSeries) -> Result<AlignedDataset> {
    if maxima.is_empty() || covariate.is_empty() {
        return Err(Error::InvalidSeries("cannot align an empty series".into()));
    }
    let mut years = Vec::new();
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    for (year, x) in maxima.years.iter().zip(&maxima.intensities) {
        if let Some(t) = covariate.value_in(*year) {
            years.push(*year);
            xs.push(*x);
            ts.push(t);
        }
    }
    if years.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(AlignedDataset {
        maxima: AnnualMaximaSeries {
            station_id: maxima.station_id.clone(),
            years: years.clone(),
            intensities: xs,
        },
        covariate: CovariateSeries {
            name: covariate.name.clone(),
            years,
            values: ts,
            standardized: covariate.standardized,
        },
    })
}
