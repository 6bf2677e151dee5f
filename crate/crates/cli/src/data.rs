//! Loading and preparing the datasets a config describes.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use stormsafe_core::bayes_fit::ModelStructure;
use stormsafe_core::timeseries_io::quantile_map_bias_correct;
use stormsafe_core::timeseries_io::{
    align, annual_maxima, load_covariate_csv, load_daily_csv_with, load_maxima_csv, AlignedDataset,
    AnnualMaximaSeries, CovariateName, CovariateSeries, MissingMarker, Standardization, YearRange,
    DEFAULT_MIN_COVERAGE,
};

use crate::config::{ClimateConfig, Config, CovariateConfig};

pub const STATIONARY_ID: &str = "stationary";

fn need_file(p: &Path, what: &str) -> Result<()> {
    if !p.is_file() {
        bail!("{what} file not found: {}", p.display());
    }
    Ok(())
}

/// Annual maxima of the station, with notes about dropped years.
pub fn station_maxima(cfg: &Config) -> Result<(AnnualMaximaSeries, Vec<String>)> {
    let st = &cfg.station;
    if let Some(p) = &st.maxima {
        need_file(p, "station maxima")?;
        let s = load_maxima_csv(p, &st.id).with_context(|| format!("loading {}", p.display()))?;
        return Ok((s, Vec::new()));
    }
    let p = st.daily.as_ref().expect("validated at load");
    need_file(p, "station daily")?;
    let marker = MissingMarker {
        sentinel: st.missing_sentinel,
    };
    let daily = load_daily_csv_with(p, &st.id, marker).with_context(|| format!("loading {}", p.display()))?;
    let out = annual_maxima(&daily, st.min_coverage.unwrap_or(DEFAULT_MIN_COVERAGE))?;
    let mut notes = Vec::new();
    if !out.low_coverage_years.is_empty() {
        notes.push(format!("dropped low-coverage years {:?}", out.low_coverage_years));
    }
    if !out.dry_years.is_empty() {
        notes.push(format!("dropped all-dry years {:?}", out.dry_years));
    }
    Ok((out.series, notes))
}

/// A covariate standardized on the fitting window, with its projection
/// appended (historical values win on shared years).
#[derive(Debug, Clone)]
pub struct PreparedCovariate {
    pub name: String,
    pub combined: CovariateSeries,
    pub historical: CovariateSeries,
    pub raw_historical: CovariateSeries,
    pub standardization: Standardization,
    pub has_projection: bool,
}

pub fn fit_window(cfg: &Config, maxima: &AnnualMaximaSeries) -> Result<YearRange> {
    Ok(match cfg.station.fit_window {
        Some([a, b]) => YearRange::new(a, b)?,
        None => YearRange::new(maxima.years[0], *maxima.years.last().unwrap())?,
    })
}

fn append(z: &Standardization, hist: &CovariateSeries, extra: Option<&CovariateSeries>) -> CovariateSeries {
    let mut combined = z.apply(hist);
    if let Some(p) = extra {
        let p = z.apply(p);
        let last = *combined.years.last().unwrap();
        for (y, v) in p.years.iter().zip(&p.values) {
            if *y > last {
                combined.years.push(*y);
                combined.values.push(*v);
            }
        }
    }
    combined
}

pub fn prepare_covariate(cc: &CovariateConfig, window: YearRange) -> Result<PreparedCovariate> {
    let name: CovariateName = cc.name.parse()?;
    need_file(&cc.historical, &format!("covariate `{}`", cc.name))?;
    let hist = load_covariate_csv(&cc.historical, name.clone()).with_context(|| format!("loading {}", cc.historical.display()))?;
    let (_, z) = hist
        .standardize(window)
        .with_context(|| format!("standardizing covariate `{}`", cc.name))?;
    let proj = match &cc.projection {
        Some(p) => {
            need_file(p, &format!("covariate `{}` projection", cc.name))?;
            Some(load_covariate_csv(p, name.clone()).with_context(|| format!("loading {}", p.display()))?)
        }
        None => None,
    };
    Ok(PreparedCovariate {
        name: name.to_string(),
        combined: append(&z, &hist, proj.as_ref()),
        historical: z.apply(&hist),
        raw_historical: hist,
        standardization: z,
        has_projection: proj.is_some(),
    })
}

/// A candidate the `fit` stage estimates.
#[derive(Debug, Clone)]
pub struct CandidateData {
    pub model_id: String,
    pub structure: ModelStructure,
    pub data: AlignedDataset,
}

pub struct Prepared {
    pub maxima: AnnualMaximaSeries,
    pub covariates: Vec<PreparedCovariate>,
    pub notes: Vec<String>,
}

impl Prepared {
    pub fn load(cfg: &Config) -> Result<Self> {
        let (maxima, notes) = station_maxima(cfg)?;
        let window = fit_window(cfg, &maxima)?;
        let covariates = cfg
            .covariates
            .iter()
            .map(|c| prepare_covariate(c, window))
            .collect::<Result<Vec<_>>>()?;
        let mut seen = std::collections::BTreeSet::new();
        for c in &covariates {
            if c.name == STATIONARY_ID || !seen.insert(c.name.clone()) {
                bail!("covariate name `{}` is reserved or repeated", c.name);
            }
        }
        Ok(Prepared { maxima, covariates, notes })
    }

    pub fn model_ids(&self) -> Vec<String> {
        std::iter::once(STATIONARY_ID.to_string())
            .chain(self.covariates.iter().map(|c| c.name.clone()))
            .collect()
    }

    pub fn covariate(&self, id: &str) -> Option<&PreparedCovariate> {
        self.covariates.iter().find(|c| c.name == id)
    }

    pub fn candidate(&self, id: &str) -> Result<CandidateData> {
        if id == STATIONARY_ID {
            return Ok(CandidateData {
                model_id: id.into(),
                structure: ModelStructure::Stationary,
                data: AlignedDataset::without_covariate(self.maxima.clone()),
            });
        }
        let c = self
            .covariate(id)
            .ok_or_else(|| anyhow!("unknown model `{id}`; available: {}", self.model_ids().join(", ")))?;
        let data = align(&self.maxima, &c.historical).with_context(|| format!("aligning maxima with `{id}`"))?;
        Ok(CandidateData {
            model_id: id.into(),
            structure: ModelStructure::Nonstationary,
            data,
        })
    }

    /// Candidates named in `filter` (all when `None`), in config order.
    pub fn candidates(&self, filter: Option<&[String]>) -> Result<Vec<CandidateData>> {
        let all = self.model_ids();
        let ids: Vec<String> = match filter {
            None => all,
            Some(f) => {
                for id in f {
                    if !all.contains(id) {
                        bail!("unknown model `{id}`; available: {}", all.join(", "));
                    }
                }
                all.into_iter().filter(|id| f.contains(id)).collect()
            }
        };
        ids.iter().map(|id| self.candidate(id)).collect()
    }

    /// Covariate path for lifetimes under model `id`: the combined series,
    /// or zeros for the stationary model.
    pub fn driver(&self, id: &str, extra_years: std::ops::RangeInclusive<i32>) -> Result<CovariateSeries> {
        if id == STATIONARY_ID {
            let years: Vec<i32> = (*self.maxima.years.first().unwrap().min(extra_years.start())..=*extra_years.end()).collect();
            return Ok(CovariateSeries {
                name: CovariateName::Custom("none".into()),
                values: vec![0.0; years.len()],
                years,
                standardized: true,
            });
        }
        let c = self.covariate(id).ok_or_else(|| anyhow!("unknown covariate `{id}`"))?;
        if !c.has_projection {
            bail!("covariate `{id}` has no projection; add `projection = ...` to drive future lifetimes");
        }
        Ok(c.combined.clone())
    }
}

/// Dataset for a climate option: observations through the record plus the
/// (optionally bias-corrected) simulated future, against the driver.
pub struct ClimateData {
    pub data: AlignedDataset,
    pub projection: CovariateSeries,
    pub notes: Vec<String>,
}

pub fn climate_data(
    prepared: &Prepared,
    option: &ClimateConfig,
    driver_id: &str,
    driver: &CovariateSeries,
) -> Result<Option<ClimateData>> {
    let mut projection = driver.clone();
    if let Some(p) = &option.projection {
        if driver_id == STATIONARY_ID {
            bail!("climate `{}` sets a projection but the selected model is stationary", option.name);
        }
        need_file(p, &format!("climate `{}` projection", option.name))?;
        let c = prepared.covariate(driver_id).expect("driver exists");
        let raw = load_covariate_csv(p, driver.name.clone()).with_context(|| format!("loading {}", p.display()))?;
        projection = append(&c.standardization, &c.raw_historical, Some(&raw));
    }
    let Some(mp) = &option.maxima else {
        return Ok(None);
    };
    need_file(mp, &format!("climate `{}` maxima", option.name))?;
    let obs = &prepared.maxima;
    let model = load_maxima_csv(mp, &option.name).with_context(|| format!("loading {}", mp.display()))?;
    let mut notes = Vec::new();
    let model = if option.bias_correct {
        let overlap = match option.overlap {
            Some([a, b]) => YearRange::new(a, b)?,
            None => YearRange::new(obs.years[0], *obs.years.last().unwrap())?,
        };
        let bc = quantile_map_bias_correct(&model, obs, overlap)
            .with_context(|| format!("bias-correcting climate `{}`", option.name))?;
        if !bc.clipped_years.is_empty() {
            notes.push(format!("climate {}: clipped non-positive corrected values in {:?}", option.name, bc.clipped_years));
        }
        bc.series
    } else {
        model
    };
    let last_obs = *obs.years.last().unwrap();
    let future = match option.future {
        Some([a, b]) => YearRange::new(a, b)?,
        None => YearRange::new(last_obs + 1, (*model.years.last().unwrap()).max(last_obs + 1))?,
    };
    let mut years = obs.years.clone();
    let mut xs = obs.intensities.clone();
    for (y, x) in model.years.iter().zip(&model.intensities) {
        if future.contains(*y) && *y > last_obs {
            years.push(*y);
            xs.push(*x);
        }
    }
    let combined = AnnualMaximaSeries::new(option.name.clone(), years, xs)?;
    let data = if driver_id == STATIONARY_ID {
        AlignedDataset::without_covariate(combined)
    } else {
        let d = align(&combined, &projection)?;
        if d.len() < combined.len() {
            notes.push(format!(
                "climate {}: {} year(s) lack covariate values and were left out of the fit",
                option.name,
                combined.len() - d.len()
            ));
        }
        d
    };
    Ok(Some(ClimateData { data, projection, notes }))
}
