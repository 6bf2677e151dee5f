//! Rational-method load, full-pipe Manning capacity, and annual/lifetime
//! hydraulic reliability.
//!
//! Units: intensity mm/hr, area km², diameter m, flow m³/s. Capacity assumes
//! a circular pipe running full but not pressurized. Failure means the annual
//! maximum 24-hour intensity pushes the peak flow above capacity.

use serde::{Deserialize, Serialize};

use crate::bayes_fit::PosteriorEnsemble;
use crate::error::{Error, Result};
use crate::gev::{gev_sf, GevParams};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::timeseries_io::CovariateSeries;

/// Unit conversion factor of the rational method (mm/hr · km² → m³/s).
pub const RATIONAL_COEFF: f64 = 0.278;
/// SI constant of Manning's full-pipe capacity formula.
pub const MANNING_COEFF: f64 = 0.31;
/// Concrete pipe roughness.
pub const DEFAULT_MANNING_N: f64 = 0.013;
/// Contributing drainage area in km².
pub const DEFAULT_AREA_KM2: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipeSpec {
    pub diameter: f64,
    pub manning_n: f64,
    pub slope: f64,
    pub area: f64,
    pub runoff_c: f64,
}

impl PipeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} = {v}")));
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return bad("diameter must be > 0, got", self.diameter);
        }
        if !(self.manning_n > 0.0) {
            return bad("manning_n must be > 0, got", self.manning_n);
        }
        if !(self.slope > 0.0) {
            return bad("slope must be > 0, got", self.slope);
        }
        if !(self.area > 0.0) {
            return bad("area must be > 0, got", self.area);
        }
        if !(self.runoff_c > 0.0 && self.runoff_c <= 1.0) {
            return bad("runoff_c must lie in (0, 1], got", self.runoff_c);
        }
        Ok(())
    }

    pub fn with_diameter(&self, diameter: f64) -> PipeSpec {
        PipeSpec { diameter, ..*self }
    }

    pub fn with_runoff(&self, runoff_c: f64) -> PipeSpec {
        PipeSpec { runoff_c, ..*self }
    }
}

/// Q_y = 0.278 C I A.
pub fn peak_flow(runoff_c: f64, intensity: f64, area: f64) -> Result<f64> {
    if !(runoff_c > 0.0 && runoff_c <= 1.0) {
        return Err(Error::InvalidParameter(format!("runoff coefficient {runoff_c} outside (0, 1]")));
    }
    if !(intensity >= 0.0) {
        return Err(Error::InvalidParameter(format!("intensity {intensity} is negative")));
    }
    if !(area > 0.0) {
        return Err(Error::InvalidParameter(format!("area {area} must be positive")));
    }
    Ok(RATIONAL_COEFF * runoff_c * intensity * area)
}

/// Q_p = (0.31 / n) D^(8/3) S^(1/2).
pub fn pipe_capacity(spec: &PipeSpec) -> Result<f64> {
    spec.validate()?;
    Ok(MANNING_COEFF / spec.manning_n * spec.diameter.powf(8.0 / 3.0) * spec.slope.sqrt())
}

/// Diameter whose full-pipe capacity equals `target_flow`.
pub fn required_diameter(target_flow: f64, manning_n: f64, slope: f64) -> Result<f64> {
    if !(target_flow > 0.0 && target_flow.is_finite()) {
        return Err(Error::InvalidParameter(format!("target flow {target_flow} must be positive")));
    }
    if !(manning_n > 0.0 && slope > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "manning_n {manning_n} and slope {slope} must be positive"
        )));
    }
    Ok((target_flow * manning_n / (MANNING_COEFF * slope.sqrt())).powf(3.0 / 8.0))
}

/// G = Q_p - Q_y.
pub fn limit_state(spec: &PipeSpec, intensity: f64) -> Result<f64> {
    Ok(pipe_capacity(spec)? - peak_flow(spec.runoff_c, intensity, spec.area)?)
}

/// Intensity at which the limit state reaches zero.
pub fn critical_intensity(spec: &PipeSpec) -> Result<f64> {
    Ok(pipe_capacity(spec)? / (RATIONAL_COEFF * spec.runoff_c * spec.area))
}

/// P[annual max intensity > I_crit] in the year with covariate `t_cov`.
pub fn annual_failure_prob(params: &GevParams, t_cov: f64, spec: &PipeSpec) -> Result<f64> {
    let i_crit = critical_intensity(spec)?;
    Ok(exceedance(params, t_cov, i_crit))
}

fn exceedance(params: &GevParams, t_cov: f64, i_crit: f64) -> f64 {
    if i_crit == f64::INFINITY {
        return 0.0;
    }
    gev_sf(i_crit, &params.at(t_cov))
}

/// Service window with one standardized covariate value per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeSpec {
    pub start_year: i32,
    pub years: usize,
    pub covariate_path: Vec<f64>,
}

impl LifetimeSpec {
    pub fn new(start_year: i32, years: usize, covariate_path: Vec<f64>) -> Result<Self> {
        let spec = LifetimeSpec {
            start_year,
            years,
            covariate_path,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Constant covariate, as for stationary fits.
    pub fn constant(start_year: i32, years: usize, value: f64) -> Result<Self> {
        Self::new(start_year, years, vec![value; years])
    }

    /// Path read from a (standardized) projection. Years beyond the
    /// projection hold its last value; those years are returned.
    pub fn from_projection(start_year: i32, years: usize, projection: &CovariateSeries) -> Result<(Self, Vec<i32>)> {
        let (path, held) = projection.path(start_year, years)?;
        Ok((Self::new(start_year, years, path)?, held))
    }

    pub fn validate(&self) -> Result<()> {
        if self.years == 0 {
            return Err(Error::InvalidParameter("lifetime must be at least one year".into()));
        }
        if self.covariate_path.len() != self.years {
            return Err(Error::PathLengthMismatch {
                expected: self.years,
                found: self.covariate_path.len(),
            });
        }
        if self.covariate_path.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("covariate path contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub reliability: f64,
    pub failure_prob: f64,
    /// Posterior-mean annual exceedance probability per service year.
    pub per_year_exceedance: Vec<f64>,
    /// 5% and 95% quantiles of per-sample lifetime reliability.
    pub spread_q05: f64,
    pub spread_q95: f64,
    pub pipe: PipeSpec,
    pub lifetime: LifetimeSpec,
}

/// ∏_t (1 - p_t(θ)) for one parameter sample.
pub fn sample_lifetime_reliability(params: &GevParams, path: &[f64], i_crit: f64) -> f64 {
    path.iter()
        .map(|t| 1.0 - exceedance(params, *t, i_crit))
        .product()
}

/// Posterior mean of the per-sample lifetime reliability.
pub fn lifetime_reliability(ens: &PosteriorEnsemble, life: &LifetimeSpec, spec: &PipeSpec) -> Result<ReliabilityResult> {
    life.validate()?;
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let i_crit = critical_intensity(spec)?;
    let n = ens.len() as f64;
    let mut per_year = vec![0.0; life.years];
    let mut per_sample = Vec::with_capacity(ens.len());
    for params in &ens.samples {
        let mut r = 1.0;
        for (acc, t) in per_year.iter_mut().zip(&life.covariate_path) {
            let p = exceedance(params, *t, i_crit);
            *acc += p;
            r *= 1.0 - p;
        }
        per_sample.push(r);
    }
    let reliability = per_sample.iter().sum::<f64>() / n;
    let sorted = sorted_copy(&per_sample);
    Ok(ReliabilityResult {
        reliability,
        failure_prob: 1.0 - reliability,
        per_year_exceedance: per_year.into_iter().map(|s| s / n).collect(),
        spread_q05: quantile_sorted(&sorted, 0.05),
        spread_q95: quantile_sorted(&sorted, 0.95),
        pipe: *spec,
        lifetime: life.clone(),
    })
}
