//! Bayesian GEV fitting by component-wise Metropolis-Hastings.
//!
//! Priors are independent Gaussians on each parameter, truncated to σ > 0.
//! The chain starts from method-of-moments Gumbel estimates and keeps every
//! post-burn-in iteration.

mod diagnostics;
mod io;
pub mod metropolis;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gev::{gev_log_pdf, return_level, GevParams};
use crate::rng::rng_from_seed;
use crate::stats::{mean, quantile_sorted, sample_sd, sorted_copy};
use crate::timeseries_io::AlignedDataset;

pub use diagnostics::{effective_sample_size, geweke_z};
pub use io::{read_ensemble_csv, write_ensemble_csv, EnsembleSummary};
use metropolis::{run_chain, ChainSettings};

/// Below this many observations the sampler warns but still runs.
pub const MIN_RECOMMENDED_YEARS: usize = 10;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_INIT_ATTEMPTS: usize = 1_000;

/// Whether the location responds to the covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStructure {
    Stationary,
    Nonstationary,
}

impl ModelStructure {
    pub fn n_params(self) -> usize {
        match self {
            ModelStructure::Stationary => 3,
            ModelStructure::Nonstationary => 4,
        }
    }

    /// Indices into `[mu0, a_mu, sigma, xi]` that the chain updates.
    fn free(self) -> &'static [usize] {
        match self {
            ModelStructure::Stationary => &[0, 2, 3],
            ModelStructure::Nonstationary => &[0, 1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianPrior {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prior N({mean}, sd={sd}) needs finite mean and sd > 0"
            )));
        }
        Ok(GaussianPrior { mean, sd })
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * (2.0 * std::f64::consts::PI * self.sd * self.sd).ln() - 0.5 * z * z
    }
}

/// Independent Gaussian priors, default N(0, 100) (variance) on every parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mu0: GaussianPrior,
    pub a_mu: GaussianPrior,
    pub sigma: GaussianPrior,
    pub xi: GaussianPrior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        let wide = GaussianPrior { mean: 0.0, sd: 10.0 };
        PriorSpec {
            mu0: wide,
            a_mu: wide,
            sigma: wide,
            xi: wide,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for p in [self.mu0, self.a_mu, self.sigma, self.xi] {
            GaussianPrior::new(p.mean, p.sd)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Random-walk step per parameter `[mu0, a_mu, sigma, xi]`; derived from
    /// the data when absent.
    pub proposal_scales: Option<[f64; 4]>,
    pub adapt: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iterations: 50_000,
            burn_in: 10_000,
            seed: 0,
            proposal_scales: None,
            adapt: true,
        }
    }
}

impl McmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        McmcConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iterations {
            return Err(Error::InvalidParameter(format!(
                "burn_in {} must be below n_iterations {}",
                self.burn_in, self.n_iterations
            )));
        }
        if let Some(s) = self.proposal_scales {
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "proposal scales {s:?} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// One value per model parameter; `a_mu` is absent for stationary fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerParameter {
    pub mu0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_mu: Option<f64>,
    pub sigma: f64,
    pub xi: f64,
}

impl PerParameter {
    fn from_free(structure: ModelStructure, values: &[f64]) -> Self {
        match structure {
            ModelStructure::Stationary => PerParameter {
                mu0: values[0],
                a_mu: None,
                sigma: values[1],
                xi: values[2],
            },
            ModelStructure::Nonstationary => PerParameter {
                mu0: values[0],
                a_mu: Some(values[1]),
                sigma: values[2],
                xi: values[3],
            },
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![self.mu0];
        v.extend(self.a_mu);
        v.push(self.sigma);
        v.push(self.xi);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub effective_sample_size: PerParameter,
    pub geweke_z: PerParameter,
    /// Every observation has the same value.
    pub degenerate_data: bool,
    /// The scale posterior crowds the σ > 0 boundary.
    pub sigma_near_zero: bool,
    pub warnings: Vec<String>,
}

/// Retained post-burn-in draws with their log posteriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnsemble {
    pub structure: ModelStructure,
    pub samples: Vec<GevParams>,
    pub log_posteriors: Vec<f64>,
    pub config: McmcConfig,
    pub prior: PriorSpec,
    pub acceptance_rates: PerParameter,
    /// Proposal scales in force after burn-in.
    pub final_scales: PerParameter,
    pub diagnostics: Diagnostics,
}

impl PosteriorEnsemble {
    /// Wrap draws produced elsewhere. Sampler metadata is zeroed and log
    /// posteriors are recomputed against `data` under the default prior.
    pub fn from_draws(structure: ModelStructure, samples: Vec<GevParams>, data: &AlignedDataset) -> Self {
        let prior = PriorSpec::default();
        let log_posteriors = samples.iter().map(|s| log_posterior(data, s, &prior)).collect();
        let zero = PerParameter::from_free(structure, &[0.0; 4]);
        PosteriorEnsemble {
            structure,
            samples,
            log_posteriors,
            config: McmcConfig::default(),
            prior,
            acceptance_rates: zero,
            final_scales: zero,
            diagnostics: Diagnostics {
                effective_sample_size: zero,
                geweke_z: zero,
                degenerate_data: false,
                sigma_near_zero: false,
                warnings: Vec::new(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Coordinate-wise posterior mean.
    pub fn mean_params(&self) -> Result<GevParams> {
        if self.samples.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let n = self.samples.len() as f64;
        let mut acc = [0.0; 4];
        for s in &self.samples {
            for (a, v) in acc.iter_mut().zip(s.as_array()) {
                *a += v;
            }
        }
        Ok(GevParams::from_array(acc.map(|a| a / n)))
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.as_array()[index]).collect()
    }
}

/// Σ log f(x_i | μ(T_i), σ, ξ); -inf on any support violation or σ ≤ 0.
pub fn log_likelihood(data: &AlignedDataset, params: &GevParams) -> f64 {
    if !(params.sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for (x, t) in data.intensities().iter().zip(data.covariates()) {
        let lp = gev_log_pdf(*x, &params.at(*t));
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += lp;
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

pub fn log_prior(params: &GevParams, prior: &PriorSpec) -> f64 {
    if !(params.sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    prior.mu0.log_density(params.mu0)
        + prior.a_mu.log_density(params.a_mu)
        + prior.sigma.log_density(params.sigma)
        + prior.xi.log_density(params.xi)
}

pub fn log_posterior(data: &AlignedDataset, params: &GevParams, prior: &PriorSpec) -> f64 {
    let lp = log_prior(params, prior);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    lp + log_likelihood(data, params)
}

/// Method-of-moments Gumbel start: σ = sd √6 / π, μ0 = mean - γ σ.
fn moment_start(data: &AlignedDataset) -> (GevParams, f64) {
    let xs = data.intensities();
    let m = mean(xs);
    let sd = sample_sd(xs);
    let sigma = (sd * 6f64.sqrt() / std::f64::consts::PI)
        .max(1e-3 * m.abs())
        .max(1e-6);
    (
        GevParams {
            mu0: m - EULER_GAMMA * sigma,
            a_mu: 0.0,
            sigma,
            xi: 0.0,
        },
        sigma,
    )
}

fn expand(structure: ModelStructure, free: &[f64]) -> GevParams {
    match structure {
        ModelStructure::Stationary => GevParams {
            mu0: free[0],
            a_mu: 0.0,
            sigma: free[1],
            xi: free[2],
        },
        ModelStructure::Nonstationary => GevParams::from_array([free[0], free[1], free[2], free[3]]),
    }
}

/// Draw the posterior ensemble. Deterministic given `config.seed`.
pub fn mh_sample(
    data: &AlignedDataset,
    structure: ModelStructure,
    prior: &PriorSpec,
    config: &McmcConfig,
) -> Result<PosteriorEnsemble> {
    config.validate()?;
    prior.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidSeries("cannot fit an empty dataset".into()));
    }
    let mut warnings = Vec::new();
    if data.len() < MIN_RECOMMENDED_YEARS {
        warnings.push(format!(
            "only {} years of data; at least {MIN_RECOMMENDED_YEARS} recommended",
            data.len()
        ));
    }
    let degenerate_data = sample_sd(data.intensities()) == 0.0;
    if degenerate_data {
        warnings.push("all observations are identical; the scale posterior has no interior mode".into());
    }

    let mut rng = rng_from_seed(config.seed);
    let free_idx = structure.free();
    let (start, sigma_hat) = moment_start(data);
    let default_scales = [0.25 * sigma_hat, 0.05, 0.1 * sigma_hat, 0.05];
    let all_scales = config.proposal_scales.unwrap_or(default_scales);
    let scales: Vec<f64> = free_idx.iter().map(|i| all_scales[*i]).collect();

    let target = |free: &[f64]| log_posterior(data, &expand(structure, free), prior);

    let start_arr = start.as_array();
    let mut init: Vec<f64> = free_idx.iter().map(|i| start_arr[*i]).collect();
    let mut attempts = 0;
    while !target(&init).is_finite() {
        attempts += 1;
        if attempts > MAX_INIT_ATTEMPTS {
            return Err(Error::InitializationFailed { attempts: MAX_INIT_ATTEMPTS });
        }
        let spread = attempts as f64 / 10.0;
        init = free_idx
            .iter()
            .zip(&scales)
            .map(|(i, s)| {
                let step: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
                start_arr[*i] + spread * s * step
            })
            .collect();
        // keep the scale positive while searching
        let si = free_idx.iter().position(|i| *i == 2).unwrap();
        init[si] = init[si].abs().max(1e-6);
    }

    let settings = ChainSettings {
        n_iterations: config.n_iterations,
        burn_in: config.burn_in,
        adapt: config.adapt,
    };
    let out = run_chain(target, &init, &scales, &settings, &mut rng);

    let samples: Vec<GevParams> = (0..out.len()).map(|i| expand(structure, out.row(i))).collect();
    let ess: Vec<f64> = (0..out.dim).map(|j| effective_sample_size(&out.column(j))).collect();
    let gz: Vec<f64> = (0..out.dim).map(|j| geweke_z(&out.column(j))).collect();

    let sigmas = sorted_copy(&samples.iter().map(|s| s.sigma).collect::<Vec<_>>());
    let data_scale = mean(data.intensities()).abs().max(f64::MIN_POSITIVE);
    let sigma_near_zero = quantile_sorted(&sigmas, 0.5) < 1e-3 * data_scale;
    if sigma_near_zero {
        warnings.push("posterior median of sigma is below 0.1% of the data mean".into());
    }

    Ok(PosteriorEnsemble {
        structure,
        samples,
        log_posteriors: out.log_targets.clone(),
        config: config.clone(),
        prior: *prior,
        acceptance_rates: PerParameter::from_free(structure, &out.acceptance),
        final_scales: PerParameter::from_free(structure, &out.scales),
        diagnostics: Diagnostics {
            effective_sample_size: PerParameter::from_free(structure, &ess),
            geweke_z: PerParameter::from_free(structure, &gz),
            degenerate_data,
            sigma_near_zero,
            warnings,
        },
    })
}

/// Retained sample with the highest log posterior; earliest index wins ties.
pub fn map_estimate(ens: &PosteriorEnsemble) -> Result<GevParams> {
    let mut best: Option<(usize, f64)> = None;
    for (i, lp) in ens.log_posteriors.iter().enumerate() {
        match best {
            Some((_, b)) if *lp <= b => {}
            _ => best = Some((i, *lp)),
        }
    }
    best.map(|(i, _)| ens.samples[i]).ok_or(Error::EmptyEnsemble)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub mean: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl DistributionSummary {
    pub fn of(values: &[f64]) -> Self {
        let sorted = sorted_copy(values);
        DistributionSummary {
            mean: mean(values),
            q05: quantile_sorted(&sorted, 0.05),
            q50: quantile_sorted(&sorted, 0.5),
            q95: quantile_sorted(&sorted, 0.95),
        }
    }
}

/// T-year return level of every sample at covariate `t_cov`.
pub fn sample_return_levels(ens: &PosteriorEnsemble, t_cov: f64, period: f64) -> Result<Vec<f64>> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    ens.samples
        .iter()
        .map(|s| return_level(s, t_cov, period))
        .collect()
}

pub fn ensemble_return_levels(ens: &PosteriorEnsemble, t_cov: f64, period: f64) -> Result<DistributionSummary> {
    Ok(DistributionSummary::of(&sample_return_levels(ens, t_cov, period)?))
}

/// Return period of level `z` using the posterior-mean annual exceedance
/// probability at covariate `t_cov`.
pub fn ensemble_return_period(ens: &PosteriorEnsemble, z: f64, t_cov: f64) -> Result<f64> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let exceed = ens
        .samples
        .iter()
        .map(|s| crate::gev::gev_sf(z, &s.at(t_cov)))
        .sum::<f64>()
        / ens.len() as f64;
    if !(exceed > 0.0) {
        return Err(Error::InfiniteReturnPeriod);
    }
    Ok(1.0 / exceed)
}
