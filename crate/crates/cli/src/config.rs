//! TOML run configuration. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stormsafe_core::bayes_fit::{GaussianPrior, McmcConfig, PriorSpec};
use stormsafe_core::design::{default_sf_grid, CostTable, Robustness, Target};
use stormsafe_core::hydraulics::{PipeSpec, DEFAULT_AREA_KM2, DEFAULT_MANNING_N};
use stormsafe_core::uncertainty::{DEFAULT_LIFETIMES, DEFAULT_RUNOFF_OPTIONS};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub station: StationConfig,
    #[serde(default)]
    pub covariates: Vec<CovariateConfig>,
    #[serde(default)]
    pub mcmc: McmcSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub pipe: PipeSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub returns: ReturnsSection,
    #[serde(default)]
    pub scenarios: ScenarioSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub cost: CostSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub id: String,
    /// `year,value` annual maxima in mm/hr.
    pub maxima: Option<PathBuf>,
    /// `date,value` daily depths in mm; used when `maxima` is absent.
    pub daily: Option<PathBuf>,
    pub min_coverage: Option<f64>,
    pub missing_sentinel: Option<f64>,
    /// Years used to fit covariate z-score constants; defaults to the span
    /// of the annual maxima.
    pub fit_window: Option<[i32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub name: String,
    pub historical: PathBuf,
    pub projection: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub adapt: bool,
    pub proposal_scales: Option<[f64; 4]>,
}

impl Default for McmcSection {
    fn default() -> Self {
        let d = McmcConfig::default();
        McmcSection {
            n_iterations: d.n_iterations,
            burn_in: d.burn_in,
            adapt: d.adapt,
            proposal_scales: d.proposal_scales,
        }
    }
}

impl McmcSection {
    pub fn with_seed(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            n_iterations: self.n_iterations,
            burn_in: self.burn_in,
            seed,
            proposal_scales: self.proposal_scales,
            adapt: self.adapt,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    /// Standard deviation of the zero-mean normal prior on every parameter.
    pub sd: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection { sd: 10.0 }
    }
}

impl PriorSection {
    pub fn spec(&self) -> Result<PriorSpec> {
        let p = GaussianPrior::new(0.0, self.sd)?;
        Ok(PriorSpec {
            mu0: p,
            a_mu: p,
            sigma: p,
            xi: p,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipeSection {
    pub manning_n: f64,
    pub slope: f64,
    pub area: f64,
    /// Runoff coefficient used to size the baseline pipe.
    pub runoff_c: f64,
}

impl Default for PipeSection {
    fn default() -> Self {
        PipeSection {
            manning_n: DEFAULT_MANNING_N,
            slope: 0.01,
            area: DEFAULT_AREA_KM2,
            runoff_c: 0.9,
        }
    }
}

impl PipeSection {
    /// Template with a unit diameter; the design stage replaces it.
    pub fn template(&self) -> PipeSpec {
        PipeSpec {
            diameter: 1.0,
            manning_n: self.manning_n,
            slope: self.slope,
            area: self.area,
            runoff_c: self.runoff_c,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    /// Design-standard intensity (mm/hr). When absent, the posterior-mean
    /// stationary return level at `return_period` is used.
    pub intensity: Option<f64>,
    pub return_period: f64,
    /// Standard the lifetime target is derived from.
    pub target_return_period: f64,
    /// Fixed lifetime reliability target; overrides `target_return_period`.
    pub target_reliability: Option<f64>,
    pub robustness: Robustness,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            intensity: None,
            return_period: 100.0,
            target_return_period: 100.0,
            target_reliability: None,
            robustness: Robustness::WorstCase,
        }
    }
}

impl DesignSection {
    pub fn target(&self) -> Target {
        match self.target_reliability {
            Some(r) => Target::Fixed(r),
            None => Target::Standard {
                return_period: self.target_return_period,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReturnsSection {
    pub periods: Vec<f64>,
    /// Year whose covariate value conditions the nonstationary levels;
    /// defaults to the last year of record.
    pub reference_year: Option<i32>,
}

impl Default for ReturnsSection {
    fn default() -> Self {
        ReturnsSection {
            periods: vec![2.0, 5.0, 10.0, 25.0, 50.0, 100.0, 200.0, 500.0],
            reference_year: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// Covariate driving the climate options; defaults to the selected model.
    pub covariate: Option<String>,
    pub runoff: Vec<f64>,
    pub lifetimes: Vec<usize>,
    pub start_year: i32,
    /// Keep every `thin`-th posterior draw for reliability integrals.
    pub thin: usize,
    pub climate: Vec<ClimateConfig>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            covariate: None,
            runoff: DEFAULT_RUNOFF_OPTIONS.to_vec(),
            lifetimes: DEFAULT_LIFETIMES.to_vec(),
            start_year: 2020,
            thin: 1,
            climate: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateConfig {
    pub name: String,
    /// Simulated annual maxima (mm/hr) spanning the historical overlap and
    /// the future. Without it the option reuses the station fit.
    pub maxima: Option<PathBuf>,
    /// Replacement covariate projection for this option.
    pub projection: Option<PathBuf>,
    #[serde(default = "yes")]
    pub bias_correct: bool,
    /// Calibration years for quantile mapping; defaults to all shared years.
    pub overlap: Option<[i32; 2]>,
    /// Simulated years appended to the observations; defaults to every year
    /// after the record.
    pub future: Option<[i32; 2]>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub factors: Option<Vec<f64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { factors: None }
    }
}

impl SweepSection {
    pub fn grid(&self) -> Vec<f64> {
        self.factors.clone().unwrap_or_else(default_sf_grid)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    /// `[sf, relative cost]` pairs; the placeholder table is used when empty.
    pub knots: Vec<[f64; 2]>,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection { knots: Vec::new() }
    }
}

impl CostSection {
    pub fn table(&self) -> Result<(CostTable, bool)> {
        if self.knots.is_empty() {
            return Ok((CostTable::placeholder(), true));
        }
        Ok((CostTable::new(self.knots.iter().map(|k| (k[0], k[1])).collect())?, false))
    }
}

/// A parsed config plus what identifies it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub path: PathBuf,
    /// sha256 over the file bytes and the effective seed.
    pub hash: String,
    pub seed: u64,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl LoadedConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).with_context(|| format!("config {} is not UTF-8", path.display()))?;
        let mut config: Config = toml::from_str(text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let st = &mut config.station;
        if let Some(p) = st.maxima.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = st.daily.as_mut() {
            resolve(base, p);
        }
        if st.maxima.is_none() && st.daily.is_none() {
            bail!("[station] needs either `maxima` or `daily`");
        }
        for c in &mut config.covariates {
            resolve(base, &mut c.historical);
            if let Some(p) = c.projection.as_mut() {
                resolve(base, p);
            }
        }
        for c in &mut config.scenarios.climate {
            if let Some(p) = c.maxima.as_mut() {
                resolve(base, p);
            }
            if let Some(p) = c.projection.as_mut() {
                resolve(base, p);
            }
        }
        if config.scenarios.thin == 0 {
            bail!("scenarios.thin must be at least 1");
        }
        let seed = seed_override.unwrap_or(config.seed);
        let mut h = Sha256::new();
        h.update(&bytes);
        h.update(format!("\nseed={seed}").as_bytes());
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(LoadedConfig {
            config,
            path: path.to_path_buf(),
            hash,
            seed,
        })
    }

    /// Every input file named by the config, in a fixed order.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let c = &self.config;
        let mut v: Vec<PathBuf> = c.station.maxima.iter().chain(&c.station.daily).cloned().collect();
        for cov in &c.covariates {
            v.push(cov.historical.clone());
            v.extend(cov.projection.clone());
        }
        for cl in &c.scenarios.climate {
            v.extend(cl.maxima.clone());
            v.extend(cl.projection.clone());
        }
        v
    }
}
