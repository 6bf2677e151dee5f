//! Columnar CSV for ensembles and a JSON summary sidecar.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    map_estimate, DistributionSummary, Diagnostics, McmcConfig, ModelStructure, PerParameter,
    PosteriorEnsemble, PriorSpec,
};
use crate::error::{Error, Result};
use crate::gev::GevParams;

const HEADER: [&str; 5] = ["mu0", "a_mu", "sigma", "xi", "log_post"];

pub fn write_ensemble_csv(path: impl AsRef<Path>, ens: &PosteriorEnsemble) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for (s, lp) in ens.samples.iter().zip(&ens.log_posteriors) {
        w.write_record([
            s.mu0.to_string(),
            s.a_mu.to_string(),
            s.sigma.to_string(),
            s.xi.to_string(),
            lp.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_ensemble_csv(path: impl AsRef<Path>) -> Result<(Vec<GevParams>, Vec<f64>)> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    })?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", HEADER.join(",")),
        });
    }
    let mut samples = Vec::new();
    let mut lps = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut v = [0.0; 5];
        for (slot, field) in v.iter_mut().zip(record.iter()) {
            *slot = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("malformed number `{field}`"),
            })?;
        }
        samples.push(GevParams::from_array([v[0], v[1], v[2], v[3]]));
        lps.push(v[4]);
    }
    Ok((samples, lps))
}

/// Everything needed to rebuild an ensemble besides the draws, plus
/// headline summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub structure: ModelStructure,
    pub n_samples: usize,
    pub config: McmcConfig,
    pub prior: PriorSpec,
    pub acceptance_rates: PerParameter,
    pub final_scales: PerParameter,
    pub diagnostics: Diagnostics,
    pub map: GevParams,
    pub posterior_mean: GevParams,
    pub mu0: DistributionSummary,
    pub a_mu: DistributionSummary,
    pub sigma: DistributionSummary,
    pub xi: DistributionSummary,
}

impl EnsembleSummary {
    pub fn of(ens: &PosteriorEnsemble) -> Result<Self> {
        Ok(EnsembleSummary {
            structure: ens.structure,
            n_samples: ens.len(),
            config: ens.config.clone(),
            prior: ens.prior,
            acceptance_rates: ens.acceptance_rates,
            final_scales: ens.final_scales,
            diagnostics: ens.diagnostics.clone(),
            map: map_estimate(ens)?,
            posterior_mean: ens.mean_params()?,
            mu0: DistributionSummary::of(&ens.column(0)),
            a_mu: DistributionSummary::of(&ens.column(1)),
            sigma: DistributionSummary::of(&ens.column(2)),
            xi: DistributionSummary::of(&ens.column(3)),
        })
    }

    /// Reassemble an ensemble from this summary and the CSV draws.
    pub fn into_ensemble(self, samples: Vec<GevParams>, log_posteriors: Vec<f64>) -> Result<PosteriorEnsemble> {
        if samples.len() != self.n_samples || log_posteriors.len() != self.n_samples {
            return Err(Error::InvalidSeries(format!(
                "summary lists {} samples, CSV holds {}",
                self.n_samples,
                samples.len()
            )));
        }
        Ok(PosteriorEnsemble {
            structure: self.structure,
            samples,
            log_posteriors,
            config: self.config,
            prior: self.prior,
            acceptance_rates: self.acceptance_rates,
            final_scales: self.final_scales,
            diagnostics: self.diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes_fit::mh_sample;
    use crate::timeseries_io::{AlignedDataset, AnnualMaximaSeries};

    #[test]
    fn csv_and_summary_rebuild_the_ensemble() {
        let xs: Vec<f64> = (0..20).map(|i| 2.0 + ((i * 7) % 5) as f64 * 0.5).collect();
        let d = AlignedDataset::without_covariate(AnnualMaximaSeries::new("s", (0..20).collect(), xs).unwrap());
        let cfg = McmcConfig {
            n_iterations: 600,
            burn_in: 100,
            seed: 4,
            proposal_scales: None,
            adapt: true,
        };
        let ens = mh_sample(&d, ModelStructure::Stationary, &PriorSpec::default(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("e.csv");
        write_ensemble_csv(&csv_path, &ens).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("mu0,a_mu,sigma,xi,log_post\n"));
        let summary = EnsembleSummary::of(&ens).unwrap();
        let json = serde_json::to_string(&summary).unwrap();
        let summary: EnsembleSummary = serde_json::from_str(&json).unwrap();
        let (samples, lps) = read_ensemble_csv(&csv_path).unwrap();
        let back = summary.into_ensemble(samples, lps).unwrap();
        assert_eq!(back, ens);
    }
}
