//! AIC and DIC scoring of fitted models and covariate ranking.
//!
//! `L_max` is the best likelihood attained inside the retained ensemble, not
//! an optimized MLE. Ranking is by DIC; candidates within
//! [`DIC_TIE_BAND`] of each other are ordered by AIC.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bayes_fit::{log_likelihood, PosteriorEnsemble};
use crate::error::{Error, Result};
use crate::gev::GevParams;
use crate::timeseries_io::AlignedDataset;

/// DIC differences smaller than this are treated as ties.
pub const DIC_TIE_BAND: f64 = 2.0;

/// -2 log L(θ); +inf when the likelihood is zero.
pub fn deviance(data: &AlignedDataset, params: &GevParams) -> f64 {
    deviance_from_log_likelihood(log_likelihood(data, params))
}

pub fn deviance_from_log_likelihood(ll: f64) -> f64 {
    if ll == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        -2.0 * ll
    }
}

fn sample_log_likelihoods(ens: &PosteriorEnsemble, data: &AlignedDataset) -> Result<Vec<f64>> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(ens.samples.iter().map(|s| log_likelihood(data, s)).collect())
}

/// AIC = -2 log L_max + 2 N_p with its maximum log-likelihood.
fn aic_parts(lls: &[f64], n_params: usize) -> Result<(f64, f64)> {
    let l_max = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if l_max == f64::NEG_INFINITY {
        return Err(Error::NoFiniteLikelihood);
    }
    Ok((-2.0 * l_max + 2.0 * n_params as f64, l_max))
}

pub fn aic(ens: &PosteriorEnsemble, data: &AlignedDataset) -> Result<f64> {
    let lls = sample_log_likelihoods(ens, data)?;
    Ok(aic_parts(&lls, ens.structure.n_params())?.0)
}

/// Pieces of DIC = P_D + D̄ with P_D = D̄ - D(θ̄).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicParts {
    pub d_bar: f64,
    pub d_at_mean: f64,
    pub p_d: f64,
    pub dic: f64,
}

impl DicParts {
    pub fn from_deviances(deviances: &[f64], d_at_mean: f64) -> Result<Self> {
        if deviances.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if !d_at_mean.is_finite() {
            return Err(Error::InfiniteDevianceAtMean);
        }
        let d_bar = deviances.iter().sum::<f64>() / deviances.len() as f64;
        let p_d = d_bar - d_at_mean;
        Ok(DicParts {
            d_bar,
            d_at_mean,
            p_d,
            dic: p_d + d_bar,
        })
    }
}

pub fn dic_parts(ens: &PosteriorEnsemble, data: &AlignedDataset) -> Result<DicParts> {
    let lls = sample_log_likelihoods(ens, data)?;
    let deviances: Vec<f64> = lls.iter().map(|l| deviance_from_log_likelihood(*l)).collect();
    DicParts::from_deviances(&deviances, deviance(data, &ens.mean_params()?))
}

pub fn dic(ens: &PosteriorEnsemble, data: &AlignedDataset) -> Result<f64> {
    Ok(dic_parts(ens, data)?.dic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model_id: String,
    pub aic: f64,
    pub dic: f64,
    pub n_params: usize,
    pub l_max: f64,
    pub d_bar: f64,
    pub p_d: f64,
}

pub fn score_model(model_id: &str, ens: &PosteriorEnsemble, data: &AlignedDataset) -> Result<ModelScore> {
    let lls = sample_log_likelihoods(ens, data)?;
    let n_params = ens.structure.n_params();
    let (aic, l_max) = aic_parts(&lls, n_params)?;
    let deviances: Vec<f64> = lls.iter().map(|l| deviance_from_log_likelihood(*l)).collect();
    let parts = DicParts::from_deviances(&deviances, deviance(data, &ens.mean_params()?))?;
    if !parts.d_bar.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "model {model_id}: mean deviance is infinite"
        )));
    }
    Ok(ModelScore {
        model_id: model_id.to_string(),
        aic,
        dic: parts.dic,
        n_params,
        l_max,
        d_bar: parts.d_bar,
        p_d: parts.p_d,
    })
}

/// One row of the ranking table; failed candidates keep their error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub rank: usize,
    pub model_id: String,
    pub score: Option<ModelScore>,
    pub error: Option<String>,
}

pub struct Candidate<'a> {
    pub model_id: String,
    pub ensemble: &'a PosteriorEnsemble,
    pub data: &'a AlignedDataset,
}

/// Score every candidate and order the table best first.
pub fn rank_models(candidates: &[Candidate<'_>]) -> Result<Vec<RankedModel>> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate models to rank".into()));
    }
    let results: Vec<(String, Result<ModelScore>)> = candidates
        .iter()
        .map(|c| (c.model_id.clone(), score_model(&c.model_id, c.ensemble, c.data)))
        .collect();
    Ok(rank_scores(results))
}

/// Order pre-computed scores: DIC ascending, AIC deciding among candidates
/// within the tie band of the best remaining DIC. Failures go last in input
/// order.
pub fn rank_scores(results: Vec<(String, Result<ModelScore>)>) -> Vec<RankedModel> {
    let mut ok: Vec<ModelScore> = Vec::new();
    let mut failed: Vec<(String, String)> = Vec::new();
    for (id, r) in results {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => failed.push((id, e.to_string())),
        }
    }
    let mut table = Vec::new();
    while !ok.is_empty() {
        let best_dic = ok.iter().map(|s| s.dic).fold(f64::INFINITY, f64::min);
        let pick = ok
            .iter()
            .enumerate()
            .filter(|(_, s)| s.dic - best_dic < DIC_TIE_BAND)
            .min_by(|(ia, a), (ib, b)| {
                a.aic
                    .total_cmp(&b.aic)
                    .then(a.dic.total_cmp(&b.dic))
                    .then(ia.cmp(ib))
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        let s = ok.remove(pick);
        table.push(RankedModel {
            rank: table.len() + 1,
            model_id: s.model_id.clone(),
            score: Some(s),
            error: None,
        });
    }
    for (id, e) in failed {
        table.push(RankedModel {
            rank: table.len() + 1,
            model_id: id,
            score: None,
            error: Some(e),
        });
    }
    table
}

/// Id of the model with the smallest DIC (ignores the AIC tie band).
pub fn lowest_dic(scores: &[ModelScore]) -> Option<&ModelScore> {
    scores
        .iter()
        .min_by(|a, b| a.dic.partial_cmp(&b.dic).unwrap_or(Ordering::Equal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes_fit::{Diagnostics, McmcConfig, ModelStructure, PerParameter, PriorSpec};
    use crate::timeseries_io::AnnualMaximaSeries;

    fn data() -> AlignedDataset {
        let xs = vec![4.1, 5.3, 3.7, 6.2, 4.8, 5.0, 7.1];
        AlignedDataset::without_covariate(AnnualMaximaSeries::new("s", (0..7).collect(), xs).unwrap())
    }

    fn ensemble(structure: ModelStructure, samples: Vec<GevParams>) -> PosteriorEnsemble {
        let pp = PerParameter { mu0: 0.0, a_mu: None, sigma: 0.0, xi: 0.0 };
        PosteriorEnsemble {
            structure,
            log_posteriors: vec![0.0; samples.len()],
            samples,
            config: McmcConfig::default(),
            prior: PriorSpec::default(),
            acceptance_rates: pp,
            final_scales: pp,
            diagnostics: Diagnostics {
                effective_sample_size: pp,
                geweke_z: pp,
                degenerate_data: false,
                sigma_near_zero: false,
                warnings: vec![],
            },
        }
    }

    fn score(id: &str, aic: f64, dic: f64) -> ModelScore {
        ModelScore {
            model_id: id.into(),
            aic,
            dic,
            n_params: 4,
            l_max: 0.0,
            d_bar: 0.0,
            p_d: 0.0,
        }
    }

    #[test]
    fn deviance_examples() {
        assert_eq!(deviance_from_log_likelihood(-10.0), 20.0);
        assert_eq!(deviance_from_log_likelihood(0.0), 0.0);
        let p = GevParams::stationary(10.0, 1.0, 0.5); // lower bound 8
        assert_eq!(deviance(&data(), &p), f64::INFINITY);
    }

    #[test]
    fn aic_arithmetic() {
        assert_eq!(aic_parts(&[-12.0, -10.0, -11.0], 4).unwrap(), (28.0, -10.0));
        assert!(matches!(aic_parts(&[f64::NEG_INFINITY], 3), Err(Error::NoFiniteLikelihood)));
    }

    #[test]
    fn nonstationary_penalty_is_two() {
        let p = GevParams::stationary(5.0, 1.2, 0.05);
        let d = data();
        let st = aic(&ensemble(ModelStructure::Stationary, vec![p]), &d).unwrap();
        let ns = aic(&ensemble(ModelStructure::Nonstationary, vec![p]), &d).unwrap();
        assert!((ns - st - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dic_arithmetic() {
        let parts = DicParts::from_deviances(&[10.0, 14.0], 11.0).unwrap();
        assert_eq!(parts.d_bar, 12.0);
        assert_eq!(parts.p_d, 1.0);
        assert_eq!(parts.dic, 13.0);
        assert!(matches!(
            DicParts::from_deviances(&[10.0], f64::INFINITY),
            Err(Error::InfiniteDevianceAtMean)
        ));
    }

    #[test]
    fn degenerate_ensemble_has_zero_pd() {
        let p = GevParams::stationary(5.0, 1.2, 0.05);
        let d = data();
        let e = ensemble(ModelStructure::Stationary, vec![p; 5]);
        let parts = dic_parts(&e, &d).unwrap();
        assert!(parts.p_d.abs() < 1e-12);
        assert!((parts.dic - deviance(&d, &p)).abs() < 1e-12);
        assert_eq!(dic(&e, &d).unwrap(), dic(&e, &d).unwrap());
    }

    #[test]
    fn dic_fails_when_mean_outside_support() {
        // both samples cover the data (lower bounds 3.0 and 3.4) but their
        // coordinate mean has lower bound ~50.7
        let a = GevParams::stationary(100.0, 0.97, 0.01);
        let b = GevParams::stationary(3.5, 0.1, 1.0);
        let d = data();
        let e = ensemble(ModelStructure::Stationary, vec![a, b]);
        assert!(dic_parts(&e, &d).unwrap_err().to_string().contains("posterior mean"));
    }

    #[test]
    fn scores_invariant_to_sample_order() {
        let d = data();
        let s: Vec<GevParams> = (0..6)
            .map(|i| GevParams::stationary(4.5 + 0.1 * i as f64, 1.0 + 0.05 * i as f64, 0.02 * i as f64))
            .collect();
        let mut r = s.clone();
        r.reverse();
        let a = score_model("m", &ensemble(ModelStructure::Stationary, s), &d).unwrap();
        let b = score_model("m", &ensemble(ModelStructure::Stationary, r), &d).unwrap();
        assert_eq!(a.aic, b.aic);
        assert!((a.dic - b.dic).abs() < 1e-9);
    }

    #[test]
    fn ranking_by_dic() {
        let table = rank_scores(vec![
            ("a".into(), Ok(score("a", 0.0, 100.0))),
            ("b".into(), Ok(score("b", 0.0, 90.0))),
            ("c".into(), Ok(score("c", 0.0, 95.0))),
        ]);
        let dics: Vec<f64> = table.iter().map(|r| r.score.as_ref().unwrap().dic).collect();
        assert_eq!(dics, vec![90.0, 95.0, 100.0]);
        assert_eq!(table[0].rank, 1);
    }

    #[test]
    fn aic_breaks_near_ties_and_failures_last() {
        let table = rank_scores(vec![
            ("x".into(), Err(Error::EmptyEnsemble)),
            ("a".into(), Ok(score("a", 50.0, 90.0))),
            ("b".into(), Ok(score("b", 40.0, 91.0))),
        ]);
        let ids: Vec<&str> = table.iter().map(|r| r.model_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "a", "x"]);
        assert!(table[2].error.is_some());
    }

    #[test]
    fn single_candidate_wins() {
        let d = data();
        let e = ensemble(ModelStructure::Stationary, vec![GevParams::stationary(5.0, 1.2, 0.05)]);
        let table = rank_models(&[Candidate {
            model_id: "stationary".into(),
            ensemble: &e,
            data: &d,
        }])
        .unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].model_id, "stationary");
        assert!(rank_models(&[]).is_err());
    }
}
