use stormsafe_core::bayes_fit::{
    ensemble_return_levels, ensemble_return_period, map_estimate, mh_sample, sample_return_levels, McmcConfig,
    ModelStructure, PosteriorEnsemble, PriorSpec,
};
use stormsafe_core::gev::{draw_series, return_level, GevParams};
use stormsafe_core::model_selection::{rank_models, Candidate};
use stormsafe_core::rng::substream;
use stormsafe_core::stats::{mean, sample_sd, skewness};
use stormsafe_core::timeseries_io::{AlignedDataset, AnnualMaximaSeries, CovariateName, CovariateSeries};

fn dataset(params: GevParams, covariate: Vec<f64>, seed: u64) -> AlignedDataset {
    let mut rng = substream(seed, "data");
    let xs = draw_series(&params, &covariate, &mut rng);
    let years: Vec<i32> = (1950..1950 + xs.len() as i32).collect();
    AlignedDataset {
        maxima: AnnualMaximaSeries::new("synthetic", years.clone(), xs).unwrap(),
        covariate: CovariateSeries {
            name: CovariateName::Custom("x".into()),
            years,
            values: covariate,
            standardized: true,
        },
    }
}

fn linear(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.5 + 3.0 * i as f64 / (n - 1) as f64).collect()
}

fn config(seed: u64) -> McmcConfig {
    McmcConfig {
        n_iterations: 20_000,
        burn_in: 5_000,
        seed,
        proposal_scales: None,
        adapt: true,
    }
}

fn within_3sd(ens: &PosteriorEnsemble, truth: GevParams, indices: &[usize]) {
    for &i in indices {
        let col = ens.column(i);
        let (m, sd) = (mean(&col), sample_sd(&col));
        assert!((m - truth.as_array()[i]).abs() < 3.0 * sd, "param {i}: mean {m}, sd {sd}");
    }
}

#[test]
fn stationary_recovery() {
    let truth = GevParams::stationary(10.0, 2.0, 0.1);
    let d = dataset(truth, vec![0.0; 300], 11);
    let ens = mh_sample(&d, ModelStructure::Stationary, &PriorSpec::default(), &config(1)).unwrap();
    within_3sd(&ens, truth, &[0, 2, 3]);
    assert!(ens.samples.iter().all(|s| s.a_mu == 0.0));
    assert!(ens.diagnostics.effective_sample_size.mu0 > 200.0);
}

#[test]
fn nonstationary_recovery() {
    let truth = GevParams { mu0: 10.0, a_mu: 0.3, sigma: 2.0, xi: 0.1 };
    let d = dataset(truth, linear(200), 12);
    let ens = mh_sample(&d, ModelStructure::Nonstationary, &PriorSpec::default(), &config(2)).unwrap();
    within_3sd(&ens, truth, &[0, 1, 2, 3]);
}

#[test]
fn true_covariate_wins_selection() {
    let truth = GevParams { mu0: 10.0, a_mu: 0.3, sigma: 2.0, xi: 0.1 };
    let n = 200;
    let d = dataset(truth, linear(n), 21);
    let mut noise_rng = substream(21, "noise");
    let noise: Vec<f64> = (0..n).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut noise_rng)).collect();
    let d_noise = AlignedDataset {
        covariate: CovariateSeries { values: noise, ..d.covariate.clone() },
        ..d.clone()
    };
    let d_stat = AlignedDataset::without_covariate(d.maxima.clone());
    let prior = PriorSpec::default();
    let e_true = mh_sample(&d, ModelStructure::Nonstationary, &prior, &config(3)).unwrap();
    let e_noise = mh_sample(&d_noise, ModelStructure::Nonstationary, &prior, &config(4)).unwrap();
    let e_stat = mh_sample(&d_stat, ModelStructure::Stationary, &prior, &config(5)).unwrap();
    let ranked = rank_models(&[
        Candidate { model_id: "noise".into(), ensemble: &e_noise, data: &d_noise },
        Candidate { model_id: "stationary".into(), ensemble: &e_stat, data: &d_stat },
        Candidate { model_id: "true".into(), ensemble: &e_true, data: &d },
    ])
    .unwrap();
    assert_eq!(ranked[0].model_id, "true");
    assert_eq!(ranked[0].rank, 1);
}

#[test]
fn posterior_mean_return_level_exceeds_map_under_right_skew() {
    let truth = GevParams::stationary(20.0, 6.0, 0.3);
    let d = dataset(truth, vec![0.0; 60], 31);
    let ens = mh_sample(&d, ModelStructure::Stationary, &PriorSpec::default(), &config(6)).unwrap();
    let map = map_estimate(&ens).unwrap();
    let cloud = sample_return_levels(&ens, 0.0, 500.0).unwrap();
    assert!(skewness(&cloud) > 0.0);
    let mean500 = ensemble_return_levels(&ens, 0.0, 500.0).unwrap().mean;
    let mean100 = ensemble_return_levels(&ens, 0.0, 100.0).unwrap().mean;
    let gap500 = mean500 - return_level(&map, 0.0, 500.0).unwrap();
    let gap100 = mean100 - return_level(&map, 0.0, 100.0).unwrap();
    assert!(gap500 > 0.0);
    assert!(gap500 > gap100);
}

#[test]
fn upward_trend_shortens_the_stationary_return_period() {
    let truth = GevParams { mu0: 10.0, a_mu: 0.3, sigma: 2.0, xi: 0.1 };
    let cov = linear(200);
    let d = dataset(truth, cov.clone(), 41);
    let prior = PriorSpec::default();
    let stat = mh_sample(&AlignedDataset::without_covariate(d.maxima.clone()), ModelStructure::Stationary, &prior, &config(7)).unwrap();
    let nonstat = mh_sample(&d, ModelStructure::Nonstationary, &prior, &config(8)).unwrap();
    let z100 = ensemble_return_levels(&stat, 0.0, 100.0).unwrap().mean;
    let now = *cov.last().unwrap();
    let t = ensemble_return_period(&nonstat, z100, now).unwrap();
    assert!(t < 100.0, "return period {t}");
}

#[test]
fn same_seed_same_chain() {
    let d = dataset(GevParams::stationary(10.0, 2.0, 0.1), vec![0.0; 50], 51);
    let cfg = McmcConfig { n_iterations: 3_000, burn_in: 500, ..config(9) };
    let a = mh_sample(&d, ModelStructure::Stationary, &PriorSpec::default(), &cfg).unwrap();
    let b = mh_sample(&d, ModelStructure::Stationary, &PriorSpec::default(), &cfg).unwrap();
    assert_eq!(a, b);
    let c = mh_sample(&d, ModelStructure::Stationary, &PriorSpec::default(), &McmcConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.samples, c.samples);
}
