use stormsafe_core::bayes_fit::{ModelStructure, PosteriorEnsemble};
use stormsafe_core::design::{
    cell_lifetimes, default_sf_grid, min_sf_for_target, sweep, CostTable, DesignBaseline, Robustness, ScenarioEvaluator,
    Target,
};
use stormsafe_core::gev::{return_level, GevParams};
use stormsafe_core::hydraulics::{lifetime_reliability, LifetimeSpec, PipeSpec};
use stormsafe_core::timeseries_io::{AlignedDataset, AnnualMaximaSeries, CovariateName, CovariateSeries};
use stormsafe_core::uncertainty::{build_grid, stage_uncertainty, ClimateOption, LifetimeOption, ScenarioInputs};

fn template() -> PipeSpec {
    PipeSpec { diameter: 1.0, manning_n: 0.013, slope: 0.01, area: 0.25, runoff_c: 0.9 }
}

fn draws(base: GevParams, n: usize) -> Vec<GevParams> {
    (0..n)
        .map(|i| {
            let u = i as f64 / n as f64 - 0.5;
            GevParams { mu0: base.mu0 * (1.0 + 0.05 * u), sigma: base.sigma * (1.0 + 0.1 * u), xi: base.xi + 0.05 * u, ..base }
        })
        .collect()
}

fn option(name: &str, trend: f64, slope: f64) -> ClimateOption {
    let base = GevParams { mu0: 20.0, a_mu: trend, sigma: 5.0, xi: 0.1 };
    let data = AlignedDataset::without_covariate(AnnualMaximaSeries::new("s", vec![2000, 2001], vec![20.0, 25.0]).unwrap());
    let years: Vec<i32> = (2020..2100).collect();
    let values = years.iter().map(|y| slope * (*y - 2020) as f64 / 80.0).collect();
    ClimateOption {
        name: name.into(),
        ensemble: PosteriorEnsemble::from_draws(ModelStructure::Nonstationary, draws(base, 40), &data),
        projection: CovariateSeries { name: CovariateName::Custom("x".into()), years, values, standardized: true },
    }
}

fn inputs() -> ScenarioInputs {
    ScenarioInputs {
        climate: vec![option("a", 0.1, 1.0), option("b", 0.2, 2.0), option("c", 0.05, 0.5)],
        runoff: vec![0.5, 0.7, 0.9],
        lifetimes: vec![LifetimeOption { start_year: 2020, years: 25 }, LifetimeOption { start_year: 2020, years: 50 }],
    }
}

fn baseline() -> DesignBaseline {
    // standard design from the stationary 100-year level at the current covariate
    let i = return_level(&GevParams::stationary(20.0, 5.0, 0.1), 0.0, 100.0).unwrap();
    DesignBaseline::new(i, 100.0, &template()).unwrap()
}

#[test]
fn grid_cells_match_direct_evaluation() {
    let inp = inputs();
    let spec = template();
    let grid = build_grid(&inp, &spec).unwrap();
    assert_eq!(grid.cells.len(), 18);
    for (i, c) in grid.cells.iter().enumerate() {
        let co = grid.coords(i);
        let climate = &inp.climate[co[0]];
        let life = inp.lifetimes[co[2]];
        let (ls, held) = LifetimeSpec::from_projection(life.start_year, life.years, &climate.projection).unwrap();
        assert!(held.is_empty());
        let direct = lifetime_reliability(&climate.ensemble, &ls, &spec.with_runoff(inp.runoff[co[1]])).unwrap();
        let c = c.unwrap();
        assert!((c.reliability - direct.reliability).abs() < 1e-12);
        assert!(c.q05 <= c.reliability && c.reliability <= c.q95);
    }
    let d = stage_uncertainty(&grid).unwrap();
    let sum: f64 = d.stage_uncertainty.iter().sum();
    assert!((sum - d.total).abs() <= 1e-10 * d.total);
    assert!(d.monotone);
}

#[test]
fn projection_shorter_than_lifetime_is_held_and_reported() {
    let mut inp = inputs();
    inp.lifetimes.push(LifetimeOption { start_year: 2020, years: 100 });
    let grid = build_grid(&inp, &template()).unwrap();
    assert_eq!(grid.warnings.len(), 3);
    assert!(grid.warnings[0].contains("2100"));
}

#[test]
fn empty_ensemble_reports_cell() {
    let mut inp = inputs();
    inp.climate[1].ensemble.samples.clear();
    inp.climate[1].ensemble.log_posteriors.clear();
    let err = build_grid(&inp, &template()).unwrap_err().to_string();
    assert!(err.contains("[1, 0, 0]"), "{err}");
}

#[test]
fn sweep_properties() {
    let inp = inputs();
    let b = baseline();
    let grid = default_sf_grid();
    let curve = sweep(&b, &inp, &grid, &CostTable::placeholder()).unwrap();
    assert_eq!(curve.points.len(), 16);

    // SF = 1 reproduces the baseline grid
    let base = build_grid(&inp, &b.spec).unwrap().reliabilities().unwrap();
    assert_eq!(curve.points[0].cells, base);

    for w in curve.points.windows(2) {
        for (a, c) in w[0].cells.iter().zip(&w[1].cells) {
            assert!(c >= a);
        }
    }
    for p in &curve.points {
        assert!(p.worst_reliability <= p.mean_reliability);
    }
    assert_eq!(curve.cell_lifetimes, cell_lifetimes(&inp));

    // baseline underperforms the standard under trend; some SF > 1 fixes it
    let eval = ScenarioEvaluator { baseline: &b, inputs: &inp };
    let target = Target::Standard { return_period: 100.0 };
    let s = min_sf_for_target(&curve, target, Robustness::WorstCase, &eval).unwrap();
    assert!(s.sf > 1.0);
    assert!(s.bracket.0 < s.sf && s.sf <= s.bracket.1);
    let again = min_sf_for_target(&curve, target, Robustness::WorstCase, &eval).unwrap();
    assert_eq!(s, again);
    let m = min_sf_for_target(&curve, target, Robustness::Mean, &eval).unwrap();
    assert!(m.sf <= s.sf);
}

#[test]
fn large_factor_is_nearly_certain() {
    let inp = inputs();
    let b = baseline();
    // I_crit above every draw's 1e-8 annual exceedance level at the largest covariate
    // value keeps 50 years of exposure above 1 - 5e-7
    let mut worst = 0.0f64;
    for c in &inp.climate {
        for s in &c.ensemble.samples {
            worst = worst.max(return_level(s, 2.0, 1e8).unwrap());
        }
    }
    let sf = (worst / b.design_intensity).powf(3.0 / 8.0) * 1.05;
    let curve = sweep(&b, &inp, &[1.0, sf], &CostTable::placeholder()).unwrap();
    assert!(curve.points[1].worst_reliability > 0.999999);
}
