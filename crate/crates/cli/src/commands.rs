//! The pipeline stages behind each subcommand.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stormsafe_core::bayes_fit::{
    ensemble_return_levels, ensemble_return_period, map_estimate, mh_sample, read_ensemble_csv, write_ensemble_csv,
    EnsembleSummary, PosteriorEnsemble,
};
use stormsafe_core::design::{
    min_sf_for_target, sweep as run_sweep, DesignBaseline, Robustness, SafetyFactorCurve, ScenarioEvaluator,
    SfSolution,
};
use stormsafe_core::gev::return_level;
use stormsafe_core::hydraulics::{lifetime_reliability, LifetimeSpec};
use stormsafe_core::model_selection::{rank_models, Candidate, RankedModel};
use stormsafe_core::plot::{Chart, Series};
use stormsafe_core::rng::substream_seed;
use stormsafe_core::uncertainty::{
    build_grid, stage_uncertainty, ClimateOption, DecompositionResult, LifetimeOption, ScenarioInputs,
};

use crate::artifacts::{check_fresh, read_json, require, write_json, write_text, Ctx, Provenance};
use crate::data::{climate_data, Prepared, STATIONARY_ID};

fn note(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub provenance: Provenance,
    pub model_id: String,
    pub n_years: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub summary: EnsembleSummary,
}

fn save_fit(ctx: &Ctx, stage: &str, command: &str, id: &str, ens: &PosteriorEnsemble, years: &[i32]) -> Result<Vec<PathBuf>> {
    let dir = ctx.stage_dir(stage)?;
    let csv = dir.join(format!("{id}.csv"));
    let json = dir.join(format!("{id}.json"));
    write_ensemble_csv(&csv, ens).with_context(|| format!("writing {}", csv.display()))?;
    let record = FitRecord {
        provenance: ctx.provenance(command),
        model_id: id.into(),
        n_years: years.len(),
        first_year: years[0],
        last_year: *years.last().unwrap(),
        summary: EnsembleSummary::of(ens)?,
    };
    write_json(&json, &record)?;
    Ok(vec![csv, json])
}

fn load_fit_from(ctx: &Ctx, stage: &str, id: &str) -> Result<(PosteriorEnsemble, FitRecord)> {
    let json = ctx.path(stage, &format!("{id}.json"));
    let csv = ctx.path(stage, &format!("{id}.csv"));
    require(ctx, &[(json.clone(), "fit"), (csv.clone(), "fit")])?;
    let record: FitRecord = read_json(&json)?;
    check_fresh(ctx, &json, &record.provenance)?;
    let (samples, lps) = read_ensemble_csv(&csv).with_context(|| format!("reading {}", csv.display()))?;
    let ens = record.summary.clone().into_ensemble(samples, lps)?;
    Ok((ens, record))
}

pub fn load_fit(ctx: &Ctx, id: &str) -> Result<PosteriorEnsemble> {
    Ok(load_fit_from(ctx, "fit", id)?.0)
}

/// Fit the stationary model and one nonstationary model per covariate.
pub fn fit(ctx: &Ctx, only: Option<Vec<String>>) -> Result<()> {
    let cfg = &ctx.cfg.config;
    let prepared = Prepared::load(cfg)?;
    for n in &prepared.notes {
        note(n);
    }
    let candidates = prepared.candidates(only.as_deref())?;
    let prior = cfg.prior.spec()?;
    note(format!(
        "fitting {} model(s) on {} years: {}",
        candidates.len(),
        prepared.maxima.len(),
        candidates.iter().map(|c| c.model_id.as_str()).collect::<Vec<_>>().join(", ")
    ));
    let fits: Vec<Result<PosteriorEnsemble>> = candidates
        .par_iter()
        .map(|c| {
            let mcmc = cfg.mcmc.with_seed(substream_seed(ctx.cfg.seed, &format!("fit/{}", c.model_id)));
            mh_sample(&c.data, c.structure, &prior, &mcmc).with_context(|| format!("fitting `{}`", c.model_id))
        })
        .collect();
    let mut outputs = Vec::new();
    for (c, ens) in candidates.iter().zip(fits) {
        let ens = ens?;
        for w in &ens.diagnostics.warnings {
            note(format!("{}: {w}", c.model_id));
        }
        let m = ens.mean_params()?;
        note(format!(
            "{}: mu0 {:.4} a_mu {:.4} sigma {:.4} xi {:.4} ({} draws)",
            c.model_id,
            m.mu0,
            m.a_mu,
            m.sigma,
            m.xi,
            ens.len()
        ));
        outputs.extend(save_fit(ctx, "fit", "fit", &c.model_id, &ens, &c.data.maxima.years)?);
    }
    ctx.record("fit", &outputs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub provenance: Provenance,
    pub winner: String,
    pub ranking: Vec<RankedModel>,
}

/// Rank every fitted candidate by DIC with the AIC tie-break.
pub fn select(ctx: &Ctx) -> Result<()> {
    let prepared = Prepared::load(&ctx.cfg.config)?;
    let ids: Vec<String> = prepared
        .model_ids()
        .into_iter()
        .filter(|id| ctx.path("fit", &format!("{id}.json")).is_file())
        .collect();
    if ids.is_empty() {
        let needed: Vec<(PathBuf, &str)> = prepared
            .model_ids()
            .iter()
            .map(|id| (ctx.path("fit", &format!("{id}.json")), "fit"))
            .collect();
        require(ctx, &needed)?;
    }
    let mut loaded = Vec::new();
    for id in &ids {
        loaded.push((prepared.candidate(id)?, load_fit(ctx, id)?));
    }
    let candidates: Vec<Candidate<'_>> = loaded
        .iter()
        .map(|(c, e)| Candidate {
            model_id: c.model_id.clone(),
            ensemble: e,
            data: &c.data,
        })
        .collect();
    let ranking = rank_models(&candidates)?;
    let winner = ranking
        .iter()
        .find(|r| r.score.is_some())
        .map(|r| r.model_id.clone())
        .ok_or_else(|| anyhow!("every candidate failed to score"))?;

    let dir = ctx.stage_dir("select")?;
    let csv_path = dir.join("scores.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["rank", "model", "n_params", "l_max", "aic", "d_bar", "p_d", "dic", "error"])?;
    for r in &ranking {
        let mut row = vec![r.rank.to_string(), r.model_id.clone()];
        match &r.score {
            Some(s) => row.extend([
                s.n_params.to_string(),
                s.l_max.to_string(),
                s.aic.to_string(),
                s.d_bar.to_string(),
                s.p_d.to_string(),
                s.dic.to_string(),
                String::new(),
            ]),
            None => {
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(r.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    for r in &ranking {
        match &r.score {
            Some(s) => note(format!("{}. {:<20} DIC {:.3}  AIC {:.3}", r.rank, r.model_id, s.dic, s.aic)),
            None => note(format!("{}. {:<20} failed: {}", r.rank, r.model_id, r.error.as_deref().unwrap_or(""))),
        }
    }
    note(format!("selected: {winner}"));
    let json_path = dir.join("selection.json");
    write_json(
        &json_path,
        &SelectionRecord {
            provenance: ctx.provenance("select"),
            winner,
            ranking,
        },
    )?;
    ctx.record("select", &[csv_path, json_path])
}

/// Model driving the scenarios: the config override or the selection.
pub fn driver_model(ctx: &Ctx) -> Result<String> {
    if let Some(c) = &ctx.cfg.config.scenarios.covariate {
        return Ok(c.clone());
    }
    let path = ctx.path("select", "selection.json");
    require(ctx, &[(path.clone(), "select")])?;
    let rec: SelectionRecord = read_json(&path)?;
    check_fresh(ctx, &path, &rec.provenance)?;
    Ok(rec.winner)
}

fn reference_value(prepared: &Prepared, id: &str, year: i32) -> Result<f64> {
    if id == STATIONARY_ID {
        return Ok(0.0);
    }
    let c = prepared.covariate(id).ok_or_else(|| anyhow!("unknown covariate `{id}`"))?;
    c.combined
        .value_in(year)
        .ok_or_else(|| anyhow!("covariate `{id}` has no value in reference year {year}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnsRecord {
    pub provenance: Provenance,
    pub reference_year: i32,
    /// Posterior-mean stationary level at the design return period.
    pub stationary_design_level: Option<f64>,
    /// Return period of that level under each nonstationary model at the
    /// reference year's covariate value.
    pub nonstationary_return_periods: Vec<(String, f64)>,
}

pub fn returns(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg.config;
    let prepared = Prepared::load(cfg)?;
    let ref_year = cfg.returns.reference_year.unwrap_or(*prepared.maxima.years.last().unwrap());
    let ids: Vec<String> = prepared
        .model_ids()
        .into_iter()
        .filter(|id| ctx.path("fit", &format!("{id}.json")).is_file())
        .collect();
    if ids.is_empty() {
        require(ctx, &[(ctx.path("fit", "stationary.json"), "fit")])?;
    }
    let dir = ctx.stage_dir("returns")?;
    let csv_path = dir.join("return_levels.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["model", "return_period", "covariate", "mean", "q05", "q50", "q95", "map"])?;
    let mut stationary_level = None;
    let mut periods = Vec::new();
    let mut ensembles = Vec::new();
    for id in &ids {
        let ens = load_fit(ctx, id)?;
        let t = reference_value(&prepared, id, ref_year)?;
        let map = map_estimate(&ens)?;
        for &period in &cfg.returns.periods {
            let s = ensemble_return_levels(&ens, t, period)?;
            w.write_record([
                id.clone(),
                period.to_string(),
                t.to_string(),
                s.mean.to_string(),
                s.q05.to_string(),
                s.q50.to_string(),
                s.q95.to_string(),
                return_level(&map, t, period)?.to_string(),
            ])?;
        }
        if id == STATIONARY_ID {
            stationary_level = Some(ensemble_return_levels(&ens, 0.0, cfg.design.return_period)?.mean);
        }
        ensembles.push((id.clone(), ens, t));
    }
    w.flush()?;
    if let Some(z) = stationary_level {
        for (id, ens, t) in &ensembles {
            if id != STATIONARY_ID {
                let rp = ensemble_return_period(ens, z, *t)?;
                note(format!(
                    "stationary {}-year level {z:.4} recurs every {rp:.1} years under {id} in {ref_year}",
                    cfg.design.return_period
                ));
                periods.push((id.clone(), rp));
            }
        }
    }
    let json_path = dir.join("returns.json");
    write_json(
        &json_path,
        &ReturnsRecord {
            provenance: ctx.provenance("returns"),
            reference_year: ref_year,
            stationary_design_level: stationary_level,
            nonstationary_return_periods: periods,
        },
    )?;
    ctx.record("returns", &[csv_path, json_path])
}

/// Everything the scenario stages share.
pub struct ScenarioSetup {
    pub driver: String,
    pub inputs: ScenarioInputs,
    pub baseline: DesignBaseline,
    pub notes: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

fn thin(mut ens: PosteriorEnsemble, k: usize) -> PosteriorEnsemble {
    if k > 1 {
        ens.samples = ens.samples.into_iter().step_by(k).collect();
        ens.log_posteriors = ens.log_posteriors.into_iter().step_by(k).collect();
    }
    ens
}

/// Build climate options (fitting or reusing per-option ensembles) and the
/// design baseline.
pub fn scenario_setup(ctx: &Ctx) -> Result<ScenarioSetup> {
    let cfg = &ctx.cfg.config;
    let sc = &cfg.scenarios;
    let prepared = Prepared::load(cfg)?;
    let driver_id = driver_model(ctx)?;
    if sc.lifetimes.is_empty() || sc.runoff.is_empty() {
        bail!("scenarios need at least one runoff coefficient and one lifetime");
    }
    let end = sc.start_year + *sc.lifetimes.iter().max().unwrap() as i32 - 1;
    let driver = prepared.driver(&driver_id, sc.start_year..=end)?;
    let station = load_fit(ctx, &driver_id)?;
    let mut notes = Vec::new();
    let mut outputs = Vec::new();

    let baseline = {
        let intensity = match cfg.design.intensity {
            Some(i) => i,
            None => {
                let stat = load_fit(ctx, STATIONARY_ID).context(
                    "design.intensity is unset, so the stationary fit supplies the design-standard intensity",
                )?;
                ensemble_return_levels(&stat, 0.0, cfg.design.return_period)?.mean
            }
        };
        DesignBaseline::new(intensity, cfg.design.return_period, &cfg.pipe.template())?
    };

    let climate = if sc.climate.is_empty() {
        vec![ClimateOption {
            name: cfg.station.id.clone(),
            ensemble: thin(station, sc.thin),
            projection: driver,
        }]
    } else {
        let prior = cfg.prior.spec()?;
        let prepared_opts: Vec<_> = sc
            .climate
            .iter()
            .map(|o| climate_data(&prepared, o, &driver_id, &driver).map(|d| (o, d)))
            .collect::<Result<_>>()?;
        let structure = prepared.candidate(&driver_id)?.structure;
        let fits: Vec<Result<(PosteriorEnsemble, bool)>> = prepared_opts
            .par_iter()
            .map(|(o, d)| -> Result<(PosteriorEnsemble, bool)> {
                let Some(d) = d else {
                    return Ok((station.clone(), false));
                };
                if let Ok((ens, rec)) = load_fit_from(ctx, "scenarios", &o.name) {
                    if rec.provenance.command == format!("scenario-fit:{driver_id}") {
                        return Ok((ens, false));
                    }
                }
                let mcmc = cfg.mcmc.with_seed(substream_seed(ctx.cfg.seed, &format!("scenario/{}/{}", driver_id, o.name)));
                let ens = mh_sample(&d.data, structure, &prior, &mcmc).with_context(|| format!("fitting climate `{}`", o.name))?;
                Ok((ens, true))
            })
            .collect();
        let mut options = Vec::new();
        for ((o, d), fit) in prepared_opts.into_iter().zip(fits) {
            let (ens, fresh) = fit?;
            let projection = match &d {
                Some(d) => {
                    notes.extend(d.notes.iter().cloned());
                    if fresh {
                        note(format!("fitted climate {} on {} years", o.name, d.data.len()));
                        let mut files = save_fit(ctx, "scenarios", &format!("scenario-fit:{driver_id}"), &o.name, &ens, &d.data.maxima.years)?;
                        outputs.append(&mut files);
                    } else {
                        outputs.push(ctx.path("scenarios", &format!("{}.csv", o.name)));
                        outputs.push(ctx.path("scenarios", &format!("{}.json", o.name)));
                    }
                    d.projection.clone()
                }
                None => match &o.projection {
                    Some(_) => climate_data(&prepared, &crate::config::ClimateConfig { maxima: None, ..o.clone() }, &driver_id, &driver)?
                        .map(|d| d.projection)
                        .unwrap_or_else(|| driver.clone()),
                    None => driver.clone(),
                },
            };
            options.push(ClimateOption {
                name: o.name.clone(),
                ensemble: thin(ens, sc.thin),
                projection,
            });
        }
        options
    };
    let inputs = ScenarioInputs {
        climate,
        runoff: sc.runoff.clone(),
        lifetimes: sc
            .lifetimes
            .iter()
            .map(|l| LifetimeOption {
                start_year: sc.start_year,
                years: *l,
            })
            .collect(),
    };
    Ok(ScenarioSetup {
        driver: driver_id,
        inputs,
        baseline,
        notes,
        outputs,
    })
}

pub fn reliability(ctx: &Ctx, sf: f64) -> Result<()> {
    let setup = scenario_setup(ctx)?;
    for n in &setup.notes {
        note(n);
    }
    let pipe = setup.baseline.pipe_at(sf);
    let dir = ctx.stage_dir("reliability")?;
    let csv_path = dir.join("reliability.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["climate", "lifetime", "reliability", "failure_prob", "q05", "q95"])?;
    let mut rows = Vec::new();
    for c in &setup.inputs.climate {
        for l in &setup.inputs.lifetimes {
            let (life, held) = LifetimeSpec::from_projection(l.start_year, l.years, &c.projection)?;
            if !held.is_empty() {
                note(format!("climate {}: covariate held at its last value for {} year(s)", c.name, held.len()));
            }
            let r = lifetime_reliability(&c.ensemble, &life, &pipe).with_context(|| format!("climate {}", c.name))?;
            w.write_record([
                c.name.clone(),
                l.years.to_string(),
                r.reliability.to_string(),
                r.failure_prob.to_string(),
                r.spread_q05.to_string(),
                r.spread_q95.to_string(),
            ])?;
            rows.push(r);
        }
    }
    w.flush()?;
    let json_path = dir.join("reliability.json");
    write_json(
        &json_path,
        &serde_json::json!({
            "provenance": ctx.provenance("reliability"),
            "driver": setup.driver,
            "baseline": setup.baseline,
            "safety_factor": sf,
            "pipe": pipe,
            "results": rows,
        }),
    )?;
    let mut outputs = setup.outputs;
    outputs.extend([csv_path, json_path]);
    ctx.record("reliability", &outputs)
}

fn parse_order(names: &[String], order: Option<&str>) -> Result<Vec<usize>> {
    let Some(order) = order else {
        return Ok((0..names.len()).collect());
    };
    let idx: Vec<usize> = order
        .split(',')
        .map(|s| {
            let s = s.trim();
            names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| anyhow!("unknown stage `{s}`; stages are {}", names.join(", ")))
        })
        .collect::<Result<_>>()?;
    let mut sorted = idx.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != names.len() {
        bail!("stage order must name each of {} exactly once", names.join(", "));
    }
    Ok(idx)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub provenance: Provenance,
    pub safety_factor: f64,
    pub stage_order: Vec<String>,
    pub result: DecompositionResult,
    pub warnings: Vec<String>,
}

pub fn decompose(ctx: &Ctx, stage_order: Option<&str>, sf: f64) -> Result<()> {
    let setup = scenario_setup(ctx)?;
    let grid = build_grid(&setup.inputs, &setup.baseline.pipe_at(sf))?;
    let names: Vec<String> = grid.stages.iter().map(|s| s.name.clone()).collect();
    let order = parse_order(&names, stage_order)?;
    let grid = grid.permute_stages(&order)?;
    let result = stage_uncertainty(&grid)?;
    for w in &grid.warnings {
        note(w);
    }
    for (n, s) in result.stage_names.iter().zip(&result.shares) {
        note(format!("{n:<10} share {:.4}", s));
    }
    let dir = ctx.stage_dir("decompose")?;
    let csv_path = dir.join("grid.csv");
    grid.write_long_csv(&csv_path)?;
    let json_path = dir.join("decomposition.json");
    write_json(
        &json_path,
        &DecompositionRecord {
            provenance: ctx.provenance("decompose"),
            safety_factor: sf,
            stage_order: result.stage_names.clone(),
            result,
            warnings: grid.warnings.clone(),
        },
    )?;
    let mut outputs = setup.outputs;
    outputs.extend([csv_path, json_path]);
    ctx.record("decompose", &outputs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub provenance: Provenance,
    pub driver: String,
    pub target: stormsafe_core::design::Target,
    pub robustness: Robustness,
    pub solution: Option<SfSolution>,
    pub solution_error: Option<String>,
    /// The other robustness statistic, for comparison.
    pub alternate: Option<SfSolution>,
    pub placeholder_costs: bool,
    pub curve: SafetyFactorCurve,
}

pub fn sweep(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg.config;
    let setup = scenario_setup(ctx)?;
    for n in &setup.notes {
        note(n);
    }
    let (cost, placeholder) = cfg.cost.table()?;
    if placeholder {
        note("cost factors use the built-in placeholder table; set [cost] knots for real values");
    }
    let grid = cfg.sweep.grid();
    note(format!(
        "sweeping {} safety factors over {} scenarios (baseline diameter {:.4} m)",
        grid.len(),
        setup.inputs.n_cells(),
        setup.baseline.baseline_diameter
    ));
    let curve = run_sweep(&setup.baseline, &setup.inputs, &grid, &cost)?;
    for w in &curve.warnings {
        note(w);
    }
    let eval = ScenarioEvaluator {
        baseline: &setup.baseline,
        inputs: &setup.inputs,
    };
    let target = cfg.design.target();
    let robustness = cfg.design.robustness;
    let (solution, solution_error) = match min_sf_for_target(&curve, target, robustness, &eval) {
        Ok(s) => {
            note(format!("minimal safety factor ({robustness:?}): {:.2}", s.sf));
            (Some(s), None)
        }
        Err(e) => {
            note(format!("no safety factor meets the target: {e}"));
            (None, Some(e.to_string()))
        }
    };
    let other = match robustness {
        Robustness::WorstCase => Robustness::Mean,
        Robustness::Mean => Robustness::WorstCase,
    };
    let alternate = min_sf_for_target(&curve, target, other, &eval).ok();

    let dir = ctx.stage_dir("sweep")?;
    let curve_csv = dir.join("curve.csv");
    curve.write_csv(&curve_csv)?;
    let cells_csv = dir.join("cells.csv");
    {
        let mut w = csv::Writer::from_path(&cells_csv)?;
        let mut header = vec!["sf".to_string()];
        header.extend(curve.stages.iter().map(|s| s.name.clone()));
        header.push("reliability".into());
        w.write_record(&header)?;
        let shape: Vec<usize> = curve.stages.iter().map(|s| s.options.len()).collect();
        for p in &curve.points {
            for (i, r) in p.cells.iter().enumerate() {
                let mut rem = i;
                let mut coords = vec![0; shape.len()];
                for k in (0..shape.len()).rev() {
                    coords[k] = rem % shape[k];
                    rem /= shape[k];
                }
                let mut row = vec![p.sf.to_string()];
                row.extend(coords.iter().zip(&curve.stages).map(|(c, s)| s.options[*c].clone()));
                row.push(r.to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }
    let plot_json = dir.join("curve.json");
    write_json(&plot_json, &curve.plot_json(solution.as_ref()))?;
    let svg = dir.join("curve.svg");
    write_text(&svg, &curve.to_svg(target_line(&target, &setup.inputs)))?;
    let record_path = dir.join("sweep.json");
    write_json(
        &record_path,
        &SweepRecord {
            provenance: ctx.provenance("sweep"),
            driver: setup.driver,
            target,
            robustness,
            solution,
            solution_error,
            alternate,
            placeholder_costs: placeholder,
            curve,
        },
    )?;
    let mut outputs = setup.outputs;
    outputs.extend([curve_csv, cells_csv, plot_json, svg, record_path]);
    ctx.record("sweep", &outputs)
}

/// A single reference line when every cell shares the same lifetime target.
fn target_line(target: &stormsafe_core::design::Target, inputs: &ScenarioInputs) -> Option<f64> {
    let mut t: Vec<f64> = inputs.lifetimes.iter().map(|l| target.lifetime_target(l.years)).collect();
    t.dedup();
    (t.len() == 1).then(|| t[0])
}

pub fn report(ctx: &Ctx) -> Result<()> {
    let prepared = Prepared::load(&ctx.cfg.config)?;
    let mut needed: Vec<(PathBuf, &str)> = prepared
        .model_ids()
        .iter()
        .map(|id| (ctx.path("fit", &format!("{id}.json")), "fit"))
        .collect();
    needed.push((ctx.path("select", "selection.json"), "select"));
    needed.push((ctx.path("select", "scores.csv"), "select"));
    needed.push((ctx.path("sweep", "sweep.json"), "sweep"));
    needed.push((ctx.path("sweep", "curve.csv"), "sweep"));
    require(ctx, &needed)?;

    let sel_path = ctx.path("select", "selection.json");
    let selection: SelectionRecord = read_json(&sel_path)?;
    check_fresh(ctx, &sel_path, &selection.provenance)?;
    let sweep_path = ctx.path("sweep", "sweep.json");
    let sweep: SweepRecord = read_json(&sweep_path)?;
    check_fresh(ctx, &sweep_path, &sweep.provenance)?;

    let returns_path = ctx.path("returns", "returns.json");
    if !returns_path.is_file() || read_json::<ReturnsRecord>(&returns_path)?.provenance.config_hash != ctx.cfg.hash {
        note("return levels missing; computing them");
        returns(ctx)?;
    }
    let returns_rec: ReturnsRecord = read_json(&returns_path)?;
    let dec_path = ctx.path("decompose", "decomposition.json");
    if !dec_path.is_file() || read_json::<DecompositionRecord>(&dec_path)?.provenance.config_hash != ctx.cfg.hash {
        note("decomposition missing; computing it");
        decompose(ctx, None, 1.0)?;
    }
    let dec: DecompositionRecord = read_json(&dec_path)?;

    let dir = ctx.stage_dir("report")?;
    let mut outputs = Vec::new();

    // return levels per model
    let levels_csv = ctx.path("returns", "return_levels.csv");
    let mut rdr = csv::Reader::from_path(&levels_csv)?;
    let mut by_model: Vec<(String, Vec<(f64, f64)>, Vec<(f64, f64)>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (model, t, mean, map): (String, f64, f64, f64) =
            (rec[0].to_string(), rec[1].parse()?, rec[3].parse()?, rec[7].parse()?);
        if by_model.last().map(|m| m.0 != model).unwrap_or(true) {
            by_model.push((model.clone(), Vec::new(), Vec::new()));
        }
        let m = by_model.last_mut().unwrap();
        m.1.push((t, mean));
        m.2.push((t, map));
    }
    let mut series = Vec::new();
    for (model, mean, map) in &by_model {
        series.push(Series::line(format!("{model} mean"), mean.clone()));
        if *model == selection.winner {
            series.push(Series::line(format!("{model} MAP"), map.clone()).dashed());
        }
    }
    let rl_svg = dir.join("return_levels.svg");
    write_text(
        &rl_svg,
        &Chart {
            title: format!("Return levels in {}", returns_rec.reference_year),
            x_label: "return period (years)".into(),
            y_label: "annual maximum intensity (mm/hr)".into(),
            series,
            log_x: true,
            ..Chart::default()
        }
        .to_svg(),
    )?;
    outputs.push(rl_svg);

    let cum = &dec.result.cumulative;
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(cum.iter().enumerate().map(|(k, c)| ((k + 1) as f64, *c)));
    let dec_svg = dir.join("decomposition.svg");
    write_text(
        &dec_svg,
        &Chart {
            title: format!("Cumulative uncertainty: {}", dec.stage_order.join(" > ")),
            x_label: "stages included".into(),
            y_label: "variance of lifetime reliability".into(),
            series: vec![Series::line("cumulative", pts)],
            hlines: vec![(dec.result.total, "total".into())],
            ..Chart::default()
        }
        .to_svg(),
    )?;
    outputs.push(dec_svg);

    let target = sweep.target;
    let lines: Vec<(f64, String)> = {
        let mut years: Vec<usize> = sweep.curve.cell_lifetimes.clone();
        years.sort();
        years.dedup();
        years
            .iter()
            .map(|y| (target.lifetime_target(*y), format!("target, {y}-yr life")))
            .collect()
    };
    let sf_svg = dir.join("safety_factor.svg");
    let mut svg = sweep.curve.to_svg(None);
    if !lines.is_empty() {
        // re-render with every lifetime's target line
        let mut chart = Chart {
            title: "Lifetime reliability vs safety factor".into(),
            x_label: "safety factor on design diameter".into(),
            y_label: "lifetime hydraulic reliability".into(),
            top_label: "relative cost factor".into(),
            hlines: lines,
            ..Chart::default()
        };
        chart.series.push(Series::line("worst case", sweep.curve.points.iter().map(|p| (p.sf, p.worst_reliability)).collect()));
        chart.series.push(Series::line("mean", sweep.curve.points.iter().map(|p| (p.sf, p.mean_reliability)).collect()).dashed());
        for (name, w) in sweep.curve.per_first_stage_worst() {
            chart.series.push(Series::line(name, sweep.curve.factors().into_iter().zip(w).collect()).thin());
        }
        chart.top_ticks = sweep
            .curve
            .points
            .iter()
            .step_by((sweep.curve.points.len() / 6).max(1))
            .map(|p| (p.sf, format!("{:.2}", p.cost_factor)))
            .collect();
        svg = chart.to_svg();
    }
    write_text(&sf_svg, &svg)?;
    outputs.push(sf_svg);

    let mut md = String::new();
    md.push_str(&format!("# Run summary: {}\n\n", ctx.cfg.config.station.id));
    md.push_str(&format!("- seed: {}\n- config hash: {}\n\n", ctx.cfg.seed, ctx.cfg.hash));
    md.push_str("## Model selection\n\n| rank | model | DIC | AIC |\n|---|---|---|---|\n");
    for r in &selection.ranking {
        match &r.score {
            Some(s) => md.push_str(&format!("| {} | {} | {:.3} | {:.3} |\n", r.rank, r.model_id, s.dic, s.aic)),
            None => md.push_str(&format!("| {} | {} | failed | {} |\n", r.rank, r.model_id, r.error.as_deref().unwrap_or(""))),
        }
    }
    md.push_str(&format!("\nSelected: **{}**\n\n", selection.winner));
    if let Some(z) = returns_rec.stationary_design_level {
        md.push_str(&format!("## Return periods\n\nStationary design level: {z:.4} mm/hr\n\n"));
        for (id, rp) in &returns_rec.nonstationary_return_periods {
            md.push_str(&format!("- under {id} in {}: recurs every {rp:.1} years\n", returns_rec.reference_year));
        }
        md.push('\n');
    }
    md.push_str("## Uncertainty decomposition\n\n| stage | share |\n|---|---|\n");
    for (n, s) in dec.result.stage_names.iter().zip(&dec.result.shares) {
        md.push_str(&format!("| {n} | {s:.4} |\n"));
    }
    md.push_str(&format!("\nTotal variance: {:.6e}\n\n## Safety factor\n\n", dec.result.total));
    if let Some(b) = &sweep.curve.baseline {
        md.push_str(&format!(
            "Design intensity {:.4} mm/hr gives a baseline diameter of {:.4} m.\n\n",
            b.design_intensity, b.baseline_diameter
        ));
    }
    match (&sweep.solution, &sweep.solution_error) {
        (Some(s), _) => md.push_str(&format!(
            "Minimal safety factor ({:?}): **{:.2}** (bracket {:.2}..{:.2})\n",
            s.robustness, s.sf, s.bracket.0, s.bracket.1
        )),
        (None, Some(e)) => md.push_str(&format!("No safety factor in the sweep met the target: {e}\n")),
        _ => {}
    }
    if let Some(a) = &sweep.alternate {
        md.push_str(&format!("Minimal safety factor ({:?}): {:.2}\n", a.robustness, a.sf));
    }
    if sweep.placeholder_costs {
        md.push_str("\nCost factors come from the built-in placeholder table.\n");
    }
    let md_path = dir.join("summary.md");
    write_text(&md_path, &md)?;
    outputs.push(md_path);
    note(format!("report written to {}", dir.display()));
    ctx.record("report", &outputs)
}
