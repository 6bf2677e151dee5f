//! Safety factors on the standard design diameter: baseline sizing, the
//! reliability-versus-SF curve over the scenario grid, cost factors, and the
//! smallest factor that meets a target.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::{peak_flow, required_diameter, PipeSpec};
use crate::plot::{Chart, Series};
use crate::uncertainty::{build_grid, ScenarioInputs, Stage};

/// Bisection stops once the bracket is this narrow.
pub const SF_RESOLUTION: f64 = 0.01;
/// Smallest safety factor accepted in a sweep.
pub const MIN_SF: f64 = 0.5;

/// Default sweep: 1.0, 1.1, ..., 2.5.
pub fn default_sf_grid() -> Vec<f64> {
    (0..=15).map(|i| 1.0 + i as f64 / 10.0).collect()
}

/// Pipe sized for the design-standard intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignBaseline {
    pub design_intensity: f64,
    pub design_return_period: f64,
    pub baseline_diameter: f64,
    /// Template whose diameter is replaced by `baseline_diameter`.
    pub spec: PipeSpec,
}

impl DesignBaseline {
    pub fn new(design_intensity: f64, design_return_period: f64, template: &PipeSpec) -> Result<Self> {
        if !(design_return_period > 1.0) {
            return Err(Error::ReturnPeriodTooShort(design_return_period));
        }
        let d = baseline_diameter(design_intensity, template)?;
        Ok(DesignBaseline {
            design_intensity,
            design_return_period,
            baseline_diameter: d,
            spec: template.with_diameter(d),
        })
    }

    pub fn pipe_at(&self, sf: f64) -> PipeSpec {
        self.spec.with_diameter(sf * self.baseline_diameter)
    }
}

/// `required_diameter(peak_flow(C, I, A), n, S)`; the template diameter is ignored.
pub fn baseline_diameter(design_intensity: f64, template: &PipeSpec) -> Result<f64> {
    let q = peak_flow(template.runoff_c, design_intensity, template.area)?;
    required_diameter(q, template.manning_n, template.slope)
}

/// Piecewise-linear relative cost by diameter ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    /// (sf, cost) knots, strictly ascending in sf.
    pub knots: Vec<(f64, f64)>,
}

impl CostTable {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.len() < 2 {
            return Err(Error::InvalidParameter("cost table needs at least two knots".into()));
        }
        if knots.iter().any(|(s, c)| !s.is_finite() || !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidParameter("cost knots must be finite and nonnegative".into()));
        }
        for w in knots.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidParameter(format!("duplicate cost knot at sf = {}", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::InvalidParameter(format!(
                    "cost decreases between sf = {} and {}",
                    w[0].0, w[1].0
                )));
            }
        }
        let table = CostTable { knots };
        let at_one = table.interpolate(1.0).map_err(|_| {
            Error::InvalidParameter("cost table must cover sf = 1.0".into())
        })?;
        if (at_one - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("cost at sf = 1.0 must be 1.0, got {at_one}")));
        }
        Ok(table)
    }

    /// Illustrative values only, not taken from any published cost study.
    pub fn placeholder() -> Self {
        CostTable::new(vec![(0.5, 0.6), (1.0, 1.0), (1.5, 1.6), (2.0, 2.3), (2.5, 3.1), (3.0, 4.0)]).unwrap()
    }

    pub fn is_extrapolated(&self, sf: f64) -> bool {
        sf > self.knots.last().unwrap().0
    }

    fn interpolate(&self, sf: f64) -> Result<f64> {
        let first = self.knots[0];
        if sf < first.0 {
            return Err(Error::BelowCostTable { sf, first_knot: first.0 });
        }
        let n = self.knots.len();
        let seg = self
            .knots
            .windows(2)
            .position(|w| sf <= w[1].0)
            .unwrap_or(n - 2);
        let (a, b) = (self.knots[seg], self.knots[seg + 1]);
        if sf == a.0 {
            return Ok(a.1);
        }
        if sf == b.0 {
            return Ok(b.1);
        }
        Ok(a.1 + (b.1 - a.1) * (sf - a.0) / (b.0 - a.0))
    }
}

/// Relative cost at `sf`; above the last knot the last segment is extended.
pub fn cost_factor(sf: f64, table: &CostTable) -> Result<f64> {
    table.interpolate(sf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Robustness {
    #[default]
    WorstCase,
    Mean,
}

/// What "meets the target" means for a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Lifetime reliability must reach this value in every cell.
    Fixed(f64),
    /// A cell with lifetime L must reach (1 - 1/T)^L.
    Standard { return_period: f64 },
}

impl Target {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Target::Fixed(r) if !(r > 0.0 && r < 1.0) => Err(Error::ProbabilityOutOfRange(r)),
            Target::Standard { return_period } if !(return_period > 1.0) => {
                Err(Error::ReturnPeriodTooShort(return_period))
            }
            _ => Ok(()),
        }
    }

    /// Lifetime reliability required of a cell with the given service life.
    pub fn lifetime_target(&self, years: usize) -> f64 {
        match *self {
            Target::Fixed(r) => r,
            Target::Standard { return_period } => (1.0 - 1.0 / return_period).powi(years as i32),
        }
    }

    /// Value compared against `threshold()` for one cell. Standard targets
    /// compare annualized reliability so cells of different lifetimes pool.
    fn score(&self, reliability: f64, years: usize) -> f64 {
        match self {
            Target::Fixed(_) => reliability,
            Target::Standard { .. } => reliability.max(0.0).powf(1.0 / years as f64),
        }
    }

    fn threshold(&self) -> f64 {
        match *self {
            Target::Fixed(r) => r,
            Target::Standard { return_period } => 1.0 - 1.0 / return_period,
        }
    }

    pub fn statistic(&self, cells: &[f64], lifetimes: &[usize], robustness: Robustness) -> f64 {
        let scores = cells.iter().zip(lifetimes).map(|(r, l)| self.score(*r, *l));
        match robustness {
            Robustness::WorstCase => scores.fold(f64::INFINITY, f64::min),
            Robustness::Mean => scores.sum::<f64>() / cells.len() as f64,
        }
    }

    pub fn is_met(&self, cells: &[f64], lifetimes: &[usize], robustness: Robustness) -> bool {
        self.statistic(cells, lifetimes, robustness) >= self.threshold()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sf: f64,
    pub diameter: f64,
    pub cost_factor: f64,
    pub worst_reliability: f64,
    pub mean_reliability: f64,
    /// Reliability of every scenario cell, in grid order.
    pub cells: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyFactorCurve {
    pub baseline: Option<DesignBaseline>,
    pub stages: Vec<Stage>,
    /// Service life of each cell, in grid order.
    pub cell_lifetimes: Vec<usize>,
    pub points: Vec<CurvePoint>,
    pub warnings: Vec<String>,
}

/// Cell reliabilities as a function of safety factor.
pub trait GridEvaluator {
    fn evaluate(&self, sf: f64) -> Result<Vec<f64>>;
}

impl<F: Fn(f64) -> Result<Vec<f64>>> GridEvaluator for F {
    fn evaluate(&self, sf: f64) -> Result<Vec<f64>> {
        self(sf)
    }
}

/// Evaluator that rebuilds the full scenario grid at `sf × baseline`.
pub struct ScenarioEvaluator<'a> {
    pub baseline: &'a DesignBaseline,
    pub inputs: &'a ScenarioInputs,
}

impl GridEvaluator for ScenarioEvaluator<'_> {
    fn evaluate(&self, sf: f64) -> Result<Vec<f64>> {
        let wrap = |e| Error::SafetyFactor { sf, source: Box::new(e) };
        let grid = build_grid(self.inputs, &self.baseline.pipe_at(sf)).map_err(wrap)?;
        grid.reliabilities().map_err(wrap)
    }
}

/// Service life of every cell of a climate × runoff × lifetime grid.
pub fn cell_lifetimes(inputs: &ScenarioInputs) -> Vec<usize> {
    let per_block: Vec<usize> = inputs.lifetimes.iter().map(|l| l.years).collect();
    let blocks = inputs.climate.len() * inputs.runoff.len();
    per_block.iter().copied().cycle().take(blocks * per_block.len()).collect()
}

fn validate_sf_grid(sf_grid: &[f64]) -> Result<()> {
    if sf_grid.is_empty() {
        return Err(Error::InvalidParameter("empty safety-factor grid".into()));
    }
    if sf_grid.iter().any(|s| !(s.is_finite() && *s >= MIN_SF)) {
        return Err(Error::InvalidParameter(format!("safety factors must be finite and at least {MIN_SF}")));
    }
    if sf_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("safety-factor grid must be strictly ascending".into()));
    }
    Ok(())
}

impl SafetyFactorCurve {
    /// Evaluate `evaluator` at every grid factor.
    pub fn from_evaluator(
        sf_grid: &[f64],
        stages: Vec<Stage>,
        cell_lifetimes: Vec<usize>,
        cost: &CostTable,
        evaluator: &dyn GridEvaluator,
        baseline: Option<DesignBaseline>,
    ) -> Result<Self> {
        validate_sf_grid(sf_grid)?;
        let mut points = Vec::with_capacity(sf_grid.len());
        let mut warnings = Vec::new();
        for &sf in sf_grid {
            let cells = evaluator.evaluate(sf)?;
            if cells.len() != cell_lifetimes.len() {
                return Err(Error::InvalidGrid(format!(
                    "evaluator returned {} cells, expected {}",
                    cells.len(),
                    cell_lifetimes.len()
                )));
            }
            let cost_factor = cost_factor(sf, cost)?;
            if cost.is_extrapolated(sf) {
                warnings.push(format!("cost factor at sf = {sf} extrapolated beyond the last knot"));
            }
            let worst = cells.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = cells.iter().sum::<f64>() / cells.len() as f64;
            points.push(CurvePoint {
                sf,
                diameter: baseline.map(|b| sf * b.baseline_diameter).unwrap_or(f64::NAN),
                cost_factor,
                worst_reliability: worst,
                mean_reliability: mean,
                cells,
            });
        }
        Ok(SafetyFactorCurve {
            baseline,
            stages,
            cell_lifetimes,
            points,
            warnings,
        })
    }

    pub fn factors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sf).collect()
    }

    /// Worst-case reliability over each option of the first stage (per
    /// climate model on the standard grid).
    pub fn per_first_stage_worst(&self) -> Vec<(String, Vec<f64>)> {
        let Some(stage) = self.stages.first() else {
            return Vec::new();
        };
        let n = stage.options.len();
        let block = self.cell_lifetimes.len() / n.max(1);
        stage
            .options
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let worst = self
                    .points
                    .iter()
                    .map(|p| p.cells[i * block..(i + 1) * block].iter().copied().fold(f64::INFINITY, f64::min))
                    .collect();
                (name.clone(), worst)
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sf", "cost_factor", "worst_reliability", "mean_reliability"])?;
        for p in &self.points {
            w.write_record([
                p.sf.to_string(),
                p.cost_factor.to_string(),
                p.worst_reliability.to_string(),
                p.mean_reliability.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Plot-ready columns.
    pub fn plot_json(&self, solution: Option<&SfSolution>) -> serde_json::Value {
        let col = |f: fn(&CurvePoint) -> f64| self.points.iter().map(f).collect::<Vec<f64>>();
        let per: serde_json::Map<String, serde_json::Value> = self
            .per_first_stage_worst()
            .into_iter()
            .map(|(k, v)| (k, serde_json::json!(v)))
            .collect();
        serde_json::json!({
            "sf": col(|p| p.sf),
            "diameter": col(|p| p.diameter),
            "cost_factor": col(|p| p.cost_factor),
            "worst_reliability": col(|p| p.worst_reliability),
            "mean_reliability": col(|p| p.mean_reliability),
            "per_climate_worst": per,
            "baseline": self.baseline,
            "solution": solution,
            "warnings": self.warnings,
        })
    }

    pub fn to_svg(&self, target_line: Option<f64>) -> String {
        let mut series = vec![
            Series::line("worst case", self.points.iter().map(|p| (p.sf, p.worst_reliability)).collect()),
            Series::line("mean", self.points.iter().map(|p| (p.sf, p.mean_reliability)).collect()).dashed(),
        ];
        for (name, worst) in self.per_first_stage_worst() {
            series.push(Series::line(name, self.factors().into_iter().zip(worst).collect()).thin());
        }
        let top_ticks = self
            .points
            .iter()
            .step_by((self.points.len() / 6).max(1))
            .map(|p| (p.sf, format!("{:.2}", p.cost_factor)))
            .collect();
        Chart {
            title: "Lifetime reliability vs safety factor".into(),
            x_label: "safety factor on design diameter".into(),
            y_label: "lifetime hydraulic reliability".into(),
            top_label: "relative cost factor".into(),
            top_ticks,
            series,
            hlines: target_line.map(|t| vec![(t, "target".to_string())]).unwrap_or_default(),
            y_range: None,
            log_x: false,
        }
        .to_svg()
    }
}

/// Full sweep over the scenario grid at each safety factor.
pub fn sweep(baseline: &DesignBaseline, inputs: &ScenarioInputs, sf_grid: &[f64], cost: &CostTable) -> Result<SafetyFactorCurve> {
    let evaluator = ScenarioEvaluator { baseline, inputs };
    let mut curve = SafetyFactorCurve::from_evaluator(
        sf_grid,
        inputs.stages(),
        cell_lifetimes(inputs),
        cost,
        &evaluator,
        Some(*baseline),
    )?;
    // held-projection notices are the same at every factor
    if let Ok(g) = build_grid(inputs, &baseline.spec) {
        curve.warnings.splice(0..0, g.warnings);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfSolution {
    pub sf: f64,
    /// Grid factors enclosing the answer; equal when the first factor suffices.
    pub bracket: (f64, f64),
    pub target: Target,
    pub robustness: Robustness,
    pub statistic: f64,
    /// Extra factors evaluated during bisection, in order.
    pub refinements: Vec<f64>,
}

/// Smallest factor whose robustness statistic meets `target`, refined by
/// bisection between the first feasible grid factor and its predecessor.
pub fn min_sf_for_target(
    curve: &SafetyFactorCurve,
    target: Target,
    robustness: Robustness,
    evaluator: &dyn GridEvaluator,
) -> Result<SfSolution> {
    target.validate()?;
    let life = &curve.cell_lifetimes;
    let meets = |cells: &[f64]| target.is_met(cells, life, robustness);
    let Some(j) = curve.points.iter().position(|p| meets(&p.cells)) else {
        return Err(Error::TargetUnreachable {
            target: target.threshold(),
            max_sf: curve.points.last().map(|p| p.sf).unwrap_or(f64::NAN),
        });
    };
    let hi_point = &curve.points[j];
    if j == 0 {
        return Ok(SfSolution {
            sf: hi_point.sf,
            bracket: (hi_point.sf, hi_point.sf),
            target,
            robustness,
            statistic: target.statistic(&hi_point.cells, life, robustness),
            refinements: Vec::new(),
        });
    }
    let bracket = (curve.points[j - 1].sf, hi_point.sf);
    let (mut lo, mut hi) = bracket;
    let mut hi_stat = target.statistic(&hi_point.cells, life, robustness);
    let mut refinements = Vec::new();
    while hi - lo > SF_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        refinements.push(mid);
        let cells = evaluator.evaluate(mid)?;
        if meets(&cells) {
            hi = mid;
            hi_stat = target.statistic(&cells, life, robustness);
        } else {
            lo = mid;
        }
    }
    Ok(SfSolution {
        sf: hi,
        bracket,
        target,
        robustness,
        statistic: hi_stat,
        refinements,
    })
}
