//! Deep-uncertainty scenario grid and cumulative (sequential) variance
//! decomposition.
//!
//! For stages χ_1..χ_K the cumulative uncertainty up to stage k is the
//! population variance of reliabilities over the first k stages with the
//! remaining stages held fixed, averaged over every fixing of those remaining
//! stages. Stage k's share is the increment from k - 1 to k, with the empty
//! prefix at zero, so the shares add up to the variance of the whole grid.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes_fit::PosteriorEnsemble;
use crate::error::{Error, Result};
use crate::hydraulics::{critical_intensity, PipeSpec};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::timeseries_io::CovariateSeries;

/// Tolerance for the monotone-cumulative check, relative to total variance.
const MONOTONE_TOL: f64 = 1e-12;

/// Placeholder runoff coefficients used when none are configured.
pub const DEFAULT_RUNOFF_OPTIONS: [f64; 4] = [0.5, 0.7, 0.8, 0.9];
/// Placeholder service lives (years) used when none are configured.
pub const DEFAULT_LIFETIMES: [usize; 3] = [25, 50, 75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub options: Vec<String>,
}

/// Reliability of one scenario with its posterior spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub reliability: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Full factorial over the stages, stored row-major with the last stage
/// varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub stages: Vec<Stage>,
    pub cells: Vec<Option<CellValue>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ScenarioGrid {
    pub fn empty(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() || stages.iter().any(|s| s.options.is_empty()) {
            return Err(Error::InvalidGrid("every stage needs at least one option".into()));
        }
        let n = stages.iter().map(|s| s.options.len()).product();
        Ok(ScenarioGrid {
            stages,
            cells: vec![None; n],
            warnings: Vec::new(),
        })
    }

    /// Grid with the given reliabilities (row-major) and degenerate spreads.
    pub fn from_values(stages: Vec<Stage>, values: &[f64]) -> Result<Self> {
        let mut grid = Self::empty(stages)?;
        if values.len() != grid.cells.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} cells",
                values.len(),
                grid.cells.len()
            )));
        }
        grid.cells = values
            .iter()
            .map(|v| {
                Some(CellValue {
                    reliability: *v,
                    q05: *v,
                    q95: *v,
                })
            })
            .collect();
        Ok(grid)
    }

    /// Grid of anonymous stages with the given option counts.
    pub fn with_shape(shape: &[usize], values: &[f64]) -> Result<Self> {
        let stages = shape
            .iter()
            .enumerate()
            .map(|(k, n)| Stage {
                name: format!("stage{}", k + 1),
                options: (0..*n).map(|i| i.to_string()).collect(),
            })
            .collect();
        Self::from_values(stages, values)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.options.len()).collect()
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn index(&self, coords: &[usize]) -> Result<usize> {
        let shape = self.shape();
        if coords.len() != shape.len() {
            return Err(Error::InvalidGrid(format!(
                "{} coordinates for {} stages",
                coords.len(),
                shape.len()
            )));
        }
        let mut idx = 0;
        for (c, n) in coords.iter().zip(&shape) {
            if c >= n {
                return Err(Error::InvalidGrid(format!("option index {c} out of range (stage has {n})")));
            }
            idx = idx * n + c;
        }
        Ok(idx)
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut coords = vec![0; shape.len()];
        for k in (0..shape.len()).rev() {
            coords[k] = index % shape[k];
            index /= shape[k];
        }
        coords
    }

    pub fn set(&mut self, coords: &[usize], value: CellValue) -> Result<()> {
        let i = self.index(coords)?;
        self.cells[i] = Some(value);
        Ok(())
    }

    /// All reliabilities, failing on the first unpopulated cell.
    pub fn reliabilities(&self) -> Result<Vec<f64>> {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.map(|c| c.reliability)
                    .ok_or_else(|| Error::InvalidGrid(format!("cell {:?} is not populated", self.coords(i))))
            })
            .collect()
    }

    /// Same grid with stages reordered; `order[k]` names the old stage that
    /// becomes stage k.
    pub fn permute_stages(&self, order: &[usize]) -> Result<ScenarioGrid> {
        let k = self.n_stages();
        let mut seen = vec![false; k];
        if order.len() != k || order.iter().any(|o| *o >= k || std::mem::replace(&mut seen[*o], true)) {
            return Err(Error::InvalidGrid(format!("{order:?} is not a permutation of {k} stages")));
        }
        let stages: Vec<Stage> = order.iter().map(|o| self.stages[*o].clone()).collect();
        let mut out = ScenarioGrid::empty(stages)?;
        out.warnings = self.warnings.clone();
        for (i, cell) in self.cells.iter().enumerate() {
            let old = self.coords(i);
            let new: Vec<usize> = order.iter().map(|o| old[*o]).collect();
            let j = out.index(&new)?;
            out.cells[j] = *cell;
        }
        Ok(out)
    }

    /// Long-form CSV: one column per stage, then `reliability`.
    pub fn write_long_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.stages.iter().map(|s| s.name.clone()).collect();
        header.push("reliability".into());
        w.write_record(&header)?;
        for (i, cell) in self.cells.iter().enumerate() {
            let mut row: Vec<String> = self
                .coords(i)
                .iter()
                .zip(&self.stages)
                .map(|(c, s)| s.options[*c].clone())
                .collect();
            row.push(cell.map(|c| c.reliability.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| crate::error::Error::io(path, e))?;
        Ok(())
    }
}

/// Population variance (divisor n).
pub fn variance(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("variance of an empty list".into()));
    }
    if values.iter().all(|v| *v == values[0]) {
        return Ok(0.0);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

/// Variance over stages 1..=k with stages k+1..K pinned to `fixed_tail`.
pub fn conditional_cumulative(grid: &ScenarioGrid, k: usize, fixed_tail: &[usize]) -> Result<f64> {
    let values = grid.reliabilities()?;
    conditional_on(&grid.shape(), &values, k, fixed_tail)
}

fn conditional_on(shape: &[usize], values: &[f64], k: usize, fixed_tail: &[usize]) -> Result<f64> {
    let n_stages = shape.len();
    if k > n_stages {
        return Err(Error::InvalidGrid(format!("stage index {k} beyond {n_stages} stages")));
    }
    if fixed_tail.len() != n_stages - k {
        return Err(Error::InvalidGrid(format!(
            "tail of length {} for k = {k} of {n_stages} stages",
            fixed_tail.len()
        )));
    }
    for (t, n) in fixed_tail.iter().zip(&shape[k..]) {
        if t >= n {
            return Err(Error::InvalidGrid(format!("option index {t} out of range (stage has {n})")));
        }
    }
    // row-major: the tail occupies the low-order digits
    let tail_size: usize = shape[k..].iter().product();
    let mut tail_offset = 0;
    for (t, n) in fixed_tail.iter().zip(&shape[k..]) {
        tail_offset = tail_offset * n + t;
    }
    let prefix_size: usize = shape[..k].iter().product();
    let subset: Vec<f64> = (0..prefix_size)
        .map(|p| values[p * tail_size + tail_offset])
        .collect();
    variance(&subset)
}

/// Average of the conditional cumulative uncertainties over every tail.
pub fn marginal_cumulative(grid: &ScenarioGrid, k: usize) -> Result<f64> {
    let values = grid.reliabilities()?;
    marginal_on(&grid.shape(), &values, k)
}

fn marginal_on(shape: &[usize], values: &[f64], k: usize) -> Result<f64> {
    if k > shape.len() {
        return Err(Error::InvalidGrid(format!("stage index {k} beyond {} stages", shape.len())));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let tail_shape = &shape[k..];
    let tail_count: usize = tail_shape.iter().product();
    let mut tail = vec![0usize; tail_shape.len()];
    let mut sum = 0.0;
    for t in 0..tail_count {
        let mut rem = t;
        for j in (0..tail_shape.len()).rev() {
            tail[j] = rem % tail_shape[j];
            rem /= tail_shape[j];
        }
        sum += conditional_on(shape, values, k, &tail)?;
    }
    Ok(sum / tail_count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub stage_names: Vec<String>,
    /// Marginal cumulative uncertainty up to stage k = 1..K.
    pub cumulative: Vec<f64>,
    pub stage_uncertainty: Vec<f64>,
    pub total: f64,
    /// Stage uncertainty over total; all zero when the grid is constant.
    pub shares: Vec<f64>,
    pub degenerate: bool,
    pub monotone: bool,
}

pub fn stage_uncertainty(grid: &ScenarioGrid) -> Result<DecompositionResult> {
    let values = grid.reliabilities()?;
    let shape = grid.shape();
    let cumulative: Vec<f64> = (1..=shape.len())
        .map(|k| marginal_on(&shape, &values, k))
        .collect::<Result<_>>()?;
    let mut stage = Vec::with_capacity(shape.len());
    let mut prev = 0.0;
    for c in &cumulative {
        stage.push(c - prev);
        prev = *c;
    }
    let total = variance(&values)?;
    let degenerate = total == 0.0;
    let shares = if degenerate {
        vec![0.0; shape.len()]
    } else {
        stage.iter().map(|s| s / total).collect()
    };
    let tol = MONOTONE_TOL * total.max(f64::MIN_POSITIVE);
    let monotone = stage.iter().all(|s| *s >= -tol);
    Ok(DecompositionResult {
        stage_names: grid.stages.iter().map(|s| s.name.clone()).collect(),
        cumulative,
        stage_uncertainty: stage,
        total,
        shares,
        degenerate,
        monotone,
    })
}

/// One climate realization: a fitted ensemble and the standardized covariate
/// projection that drives it over the service life.
#[derive(Debug, Clone)]
pub struct ClimateOption {
    pub name: String,
    pub ensemble: PosteriorEnsemble,
    pub projection: CovariateSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeOption {
    pub start_year: i32,
    pub years: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioInputs {
    pub climate: Vec<ClimateOption>,
    pub runoff: Vec<f64>,
    pub lifetimes: Vec<LifetimeOption>,
}

impl ScenarioInputs {
    pub fn stages(&self) -> Vec<Stage> {
        vec![
            Stage {
                name: "climate".into(),
                options: self.climate.iter().map(|c| c.name.clone()).collect(),
            },
            Stage {
                name: "runoff".into(),
                options: self.runoff.iter().map(|c| c.to_string()).collect(),
            },
            Stage {
                name: "lifetime".into(),
                options: self.lifetimes.iter().map(|l| l.years.to_string()).collect(),
            },
        ]
    }

    pub fn n_cells(&self) -> usize {
        self.climate.len() * self.runoff.len() * self.lifetimes.len()
    }
}

/// Annual covariate values covering every lifetime window of one climate option.
struct SpanPath {
    first_year: i32,
    values: Vec<f64>,
    held: Vec<i32>,
}

fn span_path(option: &ClimateOption, lifetimes: &[LifetimeOption]) -> Result<SpanPath> {
    let first_year = lifetimes.iter().map(|l| l.start_year).min().unwrap();
    let end = lifetimes
        .iter()
        .map(|l| l.start_year + l.years as i32)
        .max()
        .unwrap();
    let (values, held) = option.projection.path(first_year, (end - first_year) as usize)?;
    Ok(SpanPath {
        first_year,
        values,
        held,
    })
}

/// Evaluate posterior-mean lifetime reliability for every (climate, runoff,
/// lifetime) cell. Cells are computed in parallel; each cell's reduction runs
/// in sample order so results do not depend on the worker count.
pub fn build_grid(inputs: &ScenarioInputs, spec: &PipeSpec) -> Result<ScenarioGrid> {
    if inputs.climate.is_empty() || inputs.runoff.is_empty() || inputs.lifetimes.is_empty() {
        return Err(Error::InvalidGrid("every stage needs at least one option".into()));
    }
    if let Some(l) = inputs.lifetimes.iter().find(|l| l.years == 0) {
        return Err(Error::InvalidGrid(format!("lifetime starting {} has zero years", l.start_year)));
    }
    let mut grid = ScenarioGrid::empty(inputs.stages())?;
    let paths: Vec<SpanPath> = inputs
        .climate
        .iter()
        .enumerate()
        .map(|(i, c)| {
            span_path(c, &inputs.lifetimes).map_err(|e| Error::Cell {
                cell: vec![i],
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    for (c, p) in inputs.climate.iter().zip(&paths) {
        if !p.held.is_empty() {
            grid.warnings.push(format!(
                "climate {}: projection ends before {}; last value held for {} year(s)",
                c.name,
                p.held[0],
                p.held.len()
            ));
        }
    }

    let pairs: Vec<(usize, usize)> = (0..inputs.climate.len())
        .flat_map(|i| (0..inputs.runoff.len()).map(move |j| (i, j)))
        .collect();
    let blocks: Vec<Result<Vec<CellValue>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let cell_err = |l: usize, e: Error| Error::Cell {
                cell: vec![i, j, l],
                source: Box::new(e),
            };
            let option = &inputs.climate[i];
            if option.ensemble.is_empty() {
                return Err(cell_err(0, Error::EmptyEnsemble));
            }
            let i_crit = critical_intensity(&spec.with_runoff(inputs.runoff[j])).map_err(|e| cell_err(0, e))?;
            Ok(evaluate_block(&option.ensemble, &paths[i], &inputs.lifetimes, i_crit))
        })
        .collect();
    for ((i, j), block) in pairs.into_iter().zip(blocks) {
        for (l, value) in block?.into_iter().enumerate() {
            grid.set(&[i, j, l], value)?;
        }
    }
    Ok(grid)
}

fn evaluate_block(ens: &PosteriorEnsemble, path: &SpanPath, lifetimes: &[LifetimeOption], i_crit: f64) -> Vec<CellValue> {
    let mut survive = vec![0.0; path.values.len()];
    let mut per_sample: Vec<Vec<f64>> = vec![Vec::with_capacity(ens.len()); lifetimes.len()];
    for params in &ens.samples {
        for (s, t) in survive.iter_mut().zip(&path.values) {
            *s = 1.0 - crate::gev::gev_sf(i_crit, &params.at(*t));
        }
        for (l, life) in lifetimes.iter().enumerate() {
            let start = (life.start_year - path.first_year) as usize;
            let r: f64 = survive[start..start + life.years].iter().product();
            per_sample[l].push(r);
        }
    }
    per_sample
        .iter()
        .map(|rs| {
            let sorted = sorted_copy(rs);
            CellValue {
                reliability: rs.iter().sum::<f64>() / rs.len() as f64,
                q05: quantile_sorted(&sorted, 0.05),
                q95: quantile_sorted(&sorted, 0.95),
            }
        })
        .collect()
}
