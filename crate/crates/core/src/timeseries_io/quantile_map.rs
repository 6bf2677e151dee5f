//! Empirical quantile mapping of model-derived annual maxima onto observed
//! annual maxima.

use serde::{Deserialize, Serialize};

use super::{AnnualMaximaSeries, YearRange};
use crate::error::{Error, Result};

/// Minimum number of common overlap years needed to build the mapping.
pub const MIN_OVERLAP_YEARS: usize = 20;

/// Floor applied to corrected values that would otherwise be non-positive.
const POSITIVE_FLOOR: f64 = 1e-6;

/// Sorted sample with a piecewise-linear CDF in fractional order-statistic
/// index space. Both directions extrapolate linearly past the end points
/// using the slope of the outermost segment.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalQuantiles {
    sorted: Vec<f64>,
}

impl EmpiricalQuantiles {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidSeries("need at least 2 values for an empirical CDF".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalQuantiles { sorted })
    }

    fn last_index(&self) -> f64 {
        (self.sorted.len() - 1) as f64
    }

    /// Non-exceedance probability on the plotting positions `i / (n - 1)`.
    /// Values beyond the sample range map outside [0, 1].
    pub fn cdf(&self, x: f64) -> f64 {
        self.rank(x) / self.last_index()
    }

    /// Inverse of [`cdf`](Self::cdf).
    pub fn quantile(&self, p: f64) -> f64 {
        self.value_at(p * self.last_index())
    }

    fn rank(&self, x: f64) -> f64 {
        let s = &self.sorted;
        let n = s.len();
        // segment for extrapolation: first/last pair with distinct values
        let lo_seg = s.iter().position(|v| *v > s[0]).map(|j| (j - 1, j));
        let hi_seg = s
            .iter()
            .rposition(|v| *v < s[n - 1])
            .map(|j| (j, j + 1));
        if x < s[0] {
            return match lo_seg {
                Some((i, j)) => i as f64 + (x - s[i]) / (s[j] - s[i]),
                None => 0.0,
            };
        }
        if x > s[n - 1] {
            return match hi_seg {
                Some((i, j)) => j as f64 + (x - s[j]) / (s[j] - s[i]),
                None => self.last_index(),
            };
        }
        // first index with value >= x and last index with value <= x
        let first_ge = s.partition_point(|v| *v < x);
        let last_le = s.partition_point(|v| *v <= x);
        if first_ge < last_le {
            // x hits a run of ties: centre of the run
            return (first_ge + last_le - 1) as f64 / 2.0;
        }
        let (i, j) = (first_ge - 1, first_ge);
        i as f64 + (x - s[i]) / (s[j] - s[i])
    }

    fn value_at(&self, r: f64) -> f64 {
        let s = &self.sorted;
        let n = s.len();
        let (i, j) = if r <= 0.0 {
            (0, 1)
        } else if r >= self.last_index() {
            (n - 2, n - 1)
        } else {
            let i = r.floor() as usize;
            (i, (i + 1).min(n - 1))
        };
        if i == j {
            return s[i];
        }
        s[i] + (r - i as f64) * (s[j] - s[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCorrection {
    pub series: AnnualMaximaSeries,
    /// Years whose corrected value was non-positive and got clipped.
    pub clipped_years: Vec<i32>,
    pub overlap_years: usize,
}

/// Map every model value through the model's empirical CDF over the overlap
/// and then the observed inverse empirical CDF over the same years.
pub fn quantile_map_bias_correct(
    model_series: &AnnualMaximaSeries,
    obs_series: &AnnualMaximaSeries,
    overlap: YearRange,
) -> Result<BiasCorrection> {
    let mut model_overlap = Vec::new();
    let mut obs_overlap = Vec::new();
    for (year, m) in model_series.years.iter().zip(&model_series.intensities) {
        if !overlap.contains(*year) {
            continue;
        }
        if let Some(o) = obs_series.value_in(*year) {
            model_overlap.push(*m);
            obs_overlap.push(o);
        }
    }
    if model_overlap.len() < MIN_OVERLAP_YEARS {
        return Err(Error::OverlapTooShort {
            found: model_overlap.len(),
            required: MIN_OVERLAP_YEARS,
        });
    }
    let model_cdf = EmpiricalQuantiles::new(&model_overlap)?;
    let obs_cdf = EmpiricalQuantiles::new(&obs_overlap)?;

    let mut clipped_years = Vec::new();
    let intensities = model_series
        .years
        .iter()
        .zip(&model_series.intensities)
        .map(|(year, m)| {
            let v = obs_cdf.quantile(model_cdf.cdf(*m));
            if v > 0.0 {
                v
            } else {
                clipped_years.push(*year);
                POSITIVE_FLOOR
            }
        })
        .collect();
    Ok(BiasCorrection {
        series: AnnualMaximaSeries::new(
            model_series.station_id.clone(),
            model_series.years.clone(),
            intensities,
        )?,
        clipped_years,
        overlap_years: model_overlap.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(start: i32, vals: &[f64]) -> AnnualMaximaSeries {
        let years = (start..start + vals.len() as i32).collect();
        AnnualMaximaSeries::new("s", years, vals.to_vec()).unwrap()
    }

    fn synthetic20() -> Vec<f64> {
        (0..20).map(|i| 2.0 + ((i * 37) % 20) as f64 * 0.35 + (i as f64).sin().abs()).collect()
    }

    /// Brute force: count-based fractional rank in the model sample, then the
    /// value at that rank among sorted observations.
    fn brute_force_map(model: &[f64], obs: &[f64], x: f64) -> f64 {
        let mut m = model.to_vec();
        m.sort_by(f64::total_cmp);
        let mut o = obs.to_vec();
        o.sort_by(f64::total_cmp);
        let below = m.iter().filter(|v| **v < x).count();
        let equal = m.iter().filter(|v| **v == x).count();
        assert!(equal >= 1, "oracle only handles sample points");
        let rank = below as f64 + (equal as f64 - 1.0) / 2.0;
        let lo = rank.floor() as usize;
        let frac = rank - lo as f64;
        if frac == 0.0 {
            o[lo]
        } else {
            o[lo] + frac * (o[lo + 1] - o[lo])
        }
    }

    #[test]
    fn identity_when_model_equals_obs() {
        let vals = synthetic20();
        let s = series(1980, &vals);
        let out = quantile_map_bias_correct(&s, &s, YearRange::new(1980, 1999).unwrap()).unwrap();
        for (a, b) in out.series.intensities.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(out.clipped_years.is_empty());
    }

    #[test]
    fn shifted_model_maps_back_to_obs() {
        let obs = synthetic20();
        let model: Vec<f64> = obs.iter().map(|v| v + 1.0).collect();
        let out = quantile_map_bias_correct(
            &series(1980, &model),
            &series(1980, &obs),
            YearRange::new(1980, 1999).unwrap(),
        )
        .unwrap();
        for (i, corrected) in out.series.intensities.iter().enumerate() {
            let oracle = brute_force_map(&model, &obs, model[i]);
            assert!((corrected - oracle).abs() < 1e-12);
            assert!((corrected - obs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_too_short() {
        let vals = synthetic20();
        let s = series(1980, &vals);
        assert!(matches!(
            quantile_map_bias_correct(&s, &s, YearRange::new(1980, 1984).unwrap()),
            Err(Error::OverlapTooShort { found: 5, .. })
        ));
    }

    #[test]
    fn tails_extrapolate_linearly_and_clip() {
        let obs: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let mut model: Vec<f64> = (0..20).map(|i| 10.0 + 2.0 * i as f64).collect();
        // projection years beyond the overlap
        model.push(60.0);
        model.push(0.5);
        let out = quantile_map_bias_correct(
            &series(1980, &model),
            &series(1980, &obs),
            YearRange::new(1980, 1999).unwrap(),
        )
        .unwrap();
        // 60 is 6 model steps past the top; obs step is 1
        assert!((out.series.intensities[20] - 26.0).abs() < 1e-12);
        // 0.5 lies 4.75 steps below the model minimum -> 1 - 4.75 < 0 -> clipped
        assert_eq!(out.clipped_years, vec![2001]);
        assert_eq!(out.series.intensities[21], POSITIVE_FLOOR);
    }

    #[test]
    fn ties_in_model_sample() {
        let q = EmpiricalQuantiles::new(&[1.0, 2.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(q.rank(2.0), 2.0);
        assert_eq!(q.rank(1.5), 0.5);
        assert_eq!(q.quantile(1.0), 3.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn obs_equal_model_is_identity(vals in proptest::collection::vec(0.1f64..100.0, 20..60)) {
                let s = series(1900, &vals);
                let end = 1900 + vals.len() as i32 - 1;
                let out = quantile_map_bias_correct(&s, &s, YearRange::new(1900, end).unwrap()).unwrap();
                for (a, b) in out.series.intensities.iter().zip(&vals) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }
    }
}
