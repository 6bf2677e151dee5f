//! Component-wise Gaussian random-walk Metropolis over an arbitrary log
//! target. One iteration updates every coordinate once, in order.

use rand::Rng;
use rand_distr::StandardNormal;

/// Acceptance rate the burn-in adaptation steers toward.
pub const TARGET_ACCEPTANCE: f64 = 0.3;

/// Iterations per adaptation batch.
const ADAPT_BATCH: usize = 50;

/// Smallest relative step the adaptation may shrink a scale to.
const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ChainSettings {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub adapt: bool,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Retained states, `dim` values per row, row-major.
    pub states: Vec<f64>,
    pub log_targets: Vec<f64>,
    pub dim: usize,
    /// Post-burn-in acceptance fraction per coordinate.
    pub acceptance: Vec<f64>,
    /// Scales used after burn-in.
    pub scales: Vec<f64>,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.log_targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.states[i * self.dim + j]).collect()
    }
}

/// Run one chain from `init`, whose log target must be finite.
///
/// During burn-in (when `adapt` is set) each coordinate's log step size moves
/// by `γ_b (rate_b - TARGET_ACCEPTANCE)` after every batch `b` of
/// `ADAPT_BATCH` iterations, with `γ_b = min(1, 3 / sqrt(b))`. Scales are
/// frozen from the first retained iteration on.
pub fn run_chain<F, R>(
    log_target: F,
    init: &[f64],
    initial_scales: &[f64],
    settings: &ChainSettings,
    rng: &mut R,
) -> ChainOutput
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let dim = init.len();
    assert_eq!(initial_scales.len(), dim);
    let mut state = init.to_vec();
    let mut current = log_target(&state);
    debug_assert!(current.is_finite());
    let mut scales = initial_scales.to_vec();

    let retained = settings.n_iterations - settings.burn_in;
    let mut states = Vec::with_capacity(retained * dim);
    let mut log_targets = Vec::with_capacity(retained);
    let mut accepted_post = vec![0usize; dim];
    let mut accepted_batch = vec![0usize; dim];
    let mut batch = 0usize;

    for iter in 0..settings.n_iterations {
        let burning = iter < settings.burn_in;
        for j in 0..dim {
            let old = state[j];
            let step: f64 = rng.sample(StandardNormal);
            state[j] = old + scales[j] * step;
            let proposed = log_target(&state);
            let u: f64 = rng.random();
            // proposals with -inf (or NaN) target are always rejected
            if proposed.is_finite() && u.ln() < proposed - current {
                current = proposed;
                if burning {
                    accepted_batch[j] += 1;
                } else {
                    accepted_post[j] += 1;
                }
            } else {
                state[j] = old;
            }
        }
        if burning && settings.adapt && (iter + 1) % ADAPT_BATCH == 0 {
            batch += 1;
            let gamma = (3.0 / (batch as f64).sqrt()).min(1.0);
            for j in 0..dim {
                let rate = accepted_batch[j] as f64 / ADAPT_BATCH as f64;
                let floor = MIN_SCALE * (1.0 + state[j].abs());
                scales[j] = (scales[j] * (gamma * (rate - TARGET_ACCEPTANCE)).exp()).max(floor);
                accepted_batch[j] = 0;
            }
        }
        if !burning {
            states.extend_from_slice(&state);
            log_targets.push(current);
        }
    }

    let acceptance = accepted_post
        .iter()
        .map(|a| if retained == 0 { 0.0 } else { *a as f64 / retained as f64 })
        .collect();
    ChainOutput {
        states,
        log_targets,
        dim,
        acceptance,
        scales,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::{mean, sample_sd};

    /// Correlated bivariate Gaussian with known marginals.
    fn bivariate(mx: f64, my: f64, sx: f64, sy: f64, rho: f64) -> impl Fn(&[f64]) -> f64 {
        move |v: &[f64]| {
            let zx = (v[0] - mx) / sx;
            let zy = (v[1] - my) / sy;
            -(zx * zx - 2.0 * rho * zx * zy + zy * zy) / (2.0 * (1.0 - rho * rho))
        }
    }

    /// Standard error of a chain mean from non-overlapping batch means.
    fn batch_se(x: &[f64]) -> f64 {
        let b = 200;
        let k = x.len() / b;
        let means: Vec<f64> = (0..k).map(|i| mean(&x[i * b..(i + 1) * b])).collect();
        sample_sd(&means) / (k as f64).sqrt()
    }

    #[test]
    fn recovers_gaussian_moments() {
        let (mx, my, sx, sy, rho) = (1.5, -2.0, 0.7, 2.0, 0.5);
        let settings = ChainSettings {
            n_iterations: 120_000,
            burn_in: 20_000,
            adapt: true,
        };
        let mut rng = rng_from_seed(11);
        let out = run_chain(bivariate(mx, my, sx, sy, rho), &[0.0, 0.0], &[1.0, 1.0], &settings, &mut rng);
        let x = out.column(0);
        let y = out.column(1);
        assert!((mean(&x) - mx).abs() < 3.0 * batch_se(&x));
        assert!((mean(&y) - my).abs() < 3.0 * batch_se(&y));
        // variance of the sample variance, inflated by the mean's autocorrelation factor
        for (v, s) in [(&x, sx), (&y, sy)] {
            let sq: Vec<f64> = v.iter().map(|a| (a - mean(v)).powi(2)).collect();
            let var_hat = mean(&sq);
            assert!((var_hat - s * s).abs() < 3.0 * batch_se(&sq), "{var_hat} vs {}", s * s);
        }
        for a in &out.acceptance {
            assert!((0.15..0.55).contains(a), "acceptance {a}");
        }
    }

    #[test]
    fn scales_frozen_after_burn_in() {
        let settings = ChainSettings {
            n_iterations: 2_000,
            burn_in: 1_000,
            adapt: true,
        };
        let mut rng = rng_from_seed(3);
        let out = run_chain(bivariate(0.0, 0.0, 1.0, 1.0, 0.0), &[0.0, 0.0], &[10.0, 0.01], &settings, &mut rng);
        // rerun with the adapted scales and no adaptation: identical tail behaviour is not
        // guaranteed, but scales themselves must not move outside burn-in
        let settings2 = ChainSettings {
            adapt: false,
            ..settings.clone()
        };
        let mut rng = rng_from_seed(3);
        let out2 = run_chain(bivariate(0.0, 0.0, 1.0, 1.0, 0.0), &[0.0, 0.0], &out.scales, &settings2, &mut rng);
        assert_eq!(out2.scales, out.scales);
        assert_ne!(out.scales, vec![10.0, 0.01]);
    }

    #[test]
    fn improper_region_never_entered() {
        let target = |v: &[f64]| if v[0] > 0.0 { -v[0] } else { f64::NEG_INFINITY };
        let settings = ChainSettings {
            n_iterations: 5_000,
            burn_in: 500,
            adapt: true,
        };
        let mut rng = rng_from_seed(5);
        let out = run_chain(target, &[1.0], &[1.0], &settings, &mut rng);
        assert!(out.column(0).iter().all(|v| *v > 0.0));
        assert!(out.log_targets.iter().all(|v| v.is_finite()));
        assert_eq!(out.len(), 4_500);
    }
}
