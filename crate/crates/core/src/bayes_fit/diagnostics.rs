//! Advisory convergence diagnostics for a single chain.

use crate::stats::mean;

/// Effective sample size from Geyer's initial positive sequence of
/// autocorrelation pair sums.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| -> f64 {
        let s: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum();
        s / n as f64 / c0
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = autocorr(lag) + autocorr(lag + 1);
        if pair <= 0.0 {
            break;
        }
        // monotone sequence estimator
        pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

/// Variance of a chain mean from non-overlapping batch means.
fn batch_mean_variance(x: &[f64]) -> f64 {
    let n = x.len();
    let b = ((n as f64).sqrt().floor() as usize).max(1);
    let k = n / b;
    if k < 2 {
        let m = mean(x);
        return x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 * n as f64);
    }
    let means: Vec<f64> = (0..k).map(|i| mean(&x[i * b..(i + 1) * b])).collect();
    let mm = mean(&means);
    means.iter().map(|v| (v - mm).powi(2)).sum::<f64>() / ((k - 1) as f64 * k as f64)
}

/// Geweke z-score comparing the first 10% and last 50% of the chain.
pub fn geweke_z(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 20 {
        return 0.0;
    }
    let a = &x[..n / 10];
    let b = &x[n / 2..];
    let var = batch_mean_variance(a) + batch_mean_variance(b);
    if var <= 0.0 {
        return 0.0;
    }
    (mean(a) - mean(b)) / var.sqrt()
}
