//! Generalized Extreme Value distribution with a covariate-dependent
//! location.
//!
//! ```text
//! F(x) = exp(-(1 + ξ (x - μ) / σ)^(-1/ξ))     for 1 + ξ (x - μ) / σ > 0
//! F(x) = exp(-exp(-(x - μ) / σ))              ξ = 0 (Gumbel)
//! μ    = μ0 (1 + a_μ T)
//! ```
//!
//! Support violations never raise: the density is 0 (log-density -inf) and
//! the CDF is 0 below a lower bound or 1 above an upper bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shapes closer to zero than this use the Gumbel limit.
pub const GUMBEL_THRESHOLD: f64 = 1e-8;

/// Parameter vector of the (possibly nonstationary) model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu0: f64,
    pub a_mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GevParams {
    pub fn stationary(mu: f64, sigma: f64, xi: f64) -> Self {
        GevParams {
            mu0: mu,
            a_mu: 0.0,
            sigma,
            xi,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.sigma > 0.0
            && self.mu0.is_finite()
            && self.a_mu.is_finite()
            && self.sigma.is_finite()
            && self.xi.is_finite()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.mu0, self.a_mu, self.sigma, self.xi]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        GevParams {
            mu0: v[0],
            a_mu: v[1],
            sigma: v[2],
            xi: v[3],
        }
    }

    /// Distribution for the year whose standardized covariate is `t_cov`.
    pub fn at(&self, t_cov: f64) -> GevAt {
        GevAt {
            mu: effective_location(self, t_cov),
            sigma: self.sigma,
            xi: self.xi,
        }
    }
}

/// A single-year GEV distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevAt {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GevAt {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() || !xi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "GEV(mu={mu}, sigma={sigma}, xi={xi}) needs finite values and sigma > 0"
            )));
        }
        Ok(GevAt { mu, sigma, xi })
    }

    fn is_gumbel(&self) -> bool {
        self.xi.abs() < GUMBEL_THRESHOLD
    }

    /// Lower end of the support (finite only for ξ > 0).
    pub fn lower_bound(&self) -> f64 {
        if !self.is_gumbel() && self.xi > 0.0 {
            self.mu - self.sigma / self.xi
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Upper end of the support (finite only for ξ < 0).
    pub fn upper_bound(&self) -> f64 {
        if !self.is_gumbel() && self.xi < 0.0 {
            self.mu - self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }
}

/// μ = μ0 (1 + a_μ T).
pub fn effective_location(params: &GevParams, t_cov: f64) -> f64 {
    params.mu0 * (1.0 + params.a_mu * t_cov)
}

/// Log-density; -inf outside the support or for an invalid scale.
pub fn gev_log_pdf(x: f64, d: &GevAt) -> f64 {
    if !(d.sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let z = (x - d.mu) / d.sigma;
    let value = if d.is_gumbel() {
        -d.sigma.ln() - z - (-z).exp()
    } else {
        let arg = d.xi * z;
        if !(arg > -1.0) {
            return f64::NEG_INFINITY;
        }
        // ln(1 + ξz) / ξ, stable for small ξ
        let log_t = arg.ln_1p();
        -d.sigma.ln() - (1.0 + 1.0 / d.xi) * log_t - (-log_t / d.xi).exp()
    };
    if value.is_nan() {
        f64::NEG_INFINITY
    } else {
        value
    }
}

pub fn gev_pdf(x: f64, d: &GevAt) -> f64 {
    gev_log_pdf(x, d).exp()
}

pub fn gev_cdf(x: f64, d: &GevAt) -> f64 {
    let z = (x - d.mu) / d.sigma;
    if d.is_gumbel() {
        return (-(-z).exp()).exp();
    }
    let arg = d.xi * z;
    if !(arg > -1.0) {
        // outside the support: below the lower bound (ξ > 0) or above the upper (ξ < 0)
        return if d.xi > 0.0 { 0.0 } else { 1.0 };
    }
    (-(-arg.ln_1p() / d.xi).exp()).exp()
}

/// Upper-tail probability 1 - F(x), computed without cancellation for large x.
pub fn gev_sf(x: f64, d: &GevAt) -> f64 {
    let z = (x - d.mu) / d.sigma;
    let y = if d.is_gumbel() {
        (-z).exp()
    } else {
        let arg = d.xi * z;
        if !(arg > -1.0) {
            return if d.xi > 0.0 { 1.0 } else { 0.0 };
        }
        (-arg.ln_1p() / d.xi).exp()
    };
    // 1 - exp(-y)
    -(-y).exp_m1()
}

pub fn gev_quantile(p: f64, d: &GevAt) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    let y = -p.ln();
    Ok(if d.is_gumbel() {
        d.mu - d.sigma * y.ln()
    } else {
        // μ - (σ/ξ)(1 - y^(-ξ)), with y^(-ξ) - 1 = expm1(-ξ ln y)
        d.mu + d.sigma / d.xi * (-d.xi * y.ln()).exp_m1()
    })
}

/// Inverse-CDF draw.
pub fn gev_random<R: rand::Rng + ?Sized>(d: &GevAt, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            if let Ok(x) = gev_quantile(u, d) {
                return x;
            }
        }
    }
}

/// One draw per covariate value from the model at that value.
pub fn draw_series<R: rand::Rng + ?Sized>(params: &GevParams, covariates: &[f64], rng: &mut R) -> Vec<f64> {
    covariates.iter().map(|t| gev_random(&params.at(*t), rng)).collect()
}

/// Level exceeded with annual probability 1/T in the year with covariate `t_cov`.
pub fn return_level(params: &GevParams, t_cov: f64, period: f64) -> Result<f64> {
    if !(period > 1.0) {
        return Err(Error::ReturnPeriodTooShort(period));
    }
    gev_quantile(1.0 - 1.0 / period, &params.at(t_cov))
}

/// 1 / (1 - F(z)) in the year with covariate `t_cov`.
pub fn return_period_of_level(z: f64, params: &GevParams, t_cov: f64) -> Result<f64> {
    let d = params.at(t_cov);
    let exceed = gev_sf(z, &d);
    if !(exceed > 0.0) {
        return Err(Error::InfiniteReturnPeriod);
    }
    Ok(1.0 / exceed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(mu: f64, sigma: f64, xi: f64) -> GevAt {
        GevAt::new(mu, sigma, xi).unwrap()
    }

    /// Adaptive Simpson quadrature, used as an independent check on the CDF.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn effective_location_examples() {
        assert_eq!(effective_location(&GevParams { mu0: 5.0, a_mu: 0.0, sigma: 1.0, xi: 0.0 }, 3.7), 5.0);
        let p = GevParams { mu0: 5.0, a_mu: 0.1, sigma: 1.0, xi: 0.0 };
        assert!((effective_location(&p, 1.0) - 5.5).abs() < 1e-15);
        assert!((effective_location(&p, -1.0) - 4.5).abs() < 1e-15);
    }

    #[test]
    fn gumbel_pdf_at_location() {
        let v = gev_pdf(3.0, &d(3.0, 2.0, 0.0));
        assert!((v - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.183940).abs() < 1e-6);
    }

    #[test]
    fn pdf_zero_outside_support() {
        assert_eq!(gev_pdf(-2.5, &d(0.0, 1.0, 0.5)), 0.0);
        assert_eq!(gev_pdf(-2.0, &d(0.0, 1.0, 0.5)), 0.0);
        assert_eq!(gev_pdf(3.0, &d(0.0, 1.0, -0.5)), 0.0);
        assert_eq!(gev_log_pdf(1.0, &GevAt { mu: 0.0, sigma: -1.0, xi: 0.0 }), f64::NEG_INFINITY);
    }

    #[test]
    fn pdf_matches_cdf_derivative() {
        let dist = d(10.0, 3.0, 0.2);
        let h = 1e-5;
        let fd = (gev_cdf(12.0 + h, &dist) - gev_cdf(12.0 - h, &dist)) / (2.0 * h);
        assert!((gev_pdf(12.0, &dist) - fd).abs() < 1e-6);
    }

    #[test]
    fn cdf_examples() {
        assert!((gev_cdf(4.0, &d(4.0, 1.5, 0.0)) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(gev_cdf(1e300, &d(0.0, 1.0, 0.0)), 1.0);
        assert_eq!(gev_cdf(1e300, &d(0.0, 1.0, 0.3)), 1.0);
        assert_eq!(gev_cdf(-5.0, &d(0.0, 1.0, 0.5)), 0.0);
        assert_eq!(gev_cdf(5.0, &d(0.0, 1.0, -0.5)), 1.0);
    }

    #[test]
    fn cdf_matches_quadrature_of_pdf() {
        let dist = d(0.0, 1.0, 0.1);
        // lower support bound is -10
        let integral = simpson(&|x| gev_pdf(x, &dist), -10.0, 2.0, 1e-12);
        assert!((integral - gev_cdf(2.0, &dist)).abs() < 1e-6);
    }

    #[test]
    fn quantile_examples() {
        let g = d(0.0, 1.0, 0.0);
        let q = gev_quantile(0.99, &g).unwrap();
        assert!((q - 4.600149226).abs() < 1e-6);
        assert!((gev_cdf(q, &g) - 0.99).abs() < 1e-12);
        let q = gev_quantile((-1.0f64).exp(), &d(7.0, 3.0, 0.0)).unwrap();
        assert!((q - 7.0).abs() < 1e-12);
        assert!(gev_quantile(0.0, &g).is_err());
        assert!(gev_quantile(1.0, &g).is_err());
        assert!(gev_quantile(f64::NAN, &g).is_err());
    }

    #[test]
    fn return_level_properties() {
        let p = GevParams::stationary(10.0, 2.0, 0.1);
        let r100 = return_level(&p, 0.0, 100.0).unwrap();
        assert_eq!(r100, gev_quantile(0.99, &p.at(0.0)).unwrap());
        assert_eq!(r100, return_level(&p, 2.5, 100.0).unwrap());
        assert!(return_level(&p, 0.0, 500.0).unwrap() > r100);
        assert!(matches!(return_level(&p, 0.0, 1.0), Err(Error::ReturnPeriodTooShort(_))));
        let ns = GevParams { a_mu: 0.2, ..p };
        assert!(return_level(&ns, 1.0, 100.0).unwrap() > return_level(&ns, 0.0, 100.0).unwrap());
    }

    #[test]
    fn return_period_inverts_return_level() {
        let p = GevParams { mu0: 10.0, a_mu: 0.15, sigma: 2.0, xi: 0.1 };
        let z = return_level(&p, 0.7, 100.0).unwrap();
        assert!((return_period_of_level(z, &p, 0.7).unwrap() - 100.0).abs() < 1e-6);
    }

    #[test]
    fn trend_shortens_return_period() {
        let stationary = GevParams::stationary(10.0, 2.0, 0.1);
        let z = return_level(&stationary, 0.0, 100.0).unwrap();
        let trending = GevParams { a_mu: 0.1, ..stationary };
        let period = return_period_of_level(z, &trending, 1.5).unwrap();
        assert!(period < 100.0);
    }

    #[test]
    fn return_period_boundaries() {
        let frechet = GevParams::stationary(0.0, 1.0, 0.5);
        assert_eq!(return_period_of_level(-3.0, &frechet, 0.0).unwrap(), 1.0);
        let weibull = GevParams::stationary(0.0, 1.0, -0.5);
        assert!(matches!(
            return_period_of_level(2.0, &weibull, 0.0),
            Err(Error::InfiniteReturnPeriod)
        ));
    }

    #[test]
    fn support_bounds() {
        assert_eq!(d(0.0, 1.0, 0.5).lower_bound(), -2.0);
        assert_eq!(d(0.0, 1.0, -0.5).upper_bound(), 2.0);
        assert_eq!(d(0.0, 1.0, 0.0).upper_bound(), f64::INFINITY);
    }

    #[test]
    fn survival_complements_cdf() {
        for xi in [-0.3, 0.0, 0.3] {
            let dist = d(1.0, 2.0, xi);
            for x in [-2.0, 0.0, 1.0, 4.0, 7.5] {
                assert!((gev_sf(x, &dist) + gev_cdf(x, &dist) - 1.0).abs() < 1e-14);
            }
        }
    }
}
