use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::gaussian::{GaussianCache, GaussianParts};
use super::{ParametricModel, WeightedMoments};
use crate::error::{Error, Result};
use crate::numerics::{Bounds, IntegrationDomain};

/// `N(μ, σ²)` with σ known; θ = (μ).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalLocation {
    sigma: f64,
}

impl NormalLocation {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("known sigma must be positive, got {sigma}")));
        }
        Ok(NormalLocation { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn cache(&self, theta: &[f64]) -> GaussianCache {
        GaussianCache::new(GaussianParts {
            mean: DVector::from_element(1, theta[0]),
            cov: DMatrix::from_element(1, 1, self.sigma * self.sigma),
            dmean: vec![DVector::from_element(1, 1.0)],
            dcov: vec![DMatrix::zeros(1, 1)],
            d2cov: vec![vec![DMatrix::zeros(1, 1)]],
        })
        .expect("known sigma is positive")
    }
}

impl ParametricModel for NormalLocation {
    fn name(&self) -> &str {
        "normal-loc"
    }

    fn dim_param(&self) -> usize {
        1
    }

    fn dim_obs(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn support(&self) -> Vec<IntegrationDomain> {
        vec![IntegrationDomain::real_line()]
    }

    fn bounds(&self) -> Bounds {
        Bounds::unbounded(1)
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        let z = (x[0] - theta[0]) / self.sigma;
        -0.5 * (2.0 * PI).ln() - self.sigma.ln() - 0.5 * z * z
    }

    fn score(&self, theta: &[f64], x: &[f64]) -> DVector<f64> {
        DVector::from_element(1, (x[0] - theta[0]) / (self.sigma * self.sigma))
    }

    fn info(&self, _theta: &[f64], _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 / (self.sigma * self.sigma))
    }

    fn default_init(&self, data: &[Vec<f64>]) -> Vec<f64> {
        vec![median(data.iter().map(|x| x[0]).collect())]
    }

    fn weighted_moments(&self, theta: &[f64], gamma: f64) -> Result<WeightedMoments> {
        Ok(self.cache(theta).weighted_moments(gamma))
    }

    fn density_power_integral(&self, _theta: &[f64], beta: f64) -> Result<f64> {
        Ok(normal_power_mass(self.sigma * self.sigma, beta))
    }

    fn quadrature_breaks(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0]]
    }
}

/// `N(μ, σ²)` with θ = (μ, σ).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormalLocationScale;

impl NormalLocationScale {
    fn cache(&self, theta: &[f64]) -> Result<GaussianCache> {
        let s = theta[1];
        GaussianCache::new(GaussianParts {
            mean: DVector::from_element(1, theta[0]),
            cov: DMatrix::from_element(1, 1, s * s),
            dmean: vec![DVector::from_element(1, 1.0), DVector::zeros(1)],
            dcov: vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 2.0 * s)],
            d2cov: vec![
                vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
                vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 2.0)],
            ],
        })
    }
}

impl ParametricModel for NormalLocationScale {
    fn name(&self) -> &str {
        "normal-loc-scale"
    }

    fn dim_param(&self) -> usize {
        2
    }

    fn dim_obs(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into(), "sigma".into()]
    }

    fn support(&self) -> Vec<IntegrationDomain> {
        vec![IntegrationDomain::real_line()]
    }

    fn bounds(&self) -> Bounds {
        Bounds {
            lower: vec![f64::NEG_INFINITY, 1e-10],
            upper: vec![f64::INFINITY, f64::INFINITY],
        }
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        let z = (x[0] - theta[0]) / theta[1];
        -0.5 * (2.0 * PI).ln() - theta[1].ln() - 0.5 * z * z
    }

    fn score(&self, theta: &[f64], x: &[f64]) -> DVector<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let z = x[0] - mu;
        DVector::from_vec(vec![z / (s * s), -1.0 / s + z * z / (s * s * s)])
    }

    fn info(&self, theta: &[f64], x: &[f64]) -> DMatrix<f64> {
        let (mu, s) = (theta[0], theta[1]);
        let z = x[0] - mu;
        let s2 = s * s;
        let off = 2.0 * z / (s2 * s);
        DMatrix::from_row_slice(2, 2, &[1.0 / s2, off, off, -1.0 / s2 + 3.0 * z * z / (s2 * s2)])
    }

    fn default_init(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let xs: Vec<f64> = data.iter().map(|x| x[0]).collect();
        let med = median(xs.clone());
        let mad = median(xs.iter().map(|x| (x - med).abs()).collect()) * 1.482_602_218_505_602;
        let sd = if mad > 0.0 { mad } else { sample_sd(&xs).max(1e-3) };
        vec![med, sd]
    }

    fn weighted_moments(&self, theta: &[f64], gamma: f64) -> Result<WeightedMoments> {
        Ok(self.cache(theta)?.weighted_moments(gamma))
    }

    fn density_power_integral(&self, theta: &[f64], beta: f64) -> Result<f64> {
        Ok(normal_power_mass(theta[1] * theta[1], beta))
    }

    fn quadrature_breaks(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0]]
    }
}

/// `∫ φ_{σ²}^{1+β} = (2πσ²)^{−β/2}(1+β)^{−1/2}`
pub(crate) fn normal_power_mass(var: f64, beta: f64) -> f64 {
    (2.0 * PI * var).powf(-beta / 2.0) / (1.0 + beta).sqrt()
}

pub(crate) fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}
