use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::{quadrature_moments, ParametricModel, WeightedMoments};
use crate::error::{Error, Result};
use crate::numerics::chisq::power_kernel;
use crate::numerics::quadrature::{integrate_vec_with_breaks, QuadOptions};
use crate::numerics::{Bounds, IntegrationDomain};

/// Weibull law with unit scale, `f_θ(x) = θ x^{θ−1} e^{−x^θ}` on (0, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeibullShape;

impl WeibullShape {
    /// `∫ f_θ^{1+β} = θ^β Γ(1+β−β/θ) / (1+β)^{1+β−β/θ}`.
    pub fn density_power_mass(theta: f64, beta: f64) -> f64 {
        let a = 1.0 + beta - beta / theta;
        (beta * theta.ln() + ln_gamma(a) - a * (1.0 + beta).ln()).exp()
    }
}

impl ParametricModel for WeibullShape {
    fn name(&self) -> &str {
        "weibull-shape"
    }

    fn dim_param(&self) -> usize {
        1
    }

    fn dim_obs(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["shape".into()]
    }

    fn support(&self) -> Vec<IntegrationDomain> {
        vec![IntegrationDomain::positive_half_line()]
    }

    fn bounds(&self) -> Bounds {
        Bounds {
            lower: vec![0.05],
            upper: vec![50.0],
        }
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (t, x) = (theta[0], x[0]);
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let lx = x.ln();
        t.ln() + (t - 1.0) * lx - (t * lx).exp()
    }

    fn score(&self, theta: &[f64], x: &[f64]) -> DVector<f64> {
        let (t, x) = (theta[0], x[0]);
        let lx = x.ln();
        DVector::from_element(1, 1.0 / t + (1.0 - (t * lx).exp()) * lx)
    }

    fn info(&self, theta: &[f64], x: &[f64]) -> DMatrix<f64> {
        let (t, x) = (theta[0], x[0]);
        let lx = x.ln();
        DMatrix::from_element(1, 1, 1.0 / (t * t) + (t * lx).exp() * lx * lx)
    }

    fn default_init(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let logs: Vec<f64> = data.iter().map(|x| x[0].ln()).collect();
        let sd = super::normal::sample_sd(&logs);
        let t = if sd > 0.0 {
            std::f64::consts::PI / (6f64.sqrt() * sd)
        } else {
            1.0
        };
        vec![t.clamp(0.1, 20.0)]
    }

    fn quadrature_breaks(&self, _theta: &[f64]) -> Vec<f64> {
        vec![1.0, 3.0]
    }

    fn density_power_integral(&self, theta: &[f64], beta: f64) -> Result<f64> {
        Ok(Self::density_power_mass(theta[0], beta))
    }

    fn weighted_moments(&self, theta: &[f64], gamma: f64) -> Result<WeightedMoments> {
        if (theta[0] - 1.0) * (1.0 + gamma) <= -1.0 {
            return Err(Error::Numerical(format!(
                "weighted integrals diverge for shape {} at exponent {}",
                theta[0],
                1.0 + gamma
            )));
        }
        let mut m = quadrature_moments(self, theta, gamma, QuadOptions::default())?;
        m.mass = Self::density_power_mass(theta[0], gamma);
        Ok(m)
    }
}

/// `C_{α,β} = ∫₀^∞ ((1−y) log y)^α e^{−(1+β)y} dy`.
pub fn c_integral(alpha: u32, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("beta must be non-negative, got {beta}")));
    }
    let v = integrate_vec_with_breaks(
        |y, out| out[0] = ((1.0 - y) * y.ln()).powi(alpha as i32) * (-(1.0 + beta) * y).exp(),
        1,
        IntegrationDomain::positive_half_line(),
        &[1.0],
        QuadOptions {
            rel_tol: 1e-12,
            ..Default::default()
        },
    )?;
    Ok(v[0])
}

/// `η_β = 1/(1+β) + C_{2,β} + 2C_{1,β}`, the unit-shape value of
/// `∫ u² f^{1+β}`.
pub fn eta_beta(beta: f64) -> Result<f64> {
    Ok(1.0 / (1.0 + beta) + c_integral(2, beta)? + 2.0 * c_integral(1, beta)?)
}

/// Closed forms for the shape test at θ₀ = 1 that take `ξ_β = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullClosedForms {
    pub beta: f64,
    pub eta: f64,
    pub eta_double: f64,
}

impl WeibullClosedForms {
    pub fn new(beta: f64) -> Result<Self> {
        Ok(WeibullClosedForms {
            beta,
            eta: eta_beta(beta)?,
            eta_double: eta_beta(2.0 * beta)?,
        })
    }

    /// `η_{2β}/η_β²`
    pub fn variance(&self) -> f64 {
        self.eta_double / (self.eta * self.eta)
    }

    /// Contiguous noncentrality `d²η_β²/η_{2β}`.
    pub fn noncentrality(&self, d: f64) -> f64 {
        d * d / self.variance()
    }

    fn kernel(&self, x: f64) -> f64 {
        (1.0 + (1.0 - x) * x.ln()) * (-self.beta * x).exp()
    }

    /// `(1/η_β)(1+(1−x)log x)e^{−βx}`
    pub fn influence(&self, x: f64) -> f64 {
        self.kernel(x) / self.eta
    }

    /// `(2/η_{2β})(1+(1−x)log x)² e^{−2βx}`
    pub fn second_order_influence(&self, x: f64) -> f64 {
        2.0 * self.kernel(x).powi(2) / self.eta_double
    }

    /// `K₁*(d²η_β²/η_{2β}) (dη_β/η_{2β}) (1+(1−x)log x) e^{−βx}`
    pub fn power_influence(&self, x: f64, d: f64, q: f64) -> Result<f64> {
        let k = power_kernel(self.noncentrality(d), 1, q)?;
        Ok(k * d * self.eta / self.eta_double * self.kernel(x))
    }
}
