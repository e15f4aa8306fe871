use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::gaussian::{GaussianCache, GaussianParts};
use super::normal::sample_sd;
use super::{ParametricModel, WeightedMoments};
use crate::error::{Error, Result};
use crate::numerics::chisq::power_kernel;
use crate::numerics::{Bounds, IntegrationDomain, SymmetricMatrix};

/// Bivariate normal with θ = (μ₁, μ₂, σ₁, σ₂, ρ).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BivariateNormal;

pub const RHO_BOUND: f64 = 0.999;

impl BivariateNormal {
    pub fn parts(theta: &[f64]) -> GaussianParts {
        let (m1, m2, s1, s2, r) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
        let m = |a: f64, b: f64, c: f64| DMatrix::from_row_slice(2, 2, &[a, b, b, c]);
        let z = DMatrix::zeros(2, 2);
        let e = |i: usize| {
            let mut v = DVector::zeros(2);
            v[i] = 1.0;
            v
        };
        GaussianParts {
            mean: DVector::from_vec(vec![m1, m2]),
            cov: m(s1 * s1, r * s1 * s2, s2 * s2),
            dmean: vec![e(0), e(1), DVector::zeros(2), DVector::zeros(2), DVector::zeros(2)],
            dcov: vec![
                z.clone(),
                z.clone(),
                m(2.0 * s1, r * s2, 0.0),
                m(0.0, r * s1, 2.0 * s2),
                m(0.0, s1 * s2, 0.0),
            ],
            d2cov: {
                let mut d2 = vec![vec![z.clone(); 5]; 5];
                d2[2][2] = m(2.0, 0.0, 0.0);
                d2[2][3] = m(0.0, r, 0.0);
                d2[3][2] = m(0.0, r, 0.0);
                d2[2][4] = m(0.0, s2, 0.0);
                d2[4][2] = m(0.0, s2, 0.0);
                d2[3][3] = m(0.0, 0.0, 2.0);
                d2[3][4] = m(0.0, s1, 0.0);
                d2[4][3] = m(0.0, s1, 0.0);
                d2
            },
        }
    }

    fn cache(theta: &[f64]) -> Result<GaussianCache> {
        GaussianCache::new(Self::parts(theta))
    }
}

impl ParametricModel for BivariateNormal {
    fn name(&self) -> &str {
        "bivariate-normal"
    }

    fn dim_param(&self) -> usize {
        5
    }

    fn dim_obs(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        ["mu1", "mu2", "sigma1", "sigma2", "rho"].map(String::from).to_vec()
    }

    fn support(&self) -> Vec<IntegrationDomain> {
        vec![IntegrationDomain::real_line(); 2]
    }

    fn bounds(&self) -> Bounds {
        Bounds {
            lower: vec![f64::NEG_INFINITY, f64::NEG_INFINITY, 1e-10, 1e-10, -RHO_BOUND],
            upper: vec![f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, RHO_BOUND],
        }
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (m1, m2, s1, s2, r) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
        let a = (x[0] - m1) / s1;
        let b = (x[1] - m2) / s2;
        let om = 1.0 - r * r;
        -(2.0 * PI).ln() - s1.ln() - s2.ln() - 0.5 * om.ln() - (a * a - 2.0 * r * a * b + b * b) / (2.0 * om)
    }

    fn log_densities(&self, theta: &[f64], data: &[Vec<f64>], out: &mut [f64]) {
        let (m1, m2, s1, s2, r) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
        let om = 1.0 - r * r;
        let c = -(2.0 * PI).ln() - s1.ln() - s2.ln() - 0.5 * om.ln();
        let h = 1.0 / (2.0 * om);
        for (o, x) in out.iter_mut().zip(data) {
            let a = (x[0] - m1) / s1;
            let b = (x[1] - m2) / s2;
            *o = c - (a * a - 2.0 * r * a * b + b * b) * h;
        }
    }

    fn score(&self, theta: &[f64], x: &[f64]) -> DVector<f64> {
        Self::cache(theta).map(|c| c.score(x)).unwrap_or_else(|_| DVector::from_element(5, f64::NAN))
    }

    fn info(&self, theta: &[f64], x: &[f64]) -> DMatrix<f64> {
        Self::cache(theta).map(|c| c.info(x)).unwrap_or_else(|_| DMatrix::from_element(5, 5, f64::NAN))
    }

    fn for_each_score_info(&self, theta: &[f64], data: &[Vec<f64>], f: &mut dyn FnMut(usize, DVector<f64>, DMatrix<f64>)) {
        match Self::cache(theta) {
            Ok(c) => {
                for (i, x) in data.iter().enumerate() {
                    f(i, c.score(x), c.info(x));
                }
            }
            Err(_) => {
                for i in 0..data.len() {
                    f(i, DVector::from_element(5, f64::NAN), DMatrix::from_element(5, 5, f64::NAN));
                }
            }
        }
    }

    fn default_init(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let n = data.len() as f64;
        let m1 = data.iter().map(|x| x[0]).sum::<f64>() / n;
        let m2 = data.iter().map(|x| x[1]).sum::<f64>() / n;
        let s1 = sample_sd(&data.iter().map(|x| x[0]).collect::<Vec<_>>()).max(1e-3);
        let s2 = sample_sd(&data.iter().map(|x| x[1]).collect::<Vec<_>>()).max(1e-3);
        let cov = data.iter().map(|x| (x[0] - m1) * (x[1] - m2)).sum::<f64>() / n;
        let r = (cov / (s1 * s2)).clamp(-0.95, 0.95);
        vec![m1, m2, s1, s2, r]
    }

    fn weighted_moments(&self, theta: &[f64], gamma: f64) -> Result<WeightedMoments> {
        Ok(Self::cache(theta)?.weighted_moments(gamma))
    }

    fn density_power_integral(&self, theta: &[f64], beta: f64) -> Result<f64> {
        let det_sqrt = theta[2] * theta[3] * (1.0 - theta[4] * theta[4]).sqrt();
        Ok((2.0 * PI * det_sqrt).powf(-beta) / (1.0 + beta))
    }
}

/// `(ζ_β, κ¹_β, κ²_β)` with `ζ_β = 1 + β²/(1+2β)`,
/// `κ¹_β = (β⁴+5β²+2)/(1+β²)²`, `κ²_β = β²(1−β²)/(1+β²)²`.
pub fn zeta_kappa(beta: f64) -> (f64, f64, f64) {
    let b2 = beta * beta;
    let zeta = 1.0 + b2 / (1.0 + 2.0 * beta);
    let den = (1.0 + b2).powi(2);
    (zeta, (b2 * b2 + 5.0 * b2 + 2.0) / den, b2 * (1.0 - b2) / den)
}

/// The block-diagonal closed form for `Σ_β(θ₀)` at ρ = 0, entries
/// `ζ^{3/2}σᵢ²` for the means, `ζ^{5/2}κ¹σᵢ²` and `ζ^{5/2}κ²σ₁σ₂` for the
/// scales, and `ζ^{5/2}` for ρ.
pub fn bivnormal_sigma_beta(theta0: &[f64], beta: f64) -> Result<SymmetricMatrix> {
    if theta0.len() != 5 {
        return Err(Error::Dimension("bivariate normal needs five parameters".into()));
    }
    if theta0[4] != 0.0 {
        return Err(Error::invalid("the closed form for Sigma_beta holds only at rho = 0"));
    }
    let (s1, s2) = (theta0[2], theta0[3]);
    let (z, k1, k2) = zeta_kappa(beta);
    let mut m = DMatrix::zeros(5, 5);
    m[(0, 0)] = z.powf(1.5) * s1 * s1;
    m[(1, 1)] = z.powf(1.5) * s2 * s2;
    m[(2, 2)] = z.powf(2.5) * k1 * s1 * s1;
    m[(3, 3)] = z.powf(2.5) * k1 * s2 * s2;
    m[(2, 3)] = z.powf(2.5) * k2 * s1 * s2;
    m[(3, 2)] = m[(2, 3)];
    m[(4, 4)] = z.powf(2.5);
    Ok(SymmetricMatrix::symmetrize(m))
}

/// Closed forms for the correlation test at a null point with ρ = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationClosedForms {
    pub beta: f64,
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

impl CorrelationClosedForms {
    pub fn new(theta0: &[f64], beta: f64) -> Result<Self> {
        if theta0.len() != 5 || theta0[4] != 0.0 {
            return Err(Error::invalid("correlation closed forms need a null point with rho = 0"));
        }
        Ok(CorrelationClosedForms {
            beta,
            mu: [theta0[0], theta0[1]],
            sigma: [theta0[2], theta0[3]],
        })
    }

    fn z(&self, x: &[f64]) -> (f64, f64) {
        ((x[0] - self.mu[0]) / self.sigma[0], (x[1] - self.mu[1]) / self.sigma[1])
    }

    /// `J_β(θ₀)` as displayed with `C_β = (2π)^{−β}(σ₁σ₂)^{−β}`.
    pub fn j_matrix(&self) -> DMatrix<f64> {
        Self::jk(self.beta, self.sigma, 1.0)
    }

    /// `K_β(θ₀)` as displayed, with β replaced by 2β and the cross
    /// coefficient β² replaced by 3β².
    pub fn k_matrix(&self) -> DMatrix<f64> {
        Self::jk(2.0 * self.beta, self.sigma, 0.75)
    }

    fn jk(b: f64, s: [f64; 2], cross: f64) -> DMatrix<f64> {
        // b is β for J and 2β for K; (2+β²) becomes (2+3β²) = (2 + 0.75·(2β)²)
        let c = (2.0 * PI).powf(-b) * (s[0] * s[1]).powf(-b);
        let bb = cross * b * b;
        let mut m = DMatrix::zeros(5, 5);
        m[(0, 0)] = c / ((1.0 + b).powf(1.5) * s[0] * s[0]);
        m[(1, 1)] = c / ((1.0 + b).powf(1.5) * s[1] * s[1]);
        m[(2, 2)] = (2.0 + bb) * c / (s[0] * s[0] * (1.0 + b).powf(2.5));
        m[(3, 3)] = (2.0 + bb) * c / (s[1] * s[1] * (1.0 + b).powf(2.5));
        m[(2, 3)] = bb * c / (s[0] * s[1] * (1.0 + b).powf(2.5));
        m[(3, 2)] = m[(2, 3)];
        m[(4, 4)] = c / (1.0 + b).powf(2.5);
        m
    }

    pub fn sigma_beta(&self) -> SymmetricMatrix {
        bivnormal_sigma_beta(
            &[self.mu[0], self.mu[1], self.sigma[0], self.sigma[1], 0.0],
            self.beta,
        )
        .expect("null point has rho = 0")
    }

    /// `n ρ̂²/ζ_β^{5/2}`
    pub fn wald_statistic(&self, rho_hat: f64, n: usize) -> f64 {
        let (z, _, _) = zeta_kappa(self.beta);
        n as f64 * rho_hat * rho_hat / z.powf(2.5)
    }

    /// Contiguous noncentrality `ζ_β^{−5/2}d²`.
    pub fn noncentrality(&self, d: f64) -> f64 {
        let (z, _, _) = zeta_kappa(self.beta);
        d * d / z.powf(2.5)
    }

    /// The displayed influence function of the estimator.
    pub fn influence(&self, x: &[f64]) -> DVector<f64> {
        let b = self.beta;
        let (z1, z2) = self.z(x);
        let e = (-0.5 * b * (z1 * z1 + z2 * z2)).exp();
        let (s1, s2) = (self.sigma[0], self.sigma[1]);
        let a = (1.0 + b).powf(2.5) / (1.0 + b * b);
        let shift = b * (1.0 + b).powi(2) / (1.0 + b * b);
        DVector::from_vec(vec![
            (1.0 + b).powf(1.5) * (x[0] - self.mu[0]) * e,
            (1.0 + b).powf(1.5) * (x[1] - self.mu[1]) * e,
            a * s1 * ((2.0 + b * b) * z1 * z1 - b * b * z2 * z2 - 2.0) * e - shift * s1,
            a * s2 * ((2.0 + b * b) * z2 * z2 - b * b * z1 * z1 - 2.0) * e - shift * s2,
            (1.0 + b).powf(1.5) * z1 * z2 * e,
        ])
    }

    /// `2(1+2β)^{5/2}/((1+β)²σ₁²σ₂²) (x₁−μ₁)²(x₂−μ₂)² e^{−β(z₁²+z₂²)}`
    pub fn second_order_influence(&self, x: &[f64]) -> f64 {
        let b = self.beta;
        let (d1, d2) = (x[0] - self.mu[0], x[1] - self.mu[1]);
        let (z1, z2) = self.z(x);
        let (s1, s2) = (self.sigma[0], self.sigma[1]);
        2.0 * (1.0 + 2.0 * b).powf(2.5) / ((1.0 + b).powi(2) * s1 * s1 * s2 * s2)
            * d1
            * d1
            * d2
            * d2
            * (-b * (z1 * z1 + z2 * z2)).exp()
    }

    /// Displayed power influence function, with the kernel evaluated at the
    /// noncentrality `ζ_β^{−5/2}d²`.
    pub fn power_influence(&self, x: &[f64], d: f64, q: f64) -> Result<f64> {
        let b = self.beta;
        let (z, _, _) = zeta_kappa(b);
        let (z1, z2) = self.z(x);
        let k = power_kernel(self.noncentrality(d), 1, q)?;
        Ok(k * (1.0 + b).powf(1.5) * z.powf(-2.5) * d * z1 * z2 * (-0.5 * b * (z1 * z1 + z2 * z2)).exp())
    }

    /// Displayed gross-error sensitivity
    /// `2n(1+2β)^{5/2}/(√β(1+β)²) e^{−√β}`, infinite at β = 0.
    pub fn gross_error_sensitivity(&self, n: usize) -> f64 {
        let b = self.beta;
        if b == 0.0 {
            return f64::INFINITY;
        }
        2.0 * n as f64 * (1.0 + 2.0 * b).powf(2.5) / (b.sqrt() * (1.0 + b).powi(2)) * (-b.sqrt()).exp()
    }
}
