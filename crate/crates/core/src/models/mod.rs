//! Parametric families and their population integrals.

mod bivariate;
pub mod gaussian;
mod normal;
mod regression;
mod validate;
mod weibull;

pub use bivariate::{bivnormal_sigma_beta, zeta_kappa, BivariateNormal, CorrelationClosedForms};
pub use normal::{NormalLocation, NormalLocationScale};
pub use regression::{regression_matrices, LinearRegression, RegressionClosedForms};
pub use validate::{validate_model, ValidationReport};
pub use weibull::{c_integral, eta_beta, WeibullClosedForms, WeibullShape};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::quadrature::{integrate_2d, integrate_vec_with_breaks, QuadOptions};
use crate::numerics::{Bounds, IntegrationDomain};

/// Integrals of model quantities against the weight `f_θ^{1+γ}`.
///
/// For covariate models every entry is the average over design rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    /// `∫ f^{1+γ}`
    pub mass: f64,
    /// `∫ u f^{1+γ}`
    pub score: DVector<f64>,
    /// `∫ u uᵀ f^{1+γ}`
    pub outer: DMatrix<f64>,
    /// `∫ I f^{1+γ}`
    pub info: DMatrix<f64>,
}

impl WeightedMoments {
    pub fn zeros(p: usize) -> Self {
        WeightedMoments {
            mass: 0.0,
            score: DVector::zeros(p),
            outer: DMatrix::zeros(p, p),
            info: DMatrix::zeros(p, p),
        }
    }

    fn accumulate(&mut self, other: &WeightedMoments, w: f64) {
        self.mass += w * other.mass;
        self.score += &other.score * w;
        self.outer += &other.outer * w;
        self.info += &other.info * w;
    }
}

/// A parametric family `f_θ` with score `u_θ = ∂ log f_θ/∂θ` and
/// information `I_θ = −∂u_θᵀ/∂θ`.
///
/// An observation is a slice of length [`dim_obs`](Self::dim_obs). Its first
/// [`response_dim`](Self::response_dim) entries are random; any remaining
/// entries are fixed covariates, as in a regression design row.
pub trait ParametricModel: Send + Sync {
    fn name(&self) -> &str;

    /// Number of parameters p.
    fn dim_param(&self) -> usize;

    fn dim_obs(&self) -> usize;

    fn response_dim(&self) -> usize {
        self.dim_obs()
    }

    fn param_names(&self) -> Vec<String>;

    /// Support of each response coordinate.
    fn support(&self) -> Vec<IntegrationDomain>;

    fn bounds(&self) -> Bounds;

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64;

    fn density(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.log_density(theta, x).exp()
    }

    fn score(&self, theta: &[f64], x: &[f64]) -> DVector<f64>;

    fn info(&self, theta: &[f64], x: &[f64]) -> DMatrix<f64>;

    /// Log densities of a batch; models override this to hoist per-θ work.
    fn log_densities(&self, theta: &[f64], data: &[Vec<f64>], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(data) {
            *o = self.log_density(theta, x);
        }
    }

    /// Calls `f(i, u_θ(xᵢ), I_θ(xᵢ))` for each observation; models override
    /// this to hoist per-θ work.
    fn for_each_score_info(&self, theta: &[f64], data: &[Vec<f64>], f: &mut dyn FnMut(usize, DVector<f64>, DMatrix<f64>)) {
        for (i, x) in data.iter().enumerate() {
            f(i, self.score(theta, x), self.info(theta, x));
        }
    }

    /// Moment-type starting value for fitting.
    fn default_init(&self, data: &[Vec<f64>]) -> Vec<f64>;

    /// Covariate blocks over which population integrals are averaged. A
    /// model without covariates has one empty context.
    fn contexts(&self) -> Vec<Vec<f64>> {
        vec![Vec::new()]
    }

    /// Interior points that help the quadrature (modes, kinks).
    fn quadrature_breaks(&self, _theta: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// `∫ f^{1+γ}` and friends. The default integrates numerically;
    /// models with analytic moments override it.
    fn weighted_moments(&self, theta: &[f64], gamma: f64) -> Result<WeightedMoments> {
        quadrature_moments(self, theta, gamma, QuadOptions::default())
    }

    /// `∫ f_θ^{1+β}`, the θ-dependent first term of the divergence.
    fn density_power_integral(&self, theta: &[f64], beta: f64) -> Result<f64> {
        Ok(self.weighted_moments(theta, beta)?.mass)
    }

    /// Whether the score is bounded in the observation, so that every
    /// influence function with β = 0 is bounded too.
    fn score_is_bounded(&self) -> bool {
        false
    }

    /// True when `x` has the right length, is finite, and its response lies
    /// strictly inside the support.
    fn in_support(&self, x: &[f64]) -> bool {
        if x.len() != self.dim_obs() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.support()
            .iter()
            .zip(x)
            .all(|(d, &v)| d.contains_open(v))
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim_param() {
            return Err(Error::Dimension(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.dim_param(),
                theta.len()
            )));
        }
        if !self.bounds().contains(theta) {
            return Err(Error::invalid(format!(
                "parameter {theta:?} lies outside the parameter space of {}",
                self.name()
            )));
        }
        Ok(())
    }
}

/// Weighted moments by adaptive quadrature over the support, averaged over
/// the model's contexts.
pub fn quadrature_moments<M: ParametricModel + ?Sized>(
    model: &M,
    theta: &[f64],
    gamma: f64,
    opts: QuadOptions,
) -> Result<WeightedMoments> {
    let p = model.dim_param();
    let contexts = model.contexts();
    let support = model.support();
    let breaks = model.quadrature_breaks(theta);
    let dim = 1 + p + 2 * p * p;
    let mut total = WeightedMoments::zeros(p);
    let weight = 1.0 / contexts.len() as f64;
    for ctx in &contexts {
        let fill = |resp: &[f64], out: &mut [f64]| {
            let mut x = resp.to_vec();
            x.extend_from_slice(ctx);
            let lf = model.log_density(theta, &x);
            let w = ((1.0 + gamma) * lf).exp();
            if w == 0.0 {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let u = model.score(theta, &x);
            let info = model.info(theta, &x);
            out[0] = w;
            for i in 0..p {
                out[1 + i] = u[i] * w;
                for j in 0..p {
                    out[1 + p + i * p + j] = u[i] * u[j] * w;
                    out[1 + p + p * p + i * p + j] = info[(i, j)] * w;
                }
            }
        };
        let raw = match model.response_dim() {
            1 => integrate_vec_with_breaks(|y, out| fill(&[y], out), dim, support[0], &breaks, opts)?,
            2 => integrate_2d(|a, b, out| fill(&[a, b], out), dim, support[0], support[1], opts)?,
            k => {
                return Err(Error::Unsupported(format!(
                    "quadrature over {k}-dimensional responses is not implemented"
                )))
            }
        };
        let m = WeightedMoments {
            mass: raw[0],
            score: DVector::from_column_slice(&raw[1..1 + p]),
            outer: DMatrix::from_row_slice(p, p, &raw[1 + p..1 + p + p * p]),
            info: DMatrix::from_row_slice(p, p, &raw[1 + p + p * p..]),
        };
        total.accumulate(&m, weight);
    }
    Ok(total)
}

/// Model names accepted by [`model_by_name`].
pub const MODEL_NAMES: [&str; 5] = [
    "normal-loc",
    "normal-loc-scale",
    "weibull-shape",
    "bivariate-normal",
    "linreg",
];

/// Builds a covariate-free model from its CLI name. `linreg` needs a design
/// and is built with [`LinearRegression::new`] instead.
pub fn model_by_name(name: &str, sigma_known: Option<f64>) -> Result<Box<dyn ParametricModel>> {
    match name {
        "normal-loc" => Ok(Box::new(NormalLocation::new(sigma_known.unwrap_or(1.0))?)),
        "normal-loc-scale" => Ok(Box::new(NormalLocationScale)),
        "weibull-shape" => Ok(Box::new(WeibullShape)),
        "bivariate-normal" => Ok(Box::new(BivariateNormal)),
        "linreg" => Err(Error::invalid("the linreg model needs a design matrix")),
        other => Err(Error::invalid(format!(
            "unknown model '{other}' (expected one of {})",
            MODEL_NAMES.join(", ")
        ))),
    }
}
