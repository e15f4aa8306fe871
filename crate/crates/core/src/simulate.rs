//! Seeded samplers and Monte-Carlo rejection rates.
//!
//! Every replicate draws from its own ChaCha stream, so results do not
//! depend on the order in which replicates run.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mdpde::{fit, FitOptions};
use crate::models::{LinearRegression, ParametricModel};
use crate::par::{self, Execution};
use crate::wald::{composite_wald, simple_wald, Null};

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` draws from N(μ, σ²).
pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| vec![mu + sigma * std_normal(rng)]).collect()
}

/// `n` draws from the unit-scale Weibull with the given shape.
pub fn sample_weibull<R: Rng + ?Sized>(rng: &mut R, shape: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            vec![(-(1.0 - u).ln()).powf(1.0 / shape)]
        })
        .collect()
}

/// `n` draws from the bivariate normal with θ = (μ₁, μ₂, σ₁, σ₂, ρ).
pub fn sample_bivariate<R: Rng + ?Sized>(rng: &mut R, theta: &[f64], n: usize) -> Vec<Vec<f64>> {
    let (m1, m2, s1, s2, rho) = (theta[0], theta[1], theta[2], theta[3], theta[4]);
    let c = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let (a, b) = (std_normal(rng), std_normal(rng));
            vec![m1 + s1 * a, m2 + s2 * (rho * a + c * b)]
        })
        .collect()
}

/// Responses `xᵢᵀϑ + σ Zᵢ` as observations `[yᵢ, xᵢ]`.
pub fn sample_regression<R: Rng + ?Sized>(rng: &mut R, model: &LinearRegression, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let p = model.n_coef();
    if theta.len() != p + 1 || !(theta[p] > 0.0) {
        return Err(Error::Dimension("θ must hold the coefficients and a positive sigma2".into()));
    }
    let coef = DVector::from_column_slice(&theta[..p]);
    let sd = theta[p].sqrt();
    let y: Vec<f64> = (0..model.n_rows())
        .map(|i| model.design().row(i).transpose().dot(&coef) + sd * std_normal(rng))
        .collect();
    model.observations(&y)
}

/// Each observation is replaced by `point` independently with probability
/// `fraction`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contamination {
    pub fraction: f64,
    pub point: Vec<f64>,
}

impl Contamination {
    pub fn new(fraction: f64, point: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid(format!("contamination fraction must lie in [0, 1], got {fraction}")));
        }
        Ok(Contamination { fraction, point })
    }

    pub fn apply<R: Rng + ?Sized>(&self, rng: &mut R, data: &mut [Vec<f64>]) {
        for row in data.iter_mut() {
            let u: f64 = rng.random();
            if u < self.fraction {
                row[..self.point.len()].copy_from_slice(&self.point);
            }
        }
    }
}

/// Outcome of a Monte-Carlo rejection study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionRate {
    pub replicates: usize,
    pub rejections: usize,
    /// Replicates whose fit or statistic failed; excluded from the rate.
    pub failures: usize,
    pub rate: f64,
}

/// Study design shared by every replicate.
#[derive(Debug, Clone)]
pub struct RejectionStudy {
    pub beta: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub fit_options: FitOptions,
}

/// Fraction of replicates in which the Wald-type test rejects. Replicate
/// `i` uses stream `i` of the seed.
pub fn rejection_rate<M, S>(model: &M, null: Null<'_>, study: &RejectionStudy, exec: Execution, sample: S) -> RejectionRate
where
    M: ParametricModel + ?Sized,
    S: Fn(&mut ChaCha8Rng) -> Vec<Vec<f64>> + Sync + Send,
{
    let outcomes = par::map_range(exec, study.replicates, |i| -> Result<bool> {
        let mut rng = stream_rng(study.seed, i as u64);
        let data = sample(&mut rng);
        let f = fit(model, &data, study.beta, None, &study.fit_options)?;
        let w = match null {
            Null::Simple(theta0) => simple_wald(model, &f, theta0, study.alpha)?,
            Null::Composite(r) => composite_wald(&f, r, study.alpha)?,
        };
        Ok(w.reject)
    });
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let rejections = outcomes.iter().filter(|o| matches!(o, Ok(true))).count();
    let valid = study.replicates - failures;
    RejectionRate {
        replicates: study.replicates,
        rejections,
        failures,
        rate: if valid > 0 { rejections as f64 / valid as f64 } else { f64::NAN },
    }
}
