//! Closed-form calculus for Gaussian families `N(μ(θ), Σ(θ))` with `μ`
//! affine in θ.
//!
//! Writing `z = x − μ`, `Σ_k = ∂Σ/∂θ_k`, `A_k = Σ⁻¹Σ_kΣ⁻¹` and
//! `c_k = tr(Σ⁻¹Σ_k)`, the score is
//! `u_k = μ_kᵀΣ⁻¹z − c_k/2 + zᵀA_kz/2`. Under the weight `f^{1+γ}`, which is
//! `M_γ · N(μ, Σ/(1+γ))`, all weighted moments reduce to traces.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::WeightedMoments;
use crate::error::{Error, Result};

/// Mean, covariance and their θ-derivatives at one parameter value.
#[derive(Debug, Clone)]
pub struct GaussianParts {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `∂μ/∂θ_k`, one vector per parameter.
    pub dmean: Vec<DVector<f64>>,
    /// `∂Σ/∂θ_k`.
    pub dcov: Vec<DMatrix<f64>>,
    /// `∂²Σ/∂θ_k∂θ_l`, indexed `[k][l]`.
    pub d2cov: Vec<Vec<DMatrix<f64>>>,
}

/// Quantities derived once per parameter value.
#[derive(Debug, Clone)]
pub struct GaussianCache {
    parts: GaussianParts,
    prec: DMatrix<f64>,
    log_det: f64,
    // A_k = Σ⁻¹Σ_kΣ⁻¹
    a: Vec<DMatrix<f64>>,
    c: Vec<f64>,
    // Σ⁻¹μ_k
    pm: Vec<DVector<f64>>,
    // ∂c_k/∂θ_l and ∂A_k/∂θ_l, indexed k * p + l
    dc: Vec<f64>,
    da: Vec<DMatrix<f64>>,
}

impl GaussianCache {
    pub fn new(parts: GaussianParts) -> Result<Self> {
        let chol = parts
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                role: "covariance".into(),
            })?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let prec = chol.inverse();
        let a: Vec<DMatrix<f64>> = parts.dcov.iter().map(|s| &prec * s * &prec).collect();
        let c: Vec<f64> = parts.dcov.iter().map(|s| (&prec * s).trace()).collect();
        let pm = parts.dmean.iter().map(|m| &prec * m).collect();
        let p = parts.dmean.len();
        let ps: Vec<DMatrix<f64>> = parts.dcov.iter().map(|s| &prec * s).collect();
        let mut dc = Vec::with_capacity(p * p);
        let mut da = Vec::with_capacity(p * p);
        for k in 0..p {
            for l in 0..p {
                let skl = &parts.d2cov[k][l];
                dc.push(-(&ps[l] * &ps[k]).trace() + (&prec * skl).trace());
                da.push(-(&ps[l] * &a[k]) + &prec * skl * &prec - &ps[k] * &a[l]);
            }
        }
        Ok(GaussianCache {
            parts,
            prec,
            log_det,
            a,
            c,
            pm,
            dc,
            da,
        })
    }

    pub fn dim(&self) -> usize {
        self.parts.mean.len()
    }

    pub fn n_params(&self) -> usize {
        self.parts.dmean.len()
    }

    pub fn parts(&self) -> &GaussianParts {
        &self.parts
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let z = DVector::from_iterator(d, x.iter().take(d).zip(self.parts.mean.iter()).map(|(a, b)| a - b));
        let q = z.dot(&(&self.prec * &z));
        -0.5 * (d as f64 * (2.0 * PI).ln() + self.log_det + q)
    }

    fn centred(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim();
        DVector::from_iterator(d, x.iter().take(d).zip(self.parts.mean.iter()).map(|(a, b)| a - b))
    }

    pub fn score(&self, x: &[f64]) -> DVector<f64> {
        let z = self.centred(x);
        let p = self.n_params();
        DVector::from_fn(p, |k, _| {
            self.pm[k].dot(&z) - 0.5 * self.c[k] + 0.5 * z.dot(&(&self.a[k] * &z))
        })
    }

    pub fn info(&self, x: &[f64]) -> DMatrix<f64> {
        let z = self.centred(x);
        let p = self.n_params();
        let mut out = DMatrix::zeros(p, p);
        for k in 0..p {
            for l in k..p {
                let mut v = self.parts.dmean[k].dot(&self.pm[l]);
                v += self.parts.dmean[k].dot(&(&self.a[l] * &z));
                v += self.parts.dmean[l].dot(&(&self.a[k] * &z));
                v += 0.5 * self.dc[k * p + l];
                v -= 0.5 * z.dot(&(&self.da[k * p + l] * &z));
                out[(k, l)] = v;
                out[(l, k)] = v;
            }
        }
        out
    }

    /// Exact moments under the weight `f^{1+γ}`.
    pub fn weighted_moments(&self, gamma: f64) -> WeightedMoments {
        let d = self.dim() as f64;
        let g1 = 1.0 + gamma;
        let mass = (-0.5 * d * gamma * (2.0 * PI).ln() - 0.5 * gamma * self.log_det - 0.5 * d * g1.ln()).exp();
        let p = self.n_params();
        let score = DVector::from_fn(p, |k, _| -0.5 * mass * self.c[k] * gamma / g1);
        let mut outer = DMatrix::zeros(p, p);
        let mut info = DMatrix::zeros(p, p);
        for k in 0..p {
            for l in k..p {
                let ps_k = &self.prec * &self.parts.dcov[k];
                let ps_l = &self.prec * &self.parts.dcov[l];
                let t_kl = (&ps_k * &ps_l).trace();
                let (ck, cl) = (self.c[k], self.c[l]);
                let mm = self.parts.dmean[k].dot(&self.pm[l]);
                let uu = mm / g1 + 0.25 * ck * cl - 0.25 * ck * cl / g1 - 0.25 * cl * ck / g1
                    + 0.25 * (ck * cl / (g1 * g1) + 2.0 * t_kl / (g1 * g1));
                let tr_kl = (&self.prec * &self.parts.d2cov[k][l]).trace();
                let ii = mm + 0.5 * (-t_kl + tr_kl) - 0.5 * (-2.0 * t_kl + tr_kl) / g1;
                outer[(k, l)] = mass * uu;
                outer[(l, k)] = mass * uu;
                info[(k, l)] = mass * ii;
                info[(l, k)] = mass * ii;
            }
        }
        WeightedMoments {
            mass,
            score,
            outer,
            info,
        }
    }
}
