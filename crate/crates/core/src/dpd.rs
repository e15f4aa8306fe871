//! The density power divergence and the empirical objective of the MDPDE.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::models::ParametricModel;
use crate::numerics::quadrature::{integrate_vec, QuadOptions};
use crate::numerics::IntegrationDomain;

const CONSISTENCY_TOL: f64 = 1e-8;

/// `d_β(g, f) = ∫ f^{1+β} − (1 + 1/β) f^β g + (1/β) g^{1+β}`, and the
/// Kullback–Leibler divergence `∫ g log(g/f)` at β = 0.
pub fn dpd_divergence<G, F>(g: G, f: F, beta: f64, domain: IntegrationDomain) -> Result<f64>
where
    G: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be finite and non-negative, got {beta}")));
    }
    let opts = QuadOptions::default();
    let d = if beta == 0.0 {
        let unbounded = Cell::new(false);
        let v = integrate_vec(
            |x, out| {
                let (gx, fx) = (g(x), f(x));
                out[0] = if gx < 1e-300 {
                    0.0
                } else if fx <= 0.0 {
                    unbounded.set(true);
                    0.0
                } else {
                    gx * (gx.ln() - fx.ln())
                };
            },
            1,
            domain,
            opts,
        )?;
        if unbounded.get() {
            return Ok(f64::INFINITY);
        }
        v[0]
    } else {
        let v = integrate_vec(
            |x, out| {
                let (gx, fx) = (g(x).max(0.0), f(x).max(0.0));
                out[0] = fx.powf(1.0 + beta);
                out[1] = fx.powf(beta) * gx;
                out[2] = gx.powf(1.0 + beta);
            },
            3,
            domain,
            opts,
        )?;
        v[0] - (1.0 + 1.0 / beta) * v[1] + v[2] / beta
    };
    if d < -CONSISTENCY_TOL {
        return Err(Error::Numerical(format!(
            "divergence evaluated to {d:e}, below zero beyond quadrature tolerance"
        )));
    }
    Ok(d.max(0.0))
}

/// A model, a tuning parameter and a validated sample.
#[derive(Clone, Copy)]
pub struct DpdObjectiveSpec<'a, M: ParametricModel + ?Sized> {
    pub model: &'a M,
    pub beta: f64,
    pub data: &'a [Vec<f64>],
}

impl<'a, M: ParametricModel + ?Sized> DpdObjectiveSpec<'a, M> {
    /// Rejects an empty sample, a negative β, and observations outside the
    /// model's support.
    pub fn new(model: &'a M, beta: f64, data: &'a [Vec<f64>]) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be finite and non-negative, got {beta}")));
        }
        if data.is_empty() {
            return Err(Error::invalid("the sample is empty"));
        }
        if let Some(i) = data.iter().position(|x| !model.in_support(x)) {
            return Err(Error::invalid(format!(
                "observation {} ({:?}) lies outside the support of {}",
                i + 1,
                data[i],
                model.name()
            )));
        }
        Ok(DpdObjectiveSpec { model, beta, data })
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }
}

/// `∫ f_θ^{1+β} − (1 + 1/β)(1/n) Σ f_θ^β(Xᵢ)` for β > 0 and
/// `−(1/n) Σ log f_θ(Xᵢ)` for β = 0.
///
/// The sum runs in input order, so the value is bit-reproducible.
pub fn mdpde_objective<M: ParametricModel + ?Sized>(spec: &DpdObjectiveSpec<'_, M>, theta: &[f64]) -> Result<f64> {
    spec.model.check_theta(theta)?;
    let mut logs = vec![0.0; spec.n()];
    spec.model.log_densities(theta, spec.data, &mut logs);
    objective_from_logs(spec, theta, &logs)
}

pub(crate) fn objective_from_logs<M: ParametricModel + ?Sized>(
    spec: &DpdObjectiveSpec<'_, M>,
    theta: &[f64],
    logs: &[f64],
) -> Result<f64> {
    let n = logs.len() as f64;
    let beta = spec.beta;
    if beta == 0.0 {
        let mut s = 0.0;
        for (i, &l) in logs.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                return Err(Error::Numerical(format!(
                    "density is zero at observation {}, so its log-likelihood is undefined",
                    i + 1
                )));
            }
            s += l;
        }
        if !s.is_finite() {
            return Err(Error::Numerical("log-likelihood is not finite".into()));
        }
        return Ok(-s / n);
    }
    let mass = spec.model.density_power_integral(theta, beta)?;
    let s: f64 = logs.iter().map(|&l| (beta * l).exp()).sum();
    let v = mass - (1.0 + 1.0 / beta) * s / n;
    if !v.is_finite() {
        return Err(Error::Numerical(format!("objective is not finite at {theta:?}")));
    }
    Ok(v)
}
