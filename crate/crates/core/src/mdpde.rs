//! MDPDE fitting, the sandwich matrices at the model, and their analogues
//! under a point-mass contaminated truth.

use nalgebra::{DMatrix, DVector};

use crate::dpd::{mdpde_objective, DpdObjectiveSpec};
use crate::error::{Error, Result};
use crate::models::ParametricModel;
use crate::numerics::quadrature::{integrate_2d, integrate_vec_with_breaks, QuadOptions};
use crate::numerics::{invert_spd, minimize, minimize_multistart, NelderMeadOptions, SymmetricMatrix};

/// `J_β`, `K_β`, `ξ_β` and `Σ_β = J_β⁻¹K_βJ_β⁻¹` at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrices {
    pub j: SymmetricMatrix,
    pub k: SymmetricMatrix,
    pub xi: DVector<f64>,
    pub sigma: SymmetricMatrix,
    pub j_inv: SymmetricMatrix,
}

/// `J_β(θ) = ∫ u uᵀ f^{1+β}`, `ξ_β(θ) = ∫ u f^{1+β}` and
/// `K_β(θ) = ∫ u uᵀ f^{1+2β} − ξ_β ξ_βᵀ`.
pub fn matrices_at_model<M: ParametricModel + ?Sized>(model: &M, theta: &[f64], beta: f64) -> Result<ModelMatrices> {
    check_beta(beta)?;
    model.check_theta(theta)?;
    let m1 = model.weighted_moments(theta, beta)?;
    let m2 = model.weighted_moments(theta, 2.0 * beta)?;
    let xi = m1.score.clone();
    let j = SymmetricMatrix::symmetrize(m1.outer);
    let k = SymmetricMatrix::symmetrize(m2.outer - &xi * xi.transpose());
    sandwich(j, k, xi, "J_beta", "Sigma_beta")
}

fn sandwich(
    j: SymmetricMatrix,
    k: SymmetricMatrix,
    xi: DVector<f64>,
    j_role: &str,
    sigma_role: &str,
) -> Result<ModelMatrices> {
    let j_inv = invert_spd(&j, j_role)?;
    let sigma = k.congruence(j_inv.as_matrix());
    if !sigma.is_positive_definite() {
        return Err(Error::NotPositiveDefinite {
            role: sigma_role.into(),
        });
    }
    Ok(ModelMatrices { j, k, xi, sigma, j_inv })
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be finite and non-negative, got {beta}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub nelder_mead: NelderMeadOptions,
    /// Extra starting points; the model's moment start is always tried.
    pub starts: Vec<Vec<f64>>,
    /// Newton refinement of the estimating equation after the simplex.
    pub polish: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            nelder_mead: NelderMeadOptions::default(),
            starts: Vec::new(),
            polish: true,
        }
    }
}

impl FitOptions {
    /// A looser simplex followed by Newton refinement, for Monte Carlo work.
    pub fn fast() -> Self {
        FitOptions {
            nelder_mead: NelderMeadOptions {
                x_tol: 1e-4,
                restarts: 0,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

/// A fitted MDPDE with its sandwich covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpdeFit {
    pub theta_hat: Vec<f64>,
    pub beta: f64,
    /// `Σ_β(θ̂_β)`
    pub sigma: SymmetricMatrix,
    pub j_matrix: SymmetricMatrix,
    pub k_matrix: SymmetricMatrix,
    pub xi: DVector<f64>,
    pub n: usize,
    pub objective_value: f64,
}

impl MdpdeFit {
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    /// `sqrt(diag(Σ_β)/n)`
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| (self.sigma[(i, i)] / self.n as f64).sqrt())
            .collect()
    }
}

/// Minimises the empirical DPD objective and evaluates the sandwich
/// matrices at the minimiser.
pub fn fit<M: ParametricModel + ?Sized>(
    model: &M,
    data: &[Vec<f64>],
    beta: f64,
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<MdpdeFit> {
    let spec = DpdObjectiveSpec::new(model, beta, data)?;
    let bounds = model.bounds();
    let mut start = match init {
        Some(t) => {
            model.check_theta(t)?;
            t.to_vec()
        }
        None => model.default_init(data),
    };
    bounds.clamp(&mut start);
    let objective = |t: &[f64]| mdpde_objective(&spec, t).unwrap_or(f64::INFINITY);
    if !objective(&start).is_finite() {
        mdpde_objective(&spec, &start)?;
        return Err(Error::Numerical(format!("objective is not finite at the start {start:?}")));
    }
    let best = if opts.starts.is_empty() {
        minimize(objective, &start, &bounds, &opts.nelder_mead)?
    } else {
        let mut starts = vec![start];
        starts.extend(opts.starts.iter().cloned());
        minimize_multistart(objective, &starts, &bounds, &opts.nelder_mead)?
    };
    let (theta_hat, value) = if opts.polish {
        polish_sample(model, &spec, best.x, best.value)
    } else {
        (best.x, best.value)
    };
    check_interior(model, &theta_hat, value)?;
    let mats = matrices_at_model(model, &theta_hat, beta)?;
    Ok(MdpdeFit {
        theta_hat,
        beta,
        sigma: mats.sigma,
        j_matrix: mats.j,
        k_matrix: mats.k,
        xi: mats.xi,
        n: data.len(),
        objective_value: value,
    })
}

/// Rejects estimates that sit on a finite bound of the parameter space.
fn check_interior<M: ParametricModel + ?Sized>(model: &M, theta: &[f64], value: f64) -> Result<()> {
    let bounds = model.bounds();
    let names = model.param_names();
    for (k, &t) in theta.iter().enumerate() {
        for b in [bounds.lower[k], bounds.upper[k]] {
            if b.is_finite() && (t - b).abs() <= 1e-6 * b.abs().max(1.0) {
                return Err(Error::Optimization {
                    reason: format!("estimate of {} reached the boundary {b} of the parameter space", names[k]),
                    best: theta.to_vec(),
                    value,
                });
            }
        }
    }
    Ok(())
}

/// `(1/n) Σ u f^β − ξ_β(θ)` and its Jacobian.
fn sample_equation<M: ParametricModel + ?Sized>(
    model: &M,
    data: &[Vec<f64>],
    theta: &[f64],
    beta: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = model.dim_param();
    let n = data.len() as f64;
    let mut psi = DVector::zeros(p);
    let mut jac = DMatrix::zeros(p, p);
    let mut logs = vec![0.0; data.len()];
    if beta > 0.0 {
        model.log_densities(theta, data, &mut logs);
    }
    model.for_each_score_info(theta, data, &mut |i, u, info| {
        let w = if beta == 0.0 { 1.0 } else { (beta * logs[i]).exp() };
        if w == 0.0 {
            return;
        }
        psi += &u * (w / n);
        jac += (&u * u.transpose() * beta - info) * (w / n);
    });
    if beta > 0.0 {
        let m = model.weighted_moments(theta, beta)?;
        psi -= &m.score;
        jac -= m.outer * (1.0 + beta) - m.info;
    }
    Ok((psi, jac))
}

fn polish_sample<M: ParametricModel + ?Sized>(
    model: &M,
    spec: &DpdObjectiveSpec<'_, M>,
    theta: Vec<f64>,
    value: f64,
) -> (Vec<f64>, f64) {
    let objective = |t: &[f64]| mdpde_objective(spec, t).unwrap_or(f64::INFINITY);
    newton(
        |t| sample_equation(model, spec.data, t, spec.beta),
        objective,
        model,
        theta,
        value,
    )
}

/// Damped Newton iteration on an estimating equation whose root is a
/// minimum of `objective`. Returns the input unchanged when no step helps.
fn newton<M, E, O>(equation: E, objective: O, model: &M, theta: Vec<f64>, value: f64) -> (Vec<f64>, f64)
where
    M: ParametricModel + ?Sized,
    E: Fn(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>,
    O: Fn(&[f64]) -> f64,
{
    let bounds = model.bounds();
    let (mut theta, mut value) = (theta, value);
    for _ in 0..30 {
        let Ok((psi, jac)) = equation(&theta) else { break };
        let Some(step) = jac.lu().solve(&psi) else { break };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if bounds.contains(&cand) {
                let v = objective(&cand);
                if v <= value + 1e-13 * (1.0 + value.abs()) {
                    let small = cand
                        .iter()
                        .zip(&theta)
                        .all(|(a, b)| (a - b).abs() <= 1e-13 * b.abs().max(1.0));
                    theta = cand;
                    value = v.min(value);
                    accepted = true;
                    if small {
                        return (theta, value);
                    }
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (theta, value)
}

/// `g = (1−ε) f_{θ₀} + ε Δ_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminatedTruth {
    pub base_theta: Vec<f64>,
    pub epsilon: f64,
    pub point: Vec<f64>,
}

impl ContaminatedTruth {
    pub fn new(base_theta: Vec<f64>, epsilon: f64, point: Vec<f64>) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::invalid(format!("epsilon must lie in [0, 1), got {epsilon}")));
        }
        Ok(ContaminatedTruth {
            base_theta,
            epsilon,
            point,
        })
    }

    fn check<M: ParametricModel + ?Sized>(&self, model: &M) -> Result<()> {
        model.check_theta(&self.base_theta)?;
        if model.response_dim() != model.dim_obs() {
            return Err(Error::Unsupported(
                "contaminated-truth integrals need a model without covariates".into(),
            ));
        }
        if !model.in_support(&self.point) {
            return Err(Error::invalid(format!(
                "contamination point {:?} lies outside the support of {}",
                self.point,
                model.name()
            )));
        }
        Ok(())
    }
}

/// Ingredients at the point mass: `u(y)`, `I(y)`, `f^β(y)`.
struct PointTerms {
    u: DVector<f64>,
    info: DMatrix<f64>,
    f_beta: f64,
}

fn point_terms<M: ParametricModel + ?Sized>(model: &M, theta: &[f64], y: &[f64], beta: f64) -> PointTerms {
    PointTerms {
        u: model.score(theta, y),
        info: model.info(theta, y),
        f_beta: (beta * model.log_density(theta, y)).exp(),
    }
}

/// `J_{β,g}`, `K_{β,g}`, `ξ_{β,g}` and `Σ_{β,g}` at θ₀ under
/// `g = (1−ε) f_{θ₀} + ε Δ_y`.
///
/// The atom enters analytically; nothing is smoothed.
pub fn matrices_under_g<M: ParametricModel + ?Sized>(
    model: &M,
    truth: &ContaminatedTruth,
    beta: f64,
) -> Result<ModelMatrices> {
    check_beta(beta)?;
    truth.check(model)?;
    let theta = &truth.base_theta;
    let eps = truth.epsilon;
    let m1 = model.weighted_moments(theta, beta)?;
    let m2 = model.weighted_moments(theta, 2.0 * beta)?;
    let pt = point_terms(model, theta, &truth.point, beta);
    let uu = &pt.u * pt.u.transpose();
    // ∫ (I − β u uᵀ) f^{1+β}
    let model_part = &m1.info - &m1.outer * beta;
    let j = &m1.outer + ((&pt.info - &uu * beta) * pt.f_beta - model_part) * eps;
    let xi = &m1.score * (1.0 - eps) + &pt.u * (eps * pt.f_beta);
    let k = &m2.outer * (1.0 - eps) + &uu * (eps * pt.f_beta * pt.f_beta) - &xi * xi.transpose();
    let j = SymmetricMatrix::symmetrize(j);
    let k = SymmetricMatrix::symmetrize(k);
    let j_inv = j
        .as_matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite {
            role: "J_beta_g".into(),
        })?;
    let j_inv = SymmetricMatrix::symmetrize(j_inv);
    let sigma = k.congruence(j_inv.as_matrix());
    Ok(ModelMatrices { j, k, xi, sigma, j_inv })
}

/// Integrals against `f_{θ₀}` of `f_θ^β`, `u_θ f_θ^β` and `log f_θ`.
struct CrossMoments {
    power: f64,
    score: DVector<f64>,
    log: f64,
}

fn cross_moments<M: ParametricModel + ?Sized>(model: &M, theta: &[f64], theta0: &[f64], beta: f64) -> Result<CrossMoments> {
    let p = model.dim_param();
    let support = model.support();
    let opts = QuadOptions::default();
    let fill = |x: &[f64], out: &mut [f64]| {
        let f0 = model.density(theta0, x);
        if f0 == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let lf = model.log_density(theta, x);
        let fb = (beta * lf).exp();
        out[0] = fb * f0;
        out[1] = lf * f0;
        let u = model.score(theta, x);
        for i in 0..p {
            out[2 + i] = u[i] * fb * f0;
        }
    };
    let dim = 2 + p;
    let raw = match model.response_dim() {
        1 => {
            let mut breaks = model.quadrature_breaks(theta);
            breaks.extend(model.quadrature_breaks(theta0));
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            integrate_vec_with_breaks(|y, out| fill(&[y], out), dim, support[0], &breaks, opts)?
        }
        2 => integrate_2d(|a, b, out| fill(&[a, b], out), dim, support[0], support[1], opts)?,
        k => {
            return Err(Error::Unsupported(format!(
                "quadrature over {k}-dimensional responses is not implemented"
            )))
        }
    };
    Ok(CrossMoments {
        power: raw[0],
        log: raw[1],
        score: DVector::from_column_slice(&raw[2..]),
    })
}

/// The population DPD objective at the mixture `g`.
pub fn population_objective<M: ParametricModel + ?Sized>(
    model: &M,
    truth: &ContaminatedTruth,
    beta: f64,
    theta: &[f64],
) -> Result<f64> {
    model.check_theta(theta)?;
    let eps = truth.epsilon;
    let c = cross_moments(model, theta, &truth.base_theta, beta)?;
    let ly = model.log_density(theta, &truth.point);
    if beta == 0.0 {
        return Ok(-((1.0 - eps) * c.log + eps * ly));
    }
    let mass = model.density_power_integral(theta, beta)?;
    Ok(mass - (1.0 + 1.0 / beta) * ((1.0 - eps) * c.power + eps * (beta * ly).exp()))
}

/// `∫ u f^{1+β} − (1−ε)∫ u f^β f_{θ₀} − ε u(y) f^β(y)`, the gradient of the
/// population objective up to the factor 1+β.
fn population_equation<M: ParametricModel + ?Sized>(
    model: &M,
    truth: &ContaminatedTruth,
    beta: f64,
    theta: &[f64],
) -> Result<DVector<f64>> {
    let eps = truth.epsilon;
    let c = cross_moments(model, theta, &truth.base_theta, beta)?;
    let pt = point_terms(model, theta, &truth.point, beta);
    let own = if beta == 0.0 {
        DVector::zeros(model.dim_param())
    } else {
        model.weighted_moments(theta, beta)?.score
    };
    Ok(own - c.score * (1.0 - eps) - pt.u * (eps * pt.f_beta))
}

/// `T_β(G)` at the mixture `g = (1−ε) f_{θ₀} + ε Δ_y`.
pub fn population_functional<M: ParametricModel + ?Sized>(
    model: &M,
    truth: &ContaminatedTruth,
    beta: f64,
) -> Result<Vec<f64>> {
    check_beta(beta)?;
    truth.check(model)?;
    if truth.epsilon == 0.0 {
        return Ok(truth.base_theta.clone());
    }
    let objective = |t: &[f64]| population_objective(model, truth, beta, t).unwrap_or(f64::INFINITY);
    let opts = NelderMeadOptions {
        initial_step: 0.02,
        ..Default::default()
    };
    let best = minimize(objective, &truth.base_theta, &model.bounds(), &opts)?;
    let p = model.dim_param();
    let equation = |t: &[f64]| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let psi = population_equation(model, truth, beta, t)?;
        let mut jac = DMatrix::zeros(p, p);
        for k in 0..p {
            let h = 1e-5 * t[k].abs().max(1.0);
            let mut tp = t.to_vec();
            let mut tm = t.to_vec();
            tp[k] += h;
            tm[k] -= h;
            let d = (population_equation(model, truth, beta, &tp)? - population_equation(model, truth, beta, &tm)?)
                / (2.0 * h);
            jac.set_column(k, &d);
        }
        Ok((psi, jac))
    };
    let (theta, _) = newton(equation, objective, model, best.x, best.value);
    Ok(theta)
}
