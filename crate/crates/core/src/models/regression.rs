use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::bivariate::zeta_kappa;
use super::{ParametricModel, WeightedMoments};
use crate::error::{Error, Result};
use crate::numerics::chisq::power_kernel;
use crate::numerics::linalg::numerical_rank;
use crate::numerics::{Bounds, IntegrationDomain};

/// Fixed-design normal linear regression `yᵢ ~ N(xᵢᵀϑ, σ²)` with
/// θ = (ϑ₁, …, ϑ_p, σ²).
///
/// An observation is `[y, x₁, …, x_p]`. Population integrals average over
/// the rows of the design.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRegression {
    design: DMatrix<f64>,
}

impl LinearRegression {
    pub fn new(design: DMatrix<f64>) -> Result<Self> {
        let (n, p) = design.shape();
        if p == 0 || n < p {
            return Err(Error::invalid(format!(
                "design must have at least as many rows as columns, got {n}x{p}"
            )));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design contains non-finite entries"));
        }
        if numerical_rank(&design) < p {
            return Err(Error::RankDeficient {
                role: "design matrix".into(),
            });
        }
        Ok(LinearRegression { design })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_coef(&self) -> usize {
        self.design.ncols()
    }

    /// `XᵀX`
    pub fn gram(&self) -> DMatrix<f64> {
        self.design.transpose() * &self.design
    }

    /// Observations `[yᵢ, xᵢ]` for a response vector.
    pub fn observations(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        if y.len() != self.n_rows() {
            return Err(Error::Dimension(format!(
                "response has {} entries, design has {} rows",
                y.len(),
                self.n_rows()
            )));
        }
        Ok(y.iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut row = vec![v];
                row.extend(self.design.row(i).iter());
                row
            })
            .collect())
    }

    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], f64) {
        let p = self.n_coef();
        (&theta[..p], theta[p])
    }

    fn residual(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (coef, _) = self.split(theta);
        x[0] - coef.iter().zip(&x[1..]).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl ParametricModel for LinearRegression {
    fn name(&self) -> &str {
        "linreg"
    }

    fn dim_param(&self) -> usize {
        self.n_coef() + 1
    }

    fn dim_obs(&self) -> usize {
        self.n_coef() + 1
    }

    fn response_dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.n_coef()).map(|j| format!("coef{j}")).collect();
        v.push("sigma2".into());
        v
    }

    fn support(&self) -> Vec<IntegrationDomain> {
        vec![IntegrationDomain::real_line()]
    }

    fn bounds(&self) -> Bounds {
        let p = self.n_coef();
        let mut lower = vec![f64::NEG_INFINITY; p + 1];
        lower[p] = 1e-12;
        Bounds {
            lower,
            upper: vec![f64::INFINITY; p + 1],
        }
    }

    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == self.dim_obs() && x.iter().all(|v| v.is_finite())
    }

    fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (_, v) = self.split(theta);
        let r = self.residual(theta, x);
        -0.5 * (2.0 * PI * v).ln() - 0.5 * r * r / v
    }

    fn log_densities(&self, theta: &[f64], data: &[Vec<f64>], out: &mut [f64]) {
        let (_, v) = self.split(theta);
        let c = -0.5 * (2.0 * PI * v).ln();
        for (o, x) in out.iter_mut().zip(data) {
            let r = self.residual(theta, x);
            *o = c - 0.5 * r * r / v;
        }
    }

    fn score(&self, theta: &[f64], x: &[f64]) -> DVector<f64> {
        let p = self.n_coef();
        let (_, v) = self.split(theta);
        let r = self.residual(theta, x);
        let mut u = DVector::zeros(p + 1);
        for j in 0..p {
            u[j] = x[1 + j] * r / v;
        }
        u[p] = -0.5 / v + 0.5 * r * r / (v * v);
        u
    }

    fn info(&self, theta: &[f64], x: &[f64]) -> DMatrix<f64> {
        let p = self.n_coef();
        let (_, v) = self.split(theta);
        let r = self.residual(theta, x);
        let mut m = DMatrix::zeros(p + 1, p + 1);
        for j in 0..p {
            for k in 0..p {
                m[(j, k)] = x[1 + j] * x[1 + k] / v;
            }
            m[(j, p)] = x[1 + j] * r / (v * v);
            m[(p, j)] = m[(j, p)];
        }
        m[(p, p)] = -0.5 / (v * v) + r * r / (v * v * v);
        m
    }

    fn default_init(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let p = self.n_coef();
        let x = DMatrix::from_fn(data.len(), p, |i, j| data[i][1 + j]);
        let y = DVector::from_iterator(data.len(), data.iter().map(|r| r[0]));
        let xtx = x.transpose() * &x;
        let coef = xtx
            .cholesky()
            .map(|c| c.solve(&(x.transpose() * &y)))
            .unwrap_or_else(|| DVector::zeros(p));
        let resid = &y - &x * &coef;
        let v = (resid.norm_squared() / data.len() as f64).max(1e-8);
        let mut init: Vec<f64> = coef.iter().copied().collect();
        init.push(v);
        init
    }

    fn contexts(&self) -> Vec<Vec<f64>> {
        self.design.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn density_power_integral(&self, theta: &[f64], beta: f64) -> Result<f64> {
        Ok(super::normal::normal_power_mass(theta[self.n_coef()], beta))
    }

    fn weighted_moments(&self, theta: &[f64], gamma: f64) -> Result<WeightedMoments> {
        let p = self.n_coef();
        let (_, v) = self.split(theta);
        if !(v > 0.0) {
            return Err(Error::invalid("error variance must be positive"));
        }
        let g1 = 1.0 + gamma;
        let mass = (2.0 * PI * v).powf(-gamma / 2.0) / g1.sqrt();
        let avg_gram = self.gram() / self.n_rows() as f64;
        let c = 1.0 / v;
        let mut score = DVector::zeros(p + 1);
        score[p] = -0.5 * mass * c * gamma / g1;
        let mut outer = DMatrix::zeros(p + 1, p + 1);
        let mut info = DMatrix::zeros(p + 1, p + 1);
        for j in 0..p {
            for k in 0..p {
                outer[(j, k)] = mass * avg_gram[(j, k)] / (v * g1);
                info[(j, k)] = mass * avg_gram[(j, k)] / v;
            }
        }
        outer[(p, p)] = mass * c * c * (0.25 - 0.5 / g1 + 0.75 / (g1 * g1));
        info[(p, p)] = mass * c * c * (-0.5 + 1.0 / g1);
        Ok(WeightedMoments {
            mass,
            score,
            outer,
            info,
        })
    }
}

/// `D = G⁻¹L(LᵀG⁻¹L)⁻¹LᵀG⁻¹` and `D_P = (LᵀG⁻¹L)⁻¹LᵀG⁻¹` with `G = XᵀX`.
pub fn regression_matrices(
    model: &LinearRegression,
    l: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = model.n_coef();
    if l.nrows() != p {
        return Err(Error::Dimension(format!(
            "constraint matrix must have {p} rows, got {}",
            l.nrows()
        )));
    }
    let r = l.ncols();
    if r == 0 || r > p || numerical_rank(l) < r {
        return Err(Error::RankDeficient {
            role: "constraint matrix L".into(),
        });
    }
    let ginv = model
        .gram()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { role: "X^T X".into() })?
        .inverse();
    let inner = (l.transpose() * &ginv * l)
        .cholesky()
        .ok_or_else(|| Error::RankDeficient {
            role: "L^T (X^T X)^-1 L".into(),
        })?
        .inverse();
    let dp = &inner * l.transpose() * &ginv;
    let d = &ginv * l * &dp;
    Ok((d, dp))
}

/// Closed forms for the general linear hypothesis `Lᵀϑ = l₀` at a null
/// point `(ϑ₀, σ₀²)`, written with the raw Gram matrix `XᵀX`.
#[derive(Debug, Clone)]
pub struct RegressionClosedForms {
    pub beta: f64,
    pub coef0: DVector<f64>,
    pub sigma0_sq: f64,
    pub design: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub d_p: DMatrix<f64>,
}

impl RegressionClosedForms {
    pub fn new(model: &LinearRegression, theta0: &[f64], l: &DMatrix<f64>, beta: f64) -> Result<Self> {
        let p = model.n_coef();
        if theta0.len() != p + 1 {
            return Err(Error::Dimension("null point must hold p coefficients and sigma2".into()));
        }
        let (d, d_p) = regression_matrices(model, l)?;
        Ok(RegressionClosedForms {
            beta,
            coef0: DVector::from_column_slice(&theta0[..p]),
            sigma0_sq: theta0[p],
            design: model.design().clone(),
            l: l.clone(),
            d,
            d_p,
        })
    }

    fn zeta(&self) -> f64 {
        zeta_kappa(self.beta).0
    }

    fn row(&self, i: usize) -> DVector<f64> {
        self.design.row(i).transpose()
    }

    fn resid(&self, i: usize, t: f64) -> f64 {
        t - self.row(i).dot(&self.coef0)
    }

    /// Noncentrality `ω_β = ζ^{−3/2}σ₀^{−2}δᵀ(Lᵀ(XᵀX)⁻¹L)⁻¹δ`.
    pub fn omega(&self, delta: &DVector<f64>) -> f64 {
        let ginv = (self.design.transpose() * &self.design)
            .try_inverse()
            .expect("design has full column rank");
        let inner = (self.l.transpose() * ginv * &self.l)
            .try_inverse()
            .expect("L has full column rank");
        delta.dot(&(inner * delta)) / (self.zeta().powf(1.5) * self.sigma0_sq)
    }

    fn if2_term(&self, i: usize, t: f64) -> f64 {
        let b = self.beta;
        let r = self.resid(i, t);
        let x = self.row(i);
        r * r * x.dot(&(&self.d * &x)) * (-b * r * r / self.sigma0_sq).exp()
    }

    fn if2_scale(&self) -> f64 {
        2.0 * (1.0 + self.beta).powi(3) / (self.zeta().powf(1.5) * self.sigma0_sq)
    }

    /// Second-order influence for contamination of observation `i` at `t`.
    pub fn second_order_influence(&self, i: usize, t: f64) -> f64 {
        self.if2_scale() * self.if2_term(i, t)
    }

    /// Second-order influence for contamination of every observation,
    /// observation `i` at `ts[i]`.
    pub fn second_order_influence_all(&self, ts: &[f64]) -> f64 {
        self.if2_scale() * ts.iter().enumerate().map(|(i, &t)| self.if2_term(i, t)).sum::<f64>()
    }

    fn pif_scale(&self, delta: &DVector<f64>, q: f64) -> Result<f64> {
        let r = self.l.ncols();
        let k = power_kernel(self.omega(delta), r, q)?;
        Ok(k * (1.0 + self.beta).powf(1.5) / (self.zeta().powf(1.5) * self.sigma0_sq))
    }

    fn pif_vector(&self, i: usize, t: f64) -> DVector<f64> {
        let r = self.resid(i, t);
        self.row(i) * (r * (-self.beta * r * r / (2.0 * self.sigma0_sq)).exp())
    }

    /// Power influence for contamination of observation `i` at `t`.
    pub fn power_influence(&self, i: usize, t: f64, delta: &DVector<f64>, q: f64) -> Result<f64> {
        Ok(self.pif_scale(delta, q)? * delta.dot(&(&self.d_p * self.pif_vector(i, t))))
    }

    /// Power influence for contamination of every observation.
    pub fn power_influence_all(&self, ts: &[f64], delta: &DVector<f64>, q: f64) -> Result<f64> {
        let mut acc = DVector::zeros(self.design.ncols());
        for (i, &t) in ts.iter().enumerate() {
            acc += self.pif_vector(i, t);
        }
        Ok(self.pif_scale(delta, q)? * delta.dot(&(&self.d_p * acc)))
    }

    /// `n/(ζ^{3/2}σ̂²) (Lᵀϑ̂ − l₀)ᵀ(Lᵀ G⁻¹ L)⁻¹(Lᵀϑ̂ − l₀)` where `G` is the
    /// row-averaged Gram matrix `XᵀX/n`.
    pub fn wald_statistic(&self, coef_hat: &DVector<f64>, sigma_sq_hat: f64, l0: &DVector<f64>) -> f64 {
        let n = self.design.nrows() as f64;
        let g = self.design.transpose() * &self.design / n;
        let ginv = g.try_inverse().expect("design has full column rank");
        let inner = (self.l.transpose() * ginv * &self.l)
            .try_inverse()
            .expect("L has full column rank");
        let m = self.l.transpose() * coef_hat - l0;
        n * m.dot(&(inner * &m)) / (self.zeta().powf(1.5) * sigma_sq_hat)
    }
}
