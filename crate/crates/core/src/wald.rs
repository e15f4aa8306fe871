//! Wald-type statistics built on the MDPDE, their p-values, and power
//! approximations for fixed and contiguous alternatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdpde::{matrices_at_model, MdpdeFit};
use crate::models::{eta_beta, zeta_kappa, ParametricModel};
use crate::numerics::chisq::{poisson_mixture, CentralTailLadder};
use crate::numerics::linalg::numerical_rank;
use crate::numerics::{chisq_quantile, chisq_sf, invert_spd, normal_cdf, noncentral_chisq_sf, NoncentralChisq, SymmetricMatrix};
use crate::par::{self, Execution};
use crate::robustness::if_estimator;

/// Default level of every test.
pub const DEFAULT_ALPHA: f64 = 0.05;

type MapFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

#[derive(Clone)]
enum Kind {
    Affine { l: DMatrix<f64>, l0: DVector<f64> },
    General { m: Arc<MapFn>, jacobian: Option<Arc<JacFn>> },
}

/// A composite null `m(θ) = 0_r` with Jacobian `M(θ) = ∂mᵀ/∂θ` (p×r).
#[derive(Clone)]
pub struct Restriction {
    p: usize,
    r: usize,
    kind: Kind,
}

impl fmt::Debug for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Affine { l, l0 } => f
                .debug_struct("Restriction")
                .field("p", &self.p)
                .field("r", &self.r)
                .field("l", l)
                .field("l0", l0)
                .finish(),
            Kind::General { jacobian, .. } => f
                .debug_struct("Restriction")
                .field("p", &self.p)
                .field("r", &self.r)
                .field("analytic_jacobian", &jacobian.is_some())
                .finish(),
        }
    }
}

impl Restriction {
    /// `m(θ) = Lᵀθ − l₀` for a p×r matrix `L`.
    pub fn linear(l: DMatrix<f64>, l0: DVector<f64>) -> Result<Self> {
        let (p, r) = l.shape();
        if r == 0 || r > p {
            return Err(Error::invalid(format!("restriction matrix must be p×r with 1 ≤ r ≤ p, got {p}x{r}")));
        }
        if l0.len() != r {
            return Err(Error::Dimension(format!("l0 has {} entries, expected {r}", l0.len())));
        }
        if numerical_rank(&l) < r {
            return Err(Error::RankDeficient {
                role: "restriction matrix".into(),
            });
        }
        Ok(Restriction {
            p,
            r,
            kind: Kind::Affine { l, l0 },
        })
    }

    /// `θ_j = v_j` for each listed coordinate.
    pub fn fix_coordinates(p: usize, indices: &[usize], values: &[f64]) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dimension("indices and values differ in length".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= p) {
            return Err(Error::invalid(format!("coordinate {i} out of range for {p} parameters")));
        }
        let mut l = DMatrix::zeros(p, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            l[(i, c)] = 1.0;
        }
        Self::linear(l, DVector::from_column_slice(values))
    }

    /// A smooth restriction; without `jacobian`, `M` is taken by five-point
    /// central differences.
    pub fn nonlinear<F>(p: usize, r: usize, m: F, jacobian: Option<Arc<JacFn>>) -> Result<Self>
    where
        F: Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    {
        if r == 0 || r > p {
            return Err(Error::invalid(format!("need 1 ≤ r ≤ p, got r = {r}, p = {p}")));
        }
        Ok(Restriction {
            p,
            r,
            kind: Kind::General {
                m: Arc::new(m),
                jacobian,
            },
        })
    }

    pub fn dim_param(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.kind, Kind::Affine { .. })
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.p {
            return Err(Error::Dimension(format!(
                "restriction acts on {} parameters, got {}",
                self.p,
                theta.len()
            )));
        }
        Ok(())
    }

    /// `m(θ)`
    pub fn value(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check(theta)?;
        let v = match &self.kind {
            Kind::Affine { l, l0 } => l.transpose() * DVector::from_column_slice(theta) - l0,
            Kind::General { m, .. } => m(theta),
        };
        if v.len() != self.r {
            return Err(Error::Dimension(format!("m(θ) has {} entries, expected {}", v.len(), self.r)));
        }
        Ok(v)
    }

    /// `M(θ)`, p×r.
    pub fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check(theta)?;
        let jm = match &self.kind {
            Kind::Affine { l, .. } => l.clone(),
            Kind::General { jacobian: Some(j), .. } => j(theta),
            Kind::General { m, jacobian: None } => {
                let mut jm = DMatrix::zeros(self.p, self.r);
                for k in 0..self.p {
                    let h = 1e-5 * theta[k].abs().max(1.0);
                    let at = |s: f64| {
                        let mut t = theta.to_vec();
                        t[k] += s * h;
                        m(&t)
                    };
                    let d = (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h);
                    jm.set_row(k, &d.transpose());
                }
                jm
            }
        };
        if jm.shape() != (self.p, self.r) {
            return Err(Error::Dimension(format!(
                "M(θ) is {}x{}, expected {}x{}",
                jm.nrows(),
                jm.ncols(),
                self.p,
                self.r
            )));
        }
        Ok(jm)
    }

    /// `M(θ)` after checking that it has full column rank.
    pub fn full_rank_jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let jm = self.jacobian(theta)?;
        if numerical_rank(&jm) < self.r {
            return Err(Error::RankDeficient {
                role: "restriction Jacobian M".into(),
            });
        }
        Ok(jm)
    }
}

/// Outcome of a Wald-type test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

impl WaldResult {
    pub fn from_statistic(statistic: f64, df: usize, alpha: f64) -> Result<Self> {
        if !(statistic >= 0.0) {
            return Err(Error::Numerical(format!("test statistic {statistic} is not non-negative")));
        }
        let critical_value = chisq_quantile(alpha, df)?;
        Ok(WaldResult {
            statistic,
            df,
            p_value: chisq_sf(statistic, df),
            critical_value,
            alpha,
            reject: statistic > critical_value,
        })
    }
}

/// `W⁰_n = n (θ̂ − θ₀)ᵀ Σ_β⁻¹(θ₀) (θ̂ − θ₀)`, with Σ evaluated at θ₀.
pub fn simple_wald<M: ParametricModel + ?Sized>(
    model: &M,
    fit: &MdpdeFit,
    theta0: &[f64],
    alpha: f64,
) -> Result<WaldResult> {
    let sigma0 = matrices_at_model(model, theta0, fit.beta)?.sigma;
    simple_wald_with(fit, theta0, &sigma0, alpha)
}

/// [`simple_wald`] with a precomputed `Σ_β(θ₀)`.
pub fn simple_wald_with(fit: &MdpdeFit, theta0: &[f64], sigma0: &SymmetricMatrix, alpha: f64) -> Result<WaldResult> {
    if theta0.len() != fit.dim() {
        return Err(Error::Dimension(format!(
            "θ₀ has {} entries, the fit has {}",
            theta0.len(),
            fit.dim()
        )));
    }
    let inv = invert_spd(sigma0, "Sigma_beta(theta0)")?;
    let diff = DVector::from_iterator(fit.dim(), fit.theta_hat.iter().zip(theta0).map(|(a, b)| a - b));
    WaldResult::from_statistic(fit.n as f64 * inv.quad_form(&diff), fit.dim(), alpha)
}

/// `W_n = n mᵀ(θ̂)(Mᵀ(θ̂) Σ_β(θ̂) M(θ̂))⁻¹ m(θ̂)`, everything at θ̂.
pub fn composite_wald(fit: &MdpdeFit, restriction: &Restriction, alpha: f64) -> Result<WaldResult> {
    let m = restriction.value(&fit.theta_hat)?;
    let jm = restriction.full_rank_jacobian(&fit.theta_hat)?;
    let inner = invert_spd(&fit.sigma.congruence(&jm), "M^T Sigma_beta M")?;
    WaldResult::from_statistic(fit.n as f64 * inner.quad_form(&m), restriction.r(), alpha)
}

/// The null of a test: a point θ₀ or a restriction.
#[derive(Debug, Clone, Copy)]
pub enum Null<'a> {
    Simple(&'a [f64]),
    Composite(&'a Restriction),
}

/// Normal approximation `1 − Φ(√n/σ (χ²_{df,α}/n − ℓ))` to the power at a
/// fixed alternative θ*.
///
/// For a simple null `ℓ = Δᵀ Σ_β⁻¹(θ₀) Δ` with `Δ = θ* − θ₀` and the
/// delta-method variance `σ² = 4 Δᵀ Σ_β⁻¹(θ₀) Σ_β(θ*) Σ_β⁻¹(θ₀) Δ`. For a
/// composite null `ℓ* = mᵀ(Mᵀ Σ_β M)⁻¹ m` at θ*, without a factor n, and
/// `σ² = ∇ᵀ Σ_β(θ*) ∇` with `∇ = 2 M (Mᵀ Σ_β M)⁻¹ m`.
pub fn power_fixed_alternative<M: ParametricModel + ?Sized>(
    model: &M,
    theta_star: &[f64],
    null: Null<'_>,
    beta: f64,
    n: usize,
    alpha: f64,
) -> Result<f64> {
    let sigma_star = matrices_at_model(model, theta_star, beta)?.sigma;
    let (ell, var, df) = match null {
        Null::Simple(theta0) => {
            let sigma0 = matrices_at_model(model, theta0, beta)?.sigma;
            let inv0 = invert_spd(&sigma0, "Sigma_beta(theta0)")?;
            let diff = DVector::from_iterator(theta0.len(), theta_star.iter().zip(theta0).map(|(a, b)| a - b));
            let a = inv0.as_matrix() * &diff;
            (diff.dot(&a), 4.0 * sigma_star.quad_form(&a), theta0.len())
        }
        Null::Composite(restriction) => {
            let m = restriction.value(theta_star)?;
            let jm = restriction.full_rank_jacobian(theta_star)?;
            let inner = invert_spd(&sigma_star.congruence(&jm), "M^T Sigma_beta M")?;
            let w = inner.as_matrix() * &m;
            let grad = &jm * &w * 2.0;
            (m.dot(&w), sigma_star.quad_form(&grad), restriction.r())
        }
    };
    if !(var > 0.0) {
        return Err(Error::Numerical(
            "power variance vanishes at the alternative (degenerate direction)".into(),
        ));
    }
    let q = chisq_quantile(alpha, df)?;
    let nf = n as f64;
    Ok(1.0 - normal_cdf(nf.sqrt() / var.sqrt() * (q / nf - ell)))
}

/// How a contiguous alternative is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum Shift {
    /// `θ_n = θ₀ + n^{−1/2} d`.
    Direction(DVector<f64>),
    /// `m(θ_n) = n^{−1/2} δ`; composite nulls only.
    Constraint(DVector<f64>),
}

/// A contiguous alternative, optionally with contamination `ε/√n` at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContiguousSpec {
    pub shift: Shift,
    pub epsilon: f64,
    pub point: Option<Vec<f64>>,
}

impl ContiguousSpec {
    pub fn direction(d: DVector<f64>) -> Self {
        ContiguousSpec {
            shift: Shift::Direction(d),
            epsilon: 0.0,
            point: None,
        }
    }

    pub fn constraint(delta: DVector<f64>) -> Self {
        ContiguousSpec {
            shift: Shift::Constraint(delta),
            epsilon: 0.0,
            point: None,
        }
    }

    pub fn contaminated(mut self, epsilon: f64, point: Vec<f64>) -> Self {
        self.epsilon = epsilon;
        self.point = Some(point);
        self
    }
}

/// Noncentrality and degrees of freedom of the contiguous limit; the
/// contamination enters through `d̃ = d + ε IF(x)`.
pub fn contiguous_noncentrality<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    restriction: Option<&Restriction>,
    beta: f64,
    spec: &ContiguousSpec,
) -> Result<(f64, usize)> {
    let p = model.dim_param();
    if !(spec.epsilon >= 0.0 && spec.epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be non-negative, got {}", spec.epsilon)));
    }
    let sigma0 = matrices_at_model(model, theta0, beta)?.sigma;
    let bump = match (&spec.point, spec.epsilon) {
        (Some(x), e) if e > 0.0 => Some(if_estimator(model, theta0, beta, x)? * e),
        _ => None,
    };
    match restriction {
        None => {
            let Shift::Direction(d) = &spec.shift else {
                return Err(Error::invalid("a simple null needs a parameter-space direction d"));
            };
            if d.len() != p {
                return Err(Error::Dimension(format!("d has {} entries, expected {p}", d.len())));
            }
            let dt = match bump {
                Some(b) => d + b,
                None => d.clone(),
            };
            let inv = invert_spd(&sigma0, "Sigma_beta(theta0)")?;
            Ok((inv.quad_form(&dt), p))
        }
        Some(rst) => {
            let jm = rst.full_rank_jacobian(theta0)?;
            let inner = invert_spd(&sigma0.congruence(&jm), "Sigma_star")?;
            let delta = match &spec.shift {
                Shift::Direction(d) => {
                    if d.len() != p {
                        return Err(Error::Dimension(format!("d has {} entries, expected {p}", d.len())));
                    }
                    jm.transpose() * d
                }
                Shift::Constraint(delta) => {
                    if delta.len() != rst.r() {
                        return Err(Error::Dimension(format!(
                            "δ has {} entries, expected {}",
                            delta.len(),
                            rst.r()
                        )));
                    }
                    delta.clone()
                }
            };
            let dt = match bump {
                Some(b) => delta + jm.transpose() * b,
                None => delta,
            };
            Ok((inner.quad_form(&dt), rst.r()))
        }
    }
}

/// `1 − F_{χ²_df(δ)}(χ²_{df,α})` under a contiguous alternative.
pub fn contiguous_power<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    restriction: Option<&Restriction>,
    beta: f64,
    spec: &ContiguousSpec,
    alpha: f64,
) -> Result<f64> {
    let (delta, df) = contiguous_noncentrality(model, theta0, restriction, beta, spec)?;
    power_from_noncentrality(delta, df, alpha)
}

/// `P(χ²_df(δ) > χ²_{df,α})`
pub fn power_from_noncentrality(delta: f64, df: usize, alpha: f64) -> Result<f64> {
    let q = chisq_quantile(alpha, df)?;
    noncentral_chisq_sf(q, NoncentralChisq::new(df, delta)?)
}

/// `Σ_v C_v(d̃, Σ_β⁻¹) P(χ²_{df+2v} > χ²_{df,α})` with
/// `C_v(t, A) = (tᵀAt)^v/(v! 2^v) e^{−tᵀAt/2}`.
pub fn contiguous_power_series<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    restriction: Option<&Restriction>,
    beta: f64,
    spec: &ContiguousSpec,
    alpha: f64,
) -> Result<f64> {
    let (s, df) = contiguous_noncentrality(model, theta0, restriction, beta, spec)?;
    let q = chisq_quantile(alpha, df)?;
    let mut ladder = CentralTailLadder::new(q, df);
    poisson_mixture(s, "contiguous power series", |v| {
        if v > 0 {
            ladder.step();
        }
        ladder.value()
    })
}

/// Asymptotic level under contiguous contamination `ε/√n` at `x`.
pub fn level_series<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    restriction: Option<&Restriction>,
    beta: f64,
    epsilon: f64,
    x: &[f64],
    alpha: f64,
) -> Result<f64> {
    let zero = match restriction {
        None => Shift::Direction(DVector::zeros(model.dim_param())),
        Some(r) => Shift::Constraint(DVector::zeros(r.r())),
    };
    let spec = ContiguousSpec {
        shift: zero,
        epsilon: epsilon.abs(),
        point: Some(x.to_vec()),
    };
    contiguous_power_series(model, theta0, restriction, beta, &spec, alpha)
}

/// Central difference of [`level_series`] in ε at ε = 0.
pub fn level_slope<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    restriction: Option<&Restriction>,
    beta: f64,
    x: &[f64],
    alpha: f64,
    h: f64,
) -> Result<f64> {
    let up = level_series(model, theta0, restriction, beta, h, x, alpha)?;
    let down = level_series(model, theta0, restriction, beta, -h, x, alpha)?;
    Ok((up - down) / (2.0 * h))
}

/// Which example a power table reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerExample {
    /// H₀: θ = 1 for the unit-scale Weibull shape; direction d on θ.
    WeibullShape,
    /// H₀: ρ = 0 for the bivariate normal; direction d on ρ.
    Correlation,
}

/// How the noncentrality of a power table is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerRoute {
    /// `d²η_β²/η_{2β}` for the Weibull test and `ζ_β^{−5/2}d²` for the
    /// correlation test.
    ClosedForm,
    /// `dᵀ Σ_β⁻¹ d` (or its composite analogue) from the numerically
    /// evaluated sandwich matrix.
    Sandwich,
}

/// Contiguous powers, one row per d and one column per β.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub example: PowerExample,
    pub route: PowerRoute,
    pub alpha: f64,
    pub ds: Vec<f64>,
    pub betas: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Null value used by each example.
pub fn example_null(example: PowerExample) -> Vec<f64> {
    match example {
        PowerExample::WeibullShape => vec![1.0],
        PowerExample::Correlation => vec![0.0, 0.0, 1.0, 1.0, 0.0],
    }
}

/// Noncentrality per unit d², for one β.
pub fn unit_noncentrality(example: PowerExample, route: PowerRoute, beta: f64) -> Result<f64> {
    match (example, route) {
        (PowerExample::WeibullShape, PowerRoute::ClosedForm) => {
            let e = eta_beta(beta)?;
            Ok(e * e / eta_beta(2.0 * beta)?)
        }
        (PowerExample::Correlation, PowerRoute::ClosedForm) => Ok(zeta_kappa(beta).0.powf(-2.5)),
        (PowerExample::WeibullShape, PowerRoute::Sandwich) => {
            let s = matrices_at_model(&crate::models::WeibullShape, &[1.0], beta)?.sigma;
            Ok(1.0 / s[(0, 0)])
        }
        (PowerExample::Correlation, PowerRoute::Sandwich) => {
            let theta0 = example_null(example);
            let rst = Restriction::fix_coordinates(5, &[4], &[0.0])?;
            let spec = ContiguousSpec::direction(DVector::from_column_slice(&[0.0, 0.0, 0.0, 0.0, 1.0]));
            Ok(contiguous_noncentrality(&crate::models::BivariateNormal, &theta0, Some(&rst), beta, &spec)?.0)
        }
    }
}

/// Power table over a (d, β) grid; columns are computed independently and
/// assembled in grid order.
pub fn power_table(
    example: PowerExample,
    route: PowerRoute,
    ds: &[f64],
    betas: &[f64],
    alpha: f64,
    exec: Execution,
) -> Result<PowerTable> {
    let columns = par::try_map(exec, betas, |&beta| -> Result<Vec<f64>> {
        let unit = unit_noncentrality(example, route, beta)?;
        ds.iter()
            .map(|&d| power_from_noncentrality(d * d * unit, 1, alpha))
            .collect()
    })?;
    let values = (0..ds.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    Ok(PowerTable {
        example,
        route,
        alpha,
        ds: ds.to_vec(),
        betas: betas.to_vec(),
        values,
    })
}
