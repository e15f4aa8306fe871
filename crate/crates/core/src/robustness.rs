//! Influence diagnostics: the IF of the estimator, second-order IFs of the
//! Wald-type statistics, power and level influence functions, gross-error
//! sensitivity, and the chi-square inflation factor with its slope.
//!
//! The `bounded` flag of an [`InfluenceReport`] is a heuristic read off a
//! finite grid (tail values below `1e-3` of the grid supremum). It is not a
//! proof of boundedness.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdpde::{matrices_at_model, matrices_under_g, ContaminatedTruth, ModelMatrices};
use crate::models::ParametricModel;
use crate::numerics::chisq::power_kernel;
use crate::numerics::{chisq_quantile, generalized_eigenvalues, invert_spd, SymmetricMatrix};
use crate::par::{self, Execution};
use crate::wald::{Restriction, Shift};

/// Relative tail level below which a grid curve counts as decayed.
pub const TAIL_DECAY: f64 = 1e-3;

/// `u_θ(x) f_θ^β(x) − ξ_β(θ)`
fn centered_score<M: ParametricModel + ?Sized>(model: &M, theta: &[f64], beta: f64, xi: &DVector<f64>, x: &[f64]) -> DVector<f64> {
    let fb = (beta * model.log_density(theta, x)).exp();
    model.score(theta, x) * fb - xi
}

fn check_point<M: ParametricModel + ?Sized>(model: &M, x: &[f64]) -> Result<()> {
    if !model.in_support(x) {
        return Err(Error::invalid(format!(
            "contamination point {x:?} lies outside the support of {}",
            model.name()
        )));
    }
    Ok(())
}

/// `IF(x) = J_β⁻¹(θ₀)(u_{θ₀}(x) f_{θ₀}^β(x) − ξ_β(θ₀))`.
///
/// For covariate models the matrices are averages over the design rows.
pub fn if_estimator<M: ParametricModel + ?Sized>(model: &M, theta0: &[f64], beta: f64, x: &[f64]) -> Result<DVector<f64>> {
    check_point(model, x)?;
    let mats = matrices_at_model(model, theta0, beta)?;
    Ok(mats.j_inv.as_matrix() * centered_score(model, theta0, beta, &mats.xi, x))
}

/// Which formula evaluates the second-order IF of the simple-null statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum If2Route {
    /// `2 vᵀ J⁻¹ Σ⁻¹ J⁻¹ v`
    General,
    /// `2 vᵀ K⁻¹ v`, valid when K is full rank.
    FullRank,
}

#[derive(Debug, Clone)]
struct CompositeParts {
    jac: DMatrix<f64>,
    sigma_star_inv: SymmetricMatrix,
}

/// Matrices of a null hypothesis at θ₀, reused across contamination points.
///
/// With covariates, contamination hits one observation of a fixed design of
/// `w` rows. Quantities then follow the total-information convention:
/// `IF = J⁻¹v/w`, `Σ_total = Σ/w`, and noncentralities use `Σ_total`.
/// Without covariates `w = 1`.
#[derive(Debug, Clone)]
pub struct NullAnalysis<'a, M: ParametricModel + ?Sized> {
    model: &'a M,
    theta0: Vec<f64>,
    beta: f64,
    weight: f64,
    mats: ModelMatrices,
    sigma_inv: SymmetricMatrix,
    /// `M Σ*⁻¹ Mᵀ`, or `Σ⁻¹` for a simple null.
    projector: SymmetricMatrix,
    composite: Option<CompositeParts>,
}

impl<'a, M: ParametricModel + ?Sized> NullAnalysis<'a, M> {
    pub fn simple(model: &'a M, theta0: &[f64], beta: f64) -> Result<Self> {
        let mats = matrices_at_model(model, theta0, beta)?;
        let sigma_inv = invert_spd(&mats.sigma, "Sigma_beta(theta0)")?;
        Ok(NullAnalysis {
            model,
            theta0: theta0.to_vec(),
            beta,
            weight: model.contexts().len() as f64,
            projector: sigma_inv.clone(),
            sigma_inv,
            mats,
            composite: None,
        })
    }

    pub fn composite(model: &'a M, theta0: &[f64], restriction: &Restriction, beta: f64) -> Result<Self> {
        if restriction.dim_param() != model.dim_param() {
            return Err(Error::Dimension(format!(
                "restriction acts on {} parameters, the model has {}",
                restriction.dim_param(),
                model.dim_param()
            )));
        }
        let mats = matrices_at_model(model, theta0, beta)?;
        let sigma_inv = invert_spd(&mats.sigma, "Sigma_beta(theta0)")?;
        let jac = restriction.full_rank_jacobian(theta0)?;
        let sigma_star_inv = invert_spd(&mats.sigma.congruence(&jac), "Sigma_star")?;
        let projector = SymmetricMatrix::symmetrize(&jac * sigma_star_inv.as_matrix() * jac.transpose());
        Ok(NullAnalysis {
            model,
            theta0: theta0.to_vec(),
            beta,
            weight: model.contexts().len() as f64,
            mats,
            sigma_inv,
            projector,
            composite: Some(CompositeParts { jac, sigma_star_inv }),
        })
    }

    /// Builds the simple or composite analysis.
    pub fn new(model: &'a M, theta0: &[f64], restriction: Option<&Restriction>, beta: f64) -> Result<Self> {
        match restriction {
            None => Self::simple(model, theta0, beta),
            Some(r) => Self::composite(model, theta0, r, beta),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn matrices(&self) -> &ModelMatrices {
        &self.mats
    }

    pub fn is_composite(&self) -> bool {
        self.composite.is_some()
    }

    /// p for a simple null, r for a composite one.
    pub fn df(&self) -> usize {
        match &self.composite {
            None => self.model.dim_param(),
            Some(c) => c.jac.ncols(),
        }
    }

    /// `M Σ*⁻¹ Mᵀ`, or `Σ⁻¹` for a simple null.
    pub fn projector(&self) -> &SymmetricMatrix {
        &self.projector
    }

    /// `u f^β − ξ` at a contamination point.
    pub fn centered_score(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_point(self.model, x)?;
        Ok(centered_score(self.model, &self.theta0, self.beta, &self.mats.xi, x))
    }

    /// IF of the estimator at `x`.
    pub fn influence(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.mats.j_inv.as_matrix() * self.centered_score(x)? / self.weight)
    }

    /// IF of the estimator when every point in `xs` is contaminated at once.
    pub fn influence_many(&self, xs: &[Vec<f64>]) -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(self.model.dim_param());
        for x in xs {
            acc += self.influence(x)?;
        }
        Ok(acc)
    }

    /// `2 IFᵀ P IF` in the total-information convention, P the projector.
    pub fn if2_of(&self, influence: &DVector<f64>) -> f64 {
        2.0 * self.weight * self.projector.quad_form(influence)
    }

    /// Second-order IF of the test statistic at `x`.
    pub fn if2(&self, x: &[f64]) -> Result<f64> {
        Ok(self.if2_of(&self.influence(x)?))
    }

    /// `2 vᵀ K⁻¹ v`; simple nulls only.
    pub fn if2_full_rank(&self, x: &[f64]) -> Result<f64> {
        if self.is_composite() {
            return Err(Error::Unsupported("the K-inverse shortcut applies to simple nulls".into()));
        }
        let k_inv = invert_spd(&self.mats.k, "K_beta")?;
        Ok(2.0 * k_inv.quad_form(&self.centered_score(x)?) / self.weight)
    }

    /// Shift in the coordinates of the projector together with the matrix
    /// that carries an estimator IF into them.
    fn shift_parts(&self, shift: &Shift) -> Result<(DVector<f64>, SymmetricMatrix, DMatrix<f64>)> {
        let p = self.model.dim_param();
        match (shift, &self.composite) {
            (Shift::Direction(d), _) => {
                if d.len() != p {
                    return Err(Error::Dimension(format!("d has {} entries, expected {p}", d.len())));
                }
                Ok((d.clone(), self.projector.clone(), DMatrix::identity(p, p)))
            }
            (Shift::Constraint(delta), Some(c)) => {
                if delta.len() != c.jac.ncols() {
                    return Err(Error::Dimension(format!(
                        "δ has {} entries, expected {}",
                        delta.len(),
                        c.jac.ncols()
                    )));
                }
                Ok((delta.clone(), c.sigma_star_inv.clone(), c.jac.transpose()))
            }
            (Shift::Constraint(_), None) => Err(Error::invalid("a simple null needs a parameter-space direction d")),
        }
    }

    /// Contiguous noncentrality of the shift.
    pub fn noncentrality(&self, shift: &Shift) -> Result<f64> {
        let (s, a, _) = self.shift_parts(shift)?;
        Ok(self.weight * a.quad_form(&s))
    }

    /// `K*_df(s) · sᵀ A (T IF)` for an arbitrary estimator IF, where `s` is
    /// the shift, `A` its metric and `T` maps IFs to the shift coordinates.
    pub fn pif_of(&self, influence: &DVector<f64>, shift: &Shift, alpha: f64) -> Result<f64> {
        let (s, a, t) = self.shift_parts(shift)?;
        let nc = self.weight * a.quad_form(&s);
        let q = chisq_quantile(alpha, self.df())?;
        let k = power_kernel(nc, self.df(), q)?;
        let metric = a.as_matrix() * self.weight;
        Ok(k * s.dot(&(metric * (t * influence))))
    }

    /// Power influence function at `x`.
    pub fn pif(&self, x: &[f64], shift: &Shift, alpha: f64) -> Result<f64> {
        self.pif_of(&self.influence(x)?, shift, alpha)
    }

    /// Level influence function; identically zero.
    pub fn lif(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// Second-order IF of the simple-null statistic.
pub fn if2_simple<M: ParametricModel + ?Sized>(model: &M, theta0: &[f64], beta: f64, x: &[f64], route: If2Route) -> Result<f64> {
    let a = NullAnalysis::simple(model, theta0, beta)?;
    match route {
        If2Route::General => a.if2(x),
        If2Route::FullRank => a.if2_full_rank(x),
    }
}

/// Second-order IF of the composite-null statistic.
pub fn if2_composite<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    beta: f64,
    restriction: &Restriction,
    x: &[f64],
) -> Result<f64> {
    NullAnalysis::composite(model, theta0, restriction, beta)?.if2(x)
}

/// Power influence function for a simple (`restriction = None`) or
/// composite null.
pub fn pif<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    beta: f64,
    restriction: Option<&Restriction>,
    shift: &Shift,
    alpha: f64,
    x: &[f64],
) -> Result<f64> {
    NullAnalysis::new(model, theta0, restriction, beta)?.pif(x, shift, alpha)
}

/// Level influence function; the level is unaffected to every order.
pub fn lif<M: ParametricModel + ?Sized>(_model: &M, _theta0: &[f64], _beta: f64, _x: &[f64]) -> f64 {
    0.0
}

/// Exact sup over the plane of the correlation-test IF₂
/// `2(1+2β)³z₁²z₂²e^{−β(z₁²+z₂²)}`, which is `2(1+2β)³e^{−2}/β²`;
/// infinite at β = 0.
pub fn correlation_gross_error_sensitivity(beta: f64) -> f64 {
    if beta == 0.0 {
        return f64::INFINITY;
    }
    2.0 * (1.0 + 2.0 * beta).powi(3) * (-2.0f64).exp() / (beta * beta)
}

/// Contamination points with their tail structure.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    pub points: Vec<Vec<f64>>,
    /// Lattice shape, e.g. `[401]` or `[61, 61]`.
    pub shape: Vec<usize>,
    /// Indices on the outer boundary of the grid.
    pub edge: Vec<usize>,
    /// Index sequences running from the centre outwards, used to detect
    /// growth at the tails.
    pub rays: Vec<Vec<usize>>,
}

impl EvaluationGrid {
    /// `n` equally spaced points on `[lo, hi]`, with rays to both ends from
    /// the point nearest `centre`.
    pub fn line(lo: f64, hi: f64, n: usize, centre: f64) -> Result<Self> {
        if n < 3 || !(hi > lo) {
            return Err(Error::invalid(format!("need at least 3 points on a non-empty interval, got {n} on [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let points: Vec<Vec<f64>> = (0..n).map(|i| vec![lo + step * i as f64]).collect();
        let c = (((centre - lo) / step).round().max(0.0) as usize).min(n - 1);
        let mut rays = Vec::new();
        if c > 0 {
            rays.push((0..=c).rev().collect());
        }
        if c < n - 1 {
            rays.push((c..n).collect());
        }
        Ok(EvaluationGrid {
            points,
            shape: vec![n],
            edge: vec![0, n - 1],
            rays,
        })
    }

    /// Square `n×n` lattice on `[lo₁, hi₁]×[lo₂, hi₂]`, row-major in the first
    /// coordinate; rays run along the four diagonals.
    pub fn lattice(lo: [f64; 2], hi: [f64; 2], n: usize) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(Error::invalid(format!("lattice size must be odd and at least 3, got {n}")));
        }
        let step = [(hi[0] - lo[0]) / (n - 1) as f64, (hi[1] - lo[1]) / (n - 1) as f64];
        let mut points = Vec::with_capacity(n * n);
        let mut edge = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    edge.push(points.len());
                }
                points.push(vec![lo[0] + step[0] * i as f64, lo[1] + step[1] * j as f64]);
            }
        }
        let c = n / 2;
        let idx = |i: usize, j: usize| i * n + j;
        let rays = vec![
            (0..=c).map(|k| idx(c + k, c + k)).collect(),
            (0..=c).map(|k| idx(c - k, c - k)).collect(),
            (0..=c).map(|k| idx(c + k, c - k)).collect(),
            (0..=c).map(|k| idx(c - k, c + k)).collect(),
        ];
        Ok(EvaluationGrid {
            points,
            shape: vec![n, n],
            edge,
            rays,
        })
    }

    /// Model-specific default grid around θ₀, or `None` for covariate
    /// models, whose grids are built per design row with
    /// [`regression_row_grid`].
    pub fn default_for<M: ParametricModel + ?Sized>(model: &M, theta0: &[f64]) -> Result<Option<Self>> {
        model.check_theta(theta0)?;
        let g = match model.name() {
            "normal-loc" => {
                let sigma = model.info(theta0, &[theta0[0]])[(0, 0)].recip().sqrt();
                Self::line(theta0[0] - 10.0 * sigma, theta0[0] + 10.0 * sigma, 401, theta0[0])?
            }
            "normal-loc-scale" => Self::line(theta0[0] - 10.0 * theta0[1], theta0[0] + 10.0 * theta0[1], 401, theta0[0])?,
            "weibull-shape" => {
                let n = 301;
                let step = 15.0 / n as f64;
                let mut g = Self::line(step, 15.0, n, 1.0)?;
                g.points = (0..n).map(|i| vec![step * (i + 1) as f64]).collect();
                g
            }
            "bivariate-normal" => Self::lattice(
                [theta0[0] - 8.0 * theta0[2], theta0[1] - 8.0 * theta0[3]],
                [theta0[0] + 8.0 * theta0[2], theta0[1] + 8.0 * theta0[3]],
                61,
            )?,
            _ => return Ok(None),
        };
        Ok(Some(g))
    }
}

/// Responses `xᵢᵀϑ₀ + s σ₀` for `s` in `[−10, 10]`, 401 points, as full
/// observations `[t, xᵢ]` of design row `row`.
pub fn regression_row_grid(design_row: &[f64], theta0: &[f64]) -> Result<EvaluationGrid> {
    let p = design_row.len();
    if theta0.len() != p + 1 || !(theta0[p] > 0.0) {
        return Err(Error::Dimension("null point must hold the coefficients and a positive sigma2".into()));
    }
    let mean: f64 = design_row.iter().zip(theta0).map(|(x, b)| x * b).sum();
    let sd = theta0[p].sqrt();
    let mut g = EvaluationGrid::line(mean - 10.0 * sd, mean + 10.0 * sd, 401, mean)?;
    for pt in &mut g.points {
        pt.extend_from_slice(design_row);
    }
    Ok(g)
}

/// Summary of one curve on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub sup: f64,
    pub argsup: usize,
    /// Largest magnitude on the grid edge.
    pub edge_max: f64,
    /// Edge values below [`TAIL_DECAY`]` · sup`.
    pub bounded: bool,
    /// Magnitudes strictly increase over the last points of every ray.
    pub growing: bool,
}

const RAY_TAIL: usize = 5;

impl CurveSummary {
    pub fn from_values(values: &[f64], grid: &EvaluationGrid) -> Self {
        let (argsup, sup) = values
            .iter()
            .map(|v| v.abs())
            .enumerate()
            .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let edge_max = grid.edge.iter().map(|&i| values[i].abs()).fold(0.0, f64::max);
        let growing = !grid.rays.is_empty()
            && grid.rays.iter().all(|ray| {
                let tail = &ray[ray.len().saturating_sub(RAY_TAIL)..];
                tail.len() >= 2 && tail.windows(2).all(|w| values[w[1]].abs() > values[w[0]].abs())
            });
        CurveSummary {
            sup,
            argsup,
            edge_max,
            bounded: sup.is_finite() && edge_max < TAIL_DECAY * sup,
            growing,
        }
    }
}

/// IF, IF₂ and PIF evaluated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceReport {
    pub beta: f64,
    pub theta0: Vec<f64>,
    pub df: usize,
    pub composite: bool,
    pub grid: EvaluationGrid,
    pub influence: Vec<DVector<f64>>,
    pub if2: Vec<f64>,
    /// Present when a shift for the power was supplied.
    pub pif: Option<Vec<f64>>,
    pub influence_summary: CurveSummary,
    pub if2_summary: CurveSummary,
    pub pif_summary: Option<CurveSummary>,
}

impl InfluenceReport {
    /// Evaluates every point of `grid`; points are processed independently
    /// and assembled in grid order.
    pub fn compute<M: ParametricModel + ?Sized>(
        analysis: &NullAnalysis<'_, M>,
        grid: EvaluationGrid,
        shift: Option<(&Shift, f64)>,
        exec: Execution,
    ) -> Result<Self> {
        type Row = (DVector<f64>, f64, Option<f64>);
        let rows: Vec<Row> = par::try_map(exec, &grid.points, |x| -> Result<Row> {
            let inf = analysis.influence(x)?;
            let if2 = analysis.if2_of(&inf);
            let p = match shift {
                Some((s, alpha)) => Some(analysis.pif_of(&inf, s, alpha)?),
                None => None,
            };
            Ok((inf, if2, p))
        })?;
        let norms: Vec<f64> = rows.iter().map(|r| r.0.norm()).collect();
        let if2: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let pif: Option<Vec<f64>> = shift.map(|_| rows.iter().map(|r| r.2.unwrap_or(0.0)).collect());
        Ok(InfluenceReport {
            beta: analysis.beta(),
            theta0: analysis.theta0().to_vec(),
            df: analysis.df(),
            composite: analysis.is_composite(),
            influence_summary: CurveSummary::from_values(&norms, &grid),
            if2_summary: CurveSummary::from_values(&if2, &grid),
            pif_summary: pif.as_ref().map(|v| CurveSummary::from_values(v, &grid)),
            influence: rows.into_iter().map(|r| r.0).collect(),
            if2,
            pif,
            grid,
        })
    }

    /// Grid supremum of IF₂, or infinity when β = 0 and the model's score
    /// is unbounded.
    pub fn gross_error_sensitivity<M: ParametricModel + ?Sized>(&self, model: &M) -> f64 {
        gross_error_sensitivity(model, self.beta, &self.if2_summary)
    }
}

/// Supremum of IF₂ from a grid summary; infinite at β = 0 for models with
/// an unbounded score.
pub fn gross_error_sensitivity<M: ParametricModel + ?Sized>(model: &M, beta: f64, summary: &CurveSummary) -> f64 {
    if beta == 0.0 && !model.score_is_bounded() {
        f64::INFINITY
    } else {
        summary.sup
    }
}

/// Chi-square inflation factor under `g = (1−ε) f_{θ₀} + ε Δ_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsifReport {
    pub beta: f64,
    pub epsilon: f64,
    pub point: Vec<f64>,
    pub df: usize,
    pub composite: bool,
    /// Eigenvalues of the pencil (Σ_g, Σ), or (Σ*_g, Σ*), ascending.
    pub eigenvalues: Vec<f64>,
    /// Mean eigenvalue.
    pub mean: f64,
    /// `(1/df) trace(Σ⁻¹ Σ_g)`, computed independently of the eigenvalues.
    pub trace_mean: f64,
    /// `∂c̄/∂ε` at ε = 0.
    pub slope: f64,
    /// Central differences `(h, slope)` of the mean in ε.
    pub slope_fd: Vec<(f64, f64)>,
    /// The slope read from the closed display with τ-traces.
    pub slope_displayed: f64,
    /// `τ(y)` (or `τ*(y)`).
    pub tau: f64,
}

impl CsifReport {
    /// Largest `|slope − fd| / max(1, |slope|)` over the finite differences.
    pub fn slope_residual(&self) -> f64 {
        self.slope_fd
            .iter()
            .map(|(_, fd)| (self.slope - fd).abs() / self.slope.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Finite-difference step sizes of the CSIF slope.
pub const CSIF_FD_STEPS: [f64; 2] = [1e-4, 1e-5];

struct CsifBase<'a, M: ParametricModel + ?Sized> {
    analysis: NullAnalysis<'a, M>,
    /// The matrix `B` in `Σ*_g = Bᵀ Σ_g B`: `M` or the identity.
    b: DMatrix<f64>,
    /// `(Bᵀ Σ B)⁻¹`
    inner_inv: SymmetricMatrix,
}

impl<'a, M: ParametricModel + ?Sized> CsifBase<'a, M> {
    fn new(model: &'a M, theta0: &[f64], beta: f64, restriction: Option<&Restriction>) -> Result<Self> {
        let analysis = NullAnalysis::new(model, theta0, restriction, beta)?;
        let (b, inner_inv) = match &analysis.composite {
            None => (DMatrix::identity(model.dim_param(), model.dim_param()), analysis.sigma_inv.clone()),
            Some(c) => (c.jac.clone(), c.sigma_star_inv.clone()),
        };
        Ok(CsifBase { analysis, b, inner_inv })
    }

    fn sigma_g(&self, y: &[f64], epsilon: f64) -> Result<SymmetricMatrix> {
        let truth = ContaminatedTruth {
            base_theta: self.analysis.theta0.clone(),
            epsilon,
            point: y.to_vec(),
        };
        let g = matrices_under_g(self.analysis.model, &truth, self.analysis.beta)?;
        Ok(g.sigma.congruence(&self.b))
    }

    fn trace_mean(&self, y: &[f64], epsilon: f64) -> Result<f64> {
        let s = self.sigma_g(y, epsilon)?;
        Ok((self.inner_inv.as_matrix() * s.as_matrix()).trace() / self.b.ncols() as f64)
    }

    /// `(1/df)[tr(P J⁻¹ K' J⁻¹) − 2 tr(P J⁻¹ J' Σ)]` with
    /// `P = B(BᵀΣB)⁻¹Bᵀ` and `J'`, `K'` the ε-derivatives at the model.
    fn slope(&self, y: &[f64]) -> Result<f64> {
        let a = &self.analysis;
        let (model, theta, beta) = (a.model, a.theta0.as_slice(), a.beta);
        check_point(model, y)?;
        let m1 = model.weighted_moments(theta, beta)?;
        let m2 = model.weighted_moments(theta, 2.0 * beta)?;
        let u = model.score(theta, y);
        let info = model.info(theta, y);
        let fb = (beta * model.log_density(theta, y)).exp();
        let uu = &u * u.transpose();
        let dj = (&info - &uu * beta) * fb - (&m1.info - &m1.outer * beta);
        let xi = &a.mats.xi;
        let dxi = &u * fb - xi;
        let dk = &uu * (fb * fb) - &m2.outer - (&dxi * xi.transpose() + xi * dxi.transpose());
        let p = &self.b * self.inner_inv.as_matrix() * self.b.transpose();
        let j_inv = a.mats.j_inv.as_matrix();
        let t1 = (&p * j_inv * dk * j_inv).trace();
        let t2 = (&p * j_inv * dj * a.mats.sigma.as_matrix()).trace();
        Ok((t1 - 2.0 * t2) / self.b.ncols() as f64)
    }

    /// Returns the displayed slope and `τ(y)`.
    fn displayed(&self, y: &[f64]) -> Result<(f64, f64)> {
        let a = &self.analysis;
        let (model, theta, beta) = (a.model, a.theta0.as_slice(), a.beta);
        let df = self.b.ncols() as f64;
        let j_inv = a.mats.j_inv.as_matrix();
        // simple: J⁻¹; composite: Σ M Σ*⁻¹ Mᵀ J⁻¹
        let a_mat = match &a.composite {
            None => j_inv.clone(),
            Some(c) => a.mats.sigma.as_matrix() * &c.jac * c.sigma_star_inv.as_matrix() * c.jac.transpose() * j_inv,
        };
        let m1 = model.weighted_moments(theta, beta)?;
        let u = model.score(theta, y);
        let fb = (beta * model.log_density(theta, y)).exp();
        let tau_y = (model.info(theta, y) * &a_mat).trace();
        let tau_int = (&m1.info * &a_mat).trace();
        let first = beta * u.dot(&(&a_mat * &u));
        let if2 = a.if2(y)?;
        let v = (2.0 / df) * (first - fb * tau_y - tau_int) - (2.0 * beta + 1.0) - if2 / (2.0 * df);
        Ok((v, tau_y))
    }
}

/// CSIF at `truth` with its slope at the model.
pub fn csif<M: ParametricModel + ?Sized>(
    model: &M,
    truth: &ContaminatedTruth,
    beta: f64,
    restriction: Option<&Restriction>,
) -> Result<CsifReport> {
    let base = CsifBase::new(model, &truth.base_theta, beta, restriction)?;
    invert_spd(&base.analysis.mats.k, "K_beta")?;
    let y = &truth.point;
    let sigma_g = base.sigma_g(y, truth.epsilon)?;
    let inner = base.analysis.mats.sigma.congruence(&base.b);
    let eigenvalues = generalized_eigenvalues(&sigma_g, &inner)?;
    let df = eigenvalues.len();
    let mean = eigenvalues.iter().sum::<f64>() / df as f64;
    let trace_mean = base.trace_mean(y, truth.epsilon)?;
    let slope = base.slope(y)?;
    let slope_fd = CSIF_FD_STEPS
        .iter()
        .map(|&h| Ok((h, (base.trace_mean(y, h)? - base.trace_mean(y, -h)?) / (2.0 * h))))
        .collect::<Result<Vec<_>>>()?;
    let (slope_displayed, tau) = base.displayed(y)?;
    Ok(CsifReport {
        beta,
        epsilon: truth.epsilon,
        point: y.clone(),
        df,
        composite: restriction.is_some(),
        eigenvalues,
        mean,
        trace_mean,
        slope,
        slope_fd,
        slope_displayed,
        tau,
    })
}

/// `∂c̄_{β,ε,y}/∂ε` at ε = 0.
pub fn csif_slope<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    beta: f64,
    y: &[f64],
    restriction: Option<&Restriction>,
) -> Result<f64> {
    let base = CsifBase::new(model, theta0, beta, restriction)?;
    invert_spd(&base.analysis.mats.k, "K_beta")?;
    base.slope(y)
}

/// Central difference of the CSIF mean in ε at ε = 0.
pub fn csif_slope_fd<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    beta: f64,
    y: &[f64],
    restriction: Option<&Restriction>,
    h: f64,
) -> Result<f64> {
    let base = CsifBase::new(model, theta0, beta, restriction)?;
    Ok((base.trace_mean(y, h)? - base.trace_mean(y, -h)?) / (2.0 * h))
}

/// The closed slope display
/// `(2/p)(βuᵀJ⁻¹u − f^β(y)τ(y) − ∫f^{1+β}τ) − (2β+1) − IF₂(y)/(2p)`,
/// or its composite analogue with `τ*`.
pub fn csif_slope_displayed<M: ParametricModel + ?Sized>(
    model: &M,
    theta0: &[f64],
    beta: f64,
    y: &[f64],
    restriction: Option<&Restriction>,
) -> Result<f64> {
    Ok(CsifBase::new(model, theta0, beta, restriction)?.displayed(y)?.0)
}

/// The scalar display
/// `2[f^β(y)(βu² − I(y)) − ∫I f^{1+β}]/J − (2β+1) − IF₂(y)/2`
/// with `IF₂ = 2(ξ − u f^β)²/K`.
pub fn csif_slope_scalar_display<M: ParametricModel + ?Sized>(model: &M, theta0: &[f64], beta: f64, y: &[f64]) -> Result<f64> {
    if model.dim_param() != 1 {
        return Err(Error::Dimension("the scalar display needs a one-parameter model".into()));
    }
    check_point(model, y)?;
    let mats = matrices_at_model(model, theta0, beta)?;
    let m1 = model.weighted_moments(theta0, beta)?;
    let u = model.score(theta0, y)[0];
    let info = model.info(theta0, y)[(0, 0)];
    let fb = (beta * model.log_density(theta0, y)).exp();
    let j = mats.j[(0, 0)];
    let if2 = 2.0 * (mats.xi[0] - u * fb).powi(2) / mats.k[(0, 0)];
    Ok(2.0 * (fb * (beta * u * u - info) - m1.info[(0, 0)]) / j - (2.0 * beta + 1.0) - 0.5 * if2)
}

/// Normal location IF `(x−θ₀)/(σ^{β+2}(2π)^{β/2}) e^{−β(x−θ₀)²/(2σ²)}`.
pub fn normal_location_influence_display(x: f64, theta0: f64, sigma: f64, beta: f64) -> f64 {
    let z = (x - theta0) / sigma;
    (x - theta0) / (sigma.powf(beta + 2.0) * (2.0 * std::f64::consts::PI).powf(beta / 2.0)) * (-beta * z * z / 2.0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdpde::population_functional;
    use crate::models::{BivariateNormal, CorrelationClosedForms, LinearRegression, NormalLocation, NormalLocationScale, RegressionClosedForms, WeibullClosedForms, WeibullShape};
    use proptest::prelude::*;

    fn normal() -> NormalLocation {
        NormalLocation::new(1.3).unwrap()
    }

    #[test]
    fn if_vanishes_at_the_centre() {
        let v = if_estimator(&normal(), &[0.4], 0.5, &[0.4]).unwrap();
        assert!(v[0].abs() < 1e-14);
        assert!(if2_simple(&normal(), &[0.4], 0.5, &[0.4], If2Route::General).unwrap().abs() < 1e-14);
    }

    #[test]
    fn routes_of_if2_agree() {
        for (theta, x) in [(vec![0.2, 1.1], vec![2.5]), (vec![0.0, 0.7], vec![-1.9])] {
            for beta in [0.0, 0.3, 1.0] {
                let a = if2_simple(&NormalLocationScale, &theta, beta, &x, If2Route::General).unwrap();
                let b = if2_simple(&NormalLocationScale, &theta, beta, &x, If2Route::FullRank).unwrap();
                assert!((a - b).abs() < 1e-8 * a.max(1.0), "{a} {b}");
            }
        }
        let th = [0.0, 0.0, 1.0, 1.0, 0.0];
        for beta in [0.0, 0.4] {
            let a = if2_simple(&BivariateNormal, &th, beta, &[1.2, -0.4], If2Route::General).unwrap();
            let b = if2_simple(&BivariateNormal, &th, beta, &[1.2, -0.4], If2Route::FullRank).unwrap();
            assert!((a - b).abs() < 1e-8 * a.max(1.0));
        }
    }

    #[test]
    fn normal_location_if_is_the_display_up_to_j() {
        let (theta0, sigma) = (0.4, 1.3);
        for beta in [0.0, 0.25, 0.5] {
            let mats = matrices_at_model(&normal(), &[theta0], beta).unwrap();
            for x in [-3.0, 0.1, 2.2] {
                let v = if_estimator(&normal(), &[theta0], beta, &[x]).unwrap()[0];
                let shown = normal_location_influence_display(x, theta0, sigma, beta);
                assert!((v * mats.j[(0, 0)] - shown).abs() < 1e-12, "{beta} {x}");
            }
        }
    }

    #[test]
    fn weibull_if2_at_beta_zero_matches_closed_form() {
        let c = WeibullClosedForms::new(0.0).unwrap();
        for x in [0.2, 1.0, 4.0] {
            let v = if2_simple(&WeibullShape, &[1.0], 0.0, &[x], If2Route::General).unwrap();
            assert!((v - c.second_order_influence(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn correlation_if2() {
        // 2(1+2β)³ z₁²z₂² e^{−β(z₁²+z₂²)}; the displayed form agrees at β = 0
        let th = [0.3, -0.2, 1.4, 0.8, 0.0];
        let rst = Restriction::fix_coordinates(5, &[4], &[0.0]).unwrap();
        for beta in [0.0, 0.2, 0.5] {
            let c = CorrelationClosedForms::new(&th, beta).unwrap();
            for x in [[1.0, 0.5], [-2.0, 1.7], [0.3, -0.2]] {
                let v = if2_composite(&BivariateNormal, &th, beta, &rst, &x).unwrap();
                let (z1, z2) = ((x[0] - th[0]) / th[2], (x[1] - th[1]) / th[3]);
                let exact = 2.0 * (1.0 + 2.0 * beta).powi(3) * z1 * z1 * z2 * z2 * (-beta * (z1 * z1 + z2 * z2)).exp();
                assert!((v - exact).abs() < 1e-7 * exact.max(1.0), "{beta} {x:?}: {v} {exact}");
                if beta == 0.0 {
                    assert!((v - c.second_order_influence(&x)).abs() < 1e-9);
                }
            }
        }
    }

    fn regression() -> (LinearRegression, Vec<f64>, DMatrix<f64>) {
        let x = DMatrix::from_fn(12, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64 / 4.0 - 1.0,
            _ => ((i * 5) % 7) as f64 / 3.0,
        });
        let model = LinearRegression::new(x).unwrap();
        let l = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        (model, vec![0.5, 1.0, -0.3, 0.8], l)
    }

    #[test]
    fn regression_matches_total_information_displays() {
        let (model, theta0, l) = regression();
        let mut lf = DMatrix::zeros(4, 2);
        lf.view_mut((0, 0), (3, 2)).copy_from(&l);
        let rst = Restriction::linear(lf, DVector::from_column_slice(&[1.0, -0.3])).unwrap();
        let delta = DVector::from_column_slice(&[0.7, -0.4]);
        let q = chisq_quantile(0.05, 2).unwrap();
        for beta in [0.0, 0.3] {
            let a = NullAnalysis::composite(&model, &theta0, &rst, beta).unwrap();
            let c = RegressionClosedForms::new(&model, &theta0, &l, beta).unwrap();
            assert!((a.noncentrality(&Shift::Constraint(delta.clone())).unwrap() - c.omega(&delta)).abs() < 1e-9);
            for (i, t) in [(0, 1.2), (5, -0.8), (11, 3.0)] {
                let mut obs = vec![t];
                obs.extend(model.design().row(i).iter());
                let v = a.if2(&obs).unwrap();
                let shown = c.second_order_influence(i, t);
                assert!((v - shown).abs() < 1e-9 * shown.max(1.0), "{v} {shown}");
                let p = a.pif(&obs, &Shift::Constraint(delta.clone()), 0.05).unwrap();
                let shown = c.power_influence(i, t, &delta, q).unwrap();
                assert!((p - shown).abs() < 1e-9 * shown.abs().max(1.0), "{p} {shown}");
            }
        }
    }

    #[test]
    fn pif_is_zero_without_a_shift_and_linear_in_if() {
        let a = NullAnalysis::simple(&WeibullShape, &[1.0], 0.3).unwrap();
        let zero = Shift::Direction(DVector::zeros(1));
        assert_eq!(a.pif(&[2.5], &zero, 0.05).unwrap(), 0.0);
        assert_eq!(a.pif(&[2.5], &zero, 0.05).unwrap(), a.lif(&[2.5]));
        let d = Shift::Direction(DVector::from_element(1, 1.7));
        let inf = a.influence(&[2.5]).unwrap();
        let one = a.pif_of(&inf, &d, 0.05).unwrap();
        let two = a.pif_of(&(&inf * 2.0), &d, 0.05).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-14 * one.abs().max(1.0));
    }

    #[test]
    fn pif_is_the_epsilon_derivative_of_contiguous_power() {
        use crate::wald::{contiguous_power, ContiguousSpec};
        let d = DVector::from_element(1, 1.5);
        let x = vec![0.9];
        let m = normal();
        let p = pif(&m, &[0.0], 0.4, None, &Shift::Direction(d.clone()), 0.05, &x).unwrap();
        let h = 1e-5;
        let hi = contiguous_power(&m, &[0.0], None, 0.4, &ContiguousSpec::direction(d.clone()).contaminated(h, x.clone()), 0.05).unwrap();
        let lo = contiguous_power(&m, &[0.0], None, 0.4, &ContiguousSpec::direction(d), 0.05).unwrap();
        assert!(((hi - lo) / h - p).abs() < 1e-4, "{} {p}", (hi - lo) / h);
    }

    #[test]
    fn finite_difference_of_the_functional() {
        let m = normal();
        for beta in [0.25, 0.5] {
            for y in [0.5, 2.0, 4.0] {
                let eps = 1e-4;
                let truth = ContaminatedTruth::new(vec![0.0], eps, vec![y]).unwrap();
                let t = population_functional(&m, &truth, beta).unwrap();
                let fd = t[0] / eps;
                let exact = if_estimator(&m, &[0.0], beta, &[y]).unwrap()[0];
                assert!((fd - exact).abs() < 1e-3 * exact.abs(), "{beta} {y}: {fd} {exact}");
            }
        }
    }

    #[test]
    fn csif_is_one_at_the_model() {
        let truth = ContaminatedTruth::new(vec![0.0, 0.0, 1.0, 1.0, 0.0], 0.0, vec![1.0, 2.0]).unwrap();
        let r = csif(&BivariateNormal, &truth, 0.3, None).unwrap();
        assert!(r.eigenvalues.iter().all(|e| (e - 1.0).abs() < 1e-10));
        assert!((r.mean - 1.0).abs() < 1e-12 && (r.trace_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csif_paths_agree() {
        let truth = ContaminatedTruth::new(vec![0.0, 0.0, 1.0, 1.0, 0.0], 0.05, vec![1.0, 2.0]).unwrap();
        let r = csif(&BivariateNormal, &truth, 0.3, None).unwrap();
        assert!((r.mean - r.trace_mean).abs() < 1e-10);
        let rst = Restriction::fix_coordinates(5, &[4], &[0.0]).unwrap();
        let c = csif(&BivariateNormal, &truth, 0.3, Some(&rst)).unwrap();
        assert_eq!(c.eigenvalues.len(), 1);
        assert!((c.mean - c.trace_mean).abs() < 1e-10);
    }

    #[test]
    fn csif_one_parameter_is_the_ratio_display() {
        let m = normal();
        let beta = 0.5;
        let truth = ContaminatedTruth::new(vec![0.0], 0.1, vec![1.5]).unwrap();
        let r = csif(&m, &truth, beta, None).unwrap();
        let base = matrices_at_model(&m, &[0.0], beta).unwrap();
        let g = matrices_under_g(&m, &truth, beta).unwrap();
        let shown = base.j[(0, 0)].powi(2) / base.k[(0, 0)] * g.k[(0, 0)] / g.j[(0, 0)].powi(2);
        assert!((r.mean - shown).abs() < 1e-12);
        assert_eq!(r.eigenvalues.len(), 1);
    }

    #[test]
    fn csif_slope_matches_finite_differences() {
        let cases: Vec<(Box<dyn ParametricModel>, Vec<f64>, f64, Vec<f64>)> = vec![
            (Box::new(normal()), vec![0.0], 0.5, vec![2.0]),
            (Box::new(normal()), vec![0.0], 0.0, vec![1.0]),
            (Box::new(NormalLocationScale), vec![0.3, 1.2], 0.4, vec![-1.0]),
            (Box::new(WeibullShape), vec![1.0], 0.25, vec![2.0]),
        ];
        for (m, th, beta, y) in &cases {
            let a = csif_slope(m.as_ref(), th, *beta, y, None).unwrap();
            for h in CSIF_FD_STEPS {
                let fd = csif_slope_fd(m.as_ref(), th, *beta, y, None, h).unwrap();
                assert!((a - fd).abs() < 1e-3 * a.abs().max(1.0), "{} {beta}: {a} {fd}", m.name());
            }
        }
    }

    #[test]
    fn classical_slope_for_normal_location() {
        // c̄ = K_g/J_g² with J_g = 1, K_g = 1 − ε + εy² − ε²y² at β = 0, σ = 1
        let m = NormalLocation::new(1.0).unwrap();
        for y in [0.5, 3.0] {
            let s = csif_slope(&m, &[0.0], 0.0, &[y], None).unwrap();
            assert!((s - (y * y - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn composite_with_identity_reduces_to_simple() {
        let th = [0.2, 1.1];
        let rst = Restriction::linear(DMatrix::identity(2, 2), DVector::from_column_slice(&th)).unwrap();
        let truth = ContaminatedTruth::new(th.to_vec(), 0.07, vec![2.4]).unwrap();
        let a = csif(&NormalLocationScale, &truth, 0.3, None).unwrap();
        let b = csif(&NormalLocationScale, &truth, 0.3, Some(&rst)).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!((a.slope - b.slope).abs() < 1e-10);
    }

    #[test]
    fn boundedness_flags() {
        let m = normal();
        let grid = EvaluationGrid::default_for(&m, &[0.0]).unwrap().unwrap();
        assert_eq!(grid.points.len(), 401);
        let robust = InfluenceReport::compute(&NullAnalysis::simple(&m, &[0.0], 0.5).unwrap(), grid.clone(), None, Execution::Parallel).unwrap();
        assert!(robust.if2_summary.bounded && !robust.if2_summary.growing);
        let classical = InfluenceReport::compute(&NullAnalysis::simple(&m, &[0.0], 0.0).unwrap(), grid, None, Execution::Sequential).unwrap();
        assert!(!classical.if2_summary.bounded && classical.if2_summary.growing);
        assert_eq!(classical.gross_error_sensitivity(&m), f64::INFINITY);
    }

    #[test]
    fn grid_sup_of_the_if_for_normal_location() {
        let m = NormalLocation::new(1.0).unwrap();
        let grid = EvaluationGrid::default_for(&m, &[0.0]).unwrap().unwrap();
        let r = InfluenceReport::compute(&NullAnalysis::simple(&m, &[0.0], 1.0).unwrap(), grid, None, Execution::Parallel).unwrap();
        let x = r.grid.points[r.influence_summary.argsup][0];
        assert!((x.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn grids_have_the_advertised_shapes() {
        let b = EvaluationGrid::default_for(&BivariateNormal, &[0.0, 0.0, 1.0, 1.0, 0.0]).unwrap().unwrap();
        assert_eq!(b.points.len(), 61 * 61);
        assert_eq!(b.edge.len(), 4 * 60);
        let w = EvaluationGrid::default_for(&WeibullShape, &[1.0]).unwrap().unwrap();
        assert_eq!(w.points.len(), 301);
        assert!(w.points[0][0] > 0.0 && (w.points[300][0] - 15.0).abs() < 1e-12);
        let (model, theta0, _) = regression();
        assert!(EvaluationGrid::default_for(&model, &theta0).unwrap().is_none());
        let row: Vec<f64> = model.design().row(3).iter().copied().collect();
        assert_eq!(regression_row_grid(&row, &theta0).unwrap().points[0].len(), 4);
    }

    #[test]
    fn correlation_sensitivity_decreases() {
        let v: Vec<f64> = [0.1, 0.3, 0.5, 1.0].iter().map(|&b| correlation_gross_error_sensitivity(b)).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        assert!(correlation_gross_error_sensitivity(0.0).is_infinite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn if2_is_nonnegative(x in -30.0f64..30.0, beta in 0.0f64..1.5) {
            let v = if2_simple(&normal(), &[0.4], beta, &[x], If2Route::General).unwrap();
            prop_assert!(v >= 0.0);
        }

        #[test]
        fn weibull_pif_sign_follows_the_if(x in 0.05f64..12.0, beta in 0.0f64..1.0, d in 0.1f64..4.0) {
            let a = NullAnalysis::simple(&WeibullShape, &[1.0], beta).unwrap();
            let inf = a.influence(&[x]).unwrap()[0];
            let p = a.pif(&[x], &Shift::Direction(DVector::from_element(1, d)), 0.05).unwrap();
            prop_assert!(p * inf >= 0.0);
        }
    }
}
