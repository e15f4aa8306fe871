use super::ParametricModel;
use crate::error::Result;
use crate::numerics::quadrature::{integrate_2d, integrate_vec, QuadOptions};

/// Residuals from checking a model's density, score and information.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub normalization_residual: f64,
    pub score_max_deviation: f64,
    pub info_max_deviation: f64,
    pub tol: f64,
    /// Components whose residual exceeds `tol`.
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn probe_points<M: ParametricModel + ?Sized>(model: &M, theta: &[f64]) -> Vec<Vec<f64>> {
    let axis = |lower: f64| -> Vec<f64> {
        if lower.is_finite() {
            vec![lower + 0.2, lower + 0.7, lower + 1.3, lower + 2.5]
        } else {
            vec![-2.1, -0.5, 0.3, 1.1, 2.4]
        }
    };
    let support = model.support();
    let ctx = model.contexts().into_iter().next().unwrap_or_default();
    let mut pts: Vec<Vec<f64>> = vec![Vec::new()];
    for (k, d) in support.iter().enumerate() {
        let offset = if d.lower.is_finite() || k >= theta.len() { 0.0 } else { theta[k] };
        let vals = axis(d.lower);
        pts = pts
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v + offset);
                    q
                })
            })
            .collect();
    }
    for p in &mut pts {
        p.extend_from_slice(&ctx);
    }
    pts
}

/// Checks that the density integrates to one and that score and
/// information agree with central finite differences.
pub fn validate_model<M: ParametricModel + ?Sized>(model: &M, theta: &[f64], tol: f64) -> Result<ValidationReport> {
    model.check_theta(theta)?;
    let support = model.support();
    let ctx = model.contexts().into_iter().next().unwrap_or_default();
    let opts = QuadOptions::with_rel_tol(1e-10);
    let mass = match model.response_dim() {
        1 => {
            integrate_vec(
                |y, out| {
                    let mut x = vec![y];
                    x.extend_from_slice(&ctx);
                    out[0] = model.density(theta, &x);
                },
                1,
                support[0],
                opts,
            )?[0]
        }
        _ => {
            integrate_2d(
                |a, b, out| {
                    let mut x = vec![a, b];
                    x.extend_from_slice(&ctx);
                    out[0] = model.density(theta, &x);
                },
                1,
                support[0],
                support[1],
                opts,
            )?[0]
        }
    };
    let p = model.dim_param();
    let mut score_dev = 0.0f64;
    let mut info_dev = 0.0f64;
    for x in probe_points(model, theta) {
        let u = model.score(theta, &x);
        let info = model.info(theta, &x);
        for k in 0..p {
            let h = 1e-5 * theta[k].abs().max(1.0);
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[k] += h;
            tm[k] -= h;
            let fd = (model.log_density(&tp, &x) - model.log_density(&tm, &x)) / (2.0 * h);
            score_dev = score_dev.max((fd - u[k]).abs() / u[k].abs().max(1.0));
            let up = model.score(&tp, &x);
            let um = model.score(&tm, &x);
            for j in 0..p {
                let fd = -(up[j] - um[j]) / (2.0 * h);
                info_dev = info_dev.max((fd - info[(j, k)]).abs() / info[(j, k)].abs().max(1.0));
            }
        }
    }
    let norm = (mass - 1.0).abs();
    let mut failures = Vec::new();
    if !(norm <= tol) {
        failures.push(format!("density normalization residual {norm:e}"));
    }
    if !(score_dev <= tol) {
        failures.push(format!("score finite-difference deviation {score_dev:e}"));
    }
    if !(info_dev <= tol) {
        failures.push(format!("information finite-difference deviation {info_dev:e}"));
    }
    Ok(ValidationReport {
        normalization_residual: norm,
        score_max_deviation: score_dev,
        info_max_deviation: info_dev,
        tol,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::*;
    use nalgebra::DMatrix;

    #[test]
    fn shipped_models_validate() {
        let r = validate_model(&NormalLocation::new(1.0).unwrap(), &[0.0], 1e-7).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = validate_model(&NormalLocationScale, &[0.0, 1.0], 1e-7).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = validate_model(&NormalLocationScale, &[-1.0, 2.5], 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
        for t in [1.0, 0.7, 2.3] {
            let r = validate_model(&WeibullShape, &[t], 1e-6).unwrap();
            assert!(r.passed(), "{t}: {r:?}");
        }
        let r = validate_model(&BivariateNormal, &[0.0, 0.0, 1.0, 1.0, 0.0], 1e-7).unwrap();
        assert!(r.passed(), "{r:?}");
        let r = validate_model(&BivariateNormal, &[0.3, -0.2, 1.4, 0.7, -0.45], 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 1.0, -0.8, 1.0, 1.5]);
        let m = LinearRegression::new(x).unwrap();
        let r = validate_model(&m, &[0.5, -0.3, 0.8], 1e-6).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn weibull_score_closed_form() {
        for x in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let u = WeibullShape.score(&[1.0], &[x])[0];
            assert!((u - (1.0 + (1.0 - x) * f64::ln(x))).abs() < 1e-15);
        }
    }

    /// A model with a deliberately wrong score must be flagged.
    struct Broken;

    impl ParametricModel for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn dim_param(&self) -> usize {
            1
        }
        fn dim_obs(&self) -> usize {
            1
        }
        fn param_names(&self) -> Vec<String> {
            vec!["mu".into()]
        }
        fn support(&self) -> Vec<crate::numerics::IntegrationDomain> {
            vec![crate::numerics::IntegrationDomain::real_line()]
        }
        fn bounds(&self) -> crate::numerics::Bounds {
            crate::numerics::Bounds::unbounded(1)
        }
        fn log_density(&self, theta: &[f64], x: &[f64]) -> f64 {
            NormalLocation::new(1.0).unwrap().log_density(theta, x)
        }
        fn score(&self, theta: &[f64], x: &[f64]) -> nalgebra::DVector<f64> {
            nalgebra::DVector::from_element(1, 2.0 * (x[0] - theta[0]))
        }
        fn info(&self, _theta: &[f64], _x: &[f64]) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 2.0)
        }
        fn default_init(&self, _data: &[Vec<f64>]) -> Vec<f64> {
            vec![0.0]
        }
    }

    #[test]
    fn wrong_score_is_named() {
        let r = validate_model(&Broken, &[0.0], 1e-6).unwrap();
        assert!(!r.passed());
        assert!(r.failures.iter().any(|f| f.contains("score")));
        assert!(r.normalization_residual < 1e-9);
    }
}
