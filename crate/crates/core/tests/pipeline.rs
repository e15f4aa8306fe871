use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use robust_wald::mdpde::{fit, matrices_at_model, ContaminatedTruth, FitOptions};
use robust_wald::models::{model_by_name, BivariateNormal, LinearRegression, NormalLocation, WeibullShape, MODEL_NAMES};
use robust_wald::par::Execution;
use robust_wald::robustness::{csif, EvaluationGrid, InfluenceReport, NullAnalysis};
use robust_wald::simulate::{sample_bivariate, sample_normal, sample_regression, sample_weibull, stream_rng, Contamination};
use robust_wald::wald::{composite_wald, power_table, simple_wald, PowerExample, PowerRoute, Restriction};
use robust_wald::Error;

#[test]
fn fit_then_test_on_clean_weibull_data() {
    let data = sample_weibull(&mut stream_rng(5, 0), 1.0, 400);
    for beta in [0.0, 0.25, 0.5] {
        let f = fit(&WeibullShape, &data, beta, None, &FitOptions::default()).unwrap();
        assert!((f.theta_hat[0] - 1.0).abs() < 4.0 * f.standard_errors()[0], "{beta}: {:?}", f.theta_hat);
        let w = simple_wald(&WeibullShape, &f, &[1.0], 0.05).unwrap();
        assert!(w.p_value > 0.0 && w.p_value <= 1.0);
    }
}

#[test]
fn robust_fit_resists_gross_outliers() {
    let mut rng = stream_rng(9, 0);
    let mut data = sample_normal(&mut rng, 0.0, 1.0, 300);
    Contamination::new(0.1, vec![12.0]).unwrap().apply(&mut rng, &mut data);
    let m = NormalLocation::new(1.0).unwrap();
    let mle = fit(&m, &data, 0.0, None, &FitOptions::default()).unwrap();
    let robust = fit(&m, &data, 0.5, None, &FitOptions::default()).unwrap();
    assert!(mle.theta_hat[0] > 0.8);
    assert!(robust.theta_hat[0].abs() < 0.25, "{:?}", robust.theta_hat);
}

#[test]
fn correlation_test_under_contamination() {
    let rho = Restriction::fix_coordinates(5, &[4], &[0.0]).unwrap();
    let mut rng = stream_rng(17, 0);
    let mut data = sample_bivariate(&mut rng, &[0.0, 0.0, 1.0, 1.0, 0.0], 500);
    Contamination::new(0.05, vec![10.0, 10.0]).unwrap().apply(&mut rng, &mut data);
    let p = |beta: f64| {
        let f = fit(&BivariateNormal, &data, beta, None, &FitOptions::default()).unwrap();
        composite_wald(&f, &rho, 0.05).unwrap().p_value
    };
    assert!(p(0.0) < 1e-6);
    assert!(p(0.5) > 0.01);
}

#[test]
fn regression_fit_and_linear_hypothesis() {
    let x = DMatrix::from_fn(60, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 30.0 - 1.0 });
    let model = LinearRegression::new(x).unwrap();
    let data = sample_regression(&mut stream_rng(2, 0), &model, &[0.5, 2.0, 0.25]).unwrap();
    let f = fit(&model, &data, 0.2, None, &FitOptions::default()).unwrap();
    let slope_zero = Restriction::fix_coordinates(3, &[1], &[0.0]).unwrap();
    assert!(composite_wald(&f, &slope_zero, 0.05).unwrap().reject);
    let slope_true = Restriction::fix_coordinates(3, &[1], &[2.0]).unwrap();
    assert!(composite_wald(&f, &slope_true, 0.05).unwrap().statistic < 15.0);
}

#[test]
fn every_named_model_has_consistent_matrices() {
    let nulls: [&[f64]; 4] = [&[0.3], &[0.0, 1.4], &[1.2], &[0.0, 0.0, 1.0, 2.0, 0.3]];
    for (name, theta) in MODEL_NAMES.iter().zip(nulls) {
        let m = model_by_name(name, Some(1.1)).unwrap();
        let mats = matrices_at_model(m.as_ref(), theta, 0.3).unwrap();
        assert!(mats.sigma.is_positive_definite(), "{name}");
    }
    assert!(matches!(model_by_name("linreg", None), Err(Error::InvalidInput(_))));
    assert!(model_by_name("cauchy", None).is_err());
}

#[test]
fn sequential_and_parallel_paths_agree() {
    let ds = [0.0, 1.0, 2.0, 3.0];
    let betas = [0.0, 0.3, 0.6];
    let a = power_table(PowerExample::WeibullShape, PowerRoute::Sandwich, &ds, &betas, 0.05, Execution::Sequential).unwrap();
    let b = power_table(PowerExample::WeibullShape, PowerRoute::Sandwich, &ds, &betas, 0.05, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    let th = [0.0, 0.0, 1.0, 1.0, 0.0];
    let rho = Restriction::fix_coordinates(5, &[4], &[0.0]).unwrap();
    let an = NullAnalysis::composite(&BivariateNormal, &th, &rho, 0.4).unwrap();
    let grid = EvaluationGrid::default_for(&BivariateNormal, &th).unwrap().unwrap();
    let r1 = InfluenceReport::compute(&an, grid.clone(), None, Execution::Sequential).unwrap();
    let r2 = InfluenceReport::compute(&an, grid, None, Execution::Parallel).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn sandwich_route_matches_the_closed_form_for_the_weibull_table() {
    // The closed form takes ξ_β = 0; the sandwich keeps it.
    let a = power_table(PowerExample::WeibullShape, PowerRoute::ClosedForm, &[2.0], &[0.0], 0.05, Execution::Sequential).unwrap();
    let b = power_table(PowerExample::WeibullShape, PowerRoute::Sandwich, &[2.0], &[0.0], 0.05, Execution::Sequential).unwrap();
    assert!((a.values[0][0] - b.values[0][0]).abs() < 1e-9);
}

#[test]
fn csif_grows_with_contamination_for_the_classical_test() {
    let m = NormalLocation::new(1.0).unwrap();
    let c = |eps: f64| {
        let t = ContaminatedTruth::new(vec![0.0], eps, vec![4.0]).unwrap();
        csif(&m, &t, 0.0, None).unwrap().mean
    };
    assert!(c(0.02) > c(0.01) && c(0.01) > 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn wald_statistic_is_invariant_to_restriction_scaling(scale in 0.1f64..10.0, rho0 in -0.5f64..0.5) {
        let data = sample_bivariate(&mut stream_rng(23, 0), &[0.0, 0.0, 1.0, 1.0, 0.2], 200);
        let f = fit(&BivariateNormal, &data, 0.3, None, &FitOptions::fast()).unwrap();
        let mut l = DMatrix::zeros(5, 1);
        l[(4, 0)] = 1.0;
        let a = composite_wald(&f, &Restriction::linear(l.clone(), DVector::from_element(1, rho0)).unwrap(), 0.05).unwrap();
        let b = composite_wald(&f, &Restriction::linear(l * scale, DVector::from_element(1, rho0 * scale)).unwrap(), 0.05).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() < 1e-9 * a.statistic.max(1.0));
    }

    #[test]
    fn if2_nonnegative_on_the_plane(x1 in -6.0f64..6.0, x2 in -6.0f64..6.0, beta in 0.0f64..1.0) {
        let th = [0.0, 0.0, 1.0, 1.0, 0.0];
        let rho = Restriction::fix_coordinates(5, &[4], &[0.0]).unwrap();
        let a = NullAnalysis::composite(&BivariateNormal, &th, &rho, beta).unwrap();
        prop_assert!(a.if2(&[x1, x2]).unwrap() >= 0.0);
    }
}
