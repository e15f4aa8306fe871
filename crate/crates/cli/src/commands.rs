use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use robust_wald::mdpde::{fit, ContaminatedTruth, FitOptions};
use robust_wald::models::{model_by_name, LinearRegression, ParametricModel};
use robust_wald::par::Execution;
use robust_wald::robustness::{csif, regression_row_grid, CurveSummary, EvaluationGrid, InfluenceReport, NullAnalysis};
use robust_wald::simulate::{
    rejection_rate, sample_bivariate, sample_normal, sample_regression, sample_weibull, Contamination, RejectionStudy,
};
use robust_wald::wald::{composite_wald, power_table, simple_wald, Null, PowerExample, PowerRoute, Restriction, Shift};

use crate::args::{CsifArgs, Example, FitArgs, InfluenceArgs, ModelArgs, NullArgs, PowerTableArgs, Route, TestArgs};
use crate::dataset::Dataset;
use crate::failure::{Failure, Stage};
use crate::report::{num, nums, Cell, Report, Table};

struct Setup {
    model: Box<dyn ParametricModel>,
    linreg: Option<LinearRegression>,
}

impl Setup {
    fn new(args: &ModelArgs) -> Result<Self, Failure> {
        if args.model == "linreg" {
            let path = args
                .design
                .as_ref()
                .ok_or_else(|| Failure::usage("the linreg model needs --design"))?;
            let design = Dataset::read(path)?;
            let x = DMatrix::from_fn(design.rows.len(), design.ncols(), |i, j| design.rows[i][j]);
            let lr = LinearRegression::new(x).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            return Ok(Setup {
                model: Box::new(lr.clone()),
                linreg: Some(lr),
            });
        }
        if args.design.is_some() {
            return Err(Failure::usage("--design only applies to the linreg model"));
        }
        if args.sigma_known.is_some() && args.model != "normal-loc" {
            return Err(Failure::usage("--sigma-known only applies to the normal-loc model"));
        }
        let model = model_by_name(&args.model, args.sigma_known).map_err(|e| Failure::usage(e.to_string()))?;
        Ok(Setup { model, linreg: None })
    }

    fn model(&self) -> &dyn ParametricModel {
        self.model.as_ref()
    }

    fn param_names(&self) -> Vec<String> {
        self.model.param_names()
    }

    fn observations(&self, data: &Dataset) -> Result<Vec<Vec<f64>>, Failure> {
        data.expect_columns(self.model.response_dim(), "the data file")?;
        match &self.linreg {
            Some(lr) => {
                let y: Vec<f64> = data.rows.iter().map(|r| r[0]).collect();
                lr.observations(&y).map_err(|e| Failure::data(e.to_string()))
            }
            None => Ok(data.rows.clone()),
        }
    }
}

fn check_betas(betas: &[f64]) -> Result<(), Failure> {
    if betas.is_empty() {
        return Err(Failure::usage("--beta needs at least one value"));
    }
    match betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        Some(b) => Err(Failure::usage(format!("beta must be a nonnegative number, got {b}"))),
        None => Ok(()),
    }
}

fn check_alpha(alpha: f64) -> Result<(), Failure> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn config<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments always serialize")
}

/// Arguments as JSON with defaults that the model fills in made explicit.
fn resolved_config<T: Serialize>(args: &T, model: &ModelArgs) -> Value {
    let mut v = config(args);
    if model.model == "normal-loc" && model.sigma_known.is_none() {
        v["model"]["sigma_known"] = json!(1.0);
    }
    v
}

fn dvec_json(v: &DVector<f64>) -> Value {
    nums(v.as_slice())
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect())).collect())
}

fn summary_json(s: &CurveSummary) -> Value {
    json!({
        "sup": num(s.sup),
        "argsup": s.argsup,
        "edge_max": num(s.edge_max),
        "bounded": s.bounded,
        "growing": s.growing,
    })
}

struct NullSpec {
    theta0: Option<Vec<f64>>,
    restriction: Option<Restriction>,
    l: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl NullSpec {
    fn parse(args: &NullArgs, setup: &Setup) -> Result<Self, Failure> {
        let names = setup.param_names();
        let p = names.len();
        if let Some(t) = &args.theta0 {
            setup.model().check_theta(t).map_err(|e| Failure::usage(format!("--theta0: {e}")))?;
        }
        let mut cols: Vec<(Vec<f64>, f64)> = Vec::new();
        for spec in &args.fix {
            let (name, value) = spec
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("--fix expects name=value, got '{spec}'")))?;
            let idx = names.iter().position(|n| n == name.trim()).ok_or_else(|| {
                Failure::usage(format!("unknown parameter '{}' (expected one of {})", name.trim(), names.join(", ")))
            })?;
            let mut row = vec![0.0; p];
            row[idx] = 1.0;
            cols.push((row, parse_number(value, "--fix")?));
        }
        for spec in &args.constraint {
            let (lhs, rhs) = spec
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("--constraint expects l1,...,lp=c, got '{spec}'")))?;
            let row = lhs.split(',').map(|s| parse_number(s, "--constraint")).collect::<Result<Vec<_>, _>>()?;
            if row.len() != p {
                return Err(Failure::usage(format!("--constraint needs {p} coefficients, got {}", row.len())));
            }
            cols.push((row, parse_number(rhs, "--constraint")?));
        }
        if cols.is_empty() {
            return Ok(NullSpec {
                theta0: args.theta0.clone(),
                restriction: None,
                l: None,
            });
        }
        let l = DMatrix::from_fn(p, cols.len(), |i, j| cols[j].0[i]);
        let l0 = DVector::from_iterator(cols.len(), cols.iter().map(|c| c.1));
        let restriction = Restriction::linear(l.clone(), l0.clone()).map_err(|e| Failure::usage(format!("restriction: {e}")))?;
        Ok(NullSpec {
            theta0: args.theta0.clone(),
            restriction: Some(restriction),
            l: Some((l, l0)),
        })
    }

    fn theta0(&self) -> Result<&[f64], Failure> {
        self.theta0
            .as_deref()
            .ok_or_else(|| Failure::usage("--theta0 is required for this command"))
    }

    fn describe(&self) -> Value {
        match &self.l {
            Some((l, l0)) => json!({
                "kind": "composite",
                "l": matrix_json(&l.transpose()),
                "l0": dvec_json(l0),
                "theta0": self.theta0.as_deref().map(nums),
            }),
            None => json!({
                "kind": "simple",
                "theta0": self.theta0.as_deref().map(nums),
            }),
        }
    }
}

fn parse_number(s: &str, flag: &str) -> Result<f64, Failure> {
    let s = s.trim();
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Failure::usage(format!("{flag}: '{s}' is not a number")))
}

pub fn cmd_fit(args: &FitArgs) -> Result<Report, Failure> {
    check_betas(&args.beta)?;
    let setup = Setup::new(&args.model)?;
    let data = setup.observations(&Dataset::read(&args.data)?)?;
    let names = setup.param_names();
    let mut table = Table::new(["beta", "parameter", "estimate", "std_error", "objective"]);
    let mut fits = Vec::new();
    for &beta in &args.beta {
        let f = fit(setup.model(), &data, beta, None, &FitOptions::default()).stage(&format!("fit (beta = {beta})"))?;
        let se = f.standard_errors();
        for (k, name) in names.iter().enumerate() {
            table.push(vec![beta.into(), name.as_str().into(), f.theta_hat[k].into(), se[k].into(), f.objective_value.into()]);
        }
        fits.push(json!({
            "beta": num(beta),
            "estimate": nums(&f.theta_hat),
            "std_error": nums(&se),
            "sigma": matrix_json(f.sigma.as_matrix()),
            "objective": num(f.objective_value),
        }));
    }
    Ok(Report {
        command: "fit",
        config: resolved_config(args, &args.model),
        results: json!({ "n": data.len(), "parameters": names, "fits": fits }),
        table,
    })
}

pub fn cmd_test(args: &TestArgs) -> Result<Report, Failure> {
    check_betas(&args.beta)?;
    check_alpha(args.alpha)?;
    let setup = Setup::new(&args.model)?;
    let hyp = NullSpec::parse(&args.null, &setup)?;
    let wald_null = match (&hyp.restriction, &hyp.theta0) {
        (Some(r), _) => Null::Composite(r),
        (None, Some(t)) => Null::Simple(t),
        (None, None) => return Err(Failure::usage("a null hypothesis is needed: --theta0, --fix or --constraint")),
    };
    match args.replicates {
        Some(replicates) => test_simulated(args, &setup, &hyp, wald_null, replicates),
        None => {
            let path = args.data.as_ref().ok_or_else(|| Failure::usage("--data is required"))?;
            let data = setup.observations(&Dataset::read(path)?)?;
            let mut table = Table::new(["beta", "statistic", "df", "p_value", "critical_value", "alpha", "reject"]);
            let mut tests = Vec::new();
            for &beta in &args.beta {
                let stage = format!("test (beta = {beta})");
                let f = fit(setup.model(), &data, beta, None, &FitOptions::default()).stage(&stage)?;
                let w = match wald_null {
                    Null::Simple(t) => simple_wald(setup.model(), &f, t, args.alpha),
                    Null::Composite(r) => composite_wald(&f, r, args.alpha),
                }
                .stage(&stage)?;
                table.push(vec![
                    beta.into(),
                    w.statistic.into(),
                    w.df.into(),
                    w.p_value.into(),
                    w.critical_value.into(),
                    w.alpha.into(),
                    w.reject.into(),
                ]);
                tests.push(json!({
                    "beta": num(beta),
                    "estimate": nums(&f.theta_hat),
                    "statistic": num(w.statistic),
                    "df": w.df,
                    "p_value": num(w.p_value),
                    "critical_value": num(w.critical_value),
                    "alpha": num(w.alpha),
                    "reject": w.reject,
                }));
            }
            Ok(Report {
                command: "test",
                config: resolved_config(args, &args.model),
                results: json!({ "mode": "data", "n": data.len(), "null": hyp.describe(), "tests": tests }),
                table,
            })
        }
    }
}

fn test_simulated(args: &TestArgs, setup: &Setup, hyp: &NullSpec, wald_null: Null<'_>, replicates: usize) -> Result<Report, Failure> {
    let truth = args.truth.clone().ok_or_else(|| Failure::usage("--truth is required with --replicates"))?;
    let seed = args.seed.ok_or_else(|| Failure::usage("--seed is required with --replicates"))?;
    setup.model().check_theta(&truth).map_err(|e| Failure::usage(format!("--truth: {e}")))?;
    if replicates == 0 || setup.linreg.is_none() && args.sample_size == 0 {
        return Err(Failure::usage("replicates and sample size must be positive"));
    }
    let contamination = match (args.contamination, &args.at) {
        (Some(eps), Some(at)) => {
            if at.len() != setup.model().response_dim() {
                return Err(Failure::usage(format!("--at needs {} value(s)", setup.model().response_dim())));
            }
            Some(Contamination::new(eps, at.clone()).map_err(|e| Failure::usage(e.to_string()))?)
        }
        _ => None,
    };
    let n = args.sample_size;
    let sigma_known = args.model.sigma_known.unwrap_or(1.0);
    let name = setup.model().name().to_string();
    let mut table = Table::new(["beta", "replicates", "rejections", "failures", "rate"]);
    let mut rates = Vec::new();
    for &beta in &args.beta {
        let study = RejectionStudy {
            beta,
            alpha: args.alpha,
            replicates,
            seed,
            fit_options: FitOptions::fast(),
        };
        let r = rejection_rate(setup.model(), wald_null, &study, Execution::Parallel, |rng| {
            let mut data = match (name.as_str(), &setup.linreg) {
                (_, Some(lr)) => sample_regression(rng, lr, &truth).unwrap_or_default(),
                ("normal-loc", _) => sample_normal(rng, truth[0], sigma_known, n),
                ("normal-loc-scale", _) => sample_normal(rng, truth[0], truth[1], n),
                ("weibull-shape", _) => sample_weibull(rng, truth[0], n),
                _ => sample_bivariate(rng, &truth, n),
            };
            if let Some(c) = &contamination {
                c.apply(rng, &mut data);
            }
            data
        });
        table.push(vec![beta.into(), r.replicates.into(), r.rejections.into(), r.failures.into(), r.rate.into()]);
        rates.push(json!({
            "beta": num(beta),
            "replicates": r.replicates,
            "rejections": r.rejections,
            "failures": r.failures,
            "rate": num(r.rate),
        }));
    }
    Ok(Report {
        command: "test",
        config: resolved_config(args, &args.model),
        results: json!({ "mode": "simulation", "null": hyp.describe(), "rates": rates }),
        table,
    })
}

pub fn cmd_power_table(args: &PowerTableArgs) -> Result<Report, Failure> {
    check_betas(&args.beta)?;
    check_alpha(args.alpha)?;
    if args.ds.is_empty() || args.ds.iter().any(|d| !d.is_finite()) {
        return Err(Failure::usage("--d needs finite values"));
    }
    let example = match args.example {
        Example::WeibullShape => PowerExample::WeibullShape,
        Example::Correlation => PowerExample::Correlation,
    };
    let route = match args.route {
        Route::ClosedForm => PowerRoute::ClosedForm,
        Route::Sandwich => PowerRoute::Sandwich,
    };
    let t = power_table(example, route, &args.ds, &args.beta, args.alpha, Execution::Parallel).stage("power-table")?;
    let mut table = Table::new(std::iter::once("d".to_string()).chain(t.betas.iter().map(|b| format!("beta={b}"))));
    for (d, row) in t.ds.iter().zip(&t.values) {
        table.push(std::iter::once(Cell::Num(*d)).chain(row.iter().map(|&v| Cell::Num(v))).collect());
    }
    Ok(Report {
        command: "power-table",
        config: config(args),
        results: json!({
            "ds": nums(&t.ds),
            "betas": nums(&t.betas),
            "values": Value::Array(t.values.iter().map(|r| nums(r)).collect()),
        }),
        table,
    })
}

fn influence_grid(args: &InfluenceArgs, setup: &Setup, theta0: &[f64]) -> Result<EvaluationGrid, Failure> {
    let model = setup.model();
    let custom = match &args.grid {
        None => None,
        Some(g) => {
            let &[lo, hi, n] = g.as_slice() else {
                return Err(Failure::usage("--grid expects lo,hi,n"));
            };
            if n.fract() != 0.0 || n < 3.0 {
                return Err(Failure::usage("--grid needs an integer point count of at least 3"));
            }
            Some((lo, hi, n as usize))
        }
    };
    if let Some(lr) = &setup.linreg {
        if args.row >= lr.n_rows() {
            return Err(Failure::usage(format!("--row must be below {}", lr.n_rows())));
        }
        let row: Vec<f64> = lr.design().row(args.row).iter().copied().collect();
        let mut grid = regression_row_grid(&row, theta0).stage("influence")?;
        if let Some((lo, hi, n)) = custom {
            let centre: f64 = row.iter().zip(theta0).map(|(x, b)| x * b).sum();
            grid = EvaluationGrid::line(lo, hi, n, centre.clamp(lo, hi)).map_err(|e| Failure::usage(e.to_string()))?;
            for pt in &mut grid.points {
                pt.extend_from_slice(&row);
            }
        }
        return Ok(grid);
    }
    match custom {
        None => Ok(EvaluationGrid::default_for(model, theta0)
            .stage("influence")?
            .expect("covariate-free models have a default grid")),
        Some((lo, hi, n)) => {
            let g = if model.response_dim() == 2 {
                EvaluationGrid::lattice([lo, lo], [hi, hi], n)
            } else {
                let centre = if model.name() == "weibull-shape" { 1.0 } else { theta0[0] };
                EvaluationGrid::line(lo, hi, n, centre.clamp(lo, hi))
            };
            g.map_err(|e| Failure::usage(e.to_string()))
        }
    }
}

pub fn cmd_influence(args: &InfluenceArgs) -> Result<Report, Failure> {
    check_betas(&args.beta)?;
    check_alpha(args.alpha)?;
    let setup = Setup::new(&args.model)?;
    let hyp = NullSpec::parse(&args.null, &setup)?;
    let theta0 = hyp.theta0()?;
    let names = setup.param_names();
    let shift = match &args.shift {
        Some(d) if d.len() != names.len() => return Err(Failure::usage(format!("--shift needs {} values", names.len()))),
        Some(d) => Some(Shift::Direction(DVector::from_column_slice(d))),
        None => None,
    };
    let grid = influence_grid(args, &setup, theta0)?;
    let rdim = setup.model().response_dim();
    let coords: Vec<String> = if rdim == 1 { vec!["x".into()] } else { (1..=rdim).map(|k| format!("x{k}")).collect() };
    let mut header = vec!["beta".to_string()];
    header.extend(coords.iter().cloned());
    header.extend(names.iter().map(|n| format!("if_{n}")));
    header.push("if2".into());
    if shift.is_some() {
        header.push("pif".into());
    }
    let mut table = Table::new(header);
    let mut curves = Vec::new();
    for &beta in &args.beta {
        let stage = format!("influence (beta = {beta})");
        let analysis = NullAnalysis::new(setup.model(), theta0, hyp.restriction.as_ref(), beta).stage(&stage)?;
        let rep = InfluenceReport::compute(&analysis, grid.clone(), shift.as_ref().map(|s| (s, args.alpha)), Execution::Parallel)
            .stage(&stage)?;
        for (i, pt) in rep.grid.points.iter().enumerate() {
            let mut row = vec![Cell::Num(beta)];
            row.extend(pt[..rdim].iter().map(|&v| Cell::Num(v)));
            row.extend(rep.influence[i].iter().map(|&v| Cell::Num(v)));
            row.push(Cell::Num(rep.if2[i]));
            if let Some(p) = &rep.pif {
                row.push(Cell::Num(p[i]));
            }
            table.push(row);
        }
        let ges = rep.gross_error_sensitivity(setup.model());
        curves.push(json!({
            "beta": num(beta),
            "df": rep.df,
            "composite": rep.composite,
            "gross_error_sensitivity": num(ges),
            "gross_error_sensitivity_finite": ges.is_finite(),
            "grid_shape": rep.grid.shape,
            "influence_summary": summary_json(&rep.influence_summary),
            "if2_summary": summary_json(&rep.if2_summary),
            "pif_summary": rep.pif_summary.as_ref().map(summary_json),
            "points": Value::Array(rep.grid.points.iter().map(|p| nums(&p[..rdim])).collect()),
            "influence": Value::Array(rep.influence.iter().map(dvec_json).collect()),
            "if2": nums(&rep.if2),
            "pif": rep.pif.as_deref().map(nums),
        }));
    }
    Ok(Report {
        command: "influence",
        config: resolved_config(args, &args.model),
        results: json!({ "null": hyp.describe(), "parameters": names, "coordinates": coords, "curves": curves }),
        table,
    })
}

pub fn cmd_csif(args: &CsifArgs) -> Result<Report, Failure> {
    check_betas(&args.beta)?;
    if !(0.0..1.0).contains(&args.epsilon) {
        return Err(Failure::usage(format!("--epsilon must lie in [0, 1), got {}", args.epsilon)));
    }
    let setup = Setup::new(&args.model)?;
    let hyp = NullSpec::parse(&args.null, &setup)?;
    let theta0 = hyp.theta0()?;
    let dim_obs = setup.model().dim_obs();
    if args.at.len() != dim_obs {
        return Err(Failure::usage(format!("--at needs {dim_obs} value(s)")));
    }
    let truth = ContaminatedTruth::new(theta0.to_vec(), args.epsilon, args.at.clone()).stage("csif")?;
    let mut reports = Vec::new();
    for &beta in &args.beta {
        reports.push(csif(setup.model(), &truth, beta, hyp.restriction.as_ref()).stage(&format!("csif (beta = {beta})"))?);
    }
    let df = reports[0].df;
    let mut header: Vec<String> = ["beta", "epsilon", "df", "mean", "trace_mean", "slope"].map(String::from).to_vec();
    header.extend(reports[0].slope_fd.iter().map(|(h, _)| format!("slope_fd_{h:e}")));
    header.extend(["slope_residual", "slope_displayed", "tau"].map(String::from));
    header.extend((1..=df).map(|k| format!("eigenvalue_{k}")));
    let mut table = Table::new(header);
    let mut items = Vec::new();
    for r in &reports {
        let mut row: Vec<Cell> = vec![r.beta.into(), r.epsilon.into(), r.df.into(), r.mean.into(), r.trace_mean.into(), r.slope.into()];
        row.extend(r.slope_fd.iter().map(|&(_, v)| Cell::Num(v)));
        row.extend([r.slope_residual(), r.slope_displayed, r.tau].map(Cell::Num));
        row.extend(r.eigenvalues.iter().map(|&v| Cell::Num(v)));
        table.push(row);
        items.push(json!({
            "beta": num(r.beta),
            "epsilon": num(r.epsilon),
            "point": nums(&r.point),
            "df": r.df,
            "composite": r.composite,
            "eigenvalues": nums(&r.eigenvalues),
            "mean": num(r.mean),
            "trace_mean": num(r.trace_mean),
            "slope": num(r.slope),
            "slope_fd": Value::Array(r.slope_fd.iter().map(|&(h, v)| json!({"h": num(h), "slope": num(v)})).collect()),
            "slope_residual": num(r.slope_residual()),
            "slope_displayed": num(r.slope_displayed),
            "tau": num(r.tau),
        }));
    }
    Ok(Report {
        command: "csif",
        config: resolved_config(args, &args.model),
        results: json!({ "null": hyp.describe(), "reports": items }),
        table,
    })
}
