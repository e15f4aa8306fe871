//! Derivative-free minimisation: bounded Nelder–Mead with restarts and
//! multi-start, plus golden-section search for one-dimensional problems.

use crate::error::{Error, Result};

/// Box constraints; infinite entries mean unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("bound vectors differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("inconsistent bounds: every lower must be below upper"));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| v >= l && v <= u)
    }

    /// Projects `x` into the box (strictly inside for open-ended use).
    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Convergence threshold on the simplex diameter in scaled coordinates.
    pub x_tol: f64,
    pub max_evals: usize,
    /// Initial simplex edge, relative to the coordinate scale.
    pub initial_step: f64,
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            x_tol: 1e-8,
            max_evals: 40_000,
            initial_step: 0.1,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimises `f` from `init` within `bounds`; points outside the box
/// evaluate to +∞.
pub fn minimize<F>(f: F, init: &[f64], bounds: &Bounds, opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let n = init.len();
    if bounds.dim() != n {
        return Err(Error::Dimension(format!(
            "init has {n} coordinates, bounds have {}",
            bounds.dim()
        )));
    }
    if !bounds.contains(init) {
        return Err(Error::invalid("initial point lies outside the bounds"));
    }
    let scale: Vec<f64> = init.iter().map(|v| v.abs().max(1.0)).collect();
    let mut evals = 0usize;
    let mut nan_at: Option<Vec<f64>> = None;
    let mut g = |x: &[f64]| -> f64 {
        evals += 1;
        if !bounds.contains(x) {
            return f64::INFINITY;
        }
        let v = f(x);
        if v.is_nan() {
            nan_at.get_or_insert_with(|| x.to_vec());
            return f64::INFINITY;
        }
        v
    };
    let f0 = g(init);
    if !f0.is_finite() {
        return Err(Error::invalid("objective is not finite at the initial point"));
    }

    let mut best = init.to_vec();
    let mut best_val = f0;
    let mut converged = false;
    for attempt in 0..=opts.restarts {
        let (x, v, ok) = nelder_mead_run(&mut g, &best, &scale, opts, &mut 0usize)?;
        let improved = v < best_val;
        if v <= best_val {
            best = x;
            best_val = v;
        }
        converged = ok;
        if ok && !improved && attempt > 0 {
            break;
        }
    }
    drop(g);
    if let Some(p) = nan_at.filter(|_| !best_val.is_finite()) {
        return Err(Error::Optimization {
            reason: "objective returned NaN".into(),
            best: p,
            value: f64::NAN,
        });
    }
    if !converged {
        return Err(Error::Optimization {
            reason: format!("evaluation budget of {} exceeded", opts.max_evals),
            best,
            value: best_val,
        });
    }
    Ok(Minimum {
        x: best,
        value: best_val,
        evaluations: evals,
    })
}

fn nelder_mead_run<G>(
    g: &mut G,
    start: &[f64],
    scale: &[f64],
    opts: &NelderMeadOptions,
    used: &mut usize,
) -> Result<(Vec<f64>, f64, bool)>
where
    G: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += opts.initial_step * scale[i];
        if g(&p).is_infinite() {
            p[i] = start[i] - opts.initial_step * scale[i];
        }
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| g(p)).collect();
    *used += n + 1;
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&simplex[0])
                    .zip(scale)
                    .map(|((a, b), s)| ((a - b) / s).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < opts.x_tol {
            return Ok((simplex[0].clone(), values[0], true));
        }
        if *used >= opts.max_evals {
            return Ok((simplex[0].clone(), values[0], false));
        }

        let mut centroid = vec![0.0; n];
        for p in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let worst = simplex[n].clone();
        let xr = along(alpha, &worst);
        let fr = g(&xr);
        *used += 1;
        if fr < values[0] {
            let xe = along(gamma, &worst);
            let fe = g(&xe);
            *used += 1;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(rho, &worst);
            (xc.clone(), g(&xc))
        } else {
            let xc = along(-rho, &worst);
            (xc.clone(), g(&xc))
        };
        *used += 1;
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = best[j] + sigma * (simplex[i][j] - best[j]);
            }
            values[i] = g(&simplex[i]);
        }
        *used += n;
    }
}

/// Runs [`minimize`] from every start point and keeps the lowest result.
pub fn minimize_multistart<F>(
    f: F,
    starts: &[Vec<f64>],
    bounds: &Bounds,
    opts: &NelderMeadOptions,
) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let mut best: Option<Minimum> = None;
    let mut last_err = None;
    for s in starts {
        match minimize(&f, s, bounds, opts) {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.value < b.value) {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::invalid("no start points supplied")))
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
pub fn golden_section<F>(f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if !(a < b) {
        return Err(Error::invalid("golden section needs a < b"));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (b - a).abs() <= tol * (1.0 + c.abs()) {
            break;
        }
        if fc.is_nan() || fd.is_nan() {
            return Err(Error::Optimization {
                reason: "objective returned NaN".into(),
                best: vec![c],
                value: fc,
            });
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_bowl() {
        let m = minimize(
            |x| (x[0] - 2.0).powi(2),
            &[0.0],
            &Bounds::unbounded(1),
            &NelderMeadOptions::default(),
        )
        .unwrap();
        assert!((m.x[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let m = minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &Bounds::unbounded(2),
            &NelderMeadOptions::default(),
        )
        .unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn respects_bounds() {
        let b = Bounds::new(vec![0.5], vec![3.0]).unwrap();
        let m = minimize(|x| x[0] * x[0], &[2.0], &b, &NelderMeadOptions::default()).unwrap();
        assert!((m.x[0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn exponential_rate_mle() {
        // negative log-likelihood of Exp(rate) on {1, 1, 1}: minimiser at 1/mean
        let data = [1.0, 1.0, 1.0];
        let nll = |x: &[f64]| {
            let r = x[0];
            -data.iter().map(|y| r.ln() - r * y).sum::<f64>() / data.len() as f64
        };
        let b = Bounds::new(vec![1e-6], vec![f64::INFINITY]).unwrap();
        let m = minimize(nll, &[0.3], &b, &NelderMeadOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn nan_objective_is_an_error() {
        let r = minimize(
            |x| if x[0] > 0.05 { f64::NAN } else { 1.0 },
            &[0.0],
            &Bounds::unbounded(1),
            &NelderMeadOptions {
                max_evals: 50,
                ..Default::default()
            },
        );
        assert!(r.is_err());
    }

    #[test]
    fn budget_exhaustion_returns_best_point() {
        let r = minimize(
            |x| x.iter().map(|v| v * v).sum(),
            &[1.0, 2.0, 3.0],
            &Bounds::unbounded(3),
            &NelderMeadOptions {
                max_evals: 10,
                restarts: 0,
                ..Default::default()
            },
        );
        match r {
            Err(Error::Optimization { best, .. }) => assert_eq!(best.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multistart_escapes_local_minimum() {
        let f = |x: &[f64]| (x[0] * x[0] - 4.0).powi(2) + 0.5 * x[0];
        let starts = vec![vec![2.1], vec![-2.1]];
        let m = minimize_multistart(f, &starts, &Bounds::unbounded(1), &NelderMeadOptions::default())
            .unwrap();
        assert!(m.x[0] < 0.0);
    }

    #[test]
    fn golden_section_parabola() {
        let (x, _) = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn convex_quadratics(c in proptest::collection::vec(-5.0f64..5.0, 3), w in proptest::collection::vec(0.2f64..5.0, 3)) {
            let f = |x: &[f64]| x.iter().zip(&c).zip(&w).map(|((x, c), w)| w * (x - c).powi(2)).sum::<f64>()
                + 0.1 * (x[0] - c[0]) * (x[1] - c[1]);
            let m = minimize(f, &[0.0, 0.0, 0.0], &Bounds::unbounded(3), &NelderMeadOptions::default()).unwrap();
            for (x, c) in m.x.iter().zip(&c) {
                prop_assert!((x - c).abs() < 1e-6);
            }
        }
    }
}
