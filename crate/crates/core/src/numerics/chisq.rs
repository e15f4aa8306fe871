//! Central and non-central chi-square tail probabilities.
//!
//! Integer degrees of freedom only: every df in the testing framework is a
//! parameter count or a restriction count.

use libm::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Hard cap on Poisson-mixture terms.
pub const SERIES_CAP: usize = 10_000;
const TERM_TOL: f64 = 1e-12;
const WEIGHT_TOL: f64 = 1e-12;

/// Non-central chi-square law χ²_df(δ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralChisq {
    pub df: usize,
    pub noncentrality: f64,
}

impl NoncentralChisq {
    pub fn new(df: usize, noncentrality: f64) -> Result<Self> {
        if df == 0 {
            return Err(Error::invalid("chi-square df must be at least 1"));
        }
        if !(noncentrality >= 0.0) || !noncentrality.is_finite() {
            return Err(Error::invalid(format!(
                "noncentrality must be finite and non-negative, got {noncentrality}"
            )));
        }
        Ok(NoncentralChisq { df, noncentrality })
    }

    pub fn central(df: usize) -> Result<Self> {
        Self::new(df, 0.0)
    }
}

/// Iterator over P(χ²_df > x), P(χ²_{df+2} > x), P(χ²_{df+4} > x), ...
#[derive(Debug, Clone)]
pub struct CentralTailLadder {
    x: f64,
    half_log: f64,
    df: usize,
    current: f64,
}

impl CentralTailLadder {
    pub fn new(x: f64, df: usize) -> Self {
        let current = if x <= 0.0 {
            1.0
        } else if df % 2 == 1 {
            let mut s = erfc((x / 2.0).sqrt());
            let mut k = 1;
            while k < df {
                s += ladder_term(x, k);
                k += 2;
            }
            s
        } else {
            let mut s = (-x / 2.0).exp();
            let mut k = 2;
            while k < df {
                s += ladder_term(x, k);
                k += 2;
            }
            s
        };
        CentralTailLadder {
            x,
            half_log: if x > 0.0 { (x / 2.0).ln() } else { f64::NEG_INFINITY },
            df,
            current: current.min(1.0),
        }
    }

    pub fn value(&self) -> f64 {
        self.current
    }

    pub fn df(&self) -> usize {
        self.df
    }

    /// Moves to df + 2.
    pub fn step(&mut self) {
        if self.x > 0.0 {
            let k = self.df as f64;
            let t = ((k / 2.0) * self.half_log - self.x / 2.0 - ln_gamma(k / 2.0 + 1.0)).exp();
            self.current = (self.current + t).min(1.0);
        }
        self.df += 2;
    }
}

fn ladder_term(x: f64, k: usize) -> f64 {
    let k = k as f64;
    ((k / 2.0) * (x / 2.0).ln() - x / 2.0 - ln_gamma(k / 2.0 + 1.0)).exp()
}

/// P(χ²_df > x) for the central distribution.
pub fn chisq_sf(x: f64, df: usize) -> f64 {
    CentralTailLadder::new(x, df).value()
}

/// Poisson(λ) probability mass at k, in log space for stability.
pub fn poisson_weight(k: usize, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (-lambda + kf * lambda.ln() - ln_gamma(kf + 1.0)).exp()
}

/// Sums `Σ_k Pois(k; δ/2) · a_k` where `a_k` comes from `next_term`, using
/// the shared truncation policy.
pub fn poisson_mixture<F>(delta: f64, what: &'static str, mut next_term: F) -> Result<f64>
where
    F: FnMut(usize) -> f64,
{
    let lambda = delta / 2.0;
    let mut sum = 0.0;
    let mut cumulative = 0.0;
    for k in 0..SERIES_CAP {
        let w = poisson_weight(k, lambda);
        let term = w * next_term(k);
        sum += term;
        cumulative += w;
        if term.abs() < TERM_TOL && w < TERM_TOL && cumulative > 1.0 - WEIGHT_TOL {
            return Ok(sum);
        }
    }
    Err(Error::SeriesCap {
        what,
        cap: SERIES_CAP,
    })
}

/// P(X > x) for X ~ χ²_df(δ), as the Poisson mixture of central tails.
pub fn noncentral_chisq_sf(x: f64, dist: NoncentralChisq) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::invalid(format!("x must be non-negative, got {x}")));
    }
    if dist.noncentrality == 0.0 {
        return Ok(chisq_sf(x, dist.df));
    }
    let mut ladder = CentralTailLadder::new(x, dist.df);
    let s = poisson_mixture(dist.noncentrality, "non-central chi-square", |k| {
        if k > 0 {
            ladder.step();
        }
        ladder.value()
    })?;
    Ok(s.clamp(0.0, 1.0))
}

/// Power derivative kernel `K*_df(s) = 2 ∂/∂s P(χ²_df(s) > q)`.
///
/// Written as `Σ_k Pois(k; s/2)(P_{k+1} − P_k)` with
/// `P_k = P(χ²_{df+2k} > q)`, which stays stable at s = 0.
pub fn power_kernel(s: f64, df: usize, q: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::invalid(format!("kernel argument must be non-negative, got {s}")));
    }
    let mut ladder = CentralTailLadder::new(q, df);
    let mut prev = ladder.value();
    ladder.step();
    poisson_mixture(s, "power kernel", |k| {
        if k > 0 {
            prev = ladder.value();
            ladder.step();
        }
        ladder.value() - prev
    })
}

/// The (1 − α) quantile of χ²_df, i.e. q with P(χ²_df > q) = α.
pub fn chisq_quantile(alpha: f64, df: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if df == 0 {
        return Err(Error::invalid("chi-square df must be at least 1"));
    }
    let mut hi = (df as f64).max(1.0);
    while chisq_sf(hi, df) > alpha {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chisq_sf(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}
