//! Adaptive Gauss–Kronrod quadrature on finite and infinite intervals.
//!
//! Vector-valued integrands share one set of subintervals, so a whole
//! `J`-matrix is integrated in a single adaptive pass.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Integration interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationDomain {
    pub lower: f64,
    pub upper: f64,
}

impl IntegrationDomain {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || !(lower < upper) {
            return Err(Error::invalid(format!(
                "integration domain requires lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(IntegrationDomain { lower, upper })
    }

    pub fn real_line() -> Self {
        IntegrationDomain {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn positive_half_line() -> Self {
        IntegrationDomain {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn contains_open(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

/// Tolerances and budget for [`integrate_vec`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

// Gauss–Kronrod 10/21 nodes on [-1, 1] (non-negative half).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss 10-point weights, matching XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Maps the original domain onto a finite interval.
#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    // x = a + t/(1-t), t in [0,1)
    Upper(f64),
    // x = b - t/(1-t), t in [0,1)
    Lower(f64),
    // x = t/(1-t²), t in (-1,1)
    Both,
}

impl Map {
    fn for_domain(d: &IntegrationDomain) -> (Map, f64, f64) {
        match (d.lower.is_finite(), d.upper.is_finite()) {
            (true, true) => (Map::Identity, d.lower, d.upper),
            (true, false) => (Map::Upper(d.lower), 0.0, 1.0),
            (false, true) => (Map::Lower(d.upper), 0.0, 1.0),
            (false, false) => (Map::Both, -1.0, 1.0),
        }
    }

    /// Returns (x, dx/dt).
    #[inline]
    fn apply(self, t: f64) -> (f64, f64) {
        match self {
            Map::Identity => (t, 1.0),
            Map::Upper(a) => {
                let s = 1.0 - t;
                (a + t / s, 1.0 / (s * s))
            }
            Map::Lower(b) => {
                let s = 1.0 - t;
                (b - t / s, 1.0 / (s * s))
            }
            Map::Both => {
                let s = 1.0 - t * t;
                (t / s, (1.0 + t * t) / (s * s))
            }
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

struct Rule<'a, F> {
    f: &'a F,
    map: Map,
    dim: usize,
    buf: Vec<f64>,
}

impl<F> Rule<'_, F>
where
    F: Fn(f64, &mut [f64]),
{
    fn eval(&mut self, t: f64, out: &mut [f64]) -> Result<()> {
        let (x, jac) = self.map.apply(t);
        out.iter_mut().for_each(|v| *v = 0.0);
        if !x.is_finite() || !jac.is_finite() {
            return Ok(());
        }
        (self.f)(x, out);
        for v in out.iter_mut() {
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "integrand is not finite at x = {x:e}"
                )));
            }
            *v *= jac;
        }
        Ok(())
    }

    /// 21-point Kronrod estimate and error over [a, b].
    fn segment(&mut self, a: f64, b: f64) -> Result<Segment> {
        let dim = self.dim;
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut fc = vec![0.0; dim];
        let mut buf = std::mem::take(&mut self.buf);
        buf.resize(2 * dim * 10, 0.0);
        self.eval(center, &mut fc)?;
        let mut kron: Vec<f64> = fc.iter().map(|v| v * WGK[10]).collect();
        let mut gauss = vec![0.0; dim];
        let mut resabs: Vec<f64> = fc.iter().map(|v| (v * WGK[10]).abs()).collect();
        for j in 0..10 {
            let dx = half * XGK[j];
            let (lo, hi) = buf.split_at_mut(dim * 10);
            let f1 = &mut lo[j * dim..(j + 1) * dim];
            let f2 = &mut hi[j * dim..(j + 1) * dim];
            self.eval(center - dx, f1)?;
            self.eval(center + dx, f2)?;
            for k in 0..dim {
                let s = f1[k] + f2[k];
                kron[k] += WGK[j] * s;
                resabs[k] += WGK[j] * (f1[k].abs() + f2[k].abs());
                if j % 2 == 1 {
                    gauss[k] += WG[j / 2] * s;
                }
            }
        }
        let mut error = 0.0;
        for k in 0..dim {
            let mean = kron[k] * 0.5;
            let mut resasc = WGK[10] * (fc[k] - mean).abs();
            for j in 0..10 {
                let f1 = buf[j * dim + k];
                let f2 = buf[dim * 10 + j * dim + k];
                resasc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
            }
            let resasc = resasc * half.abs();
            let ra = resabs[k] * half.abs();
            let mut err = ((kron[k] - gauss[k]) * half).abs();
            if resasc != 0.0 && err != 0.0 {
                err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
            }
            if ra > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
                err = err.max(50.0 * f64::EPSILON * ra);
            }
            error += err;
            kron[k] *= half;
        }
        self.buf = buf;
        Ok(Segment {
            a,
            b,
            value: kron,
            error,
        })
    }
}

/// Integrates a vector-valued function `f(x, out)` with `dim` components.
///
/// Convergence is declared when the summed error estimate falls below
/// `max(abs_tol, rel_tol · max_k |I_k|)`.
pub fn integrate_vec<F>(
    f: F,
    dim: usize,
    domain: IntegrationDomain,
    opts: QuadOptions,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
{
    integrate_vec_with_breaks(f, dim, domain, &[], opts)
}

/// As [`integrate_vec`], with interior points where the integrand is known
/// to be non-smooth or sharply peaked.
pub fn integrate_vec_with_breaks<F>(
    f: F,
    dim: usize,
    domain: IntegrationDomain,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
{
    if !(opts.rel_tol > 0.0) {
        return Err(Error::invalid("rel_tol must be positive"));
    }
    let (map, t0, t1) = Map::for_domain(&domain);
    let mut cuts = vec![t0];
    for &x in breaks {
        if domain.contains_open(x) {
            cuts.push(inverse_map(map, x));
        }
    }
    cuts.push(t1);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut rule = Rule {
        f: &f,
        map,
        dim,
        buf: Vec::new(),
    };
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; dim];
    let mut total_err = 0.0;
    for w in cuts.windows(2) {
        let seg = rule.segment(w[0], w[1])?;
        for k in 0..dim {
            total[k] += seg.value[k];
        }
        total_err += seg.error;
        heap.push(seg);
    }
    let mut settled_err = 0.0;
    let mut intervals = heap.len();
    loop {
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = opts.abs_tol.max(opts.rel_tol * scale);
        if total_err <= target {
            return Ok(total);
        }
        let Some(worst) = heap.pop() else {
            // every remaining segment is at machine resolution
            if settled_err <= target.max(1e3 * f64::EPSILON * scale) {
                return Ok(total);
            }
            return Err(Error::Quadrature {
                estimate: total[0],
                error_bound: total_err,
            });
        };
        if intervals >= opts.max_intervals {
            return Err(Error::Quadrature {
                estimate: total[0],
                error_bound: total_err,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        let width = worst.b - worst.a;
        if width <= 1e3 * f64::EPSILON * worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE)
            || mid <= worst.a
            || mid >= worst.b
        {
            settled_err += worst.error;
            continue;
        }
        let left = rule.segment(worst.a, mid)?;
        let right = rule.segment(mid, worst.b)?;
        for k in 0..dim {
            total[k] += left.value[k] + right.value[k] - worst.value[k];
        }
        total_err += left.error + right.error - worst.error;
        intervals += 1;
        heap.push(left);
        heap.push(right);
    }
}

fn inverse_map(map: Map, x: f64) -> f64 {
    match map {
        Map::Identity => x,
        Map::Upper(a) => {
            let y = x - a;
            y / (1.0 + y)
        }
        Map::Lower(b) => {
            let y = b - x;
            y / (1.0 + y)
        }
        Map::Both => {
            if x == 0.0 {
                0.0
            } else {
                // solve x t² + t - x = 0 for t in (-1, 1)
                2.0 * x / (1.0 + (1.0 + 4.0 * x * x).sqrt())
            }
        }
    }
}

/// Integrates a scalar function over `domain` to relative tolerance `rel_tol`.
pub fn integrate<F>(f: F, domain: IntegrationDomain, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(rel_tol > 0.0 && rel_tol <= 1e-3) {
        return Err(Error::invalid("rel_tol must lie in (0, 1e-3]"));
    }
    let v = integrate_vec(
        |x, out| out[0] = f(x),
        1,
        domain,
        QuadOptions::with_rel_tol(rel_tol),
    )?;
    Ok(v[0])
}

/// Iterated integral of `f(x, y)` over a product domain.
pub fn integrate_2d<F>(
    f: F,
    dim: usize,
    outer: IntegrationDomain,
    inner: IntegrationDomain,
    opts: QuadOptions,
) -> Result<Vec<f64>>
where
    F: Fn(f64, f64, &mut [f64]) + Sync,
{
    let failure = std::cell::RefCell::new(None);
    let v = integrate_vec(
        |x, out| {
            match integrate_vec(|y, o| f(x, y, o), dim, inner, opts) {
                Ok(row) => out.copy_from_slice(&row),
                Err(e) => {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    failure.borrow_mut().get_or_insert(e);
                }
            }
        },
        dim,
        outer,
        opts,
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}
