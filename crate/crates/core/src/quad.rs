//! Adaptive Gauss–Kronrod quadrature and Richardson extrapolation.
//!
//! Every integral in the crate that is not available in closed form goes
//! through [`integrate`] (finite interval, optional breakpoints) or
//! [`integrate_to_infinity`] (half line, algebraic map onto `[0, 1)`). The
//! driver is a global-subdivision scheme in the spirit of QUADPACK's QAG: the
//! interval with the largest error estimate is bisected until the summed
//! estimate meets `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Values the quadrature can accumulate: real and complex scalars.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
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

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral<T> {
    pub value: T,
    pub abs_error: f64,
    pub intervals: usize,
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
    abs: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Panel<T> {}
impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod panel with the QUADPACK error heuristic.
fn kronrod_panel<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut abs_k = fc.magnitude() * WGK[7];
    let mut fv = [T::zero(); 15];
    fv[7] = fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        res_k = res_k + (f1 + f2) * WGK[j];
        abs_k += WGK[j] * (f1.magnitude() + f2.magnitude());
        if j % 2 == 1 {
            res_g = res_g + (f1 + f2) * WG[j / 2];
        }
    }
    let mean = res_k * 0.5;
    let mut asc = WGK[7] * (fc - mean).magnitude();
    for j in 0..7 {
        asc += WGK[j] * ((fv[j] - mean).magnitude() + (fv[14 - j] - mean).magnitude());
    }
    let value = res_k * half;
    let asc = asc * half.abs();
    let mut err = ((res_k - res_g) * half).magnitude();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    let abs_k = abs_k * half.abs();
    if abs_k > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs_k);
    }
    (value, err, abs_k)
}

/// Integrate `f` over `[a, b]`, starting from the partition induced by
/// `breaks` (points outside the open interval are ignored).
pub fn integrate_with_breaks<T, F>(f: F, a: f64, b: f64, breaks: &[f64], opts: QuadOptions) -> Result<Integral<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::param("integration bounds must be finite"));
    }
    if a == b {
        return Ok(Integral {
            value: T::zero(),
            abs_error: 0.0,
            intervals: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut nodes: Vec<f64> = breaks.iter().copied().filter(|&x| x > lo && x < hi).collect();
    nodes.push(lo);
    nodes.push(hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    let mut heap = BinaryHeap::new();
    let mut total = T::zero();
    let mut total_err = 0.0;
    let mut total_abs = 0.0;
    for w in nodes.windows(2) {
        let (v, e, s) = kronrod_panel(&f, w[0], w[1]);
        total = total + v;
        total_err += e;
        total_abs += s;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
            abs: s,
        });
    }
    loop {
        if !(total_err.is_finite() && total.magnitude().is_finite()) {
            return Err(Error::num(format!("non-finite integrand or estimate on [{lo}, {hi}]")));
        }
        // Cancellation puts a floor under the attainable error.
        let floor = 100.0 * f64::EPSILON * total_abs;
        let tol = opts.abs_tol.max(opts.rel_tol * total.magnitude()).max(floor);
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::num(format!(
                "quadrature on [{lo}, {hi}] did not converge: error estimate {total_err:.3e} > tolerance {tol:.3e}"
            )));
        }
        let worst = heap.pop().expect("non-empty panel heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::num(format!(
                "quadrature hit floating-point resolution near x = {mid}"
            )));
        }
        let (v1, e1, s1) = kronrod_panel(&f, worst.a, mid);
        let (v2, e2, s2) = kronrod_panel(&f, mid, worst.b);
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        total_abs += s1 + s2 - worst.abs;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            abs: s1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            abs: s2,
        });
    }
    // Re-sum to shed the drift of the running total.
    let mut value = T::zero();
    let mut err = 0.0;
    let intervals = heap.len();
    for p in heap.into_vec() {
        value = value + p.value;
        err += p.error;
    }
    Ok(Integral {
        value: value * sign,
        abs_error: err,
        intervals,
    })
}

pub fn integrate<T, F>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Integral<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    integrate_with_breaks(f, a, b, &[], opts)
}

/// Integrate `f` over `[a, ∞)` through the map `x = a + scale·u/(1-u)`.
///
/// `scale` should be the length over which `f` varies appreciably; it places
/// the midpoint of the mapped interval at `x = a + scale`.
pub fn integrate_to_infinity<T, F>(f: F, a: f64, scale: f64, opts: QuadOptions) -> Result<Integral<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if !(scale > 0.0) {
        return Err(Error::param("map scale must be positive"));
    }
    let g = |u: f64| {
        let one_minus = 1.0 - u;
        let x = a + scale * u / one_minus;
        let jac = scale / (one_minus * one_minus);
        let v = f(x);
        if jac.is_finite() {
            v * jac
        } else {
            T::zero()
        }
    };
    integrate(g, 0.0, 1.0, opts)
}

/// Richardson extrapolation of `f(h) = L + c1 h + c2 h² + …` to `h = 0` from
/// samples at `h, h/q, h/q²` (ordered coarsest first).
pub fn richardson3<T: QuadValue>(samples: [T; 3], q: f64) -> T {
    let r0 = (samples[1] * q - samples[0]) * (1.0 / (q - 1.0));
    let r1 = (samples[2] * q - samples[1]) * (1.0 / (q - 1.0));
    let q2 = q * q;
    (r1 * q2 - r0) * (1.0 / (q2 - 1.0))
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// `values`, never on how they were produced.
pub fn pairwise_sum<T: QuadValue>(values: &[T]) -> T {
    match values.len() {
        0 => T::zero(),
        1 => values[0],
        n if n <= 8 => values.iter().fold(T::zero(), |acc, &v| acc + v),
        n => {
            let (l, r) = values.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}
