//! Escape functions and the Mourre commutator lower bound for the free
//! fibered operator.
//!
//! The conjugate operator on chaos `p` is built from the symmetric function
//! `m_p(z) = max_j|z_j| · sgn(max z + min z)` and its regularization
//!
//! ```text
//! m̃_p(z) = ½(max + min) + ½(max − min) χ((max + min)/(max − min)),
//! ```
//!
//! evaluated at `z_j = k·x_j`. `χ` is the quintic smoothstep
//! `(15s − 10s³ + 3s⁵)/8`, clamped to `±1` outside `[−1, 1]`. The commutator
//! with `H_{k,0}` never needs the conjugate itself: on chaos `p` its quadratic
//! form is `2‖Dφ‖² + k·Im⟨(M′ − 2)φ, Dφ⟩` with `D = Σ_j ∂_j + ik` and `M′`
//! the multiplication by `Σ_j ∂_j m̃_p`.

use num_complex::Complex64;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{wavenumbers, FftPlan};

/// The cutoff `χ`.
pub fn chi(s: f64) -> f64 {
    if s >= 1.0 {
        1.0
    } else if s <= -1.0 {
        -1.0
    } else {
        let s2 = s * s;
        s * (15.0 - 10.0 * s2 + 3.0 * s2 * s2) / 8.0
    }
}

/// `χ′(s) = 15(1 − s²)²/8` on `[−1, 1]`, zero outside.
pub fn chi_prime(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let u = 1.0 - s * s;
        15.0 * u * u / 8.0
    }
}

/// Polynomial with rational coefficients, lowest degree first.
pub type RationalPoly = Vec<Ratio<i64>>;

/// Coefficients of `χ` on `[−1, 1]`.
pub fn chi_polynomial() -> RationalPoly {
    let r = |a: i64| Ratio::new(a, 8);
    vec![r(0), r(15), r(0), r(-10), r(0), r(3)]
}

/// Exact evaluation of `χ` on rationals.
pub fn chi_rational(s: Ratio<i64>) -> Ratio<i64> {
    let one = Ratio::from_integer(1);
    if s >= one {
        return one;
    }
    if s <= -one {
        return -one;
    }
    poly_eval(&chi_polynomial(), s)
}

pub fn poly_eval(p: &[Ratio<i64>], x: Ratio<i64>) -> Ratio<i64> {
    p.iter().rev().fold(Ratio::from_integer(0), |acc, &c| acc * x + c)
}

pub fn poly_mul(a: &[Ratio<i64>], b: &[Ratio<i64>]) -> RationalPoly {
    let mut out = vec![Ratio::from_integer(0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn poly_derivative(p: &[Ratio<i64>]) -> RationalPoly {
    p.iter().enumerate().skip(1).map(|(i, c)| c * Ratio::from_integer(i as i64)).collect()
}

fn poly_sub(a: &[Ratio<i64>], b: &[Ratio<i64>]) -> RationalPoly {
    let n = a.len().max(b.len());
    let zero = Ratio::from_integer(0);
    (0..n)
        .map(|i| *a.get(i).unwrap_or(&zero) - *b.get(i).unwrap_or(&zero))
        .collect()
}

fn poly_eq(a: &[Ratio<i64>], b: &[Ratio<i64>]) -> bool {
    poly_sub(a, b).iter().all(|c| *c == Ratio::from_integer(0))
}

/// Outcome of the exact checks on `χ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChiConstraints {
    pub odd: bool,
    pub endpoints: bool,
    /// `χ′ = 15(1 − s²)²/8`, hence `0 ≤ χ′ ≤ 15/8`.
    pub derivative_factorization: bool,
    /// `χ(s) − s = s(3s² − 7)(s² − 1)/8`, hence `χ ≤ s` on `[−1, 0]` and `χ ≥ s` on `[0, 1]`.
    pub comparison_factorization: bool,
    /// `χ′(±1) = 0`, so the clamped extension is `C¹`.
    pub smooth_join: bool,
}

impl ChiConstraints {
    pub fn all(&self) -> bool {
        self.odd && self.endpoints && self.derivative_factorization && self.comparison_factorization && self.smooth_join
    }
}

/// Verify the defining constraints of `χ` as exact polynomial identities.
pub fn check_chi_constraints() -> ChiConstraints {
    let r = |a: i64, b: i64| Ratio::new(a, b);
    let chi = chi_polynomial();
    let odd = chi.iter().step_by(2).all(|c| *c == r(0, 1));
    let one = r(1, 1);
    let endpoints = poly_eval(&chi, one) == one && poly_eval(&chi, -one) == -one;
    let d = poly_derivative(&chi);
    let one_minus_s2 = vec![r(1, 1), r(0, 1), r(-1, 1)];
    let expected_d: RationalPoly = poly_mul(&one_minus_s2, &one_minus_s2).iter().map(|c| c * r(15, 8)).collect();
    let derivative_factorization = poly_eq(&d, &expected_d);
    // s(3s² − 7)(s² − 1)/8
    let s = vec![r(0, 1), r(1, 8)];
    let a = vec![r(-7, 1), r(0, 1), r(3, 1)];
    let b = vec![r(-1, 1), r(0, 1), r(1, 1)];
    let rhs = poly_mul(&poly_mul(&s, &a), &b);
    let lhs = poly_sub(&chi, &[r(0, 1), r(1, 1)]);
    let comparison_factorization = poly_eq(&lhs, &rhs);
    let smooth_join = poly_eval(&d, one) == r(0, 1) && poly_eval(&d, -one) == r(0, 1);
    ChiConstraints {
        odd,
        endpoints,
        derivative_factorization,
        comparison_factorization,
        smooth_join,
    }
}

fn max_min(z: &[f64]) -> (f64, f64) {
    z.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &v| (hi.max(v), lo.min(v)))
}

/// `m_p(z) = max_j|z_j| · sgn(max z + min z)` with `sgn(0) = 0`; `m_0 = 0`.
pub fn m_p(z: &[f64]) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let (hi, lo) = max_min(z);
    let r = hi + lo;
    let sgn = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    hi.abs().max(lo.abs()) * sgn
}

/// The regularized escape function `m̃_p`; `m̃_0 = 0`.
pub fn m_tilde_p(z: &[f64]) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let (hi, lo) = max_min(z);
    let spread = hi - lo;
    if spread == 0.0 {
        return hi;
    }
    0.5 * (hi + lo) + 0.5 * spread * chi((hi + lo) / spread)
}

/// Exact directional derivative of `m̃_p` along `(1, …, 1)`:
/// `1 + χ′((max + min)/(max − min))`, and `1` on the diagonal.
pub fn grad_sum_exact(z: &[f64]) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let (hi, lo) = max_min(z);
    let spread = hi - lo;
    if spread == 0.0 {
        return 1.0;
    }
    1.0 + chi_prime((hi + lo) / spread)
}

fn near_kink(z: &[f64], h: f64) -> bool {
    if z.len() < 2 {
        return false;
    }
    let (hi, lo) = max_min(z);
    let close_hi = z.iter().filter(|&&v| hi - v <= 2.0 * h).count();
    let close_lo = z.iter().filter(|&&v| v - lo <= 2.0 * h).count();
    close_hi > 1 || close_lo > 1
}

fn central_difference(f: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> f64 {
    let plus: Vec<f64> = z.iter().map(|v| v + h).collect();
    let minus: Vec<f64> = z.iter().map(|v| v - h).collect();
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Central difference of `m̃_p` along `(1, …, 1)` with step `h`.
///
/// Points where the max or the min is attained twice within `2h` sit on a
/// kink of the max/min structure and are rejected.
pub fn grad_sum(z: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param("finite-difference step must be positive"));
    }
    if z.is_empty() {
        return Err(Error::param("grad-sum needs p >= 1"));
    }
    if near_kink(z, h) {
        return Err(Error::num("point lies on a kink of the max/min structure"));
    }
    Ok(central_difference(m_tilde_p, z, h))
}

/// Same difference quotient for the unregularized `m_p`.
pub fn grad_sum_unregularized(z: &[f64], h: f64) -> Result<f64> {
    if near_kink(z, h) {
        return Err(Error::num("point lies on a kink of the max/min structure"));
    }
    let (hi, lo) = max_min(z);
    if (hi + lo).abs() <= 2.0 * h {
        return Err(Error::num("point lies on the sign-change set of m_p"));
    }
    Ok(central_difference(m_p, z, h))
}

/// Worst case of an insertion sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub witness_z: f64,
    pub witness_rest: Vec<f64>,
    pub violations: usize,
}

/// `|m̃_{p+1}(z, z⃗) − m̃_p(z⃗)| / |z|` for one sample.
pub fn insertion_ratio(z: f64, rest: &[f64]) -> f64 {
    let mut full = Vec::with_capacity(rest.len() + 1);
    full.push(z);
    full.extend_from_slice(rest);
    (m_tilde_p(&full) - m_tilde_p(rest)).abs() / z.abs()
}

const SHARDS: usize = 16;

fn shard_counts(total: usize) -> Vec<usize> {
    (0..SHARDS).map(|s| total / SHARDS + usize::from(s < total % SHARDS)).collect()
}

/// Sample `z` and `z⃗ ∈ [−bound, bound]^{p}` uniformly for `p = 0..=max_p`
/// (cycling through `p`) and record the largest insertion ratio; ratios
/// above 2 count as violations.
pub fn lipschitz_insertion_check(samples: usize, max_p: usize, bound: f64, seed: u64) -> Result<InsertionReport> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::param("sampling box must be positive"));
    }
    let shards: Vec<InsertionReport> = shard_counts(samples)
        .into_par_iter()
        .enumerate()
        .map(|(shard, count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (shard as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut rep = InsertionReport {
                samples: count,
                max_ratio: 0.0,
                witness_z: 0.0,
                witness_rest: Vec::new(),
                violations: 0,
            };
            for i in 0..count {
                let p = i % (max_p + 1);
                let mut z = 0.0;
                while z == 0.0 {
                    z = rng.random_range(-bound..bound);
                }
                let rest: Vec<f64> = (0..p).map(|_| rng.random_range(-bound..bound)).collect();
                let ratio = insertion_ratio(z, &rest);
                if ratio > 2.0 {
                    rep.violations += 1;
                }
                if ratio > rep.max_ratio {
                    rep.max_ratio = ratio;
                    rep.witness_z = z;
                    rep.witness_rest = rest;
                }
            }
            rep
        })
        .collect();
    Ok(merge_insertion(samples, shards))
}

fn merge_insertion(samples: usize, shards: Vec<InsertionReport>) -> InsertionReport {
    let violations = shards.iter().map(|r| r.violations).sum();
    let mut best = shards
        .into_iter()
        .fold(None::<InsertionReport>, |acc, r| match acc {
            Some(a) if a.max_ratio >= r.max_ratio => Some(a),
            _ => Some(r),
        })
        .expect("at least one shard");
    best.samples = samples;
    best.violations = violations;
    best
}

/// Range of the grad-sum over a sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradSumReport {
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
    pub resampled: usize,
}

/// Central-difference grad-sums at random `z⃗ ∈ [−bound, bound]^p`,
/// `p = 1..=max_p`, resampling points near kinks (at most `samples`
/// resamples in total).
pub fn grad_sum_suite(samples: usize, max_p: usize, bound: f64, h: f64, seed: u64) -> Result<GradSumReport> {
    if max_p == 0 {
        return Err(Error::param("grad-sum needs p >= 1"));
    }
    let shards: Vec<Result<GradSumReport>> = shard_counts(samples)
        .into_par_iter()
        .enumerate()
        .map(|(shard, count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (shard as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
            let mut rep = GradSumReport {
                samples: count,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                argmin: Vec::new(),
                argmax: Vec::new(),
                resampled: 0,
            };
            for i in 0..count {
                let p = 1 + i % max_p;
                let (z, g) = loop {
                    let z: Vec<f64> = (0..p).map(|_| rng.random_range(-bound..bound)).collect();
                    match grad_sum(&z, h) {
                        Ok(g) => break (z, g),
                        Err(_) => {
                            rep.resampled += 1;
                            if rep.resampled > count.max(16) {
                                return Err(Error::num("kink-proximity resample budget exhausted"));
                            }
                        }
                    }
                };
                if g < rep.min {
                    rep.min = g;
                    rep.argmin = z.clone();
                }
                if g > rep.max {
                    rep.max = g;
                    rep.argmax = z;
                }
            }
            Ok(rep)
        })
        .collect();
    let mut out = GradSumReport {
        samples,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        argmin: Vec::new(),
        argmax: Vec::new(),
        resampled: 0,
    };
    for s in shards {
        let s = s?;
        out.resampled += s.resampled;
        if s.min < out.min {
            out.min = s.min;
            out.argmin = s.argmin;
        }
        if s.max > out.max {
            out.max = s.max;
            out.argmax = s.argmax;
        }
    }
    Ok(out)
}

/// Periodic grid `[−L/2, L/2)^p` with `n` points per axis for chaos kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub length: f64,
    pub n: usize,
}

impl KernelGrid {
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn coord(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.spacing()
    }
}

/// Quadratic forms of the commutator and of the Mourre lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorForm {
    /// `⟨φ, [H_{k,0}, C_k/i] φ⟩`.
    pub lhs: f64,
    /// `⟨φ, (H_{k,0} + ¾k²) φ⟩`.
    pub rhs: f64,
    pub norm2: f64,
    /// `‖φ‖² + ‖Σ_j ∂_j φ‖²`.
    pub h1_norm2: f64,
}

impl CommutatorForm {
    /// `(lhs − rhs)/‖φ‖²_{H¹}`.
    pub fn relative_margin(&self) -> f64 {
        (self.lhs - self.rhs) / self.h1_norm2
    }
}

/// Relative amplitude allowed within two cells of the periodic boundary.
pub const SUPPORT_TOLERANCE: f64 = 1e-10;

/// Assemble both quadratic forms for a kernel `φ` on `grid^p` (`p ∈ {1, 2}`,
/// row-major), with spectral derivatives.
pub fn commutator_form(p: usize, k: f64, grid: KernelGrid, phi: &[Complex64]) -> Result<CommutatorForm> {
    if p != 1 && p != 2 {
        return Err(Error::param("commutator form is implemented for p = 1, 2"));
    }
    if !k.is_finite() {
        return Err(Error::param("wave vector must be finite"));
    }
    let n = grid.n;
    if n < 8 || !n.is_power_of_two() || !(grid.length > 0.0) {
        return Err(Error::param("kernel grid needs a power-of-two n >= 8 and positive length"));
    }
    if phi.len() != n.pow(p as u32) {
        return Err(Error::param("kernel length does not match the grid"));
    }
    let peak = phi.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if peak == 0.0 {
        return Ok(CommutatorForm {
            lhs: 0.0,
            rhs: 0.0,
            norm2: 0.0,
            h1_norm2: 0.0,
        });
    }
    // Two cells at each end of every axis must be empty.
    let edge = |j: usize| j < 2 || j + 2 >= n;
    let touching = phi.iter().enumerate().any(|(idx, v)| {
        let hit = if p == 1 { edge(idx) } else { edge(idx / n) || edge(idx % n) };
        hit && v.norm() > SUPPORT_TOLERANCE * peak
    });
    if touching {
        return Err(Error::pre("kernel support touches the periodic boundary"));
    }

    let plan = FftPlan::new(n, p);
    let kx = wavenumbers(n, grid.length);
    let mut hat = phi.to_vec();
    plan.forward(&mut hat);
    let mut d_hat = hat.clone();
    let mut grad_hat = hat;
    for (idx, (d, g)) in d_hat.iter_mut().zip(grad_hat.iter_mut()).enumerate() {
        let xi_sum = if p == 1 { kx[idx] } else { kx[idx / n] + kx[idx % n] };
        *g *= Complex64::new(0.0, xi_sum);
        *d *= Complex64::new(0.0, xi_sum + k);
    }
    plan.inverse(&mut d_hat);
    plan.inverse(&mut grad_hat);
    let dphi = d_hat;

    let cell = grid.spacing().powi(p as i32);
    let mut norm2 = 0.0;
    let mut d2 = 0.0;
    let mut g2 = 0.0;
    let mut cross = 0.0;
    for idx in 0..phi.len() {
        let z: Vec<f64> = if p == 1 {
            vec![k * grid.coord(idx)]
        } else {
            vec![k * grid.coord(idx / n), k * grid.coord(idx % n)]
        };
        let mprime = grad_sum_exact(&z);
        norm2 += phi[idx].norm_sqr();
        d2 += dphi[idx].norm_sqr();
        g2 += grad_hat[idx].norm_sqr();
        cross += ((mprime - 2.0) * phi[idx].conj() * dphi[idx]).im;
    }
    let (norm2, d2, g2, cross) = (norm2 * cell, d2 * cell, g2 * cell, cross * cell);
    Ok(CommutatorForm {
        lhs: 2.0 * d2 + k * cross,
        rhs: d2 - 0.25 * k * k * norm2,
        norm2,
        h1_norm2: norm2 + g2,
    })
}

/// Random smooth kernel: a sum of a few Gaussian wave packets placed well
/// inside the grid, symmetrized for `p = 2`.
pub fn random_smooth_kernel(p: usize, grid: KernelGrid, rng: &mut impl Rng) -> Vec<Complex64> {
    let n = grid.n;
    let half = 0.5 * grid.length;
    let packets = rng.random_range(1..=3);
    let params: Vec<(Vec<f64>, f64, Vec<f64>, Complex64)> = (0..packets)
        .map(|_| {
            let width = rng.random_range(0.6..2.0);
            let reach = half - 8.0 * width;
            let centre: Vec<f64> = (0..p).map(|_| rng.random_range(-reach..reach)).collect();
            let momentum: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (centre, width, momentum, amp)
        })
        .collect();
    let eval = |x: &[f64]| -> Complex64 {
        params
            .iter()
            .map(|(c, w, q, a)| {
                let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - ci).powi(2)).sum();
                let ph: f64 = x.iter().zip(q).map(|(xi, qi)| xi * qi).sum();
                a * Complex64::from_polar((-r2 / (2.0 * w * w)).exp(), ph)
            })
            .sum()
    };
    (0..n.pow(p as u32))
        .map(|idx| {
            if p == 1 {
                eval(&[grid.coord(idx)])
            } else {
                let (a, b) = (grid.coord(idx / n), grid.coord(idx % n));
                0.5 * (eval(&[a, b]) + eval(&[b, a]))
            }
        })
        .collect()
}

/// Worst case of a commutator sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub samples: usize,
    pub worst_margin: f64,
    pub worst_form: Option<CommutatorForm>,
    pub violations: usize,
}

/// Evaluate [`commutator_form`] on `samples` random smooth kernels and count
/// those with `lhs < rhs − tol·‖φ‖²_{H¹}`.
pub fn commutator_suite(samples: usize, p: usize, k: f64, grid: KernelGrid, tol: f64, seed: u64) -> Result<CommutatorReport> {
    let results: Vec<Result<CommutatorForm>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let phi = random_smooth_kernel(p, grid, &mut rng);
            commutator_form(p, k, grid, &phi)
        })
        .collect();
    let mut rep = CommutatorReport {
        samples,
        worst_margin: f64::INFINITY,
        worst_form: None,
        violations: 0,
    };
    for r in results {
        let f = r?;
        let margin = f.relative_margin();
        if margin < -tol {
            rep.violations += 1;
        }
        if margin < rep.worst_margin {
            rep.worst_margin = margin;
            rep.worst_form = Some(f);
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chi_constraints_hold_exactly() {
        let c = check_chi_constraints();
        assert!(c.all(), "{c:?}");
    }

    #[test]
    fn chi_third_is_exact() {
        let v = chi_rational(Ratio::new(1, 3));
        assert_eq!(v, Ratio::new(47, 81));
        assert_eq!(v, Ratio::new(376, 648));
        assert!((chi(1.0 / 3.0) - 47.0 / 81.0).abs() < 1e-15);
        assert_eq!(chi_rational(Ratio::new(-1, 3)), -v);
        assert_eq!(chi_rational(Ratio::from_integer(4)), Ratio::from_integer(1));
    }

    #[test]
    fn escape_function_examples() {
        assert_eq!(m_p(&[1.0, -2.0]), -2.0);
        assert_eq!(m_p(&[3.0]), 3.0);
        assert_eq!(m_p(&[-0.5]), -0.5);
        assert_eq!(m_p(&[1.0, -1.0]), 0.0);
        let expect = -0.5 - 1.5 * 47.0 / 81.0;
        assert!((m_tilde_p(&[1.0, -2.0]) - expect).abs() < 1e-15);
        assert!((m_tilde_p(&[1.0, -2.0]) + 1.370370).abs() < 1e-6);
        assert_eq!(m_tilde_p(&[2.5]), 2.5);
        assert_eq!(m_tilde_p(&[1.5, 1.5, 1.5]), 1.5);
        assert_eq!(m_tilde_p(&[]), 0.0);
    }

    #[test]
    fn grad_sum_examples() {
        assert!((grad_sum(&[0.7], 1e-6).unwrap() - 1.0).abs() < 1e-9);
        for z in [[0.3, 2.0, -1.1], [-4.0, 1.0, 2.5]] {
            let g = grad_sum_unregularized(&z, 1e-6).unwrap();
            assert!((g - 1.0).abs() < 1e-9);
        }
        // Symmetric point: s = 0, χ′(0) = 15/8.
        let g = grad_sum(&[1.0, -1.0], 1e-6).unwrap();
        assert!((g - 2.875).abs() < 1e-6);
        assert!(grad_sum(&[1.0, 1.0 + 1e-7, 0.0], 1e-6).is_err());
    }

    #[test]
    fn insertion_checks() {
        let rep = lipschitz_insertion_check(20_000, 6, 5.0, 3).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.max_ratio <= 2.0);
        assert!((insertion_ratio(0.4, &[]) - 1.0).abs() < 1e-15);
        assert_eq!(insertion_ratio(0.5, &[-1.0, 2.0, 0.0]), 0.0);
    }

    #[test]
    fn grad_sum_suite_range() {
        let rep = grad_sum_suite(4000, 4, 5.0, 1e-6, 11).unwrap();
        assert!(rep.min >= 1.0 - 1e-4);
        assert!(rep.max <= 2.875 + 1e-4);
        assert!(rep.max > 2.0);
    }

    fn grid() -> KernelGrid {
        KernelGrid { length: 40.0, n: 256 }
    }

    #[test]
    fn zero_wave_vector_doubles_kinetic_form() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_smooth_kernel(1, g, &mut rng);
        let f = commutator_form(1, 0.0, g, &phi).unwrap();
        assert!((f.lhs - 2.0 * f.rhs).abs() <= 1e-12 * f.lhs);
        assert!(f.lhs > f.rhs);
        assert!((f.h1_norm2 - f.norm2 - f.rhs).abs() <= 1e-10 * f.h1_norm2);
    }

    #[test]
    fn windowed_plane_wave_matches_symbol() {
        // m̃_1 is the identity so M′ = 1 and the form reduces to the symbol
        // 2(ξ + k)² − k(ξ + k).
        let g = KernelGrid { length: 800.0, n: 8192 };
        let (xi, k) = (0.7, 1.0);
        let symbol = (xi + k) * (2.0 * xi + k);
        let gap = |width: f64| {
            let phi: Vec<Complex64> = (0..g.n)
                .map(|j| {
                    let x = g.coord(j);
                    Complex64::from_polar((-(x / width).powi(2)).exp(), xi * x)
                })
                .collect();
            let f = commutator_form(1, k, g, &phi).unwrap();
            f.lhs / f.norm2 - symbol
        };
        // The window contributes 2‖w′‖²/‖w‖² = 2/width², shrinking quadratically.
        for width in [20.0, 40.0, 80.0] {
            let e = gap(width);
            assert!((e - 2.0 / (width * width)).abs() < 1e-10, "width {width}: {e}");
        }
    }

    #[test]
    fn boundary_support_is_rejected() {
        let g = grid();
        let phi = vec![Complex64::new(1.0, 0.0); g.n];
        assert!(matches!(commutator_form(1, 1.0, g, &phi), Err(Error::Precondition(_))));
        assert!(commutator_form(3, 1.0, g, &phi).is_err());
    }

    #[test]
    fn mourre_lower_bound_on_random_states() {
        let rep = commutator_suite(50, 1, 1.0, grid(), 1e-6, 5).unwrap();
        assert_eq!(rep.violations, 0, "{rep:?}");
        let rep = commutator_suite(10, 2, 1.0, KernelGrid { length: 40.0, n: 128 }, 1e-6, 6).unwrap();
        assert_eq!(rep.violations, 0, "{rep:?}");
    }

    proptest! {
        #[test]
        fn m_functions_are_symmetric(z in prop::collection::vec(-5.0f64..5.0, 1..7), rot in 0usize..7) {
            let mut w = z.clone();
            let len = w.len();
            w.rotate_left(rot % len);
            w.reverse();
            prop_assert_eq!(m_p(&z), m_p(&w));
            prop_assert!((m_tilde_p(&z) - m_tilde_p(&w)).abs() < 1e-14);
        }

        #[test]
        fn m_tilde_is_bounded_by_max_abs(z in prop::collection::vec(-5.0f64..5.0, 1..7)) {
            let bound = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(m_tilde_p(&z).abs() <= bound * (1.0 + 1e-15));
            prop_assert_eq!(m_p(&z).abs(), if m_p(&z) == 0.0 { 0.0 } else { bound });
        }

        #[test]
        fn m_tilde_is_continuous(z in prop::collection::vec(-5.0f64..5.0, 1..6), dz in prop::collection::vec(-1.0f64..1.0, 6)) {
            let eps = 1e-7;
            let w: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + eps * b).collect();
            prop_assert!((m_tilde_p(&z) - m_tilde_p(&w)).abs() <= 4.0 * eps);
        }

        #[test]
        fn interior_insertion_is_neutral(z in prop::collection::vec(-5.0f64..5.0, 2..6), t in 0.0f64..1.0) {
            let (hi, lo) = max_min(&z);
            let x = lo + t * (hi - lo);
            let mut full = z.clone();
            full.push(x);
            prop_assert_eq!(m_tilde_p(&full), m_tilde_p(&z));
        }

        #[test]
        fn grad_sum_matches_closed_form(z in prop::collection::vec(-5.0f64..5.0, 1..5)) {
            if let Ok(g) = grad_sum(&z, 1e-6) {
                prop_assert!((g - grad_sum_exact(&z)).abs() < 1e-4);
            }
        }
    }
}
