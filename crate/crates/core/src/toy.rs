//! Exactly solvable transport model `H̃_λ = (1/i)∂_1 + λV`.
//!
//! The flow is explicit: `u_t(x) = u°(x − te_1) exp(−iλ∫_0^t V(x − se_1) ds)`.
//! Stationary correlations reduce by Gaussian integration by parts to
//! pairings `C_0(a − b)` and line integrals of `C_0` along `e_1`, which gives
//! the averaged phase `E[ψ_t] = exp(−λ²∫_0^t (t − s) C_0(se_1) ds)`, the
//! resonance `−iλ²α_∘` with `α_∘ = ∫_0^∞ C_0(se_1) ds`, and the pairings of
//! the resonant states with monomials in `V`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::fft::FftPlan;
use crate::fieldgen::{realization_seed, FieldRealization, FieldSampler, GridSpec};
use crate::flow::{lattice_mode, WaveState};
use crate::quad::{integrate_to_infinity, integrate_with_breaks, QuadOptions};
use crate::stats::jackknife_mean_complex;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest monomial degree accepted by the Wick recursions.
pub const MAX_DEGREE: usize = 6;

fn quad_opts() -> QuadOptions {
    QuadOptions::with_rel_tol(1e-12)
}

fn shifted(a: &[f64], s: f64) -> Vec<f64> {
    let mut p = a.to_vec();
    p[0] += s;
    p
}

/// `∫_0^t C_0(a + s e_1) ds`; `t = ∞` is allowed.
pub fn c0_line_integral(model: &CovarianceModel, a: &[f64], t: f64) -> Result<f64> {
    model.validate()?;
    if a.len() != model.dim() {
        return Err(Error::param("point dimension does not match the model"));
    }
    if t.is_nan() || t < 0.0 {
        return Err(Error::param("line-integral length must be nonnegative"));
    }
    let ell = model.length_scale();
    let f = |s: f64| model.c0(&shifted(a, s));
    // Past `s*` the integrand is in its tail (zero for compact support).
    let s_star = (-a[0]).max(0.0) + model.correlation_length();
    let breaks = [-a[0] - ell, -a[0], -a[0] + ell];
    let finite_end = t.min(s_star);
    let mut total = integrate_with_breaks(f, 0.0, finite_end, &breaks, quad_opts())?.value;
    if t > s_star {
        total += if t.is_infinite() {
            integrate_to_infinity(f, s_star, ell, quad_opts())?.value
        } else {
            integrate_with_breaks(f, s_star, t, &[], quad_opts())?.value
        };
    }
    Ok(total)
}

/// `α_∘ = ∫_0^∞ C_0(s e_1) ds`.
pub fn toy_alpha0(model: &CovarianceModel) -> Result<f64> {
    let origin = vec![0.0; model.dim()];
    c0_line_integral(model, &origin, f64::INFINITY)
}

/// `∫_0^∞ s C_0(s e_1) ds`.
pub fn toy_first_moment(model: &CovarianceModel) -> Result<f64> {
    model.validate()?;
    let origin = vec![0.0; model.dim()];
    let f = |s: f64| s * model.c0(&shifted(&origin, s));
    let ell = model.length_scale();
    let s_star = model.correlation_length();
    Ok(integrate_with_breaks(f, 0.0, s_star, &[ell], quad_opts())?.value
        + integrate_to_infinity(f, s_star, ell, quad_opts())?.value)
}

/// Resonance data of the toy model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyResonance {
    pub alpha_circ: f64,
    /// `−iλ²α_∘`.
    pub z_res: Complex64,
    /// `exp(½λ²∫_0^∞ s C_0(se_1) ds)`, relating `Ψ̃^±` to `Ψ̃^{∘,±}`.
    pub gauge_prefactor: f64,
}

pub fn toy_resonance(model: &CovarianceModel, lambda: f64) -> Result<ToyResonance> {
    let alpha_circ = toy_alpha0(model)?;
    let m1 = toy_first_moment(model)?;
    Ok(ToyResonance {
        alpha_circ,
        z_res: Complex64::new(0.0, -lambda * lambda * alpha_circ),
        gauge_prefactor: (0.5 * lambda * lambda * m1).exp(),
    })
}

/// `E[ψ_t] = exp(−λ² ∫_0^t (t − s) C_0(s e_1) ds)`, real and in `(0, 1]`.
pub fn mean_phase_factor(model: &CovarianceModel, lambda: f64, t: f64) -> Result<Complex64> {
    model.validate()?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::param("time must be finite and nonnegative"));
    }
    if !lambda.is_finite() {
        return Err(Error::param("coupling must be finite"));
    }
    if t == 0.0 || lambda == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let origin = vec![0.0; model.dim()];
    let f = |s: f64| (t - s) * model.c0(&shifted(&origin, s));
    let ell = model.length_scale();
    let exponent = integrate_with_breaks(f, 0.0, t, &[ell, model.correlation_length()], quad_opts())?.value;
    Ok(Complex64::new((-lambda * lambda * exponent).exp(), 0.0))
}

/// Which resonant state: `+` (resonant) or `−` (co-resonant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToySign {
    Plus,
    Minus,
}

fn check_points(model: &CovarianceModel, points: &[Vec<f64>]) -> Result<()> {
    if points.iter().any(|p| p.len() != model.dim() || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::param("points must be finite and match the model dimension"));
    }
    Ok(())
}

/// Gaussian integration by parts on the monomial `Π V(a_j)` against a
/// weight whose linear response to `V(a)` is `tail[a]`: peel the first
/// factor, pairing it with every other factor or with the weight.
fn wick_recursion(points: &[Vec<f64>], model: &CovarianceModel, tail: &[Complex64], base: Complex64) -> Complex64 {
    let n = points.len();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
            cov[i * n + j] = model.c0(&d);
        }
    }
    let mut memo: Vec<Option<Complex64>> = vec![None; 1 << n];
    memo[0] = Some(base);
    fn go(mask: usize, n: usize, cov: &[f64], tail: &[Complex64], memo: &mut [Option<Complex64>]) -> Complex64 {
        if let Some(v) = memo[mask] {
            return v;
        }
        let first = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << first);
        let mut acc = tail[first] * go(rest, n, cov, tail, memo);
        for b in 0..n {
            if rest & (1 << b) != 0 {
                acc += cov[first * n + b] * go(rest & !(1 << b), n, cov, tail, memo);
            }
        }
        memo[mask] = Some(acc);
        acc
    }
    go((1 << n) - 1, n, &cov, tail, &mut memo)
}

/// `⟨Ψ̃^{∘,±}, Π_j V(x_j)⟩`: pairings `C_0(x_1 − x_l)` plus the tail
/// `∓(λ/i)∫_0^∞ C_0(x_1 ± se_1) ds`, with `⟨Ψ̃^{∘,±}, 1⟩ = 1`.
pub fn resonant_pairing(model: &CovarianceModel, lambda: f64, sign: ToySign, points: &[Vec<f64>]) -> Result<Complex64> {
    model.validate()?;
    check_points(model, points)?;
    if points.len() > 2 * MAX_DEGREE {
        return Err(Error::param(format!("monomial degree above {}", 2 * MAX_DEGREE)));
    }
    let tail: Vec<Complex64> = points
        .iter()
        .map(|x| {
            let (dir, pref) = match sign {
                ToySign::Plus => (1.0, -1.0),
                ToySign::Minus => (-1.0, 1.0),
            };
            // ∫_0^∞ C_0(x ± s e_1) ds = ∫_0^∞ C_0(±x + s e_1) ds by evenness of C_0.
            let y: Vec<f64> = x.iter().map(|v| dir * v).collect();
            c0_line_integral(model, &y, f64::INFINITY).map(|v| pref * lambda * v / I)
        })
        .collect::<Result<_>>()?;
    Ok(wick_recursion(points, model, &tail, Complex64::new(1.0, 0.0)))
}

/// `E[φ′ e^{−itH̃_λ} φ]` for `φ′ = Π V(y_j)`, `φ = Π V(x_j)`, i.e.
/// `E[Π V(y_j) Π V(x_j − te_1) ψ_t]` with `ψ_t = exp((λ/i)∫_0^t V(−se_1) ds)`.
pub fn correlation(model: &CovarianceModel, y_points: &[Vec<f64>], x_points: &[Vec<f64>], lambda: f64, t: f64) -> Result<Complex64> {
    if y_points.len() > MAX_DEGREE || x_points.len() > MAX_DEGREE {
        return Err(Error::param(format!("monomial degree above {MAX_DEGREE}")));
    }
    check_points(model, y_points)?;
    check_points(model, x_points)?;
    let base = mean_phase_factor(model, lambda, t)?;
    let mut pts: Vec<Vec<f64>> = y_points.to_vec();
    pts.extend(x_points.iter().map(|x| shifted(x, -t)));
    let tail: Vec<Complex64> = pts
        .iter()
        .map(|a| c0_line_integral(model, a, t).map(|v| lambda * v / I))
        .collect::<Result<_>>()?;
    Ok(wick_recursion(&pts, model, &tail, base))
}

/// `∫_0^t V(x − s e_1) ds` at every grid point, exactly for the trigonometric
/// interpolant of the sampled field.
pub fn field_line_integral(field: &FieldRealization, t: f64) -> Vec<f64> {
    let grid = field.grid;
    let plan = FftPlan::new(grid.n, grid.dim);
    let mut buf: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    for (idx, v) in buf.iter_mut().enumerate() {
        let q = lattice_mode(&grid, idx)[0];
        *v *= if q == 0.0 {
            Complex64::new(t, 0.0)
        } else {
            (1.0 - Complex64::from_polar(1.0, -q * t)) / (I * q)
        };
    }
    plan.inverse(&mut buf);
    buf.iter().map(|v| v.re).collect()
}

/// Spectral translation by `t` along `e_1`.
fn translate(grid: &GridSpec, values: &[Complex64], t: f64) -> Vec<Complex64> {
    let plan = FftPlan::new(grid.n, grid.dim);
    let mut buf = values.to_vec();
    plan.forward(&mut buf);
    for (idx, v) in buf.iter_mut().enumerate() {
        let q = lattice_mode(grid, idx)[0];
        *v *= Complex64::from_polar(1.0, -q * t);
    }
    plan.inverse(&mut buf);
    buf
}

fn check_flow_inputs(field: &FieldRealization, u0: &WaveState, lambda: f64, t: f64) -> Result<()> {
    if field.grid != u0.grid {
        return Err(Error::param("field and wavefunction live on different grids"));
    }
    if !lambda.is_finite() || !(t.is_finite() && t >= 0.0) {
        return Err(Error::param("coupling and time must be finite, time nonnegative"));
    }
    if t > 0.5 * field.grid.length {
        return Err(Error::pre(format!(
            "transport distance {t} exceeds half the torus length {}; the packet would wrap",
            field.grid.length
        )));
    }
    Ok(())
}

/// Explicit toy flow `u_t(x) = u°(x − te_1) exp(−iλ∫_0^t V(x − se_1) ds)`.
pub fn exact_flow(field: &FieldRealization, u0: &WaveState, lambda: f64, t: f64) -> Result<WaveState> {
    check_flow_inputs(field, u0, lambda, t)?;
    let moved = translate(&field.grid, &u0.psi, t);
    let line = field_line_integral(field, t);
    let psi = moved
        .iter()
        .zip(&line)
        .map(|(u, w)| u * Complex64::from_polar(1.0, -lambda * w))
        .collect();
    Ok(WaveState {
        grid: u0.grid,
        psi,
        t: u0.t + t,
        center: u0.center.clone(),
    })
}

/// Strang splitting of the same flow: half-step phase `e^{−iλV dt/2}`, exact
/// spectral advection, half-step phase. An independent solver used to check
/// [`exact_flow`].
pub fn advect_split_step(field: &FieldRealization, u0: &WaveState, lambda: f64, t: f64, dt: f64) -> Result<WaveState> {
    check_flow_inputs(field, u0, lambda, t)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("time step must be positive"));
    }
    let steps = (t / dt).ceil().max(1.0) as usize;
    let tau = t / steps as f64;
    let grid = field.grid;
    let plan = FftPlan::new(grid.n, grid.dim);
    let half: Vec<Complex64> = field
        .values
        .iter()
        .map(|&v| Complex64::from_polar(1.0, -0.5 * lambda * v * tau))
        .collect();
    let shift: Vec<Complex64> = (0..grid.points())
        .map(|idx| Complex64::from_polar(1.0, -lattice_mode(&grid, idx)[0] * tau))
        .collect();
    let mut psi = u0.psi.clone();
    for _ in 0..steps {
        for (p, h) in psi.iter_mut().zip(&half) {
            *p *= h;
        }
        plan.forward(&mut psi);
        for (p, s) in psi.iter_mut().zip(&shift) {
            *p *= s;
        }
        plan.inverse(&mut psi);
        for (p, h) in psi.iter_mut().zip(&half) {
            *p *= h;
        }
    }
    Ok(WaveState {
        grid,
        psi,
        t: u0.t + t,
        center: u0.center.clone(),
    })
}

/// Value of the trigonometric interpolant of a one-dimensional field at `x`.
pub fn field_at(field: &FieldRealization, x: f64) -> Result<f64> {
    let grid = field.grid;
    if grid.dim != 1 {
        return Err(Error::param("point evaluation is implemented in dimension 1"));
    }
    let plan = FftPlan::new(grid.n, 1);
    let mut buf: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    // Taking the real part splits the Nyquist mode symmetrically.
    let acc: Complex64 = buf
        .iter()
        .enumerate()
        .map(|(idx, v)| v * Complex64::from_polar(1.0, lattice_mode(&grid, idx)[0] * x))
        .sum();
    Ok(acc.re / grid.n as f64)
}

/// `∫_0^t V(x − s e_1) ds` at a single point of a one-dimensional field.
pub fn field_line_integral_at(field: &FieldRealization, x: f64, t: f64) -> Result<f64> {
    let grid = field.grid;
    if grid.dim != 1 {
        return Err(Error::param("point evaluation is implemented in dimension 1"));
    }
    let plan = FftPlan::new(grid.n, 1);
    let mut buf: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf);
    let mut acc = Complex64::new(0.0, 0.0);
    for (idx, v) in buf.iter().enumerate() {
        let q = lattice_mode(&grid, idx)[0];
        let kernel = if q == 0.0 {
            Complex64::new(t, 0.0)
        } else {
            Complex64::from_polar(1.0, q * x) * (1.0 - Complex64::from_polar(1.0, -q * t)) / (I * q)
        };
        acc += v * kernel;
    }
    Ok(acc.re / grid.n as f64)
}

/// Monte Carlo estimate with its jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: Complex64,
    pub stderr: f64,
    pub samples: usize,
}

/// Ensemble average of `Π V(y_j) Π V(x_j − te_1) ψ_t` over sampled
/// one-dimensional fields; `ψ_t` is built from the exact line integral.
pub fn mc_correlation(
    model: &CovarianceModel,
    grid: &GridSpec,
    y_points: &[f64],
    x_points: &[f64],
    lambda: f64,
    t: f64,
    count: usize,
    seed: u64,
) -> Result<McEstimate> {
    if grid.dim != 1 || model.dim() != 1 {
        return Err(Error::param("the Monte Carlo oracle is implemented in dimension 1"));
    }
    if count < 2 {
        return Err(Error::param("need at least two realizations"));
    }
    let sampler = FieldSampler::new(model, grid)?;
    let values: Vec<Complex64> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<Complex64> {
            let field = sampler.sample(realization_seed(seed, i));
            let w = field_line_integral_at(&field, 0.0, t)?;
            let mut prod = Complex64::from_polar(1.0, -lambda * w);
            for &y in y_points {
                prod *= field_at(&field, y)?;
            }
            for &x in x_points {
                prod *= field_at(&field, x - t)?;
            }
            Ok(prod)
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = jackknife_mean_complex(&values);
    Ok(McEstimate {
        mean,
        stderr,
        samples: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{make_gaussian_model, make_triangular_model};
    use crate::fieldgen::sample_field;
    use crate::flow::{ballistic_moment, decay_fit_series};
    use proptest::prelude::*;
    use statrs::function::erf::erf;
    use std::f64::consts::PI;

    fn gauss() -> CovarianceModel {
        make_gaussian_model(1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn alpha_circ_oracles() {
        assert!((toy_alpha0(&gauss()).unwrap() - (PI / 2.0).sqrt()).abs() < 1e-10);
        let g2 = make_gaussian_model(1, 1.0, 2.5).unwrap();
        assert!((toy_alpha0(&g2).unwrap() - 2.5 * (PI / 2.0).sqrt()).abs() < 1e-10);
        let g3 = make_gaussian_model(2, 0.5, 1.0).unwrap();
        assert!((toy_alpha0(&g3).unwrap() - 0.5 * (PI / 2.0).sqrt()).abs() < 1e-10);
        let tri = make_triangular_model(1.0, 1.0).unwrap();
        assert!((toy_alpha0(&tri).unwrap() - 0.5).abs() < 1e-12);
        assert!((toy_first_moment(&gauss()).unwrap() - 1.0).abs() < 1e-10);
        assert!((toy_first_moment(&tri).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        let r = toy_resonance(&gauss(), 0.3).unwrap();
        assert!(r.z_res.im < 0.0 && r.z_res.re == 0.0);
        assert!((r.gauge_prefactor - (0.5f64 * 0.09).exp()).abs() < 1e-12);
    }

    #[test]
    fn line_integral_oracles() {
        // Gaussian: ∫_0^t e^{-(a+s)²/2} ds = √(π/2)(erf((a+t)/√2) − erf(a/√2)).
        for (a, t) in [(0.0, 2.0), (-3.0, 5.0), (1.5, 0.7), (-20.0, 40.0)] {
            let v = c0_line_integral(&gauss(), &[a], t).unwrap();
            let expect = (PI / 2.0).sqrt() * (erf((a + t) / 2f64.sqrt()) - erf(a / 2f64.sqrt()));
            assert!((v - expect).abs() < 1e-11, "a={a} t={t}: {v} vs {expect}");
        }
        let tri = make_triangular_model(1.0, 1.0).unwrap();
        assert!((c0_line_integral(&tri, &[-0.5], f64::INFINITY).unwrap() - 0.875).abs() < 1e-12);
        assert!(c0_line_integral(&gauss(), &[0.0], -1.0).is_err());
    }

    #[test]
    fn mean_phase_examples() {
        let v = mean_phase_factor(&gauss(), 0.5, 2.0).unwrap();
        let exponent = 2.0 * (PI / 2.0).sqrt() * erf(2f64.sqrt()) - (1.0 - (-2.0f64).exp());
        assert!((exponent - 1.52790).abs() < 2e-5);
        assert!((v.re - (-0.25 * exponent).exp()).abs() < 1e-12);
        assert!((v.re - 0.68251).abs() < 1e-5);
        assert_eq!(v.im, 0.0);
        assert_eq!(mean_phase_factor(&gauss(), 0.5, 0.0).unwrap().re, 1.0);
        assert_eq!(mean_phase_factor(&gauss(), 0.0, 7.0).unwrap().re, 1.0);
    }

    #[test]
    fn mean_phase_is_monotone_and_gauge_limit() {
        let m = gauss();
        let lam = 0.4;
        let r = toy_resonance(&m, lam).unwrap();
        let mut prev = 1.0;
        for j in 1..60 {
            let t = 0.25 * j as f64;
            let v = mean_phase_factor(&m, lam, t).unwrap().re;
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        // e^{λ² t α_∘} E[ψ_t] = exp(λ²∫_0^∞ s C_0) minus Gaussian tails,
        // which is the square of the per-state gauge factor.
        for t in [8.0, 12.0, 20.0] {
            let v = mean_phase_factor(&m, lam, t).unwrap().re * (lam * lam * t * r.alpha_circ).exp();
            assert!((v - r.gauge_prefactor.powi(2)).abs() < 1e-9, "t={t}: {v}");
        }
    }

    #[test]
    fn resonant_pairing_examples() {
        let m = gauss();
        let lam = 0.3;
        let one = resonant_pairing(&m, lam, ToySign::Plus, &[vec![0.0]]).unwrap();
        assert!((one - Complex64::new(0.0, lam * (PI / 2.0).sqrt())).norm() < 1e-12);
        assert_eq!(resonant_pairing(&m, lam, ToySign::Plus, &[]).unwrap(), Complex64::new(1.0, 0.0));
        let two = resonant_pairing(&m, 0.0, ToySign::Minus, &[vec![0.3], vec![1.1]]).unwrap();
        assert!((two.re - m.c0(&[0.8])).abs() < 1e-15 && two.im == 0.0);
        // λ = 0 gives Isserlis moments; odd degrees vanish.
        let three = resonant_pairing(&m, 0.0, ToySign::Plus, &[vec![0.1], vec![0.2], vec![0.4]]).unwrap();
        assert_eq!(three, Complex64::new(0.0, 0.0));
        let x = [0.0, 0.5, 1.0, 2.0];
        let four = resonant_pairing(&m, 0.0, ToySign::Plus, &x.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap();
        let c = |a: f64, b: f64| m.c0(&[a - b]);
        let isserlis = c(x[0], x[1]) * c(x[2], x[3]) + c(x[0], x[2]) * c(x[1], x[3]) + c(x[0], x[3]) * c(x[1], x[2]);
        assert!((four.re - isserlis).abs() < 1e-15);
    }

    #[test]
    fn resonant_pairing_first_order_expansion() {
        // ⟨Ψ^±, φ⟩ = E[φ] ± iλ∫_0^∞ E[V(∓se_1) φ] ds + O(λ²), read off from
        // the λ-polynomial by symmetric differences.
        let m = gauss();
        let h = 1e-3;
        for sign in [ToySign::Plus, ToySign::Minus] {
            let sgn = if sign == ToySign::Plus { 1.0 } else { -1.0 };
            for pts in [vec![vec![0.4]], vec![vec![-0.2], vec![0.9]]] {
                let f = |l: f64| resonant_pairing(&m, l, sign, &pts).unwrap();
                let slope = (f(h) - f(-h)) / (2.0 * h);
                let expect = match pts.len() {
                    1 => {
                        let x = pts[0][0];
                        // E[V(∓s)V(x)] = C_0(x ± s)
                        Complex64::new(0.0, sgn * c0_line_integral(&m, &[sgn * x], f64::INFINITY).unwrap())
                    }
                    _ => Complex64::new(0.0, 0.0),
                };
                assert!((slope - expect).norm() < 1e-9, "{sign:?} {pts:?}: {slope} vs {expect}");
                let at0 = f(0.0);
                let mean = if pts.len() == 2 { m.c0(&[pts[0][0] - pts[1][0]]) } else { 0.0 };
                assert!((at0.re - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn correlation_reduces_to_mean_phase() {
        let m = gauss();
        for t in [0.0, 1.0, 4.0] {
            let c = correlation(&m, &[], &[], 0.4, t).unwrap();
            assert_eq!(c, mean_phase_factor(&m, 0.4, t).unwrap());
        }
        let too_many = vec![vec![0.0]; MAX_DEGREE + 1];
        assert!(correlation(&m, &too_many, &[], 0.1, 1.0).is_err());
    }

    #[test]
    fn correlation_decay_rate() {
        let m = gauss();
        let lam = 0.3;
        let ts: Vec<f64> = (0..=20).map(|j| 5.0 + 0.5 * j as f64).collect();
        let vals: Vec<Complex64> = ts.iter().map(|&t| correlation(&m, &[], &[], lam, t).unwrap()).collect();
        let fit = decay_fit_series(&ts, &vals, &vec![0.0; ts.len()]).unwrap();
        let target = lam * lam * toy_alpha0(&m).unwrap();
        assert!((fit.alpha - target).abs() < 0.02 * target);
        assert!(fit.beta.abs() < 1e-12);
    }

    #[test]
    fn residue_factorization() {
        let m = gauss();
        let lam = 0.35;
        let ys = vec![vec![0.2], vec![-0.4]];
        let xs = vec![vec![0.5]];
        let xs2 = vec![vec![0.5], vec![1.0], vec![-0.3]];
        for (yp, xp) in [(ys.clone(), xs.clone()), (vec![vec![0.1]], xs2.clone()), (ys, xs2)] {
            let t = 30.0;
            let c = correlation(&m, &yp, &xp, lam, t).unwrap() / mean_phase_factor(&m, lam, t).unwrap();
            let plus = resonant_pairing(&m, lam, ToySign::Plus, &yp).unwrap();
            let minus = resonant_pairing(&m, lam, ToySign::Minus, &xp).unwrap();
            let expect = plus.conj() * minus;
            assert!((c - expect).norm() < 1e-3, "{c} vs {expect}");
        }
    }

    #[test]
    fn exact_flow_properties() {
        let m = gauss();
        let grid = GridSpec::new(1, 128.0, 1024).unwrap();
        let field = sample_field(&m, &grid, 17).unwrap();
        let u0 = WaveState::from_values(
            grid,
            (0..grid.n)
                .map(|j| {
                    let x = grid.centered_coords(j)[0];
                    Complex64::from_polar((-(x * x) / 4.0).exp(), 0.8 * x)
                })
                .collect(),
            vec![0.0],
        )
        .unwrap();
        let free = exact_flow(&field, &u0, 0.0, 5.0).unwrap();
        let moved = translate(&grid, &u0.psi, 5.0);
        for (a, b) in free.psi.iter().zip(&moved) {
            assert!((a - b).norm() < 1e-13);
        }
        let u = exact_flow(&field, &u0, 0.4, 5.0).unwrap();
        for (a, b) in u.psi.iter().zip(&moved) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        // Independent split-step solver.
        let v = advect_split_step(&field, &u0, 0.4, 5.0, 2e-3).unwrap();
        let diff: f64 = u.psi.iter().zip(&v.psi).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * grid.cell_volume();
        assert!(diff.sqrt() < 1e-6, "L2 difference {}", diff.sqrt());
        assert!(exact_flow(&field, &u0, 0.4, 70.0).is_err());
    }

    #[test]
    fn ballistic_transport() {
        let m = gauss();
        let grid = GridSpec::new(1, 400.0, 4096).unwrap();
        let field = sample_field(&m, &grid, 3).unwrap();
        let u0 = WaveState::from_values(
            grid,
            (0..grid.n)
                .map(|j| {
                    let x = grid.centered_coords(j)[0];
                    Complex64::new((-(x * x) / 2.0).exp(), 0.0)
                })
                .collect(),
            vec![0.0],
        )
        .unwrap()
        .normalized();
        let mut prev = f64::INFINITY;
        for t in [20.0, 60.0, 180.0] {
            let u = exact_flow(&field, &u0, 0.3, t).unwrap();
            let b = ballistic_moment(&u).unwrap();
            assert!((b - 1.0).abs() < prev);
            prev = (b - 1.0).abs();
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn field_point_evaluation_matches_grid() {
        let m = gauss();
        let grid = GridSpec::new(1, 128.0, 512).unwrap();
        let field = sample_field(&m, &grid, 8).unwrap();
        for j in [0, 17, 128, 255] {
            let x = grid.coords(j)[0];
            assert!((field_at(&field, x).unwrap() - field.values[j]).abs() < 1e-12);
        }
        let line = field_line_integral(&field, 3.3);
        for j in [0, 40, 200] {
            let x = grid.coords(j)[0];
            assert!((field_line_integral_at(&field, x, 3.3).unwrap() - line[j]).abs() < 1e-11);
        }
    }

    #[test]
    fn monte_carlo_mean_phase() {
        let m = gauss();
        let grid = GridSpec::new(1, 128.0, 512).unwrap();
        let est = mc_correlation(&m, &grid, &[], &[], 0.5, 2.0, 2000, 99).unwrap();
        let exact = mean_phase_factor(&m, 0.5, 2.0).unwrap();
        assert!((est.mean - exact).norm() < 4.0 * est.stderr, "{:?} vs {exact}", est);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pairing_is_permutation_invariant(xs in prop::collection::vec(-2.0f64..2.0, 1..6), lam in 0.0f64..1.0, rot in 0usize..6) {
            let m = gauss();
            let pts: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
            let mut perm = pts.clone();
            let len = perm.len();
            perm.rotate_left(rot % len);
            perm.reverse();
            for sign in [ToySign::Plus, ToySign::Minus] {
                let a = resonant_pairing(&m, lam, sign, &pts).unwrap();
                let b = resonant_pairing(&m, lam, sign, &perm).unwrap();
                prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
            }
        }
    }
}
