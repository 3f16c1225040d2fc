//! Fermi golden rule rates of the fibered operators.
//!
//! Everything here is a one-dimensional integral over the radius `ρ` of the
//! sphere `∂B_ρ(−k)`, the level sets of the symbol `|ξ + k|² − |k|²` of the
//! unperturbed fibered operator. With the sphere integral
//! `S(ρ) = ∫_{∂B_ρ(−k)} Ĉ dσ`:
//!
//! * `α_k = π S(|k|) / (2 (2π)^d |k|)`;
//! * `β_k = −(2π)^{-d} p.v. ∫_0^∞ S(ρ) / (ρ² − |k|²) dρ`;
//! * `E[V (H − iε)^{-1} V] = (2π)^{-d} ∫_0^∞ S(ρ) / (ρ² − |k|² − iε) dρ`,
//!   which tends to `−β_k + iα_k` as `ε ↓ 0`.
//!
//! In `d = 1` the "sphere" is the two-point set `{−k − ρ, −k + ρ}` and `S` is
//! the sum of the two density values.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covariance::SpectralDensity;
use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_to_infinity, integrate_with_breaks, richardson3, QuadOptions};

/// Regularizations used for the `ε ↓ 0` extrapolation of the resolvent pairing.
pub const RESOLVENT_EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Rates and limits attached to one fiber `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceData {
    pub k: Vec<f64>,
    pub alpha_k: f64,
    pub beta_k: f64,
    /// Error estimate of the principal value behind `beta_k`.
    pub beta_err: f64,
    /// `lim_{ε↓0} (1/i) E[V (H_{k,0} − iε)^{-1} V]`, Richardson-extrapolated.
    pub resolvent_limit: Complex64,
    /// Rayleigh–Schrödinger coefficients `ν_k^m`, filled in by the chaos module.
    pub rs_coefficients: Vec<Complex64>,
}

fn norm(k: &[f64]) -> f64 {
    k.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_k<D: SpectralDensity + ?Sized>(density: &D, k: &[f64], allow_zero: bool) -> Result<f64> {
    if k.len() != density.dim() {
        return Err(Error::param(format!(
            "wave vector has {} components but the density lives in dimension {}",
            k.len(),
            density.dim()
        )));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("wave vector must be finite"));
    }
    let kn = norm(k);
    if !allow_zero && kn == 0.0 {
        return Err(Error::param("k = 0 is excluded: the rates degenerate at the band bottom"));
    }
    Ok(kn)
}

fn tight() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        max_intervals: 2000,
    }
}

/// `S(ρ) = ∫_{∂B_ρ(−k)} Ĉ dσ` (surface measure).
pub fn sphere_integral<D: SpectralDensity + ?Sized>(density: &D, k: &[f64], rho: f64) -> Result<f64> {
    match density.dim() {
        1 => Ok(density.density(&[-k[0] + rho]) + density.density(&[-k[0] - rho])),
        2 => {
            if rho == 0.0 {
                return Ok(0.0);
            }
            let f = |theta: f64| density.density(&[-k[0] + rho * theta.cos(), -k[1] + rho * theta.sin()]) * rho;
            // Split the circle so that the point nearest the origin, where a
            // centered density peaks, sits on a panel boundary.
            let base = k[1].atan2(k[0]);
            let breaks = [base + 0.5 * PI, base + PI, base + 1.5 * PI];
            Ok(integrate_with_breaks(f, base, base + 2.0 * PI, &breaks, tight())?.value)
        }
        d => Err(Error::param(format!("unsupported dimension {d}"))),
    }
}

fn shell_prefactor(dim: usize, kn: f64) -> f64 {
    PI / (2.0 * (2.0 * PI).powi(dim as i32) * kn)
}

/// Fermi golden rule rate `α_k ≥ 0`.
pub fn alpha_k<D: SpectralDensity + ?Sized>(density: &D, k: &[f64]) -> Result<f64> {
    let kn = check_k(density, k, false)?;
    Ok(shell_prefactor(density.dim(), kn) * sphere_integral(density, k, kn)?)
}

/// Largest radius at which the sphere still meets the support of the
/// density, when the density has a cutoff.
fn radial_extent<D: SpectralDensity + ?Sized>(density: &D, kn: f64) -> Option<f64> {
    density.cutoff().map(|r| r + kn)
}

/// `∫_a^∞ f(ρ) dρ` respecting the density's cutoff if it has one.
fn radial_tail<D, F>(density: &D, kn: f64, a: f64, f: F, opts: QuadOptions) -> Result<f64>
where
    D: SpectralDensity + ?Sized,
    F: Fn(f64) -> f64,
{
    match radial_extent(density, kn) {
        Some(end) if end <= a => Ok(0.0),
        Some(end) => Ok(integrate(f, a, end, opts)?.value),
        None => Ok(integrate_to_infinity(f, a, 1.0 / density.bandwidth(), opts)?.value),
    }
}

/// Principal value `p.v. ∫_0^∞ S(ρ)/(ρ² − |k|²) dρ` after excising
/// `|ρ − |k|| < δ`. With `g(ρ) = S(ρ)/(ρ + |k|)` the inner part is folded into
/// `∫_δ^{|k|} [g(|k|+u) − g(|k|−u)]/u du`, whose integrand is regular at `u = 0`.
fn pv_excised<D: SpectralDensity + ?Sized>(density: &D, k: &[f64], kn: f64, delta: f64) -> Result<f64> {
    let g = |rho: f64| -> f64 { sphere_integral(density, k, rho).unwrap_or(f64::NAN) / (rho + kn) };
    let inner = integrate(|u: f64| (g(kn + u) - g(kn - u)) / u, delta, kn, tight())?.value;
    let outer = radial_tail(density, kn, 2.0 * kn, |rho| g(rho) / (rho - kn), tight())?;
    if !(inner.is_finite() && outer.is_finite()) {
        return Err(Error::num("sphere integral failed inside the principal value"));
    }
    Ok(inner + outer)
}

/// Level shift `β_k` and an error estimate from the `δ`-refinement.
///
/// The excised integral `J(δ)` is computed at `δ = 10⁻³|k|`, half and a
/// quarter of that, extrapolated to `δ = 0`, and compared with the direct
/// evaluation `J(0)`. Disagreement beyond `10⁻⁶ (1 + |J|)` means the sphere
/// integral is not smooth enough at `ρ = |k|` for the principal value to be
/// trusted, and is reported as a numerical failure.
pub fn beta_k_with_error<D: SpectralDensity + ?Sized>(density: &D, k: &[f64]) -> Result<(f64, f64)> {
    let kn = check_k(density, k, false)?;
    let delta = 1e-3 * kn;
    let j0 = pv_excised(density, k, kn, 0.0)?;
    let js = [
        pv_excised(density, k, kn, delta)?,
        pv_excised(density, k, kn, delta / 2.0)?,
        pv_excised(density, k, kn, delta / 4.0)?,
    ];
    let extrapolated = richardson3(js, 2.0);
    let err = (extrapolated - j0).abs();
    if !(err <= 1e-6 * (1.0 + j0.abs())) {
        return Err(Error::num(format!(
            "principal value did not settle under delta refinement: J(0) = {j0}, extrapolated {extrapolated}"
        )));
    }
    let scale = (2.0 * PI).powi(density.dim() as i32);
    Ok((-j0 / scale, err / scale))
}

pub fn beta_k<D: SpectralDensity + ?Sized>(density: &D, k: &[f64]) -> Result<f64> {
    Ok(beta_k_with_error(density, k)?.0)
}

/// `E[V (H_{k,0} − iε)^{-1} V] = (2π)^{-d} ∫ Ĉ(y) / (|y+k|² − |k|² − iε) dy`.
pub fn resolvent_pairing<D: SpectralDensity + ?Sized>(density: &D, k: &[f64], eps: f64) -> Result<Complex64> {
    let kn = check_k(density, k, true)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::param(format!("regularization must be positive, got {eps}")));
    }
    let opts = QuadOptions {
        abs_tol: 1e-16,
        rel_tol: 1e-11,
        max_intervals: 4000,
    };
    let k2 = kn * kn;
    let f = |rho: f64| -> Complex64 {
        let s = sphere_integral(density, k, rho).unwrap_or(f64::NAN);
        Complex64::new(s, 0.0) / Complex64::new(rho * rho - k2, -eps)
    };
    // The Lorentzian peak at ρ = |k| has width ~ε/(2|k|); bracket it.
    let w = if kn > 0.0 { eps / (2.0 * kn) } else { eps.sqrt() };
    let mut breaks = vec![kn];
    for m in [1.0, 10.0, 100.0] {
        breaks.push(kn - m * w);
        breaks.push(kn + m * w);
    }
    let split = (2.0 * kn).max(kn + 200.0 * w).max(1e-3);
    let near = integrate_with_breaks(f, 0.0, split, &breaks, opts)?.value;
    let far = match radial_extent(density, kn) {
        Some(end) if end <= split => Complex64::new(0.0, 0.0),
        Some(end) => integrate(f, split, end, opts)?.value,
        None => integrate_to_infinity(f, split, 1.0 / density.bandwidth(), opts)?.value,
    };
    let v = (near + far) / (2.0 * PI).powi(density.dim() as i32);
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::num("resolvent pairing produced a non-finite value"));
    }
    Ok(v)
}

/// `(1/i) E[V (H − iε)^{-1} V]` extrapolated to `ε = 0` from
/// [`RESOLVENT_EPSILONS`]; tends to `α_k + iβ_k`.
pub fn resolvent_limit<D: SpectralDensity + ?Sized>(density: &D, k: &[f64]) -> Result<Complex64> {
    let mut vals = [Complex64::new(0.0, 0.0); 3];
    for (v, &eps) in vals.iter_mut().zip(&RESOLVENT_EPSILONS) {
        *v = resolvent_pairing(density, k, eps)? / Complex64::i();
    }
    Ok(richardson3(vals, RESOLVENT_EPSILONS[0] / RESOLVENT_EPSILONS[1]))
}

/// Outcome of the Fermi instability test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FermiCondition {
    pub holds: bool,
    /// The shell mass `lim_{η↓0} (2η)^{-1} Ĉ({ξ : ||ξ+k| − |k|| < η}) = S(|k|)`.
    pub margin: f64,
}

/// Shell mass of the annulus `||ξ + k| − |k|| < η` divided by its width `2η`.
pub fn annulus_average<D: SpectralDensity + ?Sized>(density: &D, k: &[f64], eta: f64) -> Result<f64> {
    let kn = check_k(density, k, false)?;
    if !(eta > 0.0 && eta < kn) {
        return Err(Error::param("annulus half-width must lie in (0, |k|)"));
    }
    let f = |rho: f64| sphere_integral(density, k, rho).unwrap_or(f64::NAN);
    let mass = integrate_with_breaks(f, kn - eta, kn + eta, &[kn], tight())?.value;
    if !mass.is_finite() {
        return Err(Error::num("annulus integral failed"));
    }
    Ok(mass / (2.0 * eta))
}

/// Whether the spectral density charges the resonant sphere `∂B_{|k|}(−k)`.
///
/// The margin is the limit of annulus averages (Richardson in `η²` from
/// `η = |k|/100, /200, /400`); the condition holds iff it exceeds `10⁻¹²`.
pub fn fermi_condition<D: SpectralDensity + ?Sized>(density: &D, k: &[f64]) -> Result<FermiCondition> {
    let kn = check_k(density, k, false)?;
    let eta = 1e-2 * kn;
    let samples = [
        annulus_average(density, k, eta)?,
        annulus_average(density, k, eta / 2.0)?,
        annulus_average(density, k, eta / 4.0)?,
    ];
    // The symmetric average has an even expansion in η, so extrapolate in η².
    let margin = richardson3(samples, 4.0).max(0.0);
    Ok(FermiCondition {
        holds: margin > 1e-12,
        margin,
    })
}

/// All rates for one fiber.
pub fn resonance_data<D: SpectralDensity + ?Sized>(density: &D, k: &[f64]) -> Result<ResonanceData> {
    let alpha = alpha_k(density, k)?;
    let (beta, beta_err) = beta_k_with_error(density, k)?;
    Ok(ResonanceData {
        k: k.to_vec(),
        alpha_k: alpha,
        beta_k: beta,
        beta_err,
        resolvent_limit: resolvent_limit(density, k)?,
        rs_coefficients: Vec::new(),
    })
}
