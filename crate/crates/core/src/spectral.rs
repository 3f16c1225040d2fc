//! Spectral measures of the free fibered operators `H_{k,0}`.
//!
//! For a stationary observable `φ` with mean `E[φ]` and spectral measure
//! `Ĉ^φ`, the spectral measure of `H_{k,0}` in the state `φ` is the
//! pushforward of `ν_k^φ([0, t]) = (2π)^{-d} Ĉ^φ(closed ball B_t(−k))` under
//! `h_k(t) = t² − |k|²`. It is an atom `|E[φ]|²` at zero plus an absolutely
//! continuous part with density `(2π)^{-d} S(√(E+|k|²)) / (2√(E+|k|²))` on
//! `(−|k|², ∞)`, where `S(ρ)` is the integral of the (centered) spectral
//! density over the sphere `|ξ + k| = ρ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceModel, SpectralDensity};
use crate::error::{Error, Result};
use crate::fermi::sphere_integral;
use crate::fft::{signed_index, FftPlan};
use crate::quad::{integrate, integrate_to_infinity, integrate_with_breaks, QuadOptions};

fn opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-11,
        max_intervals: 4000,
    }
}

/// A stationary observable described by its mean and the spectral density
/// of its centered part.
pub struct StateSpectrum<'a> {
    pub mean: Complex64,
    pub density: &'a dyn SpectralDensity,
}

impl<'a> StateSpectrum<'a> {
    pub fn centered(density: &'a dyn SpectralDensity) -> StateSpectrum<'a> {
        StateSpectrum {
            mean: Complex64::new(0.0, 0.0),
            density,
        }
    }
}

fn norm(k: &[f64]) -> f64 {
    k.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_k(density: &dyn SpectralDensity, k: &[f64]) -> Result<f64> {
    if k.len() != density.dim() || k.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("wave vector must be finite and match the dimension"));
    }
    Ok(norm(k))
}

fn radial_integral(density: &dyn SpectralDensity, k: &[f64], f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let kn = norm(k);
    let w = 1.0 / density.bandwidth();
    let breaks = [kn - w, kn, kn + w];
    let hi = match density.cutoff() {
        Some(c) => hi.min(c + kn),
        None => hi,
    };
    if hi <= lo {
        return Ok(0.0);
    }
    if hi.is_finite() {
        return Ok(integrate_with_breaks(f, lo, hi, &breaks, opts())?.value);
    }
    let mid = lo.max(kn + 8.0 * w);
    let head = integrate_with_breaks(&f, lo, mid, &breaks, opts())?.value;
    Ok(head + integrate_to_infinity(&f, mid, w, opts())?.value)
}

/// `dν_k/dt = (2π)^{-d} S(t)` for the centered part.
pub fn nu_k_density(density: &dyn SpectralDensity, k: &[f64], t: f64) -> Result<f64> {
    check_k(density, k)?;
    if t < 0.0 {
        return Err(Error::param("radius must be nonnegative"));
    }
    Ok(sphere_integral(density, k, t)? / (2.0 * PI).powi(density.dim() as i32))
}

/// Cumulative mass `ν_k^φ([0, t])`, including the atom `|E[φ]|²` sitting at
/// `t = |k|`.
pub fn nu_k(state: &StateSpectrum<'_>, k: &[f64], t: f64) -> Result<f64> {
    let kn = check_k(state.density, k)?;
    if !(t >= 0.0) {
        return Err(Error::param("radius must be nonnegative"));
    }
    let cont = if t == 0.0 {
        0.0
    } else {
        radial_integral(state.density, k, |r| nu_k_density(state.density, k, r).unwrap_or(f64::NAN), 0.0, t)?
    };
    let atom = if t >= kn { state.mean.norm_sqr() } else { 0.0 };
    Ok(cont + atom)
}

/// Local behaviour `density ≈ coefficient · (E + |k|²)^exponent` at the
/// spectral edge `E = −|k|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeBehaviour {
    pub exponent: f64,
    pub coefficient: f64,
}

/// Spectral measure of `H_{k,0}` in a state: atom at zero plus an
/// absolutely continuous density on `(−|k|², ∞)`.
pub struct SpectralMeasureRepr<'a> {
    pub state: StateSpectrum<'a>,
    pub k: Vec<f64>,
    pub atom_at_zero: f64,
    /// `|E[φ]|² + (2π)^{-d}∫Ĉ`.
    pub total_mass: f64,
}

impl<'a> SpectralMeasureRepr<'a> {
    pub fn new(state: StateSpectrum<'a>, k: &[f64]) -> Result<SpectralMeasureRepr<'a>> {
        check_k(state.density, k)?;
        let atom = state.mean.norm_sqr();
        let cont = radial_integral(
            state.density,
            k,
            |r| nu_k_density(state.density, k, r).unwrap_or(f64::NAN),
            0.0,
            f64::INFINITY,
        )?;
        Ok(SpectralMeasureRepr {
            state,
            k: k.to_vec(),
            atom_at_zero: atom,
            total_mass: atom + cont,
        })
    }

    pub fn edge(&self) -> f64 {
        -self.k.iter().map(|v| v * v).sum::<f64>()
    }

    /// `dμ_ac/dE`; errors at or below the edge.
    pub fn ac_density(&self, e: f64) -> Result<f64> {
        let shifted = e - self.edge();
        if !(shifted > 0.0) {
            return Err(Error::param(format!(
                "energy {e} is not above the spectral edge {}",
                self.edge()
            )));
        }
        let t = shifted.sqrt();
        Ok(nu_k_density(self.state.density, &self.k, t)? / (2.0 * t))
    }

    /// Edge asymptotics: exponent `(d − 2)/2`. In `d = 1` the coefficient is
    /// `Ĉ(−k)/(2π)`; in `d = 2` it is `Ĉ(−k)/(4π)`.
    pub fn edge_behaviour(&self) -> EdgeBehaviour {
        let d = self.state.density.dim();
        let neg_k: Vec<f64> = self.k.iter().map(|v| -v).collect();
        let c = self.state.density.density(&neg_k);
        let coefficient = match d {
            1 => c / (2.0 * PI),
            _ => c / (4.0 * PI),
        };
        EdgeBehaviour {
            exponent: (d as f64 - 2.0) / 2.0,
            coefficient,
        }
    }

    /// `∫ g dμ` computed in the energy variable, the edge singularity
    /// handled by adaptive refinement.
    pub fn integrate_energy(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        let edge = self.edge();
        let w = 1.0 / self.state.density.bandwidth();
        let f = |e: f64| {
            if e <= edge {
                0.0
            } else {
                g(e) * self.ac_density(e).unwrap_or(f64::NAN)
            }
        };
        let near = edge + w * w;
        let mid = edge + (w * (norm(&self.k) + 8.0 * w)).max(1.0) * 4.0;
        let mut total = integrate(f, edge, near, opts())?.value;
        total += integrate(f, near, mid, opts())?.value;
        total += integrate_to_infinity(f, mid, w * w, opts())?.value;
        Ok(total + self.atom_at_zero * g(0.0))
    }

    /// `∫ g(t² − |k|²) dν(t)`, the pushforward side.
    pub fn integrate_pushforward(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        let edge = self.edge();
        let density = self.state.density;
        let k = &self.k;
        let cont = radial_integral(
            density,
            k,
            |t| g(t * t + edge) * nu_k_density(density, k, t).unwrap_or(f64::NAN),
            0.0,
            f64::INFINITY,
        )?;
        Ok(cont + self.atom_at_zero * g(0.0))
    }
}

/// Spectral density tabulated on a uniform one-dimensional grid and
/// linearly interpolated, zero beyond the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    /// Increasing, uniformly spaced frequencies.
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl TabulatedDensity {
    /// `(2π)^{-1} Σ values · δξ`, the total mass.
    pub fn mass(&self) -> f64 {
        let dxi = self.xi[1] - self.xi[0];
        self.values.iter().sum::<f64>() * dxi / (2.0 * PI)
    }
}

impl SpectralDensity for TabulatedDensity {
    fn dim(&self) -> usize {
        1
    }

    fn density(&self, xi: &[f64]) -> f64 {
        let x = xi[0];
        let n = self.xi.len();
        let (lo, hi) = (self.xi[0], self.xi[n - 1]);
        if x < lo || x > hi {
            return 0.0;
        }
        let pos = (x - lo) / (hi - lo) * (n - 1) as f64;
        let j = (pos.floor() as usize).min(n - 2);
        let frac = pos - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }

    fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    fn cutoff(&self) -> Option<f64> {
        Some(self.xi[self.xi.len() - 1].abs().max(self.xi[0].abs()))
    }
}

/// `E[V^j]` for a centered Gaussian of variance `σ²`: `(j − 1)!! σ^j` for
/// even `j`, zero for odd `j`.
pub fn gaussian_moment(j: usize, variance: f64) -> f64 {
    if j % 2 == 1 {
        return 0.0;
    }
    let mut df = 1.0;
    let mut m = j as i64 - 1;
    while m > 1 {
        df *= m as f64;
        m -= 2;
    }
    df * variance.powi(j as i32 / 2)
}

fn binomial(n: usize, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Wick expansion of the covariance of `V^n`: weights `w_m` with
/// `Cov(V^n(x), V^n(0)) = Σ_{m≥1} w_m C_0(x)^m`,
/// `w_m = m! binom(n, m)² E[V^{n−m}]²`.
pub fn power_covariance_weights(n: usize, variance: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let mut fact = 1.0;
    for (m, wm) in w.iter_mut().enumerate().skip(1) {
        fact *= m as f64;
        let b = binomial(n, m);
        let mom = gaussian_moment(n - m, variance);
        *wm = fact * b * b * mom * mom;
    }
    w
}

/// `Var[V^n] = E[V^{2n}] − E[V^n]²` for a centered Gaussian.
pub fn power_variance(n: usize, variance: f64) -> f64 {
    gaussian_moment(2 * n, variance) - gaussian_moment(n, variance).powi(2)
}

/// Spectral density of `V^n − E[V^n]` in dimension 1.
///
/// The Fourier transform of `C_0^m` is the `m`-fold convolution power of
/// `Ĉ_0` normalized by `(2π)^{1−m}`; it is obtained here by transforming
/// `C_0^m` tabulated on a fine real-space grid. Roundoff negatives in the
/// transform are clamped to zero.
pub fn covariance_of_power(model: &CovarianceModel, n: usize) -> Result<TabulatedDensity> {
    model.validate()?;
    if model.dim() != 1 {
        return Err(Error::param("Wick powers are tabulated in dimension 1"));
    }
    if n == 0 || n > 5 {
        return Err(Error::param("power must be between 1 and 5"));
    }
    let ell = model.length_scale();
    let (h, extent) = match model {
        CovarianceModel::Gaussian { .. } => (ell / 32.0, 4.0 * model.correlation_length()),
        CovarianceModel::Triangular { .. } => (ell / 512.0, 8.0 * ell),
    };
    let npts = ((extent / h).round() as usize).next_power_of_two();
    let length = npts as f64 * h;
    let weights = power_covariance_weights(n, model.variance());
    let plan = FftPlan::new(npts, 1);
    let mut buf: Vec<Complex64> = (0..npts)
        .map(|j| {
            let x = signed_index(j, npts) as f64 * h;
            let c = model.c0(&[x]);
            let v: f64 = weights.iter().enumerate().skip(1).map(|(m, w)| w * c.powi(m as i32)).sum();
            Complex64::new(v, 0.0)
        })
        .collect();
    plan.forward(&mut buf);
    let dxi = 2.0 * PI / length;
    let half = npts / 2;
    let mut xi = Vec::with_capacity(npts - 1);
    let mut values = Vec::with_capacity(npts - 1);
    // Frequencies −(N/2 − 1)δξ .. (N/2 − 1)δξ, leaving out the unpaired Nyquist slot.
    for s in -(half as i64 - 1)..=(half as i64 - 1) {
        let j = s.rem_euclid(npts as i64) as usize;
        xi.push(s as f64 * dxi);
        values.push((buf[j].re * h).max(0.0));
    }
    Ok(TabulatedDensity {
        xi,
        values,
        bandwidth: n as f64 / ell,
    })
}
