//! Covariance models of the stationary Gaussian potential.
//!
//! A model bundles the covariance `C_0`, its spectral density
//! `Ĉ_0(ξ) = ∫ e^{-iξ·x} C_0(x) dx`, and the convolution root `C_0°` with
//! `C_0 = C_0° ∗ C_0°`, all in closed form. The inverse transform uses the
//! rescaled measure `(2π)^{-d} dξ`, so `C_0(0) = (2π)^{-d} ∫ Ĉ_0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{signed_index, FftPlan};

/// Anything that can play the role of a (nonnegative) spectral density on
/// `R^d`. Covariance models implement it; tests and the spectral module supply
/// tabulated or synthetic densities through the same interface.
pub trait SpectralDensity: Sync {
    fn dim(&self) -> usize;
    fn density(&self, xi: &[f64]) -> f64;
    /// Frequency scale on which the density varies; used to place quadrature
    /// panels and to map half-line integrals.
    fn bandwidth(&self) -> f64;
    /// Radius beyond which the density is zero or below double precision
    /// relevance, if there is one.
    fn cutoff(&self) -> Option<f64> {
        None
    }
}

/// Stationary covariance model. Serialized with a `family` tag so experiment
/// manifests name the model unambiguously.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceModel {
    /// `C_0(x) = σ² exp(-|x|²/(2ℓ²))` in dimension 1 or 2.
    Gaussian { dim: usize, length_scale: f64, variance: f64 },
    /// `C_0(x) = σ² max(0, 1 - |x|/ℓ)` in dimension 1 (compact support).
    Triangular { length_scale: f64, variance: f64 },
}

pub fn make_gaussian_model(dim: usize, length_scale: f64, variance: f64) -> Result<CovarianceModel> {
    check_dim(dim)?;
    check_positive("length scale", length_scale)?;
    check_positive("variance", variance)?;
    Ok(CovarianceModel::Gaussian {
        dim,
        length_scale,
        variance,
    })
}

pub fn make_triangular_model(length_scale: f64, variance: f64) -> Result<CovarianceModel> {
    check_positive("length scale", length_scale)?;
    check_positive("variance", variance)?;
    Ok(CovarianceModel::Triangular {
        length_scale,
        variance,
    })
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::param(format!("dimension must be 1 or 2, got {dim}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be positive and finite, got {v}")))
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `sin(u)/u` with the removable singularity filled in.
fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

impl CovarianceModel {
    /// Same family and length scale with a different variance. Unlike the
    /// constructors this accepts `σ² = 0`, the degenerate zero potential.
    pub fn with_variance(&self, variance: f64) -> Result<CovarianceModel> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::param(format!("variance must be nonnegative, got {variance}")));
        }
        Ok(match *self {
            CovarianceModel::Gaussian { dim, length_scale, .. } => CovarianceModel::Gaussian {
                dim,
                length_scale,
                variance,
            },
            CovarianceModel::Triangular { length_scale, .. } => CovarianceModel::Triangular {
                length_scale,
                variance,
            },
        })
    }

    /// Check the parameters of a model that was deserialized rather than
    /// built by a constructor.
    pub fn validate(&self) -> Result<()> {
        match *self {
            CovarianceModel::Gaussian { dim, length_scale, .. } => {
                check_dim(dim)?;
                check_positive("length scale", length_scale)?;
            }
            CovarianceModel::Triangular { length_scale, .. } => check_positive("length scale", length_scale)?,
        }
        let v = self.variance();
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::param(format!("variance must be nonnegative, got {v}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match *self {
            CovarianceModel::Gaussian { dim, .. } => dim,
            CovarianceModel::Triangular { .. } => 1,
        }
    }

    pub fn length_scale(&self) -> f64 {
        match *self {
            CovarianceModel::Gaussian { length_scale, .. } | CovarianceModel::Triangular { length_scale, .. } => {
                length_scale
            }
        }
    }

    /// `C_0(0) = E[|V_0|²]`.
    pub fn variance(&self) -> f64 {
        match *self {
            CovarianceModel::Gaussian { variance, .. } | CovarianceModel::Triangular { variance, .. } => variance,
        }
    }

    /// Distance beyond which `|C_0|` is negligible in double precision:
    /// `8ℓ` for the Gaussian (`e^{-32}` relative), `ℓ` for the triangle.
    pub fn correlation_length(&self) -> f64 {
        match *self {
            CovarianceModel::Gaussian { length_scale, .. } => 8.0 * length_scale,
            CovarianceModel::Triangular { length_scale, .. } => length_scale,
        }
    }

    /// Short provenance tag, e.g. `gaussian(d=1,l=1,var=1)`.
    pub fn id(&self) -> String {
        match *self {
            CovarianceModel::Gaussian {
                dim,
                length_scale,
                variance,
            } => format!("gaussian(d={dim},l={length_scale},var={variance})"),
            CovarianceModel::Triangular {
                length_scale,
                variance,
            } => format!("triangular(d=1,l={length_scale},var={variance})"),
        }
    }

    pub fn c0(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match *self {
            CovarianceModel::Gaussian {
                length_scale: l,
                variance,
                ..
            } => variance * (-norm2(x) / (2.0 * l * l)).exp(),
            CovarianceModel::Triangular {
                length_scale: l,
                variance,
            } => variance * (1.0 - x[0].abs() / l).max(0.0),
        }
    }

    pub fn spectral_density(&self, xi: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.dim());
        match *self {
            CovarianceModel::Gaussian {
                dim,
                length_scale: l,
                variance,
            } => variance * (2.0 * PI * l * l).powf(dim as f64 / 2.0) * (-l * l * norm2(xi) / 2.0).exp(),
            CovarianceModel::Triangular {
                length_scale: l,
                variance,
            } => variance * l * sinc(xi[0] * l / 2.0).powi(2),
        }
    }

    /// The convolution root `C_0°`.
    pub fn kernel_root(&self, x: &[f64]) -> f64 {
        match *self {
            CovarianceModel::Gaussian {
                dim,
                length_scale: l,
                variance,
            } => {
                let amp = variance.sqrt() * (2.0 / (PI * l * l)).powf(dim as f64 / 4.0);
                amp * (-norm2(x) / (l * l)).exp()
            }
            CovarianceModel::Triangular {
                length_scale: l,
                variance,
            } => {
                if x[0].abs() <= l / 2.0 {
                    (variance / l).sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// Fourier transform of the convolution root. Real and even; for the
    /// triangular model it changes sign, and only its square is a density.
    pub fn kernel_root_hat(&self, xi: &[f64]) -> f64 {
        match *self {
            CovarianceModel::Gaussian {
                dim,
                length_scale: l,
                variance,
            } => variance.sqrt() * (2.0 * PI * l * l).powf(dim as f64 / 4.0) * (-l * l * norm2(xi) / 4.0).exp(),
            CovarianceModel::Triangular {
                length_scale: l,
                variance,
            } => (variance * l).sqrt() * sinc(xi[0] * l / 2.0),
        }
    }
}

impl SpectralDensity for CovarianceModel {
    fn dim(&self) -> usize {
        CovarianceModel::dim(self)
    }
    fn density(&self, xi: &[f64]) -> f64 {
        self.spectral_density(xi)
    }
    fn bandwidth(&self) -> f64 {
        1.0 / self.length_scale()
    }
    fn cutoff(&self) -> Option<f64> {
        match self {
            // exp(-ℓ²ξ²/2) < 1e-31 beyond ξ = 12/ℓ.
            CovarianceModel::Gaussian { length_scale, .. } => Some(12.0 / length_scale),
            CovarianceModel::Triangular { .. } => None,
        }
    }
}

/// Max-norm residuals of the analytic identities linking the three model
/// fields, measured on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// `max_x |h^d Σ_y C_0°(y) C_0°(x-y) − C_0(x)|` (discrete convolution).
    pub convolution: f64,
    /// `max_ξ |h^d Σ_x e^{-iξx} C_0(x) − Ĉ_0(ξ)|` (FFT against closed form).
    pub spectral: f64,
    /// `max_ξ |Ĉ_0(ξ) − Ĉ_0°(ξ)²|` (closed forms against each other).
    pub root_transform: f64,
    /// Worst of `|(2π)^{-d} Σ Ĉ_0 Δξ^d − C_0(0)|` and `|h^d Σ (C_0°)² − C_0(0)|`.
    pub plancherel: f64,
    /// `max(0, −min_ξ Ĉ_0(ξ))` over the dual grid.
    pub positivity: f64,
    /// `max(0, −min_ξ FFT(C_0)(ξ))`; round-off only for positive-definite models.
    pub fft_positivity: f64,
}

impl ConsistencyReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.convolution,
            self.spectral,
            self.root_transform,
            self.plancherel,
            self.positivity,
            self.fft_positivity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Measure the residuals of the model identities on a periodic grid with
/// spacing `step` covering `[-extent/2, extent/2)^d`.
pub fn verify_consistency(model: &CovarianceModel, step: f64, extent: f64) -> Result<ConsistencyReport> {
    check_positive("grid step", step)?;
    check_positive("grid extent", extent)?;
    let d = model.dim();
    let mut n = (extent / step).round() as usize;
    n += n % 2;
    if n < 4 {
        return Err(Error::param("grid must contain at least four points per side"));
    }
    if d == 2 && n > 4096 {
        return Err(Error::param("two-dimensional consistency grid too large"));
    }
    let h = step;
    let plan = FftPlan::new(n, d);
    let total = plan.len();
    let cell = h.powi(d as i32);
    let dxi = 2.0 * PI / (n as f64 * h);

    let coords = |idx: usize| -> Vec<f64> {
        if d == 1 {
            vec![signed_index(idx, n) as f64]
        } else {
            vec![signed_index(idx / n, n) as f64, signed_index(idx % n, n) as f64]
        }
    };
    let at = |idx: usize, scale: f64| -> Vec<f64> { coords(idx).into_iter().map(|c| c * scale).collect() };

    let mut root: Vec<Complex64> = (0..total)
        .map(|i| Complex64::new(model.kernel_root(&at(i, h)), 0.0))
        .collect();
    let root_mass: f64 = root.iter().map(|c| c.re * c.re).sum::<f64>() * cell;
    plan.forward(&mut root);
    for v in root.iter_mut() {
        *v = *v * *v * cell;
    }
    plan.inverse(&mut root);
    let mut convolution: f64 = 0.0;
    for (i, v) in root.iter().enumerate() {
        convolution = convolution.max((v.re - model.c0(&at(i, h))).abs());
    }

    let mut cov: Vec<Complex64> = (0..total).map(|i| Complex64::new(model.c0(&at(i, h)), 0.0)).collect();
    plan.forward(&mut cov);
    let mut spectral: f64 = 0.0;
    let mut root_transform: f64 = 0.0;
    let mut min_analytic = f64::INFINITY;
    let mut min_fft = f64::INFINITY;
    let mut density_sum = 0.0;
    for (i, v) in cov.iter().enumerate() {
        let xi = at(i, dxi);
        let exact = model.spectral_density(&xi);
        let fft_val = v.re * cell;
        spectral = spectral.max((fft_val - exact).abs());
        root_transform = root_transform.max((exact - model.kernel_root_hat(&xi).powi(2)).abs());
        min_analytic = min_analytic.min(exact);
        min_fft = min_fft.min(fft_val);
        density_sum += exact;
    }
    let var = model.variance();
    let spectral_mass = density_sum * dxi.powi(d as i32) / (2.0 * PI).powi(d as i32);
    let plancherel = (spectral_mass - var).abs().max((root_mass - var).abs());
    Ok(ConsistencyReport {
        convolution,
        spectral,
        root_transform,
        plancherel,
        positivity: (-min_analytic).max(0.0),
        fft_positivity: (-min_fft).max(0.0),
    })
}
