//! Sampling of stationary Gaussian potentials on a periodic grid.
//!
//! The potential is represented as `V = C_0° ∗ dZ` with `dZ` white noise.
//! On the torus the noise is a vector of independent `N(0, h^d)` cell
//! increments and the convolution with the periodized root kernel is done by
//! FFT. Real-space noise makes the frequency-domain noise Hermitian by
//! construction, so the field is real up to FFT round-off, which is dropped.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::fft::{signed_index, FftPlan};
use crate::stats::jackknife_mean;

/// Square periodic grid `[0, L)^d` with `n` points per side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub length: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(dim: usize, length: f64, n: usize) -> Result<GridSpec> {
        let g = GridSpec { dim, length, n };
        g.validate()?;
        Ok(g)
    }

    /// Structural checks that do not depend on a covariance model.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::param(format!("grid dimension must be 1 or 2, got {}", self.dim)));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::param(format!("grid length must be positive, got {}", self.length)));
        }
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(Error::param(format!("points per side must be a power of two, got {}", self.n)));
        }
        Ok(())
    }

    /// Resolution and extent checks against a model: `h ≤ ℓ/4` and
    /// `L ≥ 16 · correlation length`.
    pub fn validate_for(&self, model: &CovarianceModel) -> Result<()> {
        self.validate()?;
        if model.dim() != self.dim {
            return Err(Error::param(format!(
                "grid dimension {} does not match model dimension {}",
                self.dim,
                model.dim()
            )));
        }
        let l = model.length_scale();
        if self.spacing() > l / 4.0 {
            return Err(Error::pre(format!(
                "grid spacing {} exceeds l/4 = {}; the kernel would be under-resolved",
                self.spacing(),
                l / 4.0
            )));
        }
        let min_len = 16.0 * model.correlation_length();
        if self.length < min_len {
            return Err(Error::pre(format!(
                "torus length {} is below 16 correlation lengths ({min_len}); periodization would alias",
                self.length
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Physical coordinates of grid point `idx` (first axis slowest), with
    /// each coordinate in `[0, L)`.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        match self.dim {
            1 => vec![idx as f64 * h],
            _ => vec![(idx / self.n) as f64 * h, (idx % self.n) as f64 * h],
        }
    }

    /// Coordinates of grid point `idx` folded into `[-L/2, L/2)`.
    pub fn centered_coords(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        match self.dim {
            1 => vec![signed_index(idx, self.n) as f64 * h],
            _ => vec![
                signed_index(idx / self.n, self.n) as f64 * h,
                signed_index(idx % self.n, self.n) as f64 * h,
            ],
        }
    }
}

/// One sampled potential.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRealization {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub seed: u64,
    pub model: CovarianceModel,
}

/// Metadata written next to a raw field dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub grid: GridSpec,
    pub seed: u64,
    pub model: CovarianceModel,
    pub model_id: String,
    pub layout: String,
}

impl FieldRealization {
    pub fn model_id(&self) -> String {
        self.model.id()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Values as little-endian 64-bit floats, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn sidecar(&self) -> FieldSidecar {
        FieldSidecar {
            grid: self.grid,
            seed: self.seed,
            model: self.model,
            model_id: self.model_id(),
            layout: "f64 little-endian, row-major, first axis slowest".into(),
        }
    }
}

/// Precomputed FFT of the periodized root kernel for one `(model, grid)`
/// pair. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    model: CovarianceModel,
    grid: GridSpec,
    plan: FftPlan,
    kernel_hat: Vec<Complex64>,
}

impl FieldSampler {
    pub fn new(model: &CovarianceModel, grid: &GridSpec) -> Result<FieldSampler> {
        model.validate()?;
        grid.validate_for(model)?;
        Ok(Self::new_unchecked(model, grid))
    }

    /// Skip the resolution and extent checks. Used by tests that compare the
    /// FFT synthesis with a direct convolution on deliberately tiny grids.
    pub fn new_unchecked(model: &CovarianceModel, grid: &GridSpec) -> FieldSampler {
        let plan = FftPlan::new(grid.n, grid.dim);
        let mut kernel_hat: Vec<Complex64> = (0..grid.points())
            .map(|i| Complex64::new(periodized_root(model, grid, &grid.centered_coords(i)), 0.0))
            .collect();
        plan.forward(&mut kernel_hat);
        FieldSampler {
            model: *model,
            grid: *grid,
            plan,
            kernel_hat,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// White-noise cell increments `N(0, h^d)` for a seed.
    pub fn noise(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = self.grid.cell_volume().sqrt();
        (0..self.grid.points())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect()
    }

    /// Circular convolution of the root kernel with the given noise.
    pub fn synthesize(&self, noise: &[f64]) -> Vec<f64> {
        assert_eq!(noise.len(), self.grid.points());
        let mut buf: Vec<Complex64> = noise.iter().map(|&w| Complex64::new(w, 0.0)).collect();
        self.plan.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.plan.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    pub fn sample(&self, seed: u64) -> FieldRealization {
        FieldRealization {
            grid: self.grid,
            values: self.synthesize(&self.noise(seed)),
            seed,
            model: self.model,
        }
    }
}

/// Root kernel summed over the nearest periodic images.
fn periodized_root(model: &CovarianceModel, grid: &GridSpec, x: &[f64]) -> f64 {
    let l = grid.length;
    let mut acc = 0.0;
    match grid.dim {
        1 => {
            for a in -1..=1 {
                acc += model.kernel_root(&[x[0] + a as f64 * l]);
            }
        }
        _ => {
            for a in -1..=1 {
                for b in -1..=1 {
                    acc += model.kernel_root(&[x[0] + a as f64 * l, x[1] + b as f64 * l]);
                }
            }
        }
    }
    acc
}

/// Sample one realization; bit-reproducible from `(model, grid, seed)`.
pub fn sample_field(model: &CovarianceModel, grid: &GridSpec, seed: u64) -> Result<FieldRealization> {
    Ok(FieldSampler::new(model, grid)?.sample(seed))
}

/// Seed of realization `i` in an ensemble with base seed `seed`.
pub fn realization_seed(seed: u64, i: usize) -> u64 {
    seed ^ i as u64
}

/// Sample `count` realizations in parallel; realization `i` uses
/// [`realization_seed`]`(seed, i)` and the output order is by `i`.
pub fn sample_ensemble(model: &CovarianceModel, grid: &GridSpec, seed: u64, count: usize) -> Result<Vec<FieldRealization>> {
    let sampler = FieldSampler::new(model, grid)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| sampler.sample(realization_seed(seed, i)))
        .collect())
}

/// Covariance estimate at one lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub lag: f64,
    pub value: f64,
    pub stderr: f64,
}

fn lag_index(grid: &GridSpec, lag: f64) -> Result<usize> {
    let h = grid.spacing();
    let steps = lag / h;
    let r = steps.round();
    if !lag.is_finite() || (steps - r).abs() > 1e-9 * steps.abs().max(1.0) {
        return Err(Error::param(format!("lag {lag} is not a multiple of the grid spacing {h}")));
    }
    Ok((r as i64).rem_euclid(grid.n as i64) as usize)
}

/// Space average of `V(x) V(x + lag·e_1)` over the torus for one field.
fn space_average_product(field: &FieldRealization, shift: usize) -> f64 {
    let g = &field.grid;
    let n = g.n;
    let v = &field.values;
    let prods: Vec<f64> = match g.dim {
        1 => (0..n).map(|i| v[i] * v[(i + shift) % n]).collect(),
        _ => (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                v[idx] * v[((i + shift) % n) * n + j]
            })
            .collect(),
    };
    crate::quad::pairwise_sum(&prods) / prods.len() as f64
}

/// Ensemble-and-space averaged covariance at each lag (along `e_1`) with a
/// jackknife standard error over realizations. The fields are centered by
/// construction, so no mean is subtracted and the estimator is unbiased.
pub fn empirical_covariance(fields: &[FieldRealization], lags: &[f64]) -> Result<Vec<CovarianceEstimate>> {
    if fields.len() < 2 {
        return Err(Error::param("empirical covariance needs at least two realizations"));
    }
    let grid = fields[0].grid;
    let model = fields[0].model;
    if fields.iter().any(|f| f.grid != grid || f.model != model) {
        return Err(Error::param("all realizations must share grid and model"));
    }
    lags.iter()
        .map(|&lag| {
            let shift = lag_index(&grid, lag)?;
            let per_field: Vec<f64> = fields.par_iter().map(|f| space_average_product(f, shift)).collect();
            let (value, stderr) = jackknife_mean(&per_field);
            Ok(CovarianceEstimate { lag, value, stderr })
        })
        .collect()
}

/// Streaming variant of [`empirical_covariance`] that samples the ensemble
/// on the fly instead of holding every realization in memory.
pub fn ensemble_covariance(
    model: &CovarianceModel,
    grid: &GridSpec,
    seed: u64,
    count: usize,
    lags: &[f64],
) -> Result<Vec<CovarianceEstimate>> {
    if count < 2 {
        return Err(Error::param("empirical covariance needs at least two realizations"));
    }
    let sampler = FieldSampler::new(model, grid)?;
    let shifts: Vec<usize> = lags.iter().map(|&l| lag_index(grid, l)).collect::<Result<_>>()?;
    let per_field: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let f = sampler.sample(realization_seed(seed, i));
            shifts.iter().map(|&s| space_average_product(&f, s)).collect()
        })
        .collect();
    Ok(lags
        .iter()
        .enumerate()
        .map(|(j, &lag)| {
            let col: Vec<f64> = per_field.iter().map(|row| row[j]).collect();
            let (value, stderr) = jackknife_mean(&col);
            CovarianceEstimate { lag, value, stderr }
        })
        .collect())
}
