//! Thin wrapper over `rustfft` for the periodic grids used throughout.
//!
//! Grids are square with `n` points per side in `dim` dimensions, stored
//! row-major (the last axis is contiguous). The forward transform is
//! unnormalized; the inverse carries the `1/n^dim` factor so that
//! `inverse(forward(x)) == x`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct FftPlan {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("n", &self.n).field("dim", &self.dim).finish()
    }
}

impl FftPlan {
    /// Plan transforms on an `n^dim` grid. `dim` must be 1 or 2.
    pub fn new(n: usize, dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "FftPlan supports dim 1 or 2");
        let mut planner = FftPlanner::new();
        FftPlan {
            n,
            dim,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer does not match the planned grid");
        let n = self.n;
        // Process all rows in one call; rustfft handles batched buffers.
        plan.process(data);
        if self.dim == 2 {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = data[i * n + j];
                }
                plan.process(&mut col);
                for i in 0..n {
                    data[i * n + j] = col[i];
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Signed integer index of FFT slot `j` on an `n`-point axis:
/// `0, 1, …, n/2 − 1, −n/2, …, −1`.
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Angular wave numbers `2π m / L` in FFT order for an `n`-point axis of
/// period `length`.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * signed_index(j, n) as f64 / length).collect()
}

/// Squared wave-vector norm `|ξ + k|²` for every slot of an `n^dim` grid.
pub fn shifted_symbol(n: usize, dim: usize, length: f64, k: &[f64]) -> Vec<f64> {
    let w = wavenumbers(n, length);
    match dim {
        1 => w.iter().map(|&x| (x + k[0]).powi(2)).collect(),
        2 => {
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push((w[i] + k[0]).powi(2) + (w[j] + k[1]).powi(2));
                }
            }
            out
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_1d_and_2d() {
        for dim in [1, 2] {
            let plan = FftPlan::new(16, dim);
            let orig: Vec<Complex64> = (0..plan.len())
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
                .collect();
            let mut buf = orig.clone();
            plan.forward(&mut buf);
            plan.inverse(&mut buf);
            for (a, b) in buf.iter().zip(&orig) {
                assert!((a - b).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn plane_wave_lands_in_its_slot() {
        let n = 32;
        let plan = FftPlan::new(n, 2);
        let mut buf: Vec<Complex64> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let phase = 2.0 * PI * (3.0 * i as f64 - 5.0 * j as f64) / n as f64;
                Complex64::from_polar(1.0, phase)
            })
            .collect();
        plan.forward(&mut buf);
        let target = 3 * n + (n - 5);
        for (idx, v) in buf.iter().enumerate() {
            let expect = if idx == target { (n * n) as f64 } else { 0.0 };
            assert!((v.norm() - expect).abs() < 1e-9, "slot {idx}");
        }
    }

    #[test]
    fn signed_indices() {
        let v: Vec<i64> = (0..6).map(|j| signed_index(j, 6)).collect();
        assert_eq!(v, vec![0, 1, 2, -3, -2, -1]);
        let v: Vec<i64> = (0..5).map(|j| signed_index(j, 5)).collect();
        assert_eq!(v, vec![0, 1, 2, -2, -1]);
    }
}
