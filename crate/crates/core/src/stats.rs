//! Small, order-deterministic ensemble statistics.

use num_complex::Complex64;

use crate::quad::pairwise_sum;

/// Sample mean and jackknife standard error of a list of real estimates.
///
/// For the mean the delete-one jackknife reduces to `s/√M`; it is computed
/// literally here so the same helper serves nonlinear statistics.
pub fn jackknife_mean(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    let total = pairwise_sum(values);
    let mean = total / m as f64;
    if m < 2 {
        return (mean, f64::NAN);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (m - 1) as f64).collect();
    let loo_mean = pairwise_sum(&loo) / m as f64;
    let dev: Vec<f64> = loo.iter().map(|v| (v - loo_mean).powi(2)).collect();
    let var = pairwise_sum(&dev) * (m - 1) as f64 / m as f64;
    (mean, var.sqrt())
}

/// Complex mean and jackknife standard error `√(se_re² + se_im²)`.
pub fn jackknife_mean_complex(values: &[Complex64]) -> (Complex64, f64) {
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.im).collect();
    let (mr, sr) = jackknife_mean(&re);
    let (mi, si) = jackknife_mean(&im);
    (Complex64::new(mr, mi), sr.hypot(si))
}
