//! Finite probability space oracle: `Ω = Z_N` with the uniform measure and
//! the cyclic shift, i.e. an `L`-periodic potential with a uniformly random
//! offset on the lattice `hZ`, `L = Nh`.
//!
//! Stationary functions are `N`-vectors, `E[f] = (1/N) Σ f(ω)`, and the
//! stationary derivative is spectral differentiation on `Z_N`. The kinetic
//! part of `H_{k,λ}` has symbol `w(ξ_m + k)² − |k|²`, where `w` folds a
//! frequency into the grid window `[−π/h, π/h)`. Folding makes the fibered
//! operators exactly the Bloch fibers of the spectral Laplacian on any
//! commensurate big torus, so every identity is checked to roundoff.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::signed_index;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Periodic potential over one period with a uniformly random shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteOmegaModel {
    /// Number of shift states `N`.
    pub n: usize,
    /// Lattice spacing `h`; the period is `L = Nh`.
    pub h: f64,
    /// Potential over one period, mean zero.
    pub v: Vec<f64>,
}

impl FiniteOmegaModel {
    /// Model with potential `v` recentred to mean zero.
    pub fn new(h: f64, v: Vec<f64>) -> Result<FiniteOmegaModel> {
        if v.len() < 2 || v.len() > 256 {
            return Err(Error::param("number of shift states must be between 2 and 256"));
        }
        if !(h > 0.0 && h.is_finite()) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("spacing and potential must be finite, spacing positive"));
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        Ok(FiniteOmegaModel {
            n: v.len(),
            h,
            v: v.into_iter().map(|x| x - mean).collect(),
        })
    }

    /// Random potential with entries uniform on `[-1, 1]`, recentred.
    pub fn random(n: usize, h: f64, seed: u64) -> Result<FiniteOmegaModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        FiniteOmegaModel::new(h, v)
    }

    pub fn period(&self) -> f64 {
        self.n as f64 * self.h
    }

    /// Dual lattice `ξ_m = 2π m/L` of `Z_N` in DFT order, `m ∈ [−N/2, N/2)`.
    pub fn dual_lattice(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| 2.0 * PI * signed_index(j, self.n) as f64 / self.period())
            .collect()
    }

    /// Fold a frequency into `[−π/h, π/h)`.
    pub fn fold(&self, q: f64) -> f64 {
        let width = 2.0 * PI / self.h;
        (q + 0.5 * width).rem_euclid(width) - 0.5 * width
    }

    /// Expectation `(1/N) Σ f(ω)`.
    pub fn expectation(&self, f: &[Complex64]) -> Complex64 {
        f.iter().sum::<Complex64>() / self.n as f64
    }

    /// Inner product of `L²(Ω)`, `(1/N) Σ ḡ f`.
    pub fn inner(&self, g: &[Complex64], f: &[Complex64]) -> Complex64 {
        g.iter().zip(f).map(|(a, b)| a.conj() * b).sum::<Complex64>() / self.n as f64
    }

    /// Unitary DFT matrix `F_{mω} = e^{−iξ_m ωh}/√N`.
    fn dft(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let xi = self.dual_lattice();
        let s = 1.0 / (n as f64).sqrt();
        DMatrix::from_fn(n, n, |m, w| Complex64::from_polar(s, -xi[m] * w as f64 * self.h))
    }

    /// Fourier multiplier `F* diag(symbol) F`.
    fn multiplier(&self, symbol: &[Complex64]) -> DMatrix<Complex64> {
        let f = self.dft();
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(symbol));
        f.adjoint() * d * f
    }

    /// Stationary derivative: multiplier `iξ_m`.
    pub fn derivative(&self) -> DMatrix<Complex64> {
        let sym: Vec<Complex64> = self.dual_lattice().iter().map(|&x| Complex64::new(0.0, x)).collect();
        self.multiplier(&sym)
    }

    /// `(τ f)(ω) = f(ω + 1)`.
    pub fn shift(&self) -> DMatrix<Complex64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n { Complex64::new(1.0, 0.0) } else { ZERO })
    }
}

/// `H_{k,λ} = w(∇ + ik)² − |k|² + λ v` on `L²(Ω)` as an `N × N` matrix.
pub fn fibered_operator(model: &FiniteOmegaModel, k: f64, lambda: f64) -> DMatrix<Complex64> {
    let sym: Vec<Complex64> = model
        .dual_lattice()
        .iter()
        .map(|&x| Complex64::new(model.fold(x + k).powi(2) - k * k, 0.0))
        .collect();
    let mut h = model.multiplier(&sym);
    for (i, v) in model.v.iter().enumerate() {
        h[(i, i)] += lambda * v;
    }
    h
}

/// Hermitian eigendecomposition `(eigenvalues ascending, eigenvectors)`.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `e^{−itH}` for Hermitian `H`.
pub fn unitary_evolution(h: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
    let (vals, vecs) = hermitian_eigen(h);
    let phases: Vec<Complex64> = vals.iter().map(|&e| Complex64::from_polar(1.0, -e * t)).collect();
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(&phases));
    &vecs * d * vecs.adjoint()
}

/// Largest entry of `H − H*`.
pub fn hermitian_residual(h: &DMatrix<Complex64>) -> f64 {
    (h - h.adjoint()).iter().fold(0.0f64, |m, v| m.max(v.norm()))
}

/// Big torus `R` periods long, one sample per lattice site, with the
/// spectral Laplacian and the shifted potential `v(ω + a)`.
fn direct_evolution(model: &FiniteOmegaModel, reps: usize, omega: usize, lambda: f64, t: f64) -> DMatrix<Complex64> {
    let n = model.n;
    let big = n * reps;
    let length = big as f64 * model.h;
    let q: Vec<f64> = (0..big).map(|j| 2.0 * PI * signed_index(j, big) as f64 / length).collect();
    let s = 1.0 / (big as f64);
    let kinetic = DMatrix::from_fn(big, big, |a, b| {
        q.iter()
            .map(|&qj| Complex64::from_polar(qj * qj * s, qj * (a as f64 - b as f64) * model.h))
            .sum::<Complex64>()
    });
    let mut hm = kinetic;
    for a in 0..big {
        hm[(a, a)] += lambda * model.v[(a + omega) % n];
    }
    unitary_evolution(&hm, t)
}

/// Worst deviation between the fibered reconstruction
/// `u_t(x_a, ω) = (1/RN) Σ_{m,r} û_{m,r} e^{ik_r x_a − itk_r²} e^{−iξ_m ωh} (e^{−itH_{k_r}} e_m)(ω + a)`
/// and direct evolution of `u°` on the big torus, over all sites and shifts.
pub fn check_fibration(model: &FiniteOmegaModel, reps: usize, u0: &[Complex64], lambda: f64, t: f64) -> Result<f64> {
    let n = model.n;
    let big = n * reps;
    if reps == 0 || u0.len() != big {
        return Err(Error::param(format!(
            "initial state must live on the big torus of R·N = {big} sites (got {})",
            u0.len()
        )));
    }
    if !lambda.is_finite() || !t.is_finite() {
        return Err(Error::param("coupling and time must be finite"));
    }
    let length = big as f64 * model.h;
    // DFT of u° on the big torus (unnormalized), index j = mR + r.
    let u_hat: Vec<Complex64> = (0..big)
        .map(|j| {
            (0..big)
                .map(|a| u0[a] * Complex64::from_polar(1.0, -2.0 * PI * (j * a) as f64 / big as f64))
                .sum()
        })
        .collect();
    let xi_raw: Vec<f64> = (0..n).map(|m| 2.0 * PI * m as f64 / model.period()).collect();
    let evolutions: Vec<DMatrix<Complex64>> = (0..reps)
        .map(|r| {
            let k = 2.0 * PI * r as f64 / length;
            unitary_evolution(&fibered_operator(model, k, lambda), t)
        })
        .collect();
    let worst: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|omega| {
            let direct = direct_evolution(model, reps, omega, lambda, t);
            let ud = &direct * DVector::from_column_slice(u0);
            let mut worst: f64 = 0.0;
            for a in 0..big {
                let mut acc = ZERO;
                for r in 0..reps {
                    let k = 2.0 * PI * r as f64 / length;
                    let front = Complex64::from_polar(1.0, k * a as f64 * model.h - t * k * k);
                    for m in 0..n {
                        let coeff = u_hat[m * reps + r];
                        if coeff == ZERO {
                            continue;
                        }
                        // (U e_m)(ω + a) with e_m(ω') = e^{iξ_m ω' h}.
                        let row = (omega + a) % n;
                        let ue: Complex64 = (0..n)
                            .map(|w| evolutions[r][(row, w)] * Complex64::from_polar(1.0, xi_raw[m] * w as f64 * model.h))
                            .sum();
                        acc += coeff * front * Complex64::from_polar(1.0, -xi_raw[m] * omega as f64 * model.h) * ue;
                    }
                }
                acc /= big as f64;
                worst = worst.max((acc - ud[a]).norm());
            }
            worst
        })
        .collect();
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// Point masses `(E_j, w_j)` of a spectral measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atoms {
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Atoms {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Merge atoms closer than `tol` (energies sorted ascending).
    pub fn merged(&self, tol: f64) -> Atoms {
        let mut idx: Vec<usize> = (0..self.energies.len()).collect();
        idx.sort_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]));
        let mut out = Atoms {
            energies: Vec::new(),
            weights: Vec::new(),
        };
        for i in idx {
            let (e, w) = (self.energies[i], self.weights[i]);
            match out.energies.last() {
                Some(&last) if (e - last).abs() <= tol => *out.weights.last_mut().unwrap() += w,
                _ => {
                    out.energies.push(e);
                    out.weights.push(w);
                }
            }
        }
        out
    }

    /// Weight carried by atoms within `tol` of `e`.
    pub fn weight_near(&self, e: f64, tol: f64) -> f64 {
        self.energies
            .iter()
            .zip(&self.weights)
            .filter(|(x, _)| (*x - e).abs() <= tol)
            .map(|(_, w)| w)
            .sum()
    }
}

/// Spectral measure of `H_{k,λ}` in the state `φ`: weights `|⟨ψ_j, φ⟩|²`
/// with orthonormal eigenvectors in `L²(Ω)`.
pub fn exact_spectral_measure(model: &FiniteOmegaModel, phi: &[Complex64], k: f64, lambda: f64) -> Result<Atoms> {
    if phi.len() != model.n {
        return Err(Error::param("state must have one entry per shift state"));
    }
    let (vals, vecs) = hermitian_eigen(&fibered_operator(model, k, lambda));
    // Columns are Euclidean-normalized; in L²(Ω) the normalized vector is √N·col.
    let weights = (0..model.n)
        .map(|j| {
            let c: Complex64 = (0..model.n).map(|w| vecs[(w, j)].conj() * phi[w]).sum();
            c.norm_sqr() / model.n as f64
        })
        .collect();
    Ok(Atoms {
        energies: vals,
        weights,
    })
}

/// Pushforward at `λ = 0`: atoms at `w(ξ_m + k)² − |k|²` with the discrete
/// spectral weights `|(1/N) Σ_ω φ(ω) e^{−iξ_m ωh}|²`.
pub fn pushforward_atoms(model: &FiniteOmegaModel, phi: &[Complex64], k: f64) -> Atoms {
    let xi = model.dual_lattice();
    let n = model.n as f64;
    let energies = xi.iter().map(|&x| model.fold(x + k).powi(2) - k * k).collect();
    let weights = xi
        .iter()
        .map(|&x| {
            let c: Complex64 = phi
                .iter()
                .enumerate()
                .map(|(w, p)| p * Complex64::from_polar(1.0, -x * w as f64 * model.h))
                .sum();
            (c / n).norm_sqr()
        })
        .collect();
    Atoms { energies, weights }
}

/// Largest difference between two sorted spectra after removing the mean offset.
pub fn spectra_gap_modulo_offset(a: &[f64], b: &[f64]) -> f64 {
    let offset = a.iter().zip(b).map(|(x, y)| y - x).sum::<f64>() / a.len() as f64;
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((y - x - offset).abs()))
}

/// `(seed, N, R, λ, t)` identifying one random fibration instance.
pub type FibrationWitness = (u64, usize, usize, f64, f64);

/// Result of a randomized fibration suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FibrationReport {
    pub cases: usize,
    pub worst_residual: f64,
    /// The worst case.
    pub witness: FibrationWitness,
}

/// Random instances `N ∈ {6, 8, 12, 16, 24, 32}`, `R ∈ {2, 3, 4}`,
/// `λ ∈ [0, 1]`, `t ∈ [0, 5]`, random `u°`.
pub fn fibration_suite(cases: usize, seed: u64) -> Result<FibrationReport> {
    let results: Vec<Result<(f64, FibrationWitness)>> = (0..cases)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = [6, 8, 12, 16, 24, 32][rng.random_range(0..6)];
            let reps = rng.random_range(2..=4);
            let lambda = rng.random_range(0.0..1.0);
            let t = rng.random_range(0.0..5.0);
            let model = FiniteOmegaModel::random(n, 0.5, s)?;
            let u0 = random_state(n * reps, &mut rng);
            let res = check_fibration(&model, reps, &u0, lambda, t)?;
            Ok((res, (s, n, reps, lambda, t)))
        })
        .collect();
    let mut report = FibrationReport {
        cases,
        worst_residual: 0.0,
        witness: (seed, 0, 0, 0.0, 0.0),
    };
    for r in results {
        let (res, w) = r?;
        if res >= report.worst_residual {
            report.worst_residual = res;
            report.witness = w;
        }
    }
    Ok(report)
}

/// Random complex vector with entries in the unit square.
pub fn random_state(len: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FiniteOmegaModel {
        FiniteOmegaModel::random(16, 0.5, 42).unwrap()
    }

    #[test]
    fn structural_invariants() {
        let m = model();
        assert!(m.v.iter().sum::<f64>().abs() < 1e-14);
        let s = m.shift();
        let id = DMatrix::<Complex64>::identity(m.n, m.n);
        assert!((&s * s.adjoint() - &id).norm() < 1e-13);
        let d = m.derivative();
        assert!((&d + d.adjoint()).norm() < 1e-12);
        assert!((&d * &s - &s * &d).norm() < 1e-12);
        // d/dx e^{iξx} = iξ e^{iξx} on a resolved mode.
        let xi = m.dual_lattice()[3];
        let e: Vec<Complex64> = (0..m.n).map(|w| Complex64::from_polar(1.0, xi * w as f64 * m.h)).collect();
        let de = &d * DVector::from_column_slice(&e);
        for w in 0..m.n {
            assert!((de[w] - Complex64::new(0.0, xi) * e[w]).norm() < 1e-12);
        }
    }

    #[test]
    fn free_fiber_spectrum_and_kernel() {
        let m = model();
        for k in [0.0, 0.3, 0.7] {
            let h = fibered_operator(&m, k, 0.0);
            assert!(hermitian_residual(&h) <= 1e-13);
            let ones = DVector::from_element(m.n, Complex64::new(1.0, 0.0));
            assert!((&h * ones).norm() < 1e-12);
            let (vals, _) = hermitian_eigen(&h);
            let mut expect: Vec<f64> = m.dual_lattice().iter().map(|&x| (x + k).powi(2) - k * k).collect();
            expect.sort_by(f64::total_cmp);
            for (a, b) in vals.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10, "k={k}: {a} vs {b}");
            }
        }
        let h = fibered_operator(&m, 0.4, 0.8);
        assert!(hermitian_residual(&h) <= 1e-13);
    }

    #[test]
    fn fibration_examples() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u0 = random_state(64, &mut rng);
        let r = check_fibration(&m, 4, &u0, 0.7, 3.0).unwrap();
        assert!(r <= 1e-9, "residual {r}");
        assert!(check_fibration(&m, 4, &u0, 0.0, 3.0).unwrap() <= 1e-12);
        assert!(check_fibration(&m, 4, &u0, 0.7, 0.0).unwrap() <= 1e-13);
        assert!(check_fibration(&m, 4, &u0[..60], 0.7, 1.0).is_err());
    }

    #[test]
    fn randomized_fibration_suite() {
        let rep = fibration_suite(12, 77).unwrap();
        assert!(rep.worst_residual <= 1e-9, "{rep:?}");
    }

    #[test]
    fn spectral_measure_examples() {
        let m = model();
        let ones = vec![Complex64::new(2.0, 0.0); m.n];
        let at = exact_spectral_measure(&m, &ones, 0.3, 0.0).unwrap().merged(1e-9);
        assert!((at.weight_near(0.0, 1e-9) - 4.0).abs() < 1e-12);
        assert!((at.total() - 4.0).abs() < 1e-12);

        let v: Vec<Complex64> = m.v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let norm2 = m.inner(&v, &v).re;
        for k in [0.0, 0.25, 0.6] {
            let eig = exact_spectral_measure(&m, &v, k, 0.0).unwrap().merged(1e-9);
            let push = pushforward_atoms(&m, &v, k).merged(1e-9);
            assert_eq!(eig.energies.len(), push.energies.len());
            for ((e1, w1), (e2, w2)) in eig.energies.iter().zip(&eig.weights).zip(push.energies.iter().zip(&push.weights)) {
                assert!((e1 - e2).abs() < 1e-10 && (w1 - w2).abs() < 1e-10, "k={k}");
            }
            assert!((eig.total() - norm2).abs() < 1e-12);
            // Atom at zero carries |E[φ]|² = 0 for the centred potential.
            assert!(eig.weight_near(0.0, 1e-9) < 1e-12);
        }
        // Mass conservation at λ > 0 and a state with a mean.
        let phi: Vec<Complex64> = v.iter().map(|x| x + Complex64::new(0.5, 0.0)).collect();
        let at = exact_spectral_measure(&m, &phi, 0.5, 0.9).unwrap();
        assert!((at.total() - m.inner(&phi, &phi).re).abs() < 1e-12);
        let free = exact_spectral_measure(&m, &phi, 0.5, 0.0).unwrap();
        assert!((free.weight_near(0.0, 1e-9) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_eigenvalue_is_simple_for_generic_potential() {
        let m = model();
        for k in [0.2, 0.5] {
            let (vals, _) = hermitian_eigen(&fibered_operator(&m, k, 0.0));
            assert_eq!(vals.iter().filter(|e| e.abs() < 1e-9).count(), 1);
        }
    }

    #[test]
    fn brillouin_periodicity() {
        let m = model();
        let g = 2.0 * PI / m.period();
        for (k, lambda) in [(0.1, 0.0), (0.3, 0.6), (-0.2, 1.2)] {
            let (a, _) = hermitian_eigen(&fibered_operator(&m, k, lambda));
            let (b, _) = hermitian_eigen(&fibered_operator(&m, k + g, lambda));
            assert!(spectra_gap_modulo_offset(&a, &b) < 1e-10);
            let (c, _) = hermitian_eigen(&fibered_operator(&m, k - 3.0 * g, lambda));
            let offset = (k - 3.0 * g).powi(2) - k * k;
            for (x, y) in a.iter().zip(&c) {
                assert!((x - y - offset).abs() < 1e-10);
            }
        }
    }
}
