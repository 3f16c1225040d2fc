//! Wiener-chaos (bosonic Fock space) representation of the fibered operator.
//!
//! In the white-noise picture a stationary random variable is a stack of
//! symmetric kernels `u_p(ξ_1, …, ξ_p)`, one per chaos order `p`, and the
//! fibered operator `H_{k,λ}` becomes `T_k + λ(a + a*)`:
//!
//! * `T_k` multiplies chaos `p` by the symbol `|ξ_1 + … + ξ_p + k|² − |k|²`;
//! * `(a*_p u)(ξ_1..ξ_{p+1}) = (1/(p+1)) Σ_j c(ξ_j) u(…ξ̂_j…)`;
//! * `(a_p w)(ξ_1..ξ_p) = (p+1) ∫ c(ζ) w(ζ, ξ_1..ξ_p) đζ`,
//!
//! with `c = Ĉ_0°` and `đζ = dζ/2π`. Kernels live on one symmetric
//! one-dimensional grid `ξ_j = −Ξ + jδ` (odd point count, so `0` is a node),
//! chaos `p` being its `p`-fold tensor product stored without symmetry
//! compression. The inner product `⟨u, v⟩ = Σ_p p! (δ/2π)^p Σ ū_p v_p` makes
//! `a` and `a*` exact adjoints on symmetric kernels and gives the discrete
//! commutation relation `[a, a*] = (δ/2π) Σ c² ≈ E|V_0|²`.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::quad::richardson3;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest number of stored kernel entries across all orders.
pub const MAX_ENTRIES: usize = 4_000_000;

/// Fourier symbol `|Σ_j ξ_j + k|² − |k|²` of the fibered Laplacian on chaos
/// `p = xis.len()`; zero on chaos 0.
pub fn symbol_t(k: &[f64], xis: &[&[f64]]) -> f64 {
    if xis.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    let mut k2 = 0.0;
    for (i, ki) in k.iter().enumerate() {
        let s: f64 = xis.iter().map(|x| x[i]).sum::<f64>() + ki;
        total += s * s;
        k2 += ki * ki;
    }
    total - k2
}

/// Duhamel bound `2 (e √var λ t)^{N+1} / √((N+1)!)` on the error of the
/// chaos-`N` truncated flow.
pub fn duhamel_bound(lambda: f64, t: f64, n: usize, variance: f64) -> f64 {
    let x = E * variance.sqrt() * (lambda * t).abs();
    let mut log_fact = 0.0;
    for j in 2..=(n + 1) {
        log_fact += (j as f64).ln();
    }
    if x == 0.0 {
        return 0.0;
    }
    2.0 * ((n + 1) as f64 * x.ln() - 0.5 * log_fact).exp()
}

/// Truncated Fock space over a one-dimensional Fourier grid for fiber `k`.
#[derive(Debug, Clone)]
pub struct FockSpace {
    pub k: f64,
    pub xi: Vec<f64>,
    /// `c(ξ_j) = Ĉ_0°(ξ_j)`.
    pub c: Vec<f64>,
    /// `δ/2π`, the weight of one grid cell in the measure `đξ`.
    pub weight: f64,
    pub max_order: usize,
    symbols: Vec<Vec<f64>>,
}

/// Chaos expansion `(u_0, …, u_P)`; `kernels[p]` has `n^p` entries, index
/// `i_1 n^{p-1} + … + i_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosState {
    pub kernels: Vec<Vec<Complex64>>,
}

impl ChaosState {
    pub fn max_order(&self) -> usize {
        self.kernels.len() - 1
    }

    pub fn u0(&self) -> Complex64 {
        self.kernels[0][0]
    }

    fn axpy(&mut self, a: Complex64, other: &ChaosState) {
        for (x, y) in self.kernels.iter_mut().zip(&other.kernels) {
            for (p, q) in x.iter_mut().zip(y) {
                *p += a * q;
            }
        }
    }

    fn scaled(&self, a: Complex64) -> ChaosState {
        ChaosState {
            kernels: self.kernels.iter().map(|k| k.iter().map(|v| v * a).collect()).collect(),
        }
    }
}

impl FockSpace {
    /// Grid `[−Ξ, Ξ]` with spacing close to `delta` (adjusted so that the
    /// point count is odd), orders `0..=max_order`.
    pub fn new(model: &CovarianceModel, k: f64, xi_max: f64, delta: f64, max_order: usize) -> Result<FockSpace> {
        model.validate()?;
        if model.dim() != 1 {
            return Err(Error::param("the chaos representation is implemented in dimension 1"));
        }
        if !(xi_max > 0.0 && delta > 0.0 && delta < xi_max && xi_max.is_finite()) {
            return Err(Error::param("grid needs 0 < delta < xi_max"));
        }
        if !k.is_finite() {
            return Err(Error::param("fiber wave vector must be finite"));
        }
        let half = (xi_max / delta).round() as usize;
        let n = 2 * half + 1;
        let delta = xi_max / half as f64;
        let entries: usize = (0..=max_order).map(|p| n.pow(p as u32)).sum();
        if entries > MAX_ENTRIES {
            return Err(Error::param(format!(
                "{entries} kernel entries exceed the desk-scale limit {MAX_ENTRIES}; coarsen the grid or lower P"
            )));
        }
        let xi: Vec<f64> = (0..n).map(|j| -xi_max + j as f64 * delta).collect();
        let c: Vec<f64> = xi.iter().map(|&x| model.kernel_root_hat(&[x])).collect();
        // The resonant shell Σξ ∈ {0, −2k} must sit well inside the grid and
        // the root kernel must have decayed at its edge.
        let margin = 2.0 / model.length_scale();
        if xi_max < 2.0 * k.abs() + margin {
            return Err(Error::pre(format!(
                "grid half-width {xi_max} does not cover the resonant shell 2|k| = {} with margin {margin}",
                2.0 * k.abs()
            )));
        }
        let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let edge = c[0].abs().max(c[n - 1].abs());
        if cmax > 0.0 && edge > 1e-3 * cmax {
            return Err(Error::pre(format!(
                "root spectral density has not decayed at the grid edge ({edge:.3e} vs peak {cmax:.3e})"
            )));
        }
        let mut space = FockSpace {
            k,
            xi,
            c,
            weight: delta / (2.0 * PI),
            max_order,
            symbols: Vec::new(),
        };
        space.symbols = (0..=max_order).map(|p| space.compute_symbols(p)).collect();
        Ok(space)
    }

    pub fn n(&self) -> usize {
        self.xi.len()
    }

    pub fn delta(&self) -> f64 {
        self.xi[1] - self.xi[0]
    }

    /// Discrete variance `(δ/2π) Σ c²`, the exact commutator `[a, a*]` on the grid.
    pub fn discrete_variance(&self) -> f64 {
        self.weight * self.c.iter().map(|v| v * v).sum::<f64>()
    }

    fn compute_symbols(&self, p: usize) -> Vec<f64> {
        let n = self.n();
        (0..n.pow(p as u32))
            .map(|idx| {
                let s = self.index_sum(idx, p);
                (s + self.k).powi(2) - self.k * self.k
            })
            .collect()
    }

    fn index_sum(&self, mut idx: usize, p: usize) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for _ in 0..p {
            s += self.xi[idx % n];
            idx /= n;
        }
        s
    }

    pub fn symbols(&self, p: usize) -> &[f64] {
        &self.symbols[p]
    }

    pub fn zero_state(&self) -> ChaosState {
        ChaosState {
            kernels: (0..=self.max_order).map(|p| vec![ZERO; self.n().pow(p as u32)]).collect(),
        }
    }

    pub fn vacuum(&self) -> ChaosState {
        let mut s = self.zero_state();
        s.kernels[0][0] = Complex64::new(1.0, 0.0);
        s
    }

    fn check_len(&self, p: usize, u: &[Complex64]) -> Result<()> {
        if u.len() != self.n().pow(p as u32) {
            return Err(Error::param(format!("kernel of order {p} has the wrong length {}", u.len())));
        }
        Ok(())
    }

    /// `a*_p`: chaos `p` to chaos `p + 1`.
    pub fn apply_creation(&self, p: usize, u: &[Complex64]) -> Result<Vec<Complex64>> {
        if p >= self.max_order {
            return Err(Error::param(format!(
                "creation on chaos {p} would exceed the truncation order {}",
                self.max_order
            )));
        }
        self.check_len(p, u)?;
        Ok(self.creation_unchecked(p, u))
    }

    fn creation_unchecked(&self, p: usize, u: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let q = p + 1;
        let size = n.pow(q as u32);
        let scale = 1.0 / q as f64;
        let mut out = vec![ZERO; size];
        // Position j (from the most significant digit) removed: the remaining
        // digits form the index of u. pow[j] = n^{q-1-j}.
        let pows: Vec<usize> = (0..q).map(|j| n.pow((q - 1 - j) as u32)).collect();
        for (idx, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for j in 0..q {
                let digit = (idx / pows[j]) % n;
                let high = idx / (pows[j] * n);
                let low = idx % pows[j];
                let omit = high * pows[j] + low;
                acc += u[omit] * self.c[digit];
            }
            *o = acc * scale;
        }
        out
    }

    /// `a_p`: chaos `p + 1` to chaos `p`, contracting the first slot.
    pub fn apply_annihilation(&self, p: usize, w: &[Complex64]) -> Result<Vec<Complex64>> {
        if p + 1 > self.max_order {
            return Err(Error::param(format!(
                "annihilation from chaos {} exceeds the truncation order {}",
                p + 1,
                self.max_order
            )));
        }
        self.check_len(p + 1, w)?;
        Ok(self.annihilation_unchecked(p, w))
    }

    fn annihilation_unchecked(&self, p: usize, w: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let rest = n.pow(p as u32);
        let scale = (p + 1) as f64 * self.weight;
        let mut out = vec![ZERO; rest];
        for (z, &cz) in self.c.iter().enumerate() {
            if cz == 0.0 {
                continue;
            }
            let block = &w[z * rest..(z + 1) * rest];
            for (o, v) in out.iter_mut().zip(block) {
                *o += v * cz;
            }
        }
        for o in out.iter_mut() {
            *o *= scale;
        }
        out
    }

    /// Truncated ladder `Q(a + a*)Q`: `(Lu)_p = a*_{p−1} u_{p−1} + a_p u_{p+1}`.
    pub fn ladder(&self, state: &ChaosState) -> ChaosState {
        let mut out = self.zero_state();
        for p in 0..=self.max_order {
            if p >= 1 {
                let up = self.creation_unchecked(p - 1, &state.kernels[p - 1]);
                for (o, v) in out.kernels[p].iter_mut().zip(up) {
                    *o += v;
                }
            }
            if p < self.max_order {
                let down = self.annihilation_unchecked(p, &state.kernels[p + 1]);
                for (o, v) in out.kernels[p].iter_mut().zip(down) {
                    *o += v;
                }
            }
        }
        out
    }

    /// `E[V φ] = (a_0 φ_1)`; bilinear (no conjugation).
    pub fn expectation_v(&self, state: &ChaosState) -> Complex64 {
        if self.max_order == 0 {
            return ZERO;
        }
        self.annihilation_unchecked(0, &state.kernels[1])[0]
    }

    /// Weighted inner product `Σ_p p! (δ/2π)^p Σ ū_p v_p`.
    pub fn inner(&self, a: &ChaosState, b: &ChaosState) -> Complex64 {
        let mut total = ZERO;
        let mut factor = 1.0;
        for p in 0..a.kernels.len().min(b.kernels.len()) {
            if p > 0 {
                factor *= p as f64 * self.weight;
            }
            total += self.kernel_inner(&a.kernels[p], &b.kernels[p]) * factor;
        }
        total
    }

    /// Unweighted sum `Σ ū v` of one order.
    fn kernel_inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let terms: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x.conj() * y).collect();
        crate::quad::pairwise_sum(&terms)
    }

    /// Weighted inner product of single kernels at order `p`.
    pub fn inner_p(&self, p: usize, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let mut factor = 1.0;
        for j in 1..=p {
            factor *= j as f64 * self.weight;
        }
        self.kernel_inner(a, b) * factor
    }

    pub fn norm(&self, state: &ChaosState) -> f64 {
        self.inner(state, state).re.max(0.0).sqrt()
    }

    /// Average over all permutations of the `p` coordinate slots.
    pub fn symmetrize(&self, p: usize, u: &[Complex64]) -> Vec<Complex64> {
        let perms = permutations(p);
        let n = self.n();
        let mut out = vec![ZERO; u.len()];
        let mut digits = vec![0usize; p];
        for (idx, o) in out.iter_mut().enumerate() {
            decode(idx, n, &mut digits);
            let mut acc = ZERO;
            for perm in &perms {
                acc += u[encode_permuted(&digits, perm, n)];
            }
            *o = acc / perms.len() as f64;
        }
        out
    }

    /// Largest deviation of `u` from its slot-permuted copies.
    pub fn asymmetry(&self, p: usize, u: &[Complex64]) -> f64 {
        let perms = permutations(p);
        let n = self.n();
        let mut digits = vec![0usize; p];
        let mut worst: f64 = 0.0;
        for (idx, v) in u.iter().enumerate() {
            decode(idx, n, &mut digits);
            for perm in &perms {
                worst = worst.max((u[encode_permuted(&digits, perm, n)] - v).norm());
            }
        }
        worst
    }

    /// Random symmetric state with Gaussian entries damped by `c` in every
    /// slot, for property tests.
    pub fn random_state(&self, seed: u64) -> ChaosState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n();
        let cmax = self.c.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut s = self.zero_state();
        let mut digits = Vec::new();
        for p in 0..=self.max_order {
            digits.resize(p, 0);
            let raw: Vec<Complex64> = (0..n.pow(p as u32))
                .map(|idx| {
                    decode(idx, n, &mut digits);
                    let env: f64 = digits.iter().map(|&d| self.c[d].abs() / cmax).product();
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im) * env
                })
                .collect();
            s.kernels[p] = self.symmetrize(p, &raw);
        }
        s
    }
}

fn decode(mut idx: usize, n: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = idx % n;
        idx /= n;
    }
}

fn encode_permuted(digits: &[usize], perm: &[usize], n: usize) -> usize {
    perm.iter().fold(0, |acc, &j| acc * n + digits[j])
}

fn permutations(p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(p - 1) {
        for pos in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(pos, p - 1);
            out.push(v);
        }
    }
    out
}

/// Chaos-truncated flow `e^{−it Q(T + λ(a + a*))Q}` from the vacuum.
pub struct TruncatedFlow<'a> {
    space: &'a FockSpace,
    lambda: f64,
    dt: f64,
}

impl<'a> TruncatedFlow<'a> {
    /// `dt` must satisfy `λ dt · 2√(P · var) ≤ 1/2`, keeping the Runge–Kutta
    /// ladder substep well inside its stability region.
    pub fn new(space: &'a FockSpace, lambda: f64, dt: f64) -> Result<TruncatedFlow<'a>> {
        if !lambda.is_finite() {
            return Err(Error::param("coupling must be finite"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("time step must be positive"));
        }
        let ladder_norm = 2.0 * (space.max_order.max(1) as f64 * space.discrete_variance()).sqrt();
        if lambda.abs() * dt * ladder_norm > 0.5 {
            return Err(Error::pre(format!(
                "time step {dt} too large for the ladder: lambda dt |L| = {} > 0.5",
                lambda.abs() * dt * ladder_norm
            )));
        }
        Ok(TruncatedFlow { space, lambda, dt })
    }

    fn diagonal(&self, state: &mut ChaosState, tau: f64) {
        for (p, kern) in state.kernels.iter_mut().enumerate() {
            for (v, &s) in kern.iter_mut().zip(self.space.symbols(p)) {
                *v *= Complex64::from_polar(1.0, -s * tau);
            }
        }
    }

    fn ladder_rk4(&self, state: &mut ChaosState, tau: f64) {
        // u' = −iλ L u
        let f = Complex64::new(0.0, -self.lambda);
        let sp = self.space;
        let k1 = sp.ladder(state).scaled(f);
        let mut tmp = state.clone();
        tmp.axpy(Complex64::new(tau / 2.0, 0.0), &k1);
        let k2 = sp.ladder(&tmp).scaled(f);
        let mut tmp = state.clone();
        tmp.axpy(Complex64::new(tau / 2.0, 0.0), &k2);
        let k3 = sp.ladder(&tmp).scaled(f);
        let mut tmp = state.clone();
        tmp.axpy(Complex64::new(tau, 0.0), &k3);
        let k4 = sp.ladder(&tmp).scaled(f);
        state.axpy(Complex64::new(tau / 6.0, 0.0), &k1);
        state.axpy(Complex64::new(tau / 3.0, 0.0), &k2);
        state.axpy(Complex64::new(tau / 3.0, 0.0), &k3);
        state.axpy(Complex64::new(tau / 6.0, 0.0), &k4);
    }

    /// Advance `state` by `duration` with Strang steps of length `≤ dt`.
    pub fn advance(&self, state: &mut ChaosState, duration: f64) -> Result<()> {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::param("evolution time must be nonnegative"));
        }
        if duration == 0.0 {
            return Ok(());
        }
        let steps = (duration / self.dt).ceil() as usize;
        let tau = duration / steps as f64;
        if self.lambda == 0.0 {
            self.diagonal(state, duration);
            return Ok(());
        }
        self.diagonal(state, tau / 2.0);
        for step in 0..steps {
            self.ladder_rk4(state, tau);
            let d = if step + 1 == steps { tau / 2.0 } else { tau };
            self.diagonal(state, d);
        }
        Ok(())
    }

    /// `u_0(t)` at each (nondecreasing) time, starting from the vacuum.
    pub fn vacuum_series(&self, times: &[f64]) -> Result<Vec<Complex64>> {
        let mut state = self.space.vacuum();
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            if t < now {
                return Err(Error::param("times must be nondecreasing"));
            }
            self.advance(&mut state, t - now)?;
            now = t;
            out.push(state.u0());
        }
        Ok(out)
    }
}

/// Grid parameters of a chaos computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosGrid {
    pub xi_max: f64,
    pub delta: f64,
}

/// State at time `t` of the chaos-`P` truncated flow started at the vacuum.
pub fn evolve_truncated(
    model: &CovarianceModel,
    k: f64,
    lambda: f64,
    t: f64,
    max_order: usize,
    grid: ChaosGrid,
    dt: f64,
) -> Result<(FockSpace, ChaosState)> {
    if max_order > 3 {
        return Err(Error::param("chaos truncation beyond P = 3 is outside desk scale"));
    }
    let space = FockSpace::new(model, k, grid.xi_max, grid.delta, max_order)?;
    let flow = TruncatedFlow::new(&space, lambda, dt)?;
    let mut state = space.vacuum();
    flow.advance(&mut state, t)?;
    Ok((space, state))
}

/// Which boundary value `H ± i0` the recurrence regularizes towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RsBranch {
    /// `φ^{m,ε,−}`: solves with `H + iε`; gives `ν^1 → β_k − iα_k`.
    Minus,
    /// `φ^{m,ε,+}`: solves with `H − iε`.
    Plus,
}

/// Output of the regularized Rayleigh–Schrödinger recurrence.
#[derive(Debug, Clone)]
pub struct RsSolution {
    /// `φ^0, …, φ^n`.
    pub phi: Vec<ChaosState>,
    /// `ν^m = E[V φ̄^m]` for `m = 1..=n` (index `m − 1`).
    pub nu: Vec<Complex64>,
}

/// Solve `(T ± iε) φ^{m+1} = −Vφ^m + Σ_{l≤m} E[Vφ^l] φ^{m−l}` with `φ^0 = 1`,
/// projecting out the chaos-0 component for `m ≥ 1`.
pub fn rs_recurrence(space: &FockSpace, eps: f64, order: usize, branch: RsBranch) -> Result<RsSolution> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param(format!("regularization must be positive, got {eps}")));
    }
    if order == 0 || order > 3 {
        return Err(Error::param("recurrence order must be 1, 2 or 3"));
    }
    if space.max_order < order {
        return Err(Error::param(format!(
            "order {order} needs chaos up to {order}, space is truncated at {}",
            space.max_order
        )));
    }
    let shift = match branch {
        RsBranch::Minus => Complex64::new(0.0, eps),
        RsBranch::Plus => Complex64::new(0.0, -eps),
    };
    let mut phi = vec![space.vacuum()];
    let mut ev = vec![space.expectation_v(&phi[0])];
    for m in 0..order {
        let mut rhs = space.zero_state();
        // −Vφ^m with the full (untruncated within range) V = a + a*.
        let vphi = full_v(space, &phi[m]);
        rhs.axpy(Complex64::new(-1.0, 0.0), &vphi);
        for l in 0..=m {
            rhs.axpy(ev[l], &phi[m - l]);
        }
        let mut next = space.zero_state();
        for p in 1..=space.max_order {
            for ((o, r), &s) in next.kernels[p].iter_mut().zip(&rhs.kernels[p]).zip(space.symbols(p)) {
                *o = r / (Complex64::new(s, 0.0) + shift);
            }
        }
        ev.push(space.expectation_v(&next));
        phi.push(next);
    }
    let nu = ev[1..].iter().map(|v| v.conj()).collect();
    Ok(RsSolution { phi, nu })
}

/// `V = a + a*` on a state whose top chaos is below the truncation, so that
/// nothing is lost.
fn full_v(space: &FockSpace, state: &ChaosState) -> ChaosState {
    space.ladder(state)
}

/// `lim_{ε↓0} ν_k^1` by Richardson extrapolation over `eps` (ratio
/// `eps[0]/eps[1]`), each value computed on a chaos-1 space.
pub fn nu1_limit(model: &CovarianceModel, k: f64, grid: ChaosGrid, eps: [f64; 3]) -> Result<Complex64> {
    let space = FockSpace::new(model, k, grid.xi_max, grid.delta, 1)?;
    let mut vals = [ZERO; 3];
    for (v, &e) in vals.iter_mut().zip(&eps) {
        *v = rs_recurrence(&space, e, 1, RsBranch::Minus)?.nu[0];
    }
    Ok(richardson3(vals, eps[0] / eps[1]))
}
