//! Split-step Schrödinger evolution on the periodized torus and the
//! ensemble-averaged decay experiment.
//!
//! A step of length `dt` is `e^{iΔ dt/2} e^{-iλV dt} e^{iΔ dt/2}` with the
//! Laplacian applied spectrally, so free evolution of lattice modes is exact
//! and only the potential introduces splitting error.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::fft::{shifted_symbol, FftPlan};
use crate::fieldgen::{realization_seed, FieldRealization, FieldSampler, GridSpec};
use crate::stats::jackknife_mean_complex;

/// Wavefunction on a periodic grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub grid: GridSpec,
    pub psi: Vec<Complex64>,
    pub t: f64,
    /// Initial center of the packet; reference point of position moments.
    pub center: Vec<f64>,
}

impl WaveState {
    pub fn from_values(grid: GridSpec, psi: Vec<Complex64>, center: Vec<f64>) -> Result<WaveState> {
        grid.validate()?;
        if psi.len() != grid.points() || center.len() != grid.dim {
            return Err(Error::param("wavefunction or center does not match the grid"));
        }
        Ok(WaveState { grid, psi, t: 0.0, center })
    }

    /// State whose continuum Fourier coefficients on the dual lattice are
    /// `û(k_m) e^{-i k_m·x_0}`, i.e. the packet `û` translated to `x_0`.
    pub fn from_fourier<F>(grid: GridSpec, u_hat: F, center: Vec<f64>) -> Result<WaveState>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        grid.validate()?;
        if center.len() != grid.dim {
            return Err(Error::param("center does not match the grid dimension"));
        }
        let plan = FftPlan::new(grid.n, grid.dim);
        let mut buf: Vec<Complex64> = (0..grid.points())
            .map(|idx| {
                let k = lattice_mode(&grid, idx);
                let phase: f64 = k.iter().zip(&center).map(|(a, b)| a * b).sum();
                u_hat(&k) * Complex64::from_polar(1.0, -phase)
            })
            .collect();
        plan.inverse(&mut buf);
        let scale = 1.0 / grid.cell_volume();
        for v in buf.iter_mut() {
            *v *= scale;
        }
        Ok(WaveState {
            grid,
            psi: buf,
            t: 0.0,
            center,
        })
    }

    pub fn norm(&self) -> f64 {
        (self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn normalized(mut self) -> WaveState {
        let n = self.norm();
        if n > 0.0 {
            for v in self.psi.iter_mut() {
                *v /= n;
            }
        }
        self
    }

    /// Continuum Fourier coefficients `û(k_m) = h^d Σ_x e^{-ik_m·x} u(x)` in
    /// FFT order.
    pub fn fourier(&self) -> Vec<Complex64> {
        let plan = FftPlan::new(self.grid.n, self.grid.dim);
        let mut buf = self.psi.clone();
        plan.forward(&mut buf);
        let cell = self.grid.cell_volume();
        for v in buf.iter_mut() {
            *v *= cell;
        }
        buf
    }
}

/// Dual-lattice wave vector of FFT slot `idx`.
pub fn lattice_mode(grid: &GridSpec, idx: usize) -> Vec<f64> {
    let w = 2.0 * PI / grid.length;
    let n = grid.n;
    match grid.dim {
        1 => vec![crate::fft::signed_index(idx, n) as f64 * w],
        _ => vec![
            crate::fft::signed_index(idx / n, n) as f64 * w,
            crate::fft::signed_index(idx % n, n) as f64 * w,
        ],
    }
}

/// Largest admissible step for a potential of sup-norm `vmax` at coupling `λ`:
/// `min(h²/π, 0.1/(λ vmax))`.
pub fn max_time_step(grid: &GridSpec, lambda: f64, vmax: f64) -> f64 {
    let h = grid.spacing();
    let kinetic = h * h / PI;
    let pot = lambda.abs() * vmax;
    if pot > 0.0 {
        kinetic.min(0.1 / pot)
    } else {
        kinetic
    }
}

/// Reusable split-step propagator for one potential.
pub struct Propagator {
    grid: GridSpec,
    plan: FftPlan,
    symbol: Vec<f64>,
    potential: Vec<f64>,
    lambda: f64,
    dt_max: f64,
}

impl Propagator {
    pub fn new(field: &FieldRealization, lambda: f64) -> Result<Propagator> {
        Self::from_potential(field.grid, field.values.clone(), lambda)
    }

    pub fn from_potential(grid: GridSpec, potential: Vec<f64>, lambda: f64) -> Result<Propagator> {
        grid.validate()?;
        if potential.len() != grid.points() {
            return Err(Error::param("potential does not match the grid"));
        }
        if !lambda.is_finite() {
            return Err(Error::param("coupling must be finite"));
        }
        let vmax = potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Propagator {
            grid,
            plan: FftPlan::new(grid.n, grid.dim),
            symbol: shifted_symbol(grid.n, grid.dim, grid.length, &vec![0.0; grid.dim]),
            potential,
            lambda,
            dt_max: max_time_step(&grid, lambda, vmax),
        })
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    /// Advance `state` by `duration` with steps no longer than `dt`.
    pub fn advance(&self, state: &mut WaveState, duration: f64, dt: f64) -> Result<()> {
        if state.grid != self.grid {
            return Err(Error::param("state and potential live on different grids"));
        }
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::param(format!("evolution time must be nonnegative, got {duration}")));
        }
        if !(dt > 0.0) || dt > self.dt_max * (1.0 + 1e-12) {
            return Err(Error::pre(format!(
                "time step {dt} violates the stability bound {} (min(h^2/pi, 0.1/(lambda max|V|)))",
                self.dt_max
            )));
        }
        if duration == 0.0 {
            return Ok(());
        }
        let steps = (duration / dt).ceil().max(1.0) as usize;
        let tau = duration / steps as f64;
        let half: Vec<Complex64> = self.symbol.iter().map(|&s| Complex64::from_polar(1.0, -s * tau / 2.0)).collect();
        let full: Vec<Complex64> = self.symbol.iter().map(|&s| Complex64::from_polar(1.0, -s * tau)).collect();
        let pot: Vec<Complex64> = self
            .potential
            .iter()
            .map(|&v| Complex64::from_polar(1.0, -self.lambda * v * tau))
            .collect();
        let psi = &mut state.psi;
        self.plan.forward(psi);
        for (p, m) in psi.iter_mut().zip(&half) {
            *p *= m;
        }
        for step in 0..steps {
            self.plan.inverse(psi);
            for (p, m) in psi.iter_mut().zip(&pot) {
                *p *= m;
            }
            self.plan.forward(psi);
            let kin = if step + 1 == steps { &half } else { &full };
            for (p, m) in psi.iter_mut().zip(kin) {
                *p *= m;
            }
        }
        self.plan.inverse(psi);
        state.t += duration;
        Ok(())
    }
}

/// Evolve `psi0` under `-Δ + λV` for time `t_final` with step at most `dt`.
pub fn evolve(field: &FieldRealization, psi0: &WaveState, lambda: f64, t_final: f64, dt: f64) -> Result<WaveState> {
    let prop = Propagator::new(field, lambda)?;
    let mut state = psi0.clone();
    prop.advance(&mut state, t_final, dt)?;
    Ok(state)
}

/// Smooth bump `exp(1 − 1/(1 − |k − c|²/r²))` supported in the ball
/// `|k − c| < r`, normalized to peak value 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl PacketSpec {
    pub fn amplitude(&self, k: &[f64]) -> f64 {
        let r2: f64 = k.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / self.radius.powi(2);
        if r2 < 1.0 {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.center.len() != dim {
            return Err(Error::param("packet center does not match the dimension"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("packet radius must be positive"));
        }
        let c = self.center.iter().map(|v| v * v).sum::<f64>().sqrt();
        if c - self.radius <= 0.0 {
            return Err(Error::param("packet spectrum must stay away from k = 0"));
        }
        Ok(())
    }

    pub fn k_max(&self) -> f64 {
        self.center.iter().map(|v| v * v).sum::<f64>().sqrt() + self.radius
    }
}

/// Configuration of the kinetic-timescale decay experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayExperimentConfig {
    pub model: CovarianceModel,
    pub grid: GridSpec,
    pub lambda: f64,
    /// Kinetic times `s`; physical times are `t = s · time_unit`.
    pub s_list: Vec<f64>,
    pub packet: PacketSpec,
    pub realizations: usize,
    pub seed: u64,
    /// Upper bound on the time step; each realization further caps it by
    /// its own stability bound.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Physical time per unit of `s`. Defaults to `λ^{-2}`; required at `λ = 0`.
    #[serde(default)]
    pub time_unit: Option<f64>,
}

impl DecayExperimentConfig {
    pub fn time_unit(&self) -> Result<f64> {
        match self.time_unit {
            Some(u) if u > 0.0 && u.is_finite() => Ok(u),
            Some(u) => Err(Error::param(format!("time unit must be positive, got {u}"))),
            None if self.lambda > 0.0 => Ok(self.lambda.powi(-2)),
            None => Err(Error::param("a time unit is required when lambda = 0")),
        }
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        let u = self.time_unit()?;
        Ok(self.s_list.iter().map(|s| s * u).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.validate_for(&self.model)?;
        if !(self.lambda.is_finite() && (0.0..=0.5).contains(&self.lambda)) {
            return Err(Error::param(format!("lambda must lie in [0, 0.5], got {}", self.lambda)));
        }
        if self.s_list.is_empty() || self.s_list.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::param("s list must be nonempty with finite nonnegative entries"));
        }
        if self.realizations < 16 {
            return Err(Error::param(format!("need at least 16 realizations, got {}", self.realizations)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::param("time step must be positive"));
            }
        }
        self.packet.validate(self.grid.dim)?;
        let t_max = self.times()?.into_iter().fold(0.0, f64::max);
        let front = 2.0 * self.packet.k_max() * t_max;
        if front > self.grid.length / 2.0 {
            return Err(Error::pre(format!(
                "ballistic front 2|k_max|t = {front} exceeds half the torus ({}); the packet would wrap",
                self.grid.length / 2.0
            )));
        }
        Ok(())
    }
}

/// Ensemble mean of the retained Fourier modes at each requested time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAverage {
    pub modes: Vec<Vec<f64>>,
    pub u0_hat: Vec<Complex64>,
    pub s_list: Vec<f64>,
    pub times: Vec<f64>,
    /// `mean_hat[mode][time]`.
    pub mean_hat: Vec<Vec<Complex64>>,
    pub stderr: Vec<Vec<f64>>,
    pub realizations: usize,
}

impl EnsembleAverage {
    pub fn mode_index(&self, k: &[f64]) -> Option<usize> {
        self.modes.iter().position(|m| {
            m.len() == k.len() && m.iter().zip(k).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()))
        })
    }
}

/// Initial packet of a decay experiment, normalized in `L²`.
pub fn initial_state(config: &DecayExperimentConfig) -> Result<WaveState> {
    let spec = config.packet.clone();
    let state = WaveState::from_fourier(
        config.grid,
        |k| Complex64::new(spec.amplitude(k), 0.0),
        vec![0.0; config.grid.dim],
    )?;
    Ok(state.normalized())
}

/// Run the decay experiment: `M` fields with seeds `seed ⊕ i`, each evolved
/// through the requested times, then averaged mode by mode.
pub fn ensemble_average(config: &DecayExperimentConfig) -> Result<EnsembleAverage> {
    config.validate()?;
    let psi0 = initial_state(config)?;
    let u0_all = psi0.fourier();
    let peak = u0_all.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let kept: Vec<usize> = (0..u0_all.len()).filter(|&i| u0_all[i].norm() >= 1e-3 * peak).collect();
    let times = config.times()?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let dt_cap = config.dt.unwrap_or(f64::INFINITY);
    let sampler = FieldSampler::new(&config.model, &config.grid)?;

    let per_realization: Vec<Result<Vec<Complex64>>> = (0..config.realizations)
        .into_par_iter()
        .map(|i| {
            let field = sampler.sample(realization_seed(config.seed, i));
            let prop = Propagator::new(&field, config.lambda)?;
            let dt = prop.dt_max().min(dt_cap);
            let mut state = psi0.clone();
            let mut out = vec![Complex64::new(0.0, 0.0); times.len() * kept.len()];
            for &ti in &order {
                let duration = times[ti] - state.t;
                prop.advance(&mut state, duration, dt)?;
                let hat = state.fourier();
                for (j, &m) in kept.iter().enumerate() {
                    out[ti * kept.len() + j] = hat[m];
                }
            }
            Ok(out)
        })
        .collect();
    let samples: Vec<Vec<Complex64>> = per_realization.into_iter().collect::<Result<_>>()?;

    let mut mean_hat = vec![vec![Complex64::new(0.0, 0.0); times.len()]; kept.len()];
    let mut stderr = vec![vec![0.0; times.len()]; kept.len()];
    for (j, row) in mean_hat.iter_mut().enumerate() {
        for ti in 0..times.len() {
            let col: Vec<Complex64> = samples.iter().map(|s| s[ti * kept.len() + j]).collect();
            let (m, se) = jackknife_mean_complex(&col);
            row[ti] = m;
            stderr[j][ti] = se;
        }
    }
    Ok(EnsembleAverage {
        modes: kept.iter().map(|&m| lattice_mode(&config.grid, m)).collect(),
        u0_hat: kept.iter().map(|&m| u0_all[m]).collect(),
        s_list: config.s_list.clone(),
        times,
        mean_hat,
        stderr,
        realizations: config.realizations,
    })
}

/// Weighted log-linear fit of a decaying complex series `≈ A e^{-s(α + iβ)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_stderr: f64,
    pub beta_stderr: f64,
    /// Root-mean-square weighted residual of the modulus fit.
    pub residual: f64,
}

struct LineFit {
    slope: f64,
    slope_se: f64,
    rms: f64,
}

fn weighted_line(x: &[f64], y: &[f64], sigma: &[f64]) -> LineFit {
    // With no noise information fall back to unit weights and an error
    // estimate from the scatter.
    let known = sigma.iter().all(|&s| s > 0.0 && s.is_finite());
    let w: Vec<f64> = if known { sigma.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; x.len()] };
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (a - xm) * (c - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, c), b)| b * (c - intercept - slope * a).powi(2))
        .sum();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let slope_se = if known { (1.0 / sxx).sqrt() } else { (chi2 / dof / sxx).sqrt() };
    LineFit {
        slope,
        slope_se,
        rms: (chi2 / x.len() as f64).sqrt(),
    }
}

/// Fit `values[j] ≈ A e^{-s_j(α + iβ)}` given the reference phase already
/// removed. Points with `|value| ≤ 3·stderr` are dropped; fewer than four
/// usable points is an "insufficient ensemble" failure.
pub fn decay_fit_series(s: &[f64], values: &[Complex64], stderr: &[f64]) -> Result<DecayFit> {
    if s.len() != values.len() || s.len() != stderr.len() {
        return Err(Error::param("series arrays differ in length"));
    }
    let mut idx: Vec<usize> = (0..s.len()).filter(|&j| values[j].norm() > 3.0 * stderr[j]).collect();
    idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    if idx.len() < 4 {
        return Err(Error::num(format!(
            "insufficient ensemble: only {} of {} points stand above three standard errors",
            idx.len(),
            s.len()
        )));
    }
    let x: Vec<f64> = idx.iter().map(|&j| s[j]).collect();
    let logmod: Vec<f64> = idx.iter().map(|&j| values[j].norm().ln()).collect();
    // Delta method: the standard error of log|z| and of arg z is se/|z|.
    let sig: Vec<f64> = idx.iter().map(|&j| stderr[j] / values[j].norm()).collect();
    let mut phase = Vec::with_capacity(idx.len());
    let mut prev = 0.0;
    for (n, &j) in idx.iter().enumerate() {
        let mut a = values[j].arg();
        if n > 0 {
            while a - prev > PI {
                a -= 2.0 * PI;
            }
            while a - prev < -PI {
                a += 2.0 * PI;
            }
        }
        phase.push(a);
        prev = a;
    }
    let m = weighted_line(&x, &logmod, &sig);
    let p = weighted_line(&x, &phase, &sig);
    Ok(DecayFit {
        alpha: -m.slope,
        beta: -p.slope,
        alpha_stderr: m.slope_se,
        beta_stderr: p.slope_se,
        residual: m.rms,
    })
}

/// Fit the decay of mode `k` of an ensemble average in the kinetic time `s`,
/// after removing the free phase `e^{-it|k|²}` and the initial amplitude.
pub fn decay_fit(series: &EnsembleAverage, k: &[f64]) -> Result<DecayFit> {
    let j = series
        .mode_index(k)
        .ok_or_else(|| Error::param(format!("mode {k:?} is not among the retained modes")))?;
    let k2: f64 = k.iter().map(|v| v * v).sum();
    let u0 = series.u0_hat[j];
    let values: Vec<Complex64> = series.mean_hat[j]
        .iter()
        .zip(&series.times)
        .map(|(m, &t)| m * Complex64::from_polar(1.0, t * k2) / u0)
        .collect();
    let se: Vec<f64> = series.stderr[j].iter().map(|s| s / u0.norm()).collect();
    decay_fit_series(&series.s_list, &values, &se)
}

/// `‖(x − x_0) ψ‖ / t` with the minimal-image convention on the torus.
pub fn ballistic_moment(state: &WaveState) -> Result<f64> {
    if !(state.t > 0.0) {
        return Err(Error::param("ballistic moment needs t > 0"));
    }
    let g = &state.grid;
    let h = g.spacing();
    let half = g.length / 2.0;
    let cell = g.cell_volume();
    let mut second = 0.0;
    let mut seam = 0.0;
    let mut total = 0.0;
    for (idx, p) in state.psi.iter().enumerate() {
        let x = g.coords(idx);
        let mut r2 = 0.0;
        let mut near_seam = false;
        for (xi, ci) in x.iter().zip(&state.center) {
            let dx = (xi - ci + half).rem_euclid(g.length) - half;
            if dx.abs() >= half - 4.0 * h {
                near_seam = true;
            }
            r2 += dx * dx;
        }
        let w = p.norm_sqr() * cell;
        total += w;
        second += r2 * w;
        if near_seam {
            seam += w;
        }
    }
    if seam > 1e-6 * total {
        return Err(Error::pre(format!(
            "mass {seam:.3e} within 4h of the torus seam; the packet has wrapped"
        )));
    }
    Ok(second.sqrt() / state.t)
}

/// Free evolution of lattice modes: `û^t(k) = e^{-it|k|²} û°(k)`.
pub fn free_phase(k: &[f64], t: f64) -> Complex64 {
    Complex64::from_polar(1.0, -t * k.iter().map(|v| v * v).sum::<f64>())
}
