//! Acceptance suite: one PASS/FAIL line per criterion, with a few detail
//! lines underneath. Exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fiberlab::chaos::{self, ChaosGrid, FockSpace};
use fiberlab::covariance::{make_gaussian_model, CovarianceModel};
use fiberlab::fermi;
use fiberlab::fieldgen::GridSpec;
use fiberlab::finomega::{self, FiniteOmegaModel};
use fiberlab::flow::{self, DecayExperimentConfig, PacketSpec};
use fiberlab::mourre::{self, KernelGrid};
use fiberlab::spectral::{self, SpectralMeasureRepr, StateSpectrum};
use fiberlab::toy::{self, ToySign};

type Outcome = Result<Vec<String>, Box<dyn std::error::Error>>;

struct Verdict {
    pass: bool,
    details: Vec<String>,
}

impl Verdict {
    fn new() -> Verdict {
        Verdict {
            pass: true,
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }
}

fn gauss() -> CovarianceModel {
    make_gaussian_model(1, 1.0, 1.0).unwrap()
}

/// Torus of `21` wavelengths of `k = 1`, so `k = 1` is a lattice mode.
fn decay_grid() -> GridSpec {
    GridSpec::new(1, 2.0 * PI * 21.0, 1024).unwrap()
}

fn decay_config(lambda: f64, s_list: Vec<f64>, realizations: usize, seed: u64) -> DecayExperimentConfig {
    DecayExperimentConfig {
        model: gauss(),
        grid: decay_grid(),
        lambda,
        s_list,
        packet: PacketSpec {
            center: vec![1.2],
            radius: 0.4,
        },
        realizations,
        seed,
        dt: Some(0.02),
        time_unit: None,
    }
}

fn criterion_1() -> Outcome {
    let mut v = Verdict::new();
    let m = gauss();
    let cfg = decay_config(0.3, vec![0.2, 0.4, 0.6, 0.8], 2500, 20_250);
    let avg = flow::ensemble_average(&cfg)?;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_dev: f64 = 0.0;
    let mut checked = 0;
    let mut failures = 0;
    for (j, k) in avg.modes.iter().enumerate() {
        if !(0.8..=1.6).contains(&k[0]) {
            continue;
        }
        let a = fermi::alpha_k(&m, k)?;
        for (ti, &s) in avg.s_list.iter().enumerate() {
            let mean = avg.mean_hat[j][ti];
            let u0 = avg.u0_hat[j].norm();
            let dev = ((mean.norm() / u0).ln() + s * a).abs();
            let se = avg.stderr[j][ti] / mean.norm();
            checked += 1;
            if dev > 0.15 + 3.0 * se {
                failures += 1;
            }
            worst = worst.max(dev - 3.0 * se);
            worst_dev = worst_dev.max(dev);
        }
    }
    v.check(
        failures == 0 && checked > 0,
        format!("{checked} (mode, s) pairs, {failures} outside 0.15 + 3 stderr; worst deviation {worst_dev:.4}, worst deviation minus 3 stderr {worst:.4}"),
    );
    finish(v)
}

fn criterion_2() -> Outcome {
    let mut v = Verdict::new();
    let m = gauss();
    for k in [0.5, 1.0, 2.0] {
        let a = fermi::alpha_k(&m, &[k])?;
        let b = fermi::beta_k(&m, &[k])?;
        let lim = fermi::resolvent_limit(&m, &[k])?;
        let gap = (lim - Complex64::new(a, b)).norm();
        v.check(gap <= 1e-3, format!("k={k}: |(1/i)R(0+) - (alpha + i beta)| = {gap:.2e}"));
        let nu = chaos::nu1_limit(&m, k, ChaosGrid { xi_max: 10.0, delta: 1e-3 }, [0.04, 0.02, 0.01])?;
        let gap = (nu - Complex64::new(b, -a)).norm();
        v.check(gap <= 1e-2, format!("k={k}: |nu^1 - (beta - i alpha)| = {gap:.2e}"));
    }
    finish(v)
}

fn criterion_3() -> Outcome {
    let mut v = Verdict::new();
    let m = gauss();
    let lam = 0.3;
    let target = lam * lam * toy::toy_alpha0(&m)?;
    let ts: Vec<f64> = (0..=20).map(|j| 5.0 + 0.5 * j as f64).collect();
    let exact: Vec<Complex64> = ts.iter().map(|&t| toy::correlation(&m, &[], &[], lam, t)).collect::<Result<_, _>>()?;
    let fit = flow::decay_fit_series(&ts, &exact, &vec![0.0; ts.len()])?;
    let rel = (fit.alpha - target).abs() / target;
    v.check(rel <= 0.02, format!("closed-form rate {:.6} vs lambda^2 alpha_circ {target:.6} (rel {rel:.2e})", fit.alpha));

    let grid = GridSpec::new(1, 128.0, 512)?;
    let mut means = Vec::new();
    let mut ses = Vec::new();
    for (i, &t) in ts.iter().enumerate() {
        let est = toy::mc_correlation(&m, &grid, &[], &[], lam, t, 10_000, 3_000 + i as u64)?;
        means.push(est.mean);
        ses.push(est.stderr);
    }
    let mc = flow::decay_fit_series(&ts, &means, &ses)?;
    let z = (mc.alpha - fit.alpha).abs() / mc.alpha_stderr;
    v.check(
        z <= 3.0,
        format!("Monte Carlo rate {:.5} +- {:.5} vs closed form ({z:.2} sigma)", mc.alpha, mc.alpha_stderr),
    );

    // Residual of the first-order expansion of the resonant pairing.
    let mut worst_slope_gap: f64 = 0.0;
    let lams: Vec<f64> = (0..8).map(|j| 0.2 * 0.6f64.powi(j)).collect();
    for (sign, sgn) in [(ToySign::Plus, 1.0), (ToySign::Minus, -1.0)] {
        for x in [0.4, -0.7] {
            let first = toy::c0_line_integral(&m, &[sgn * x], f64::INFINITY)?;
            let mut lx = Vec::new();
            let mut ly = Vec::new();
            for &l in &lams {
                let p = toy::resonant_pairing(&m, l, sign, &[vec![x]])?;
                let r = (p - Complex64::new(0.0, sgn * l * first)).norm();
                lx.push(l.ln());
                ly.push(r.ln());
            }
            let slope = slope(&lx, &ly);
            worst_slope_gap = worst_slope_gap.max((slope - 2.0).abs());
        }
    }
    v.check(
        worst_slope_gap <= 0.1,
        format!("resonant pairing residual exponent within {worst_slope_gap:.3} of 2"),
    );
    finish(v)
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    sxy / sxx
}

fn criterion_4() -> Outcome {
    let mut v = Verdict::new();
    let m = gauss();
    let sp = FockSpace::new(&m, 1.0, 6.0, 0.3, 3)?;
    let c00 = m.c0(&[0.0]);
    let mut adj: f64 = 0.0;
    let mut ccr: f64 = 0.0;
    for seed in 0..100u64 {
        let u = sp.random_state(seed);
        let w = sp.random_state(seed + 1_000);
        for p in 0..3 {
            let lhs = sp.inner_p(p + 1, &sp.apply_creation(p, &u.kernels[p])?, &w.kernels[p + 1]);
            let rhs = sp.inner_p(p, &u.kernels[p], &sp.apply_annihilation(p, &w.kernels[p + 1])?);
            adj = adj.max((lhs - rhs).norm() / lhs.norm().max(1.0));
            let aa = sp.apply_annihilation(p, &sp.apply_creation(p, &u.kernels[p])?)?;
            let bb = if p == 0 {
                vec![Complex64::new(0.0, 0.0)]
            } else {
                sp.apply_creation(p - 1, &sp.apply_annihilation(p - 1, &u.kernels[p])?)?
            };
            let scale = u.kernels[p].iter().fold(1.0f64, |s, z| s.max(z.norm()));
            for ((x, y), z) in aa.iter().zip(&bb).zip(&u.kernels[p]) {
                ccr = ccr.max((x - y - z * c00).norm() / scale);
            }
        }
    }
    v.check(adj <= 1e-10, format!("adjointness on 100 states: worst relative gap {adj:.2e}"));
    v.check(ccr <= 1e-8, format!("CCR against C_0(0) on 100 states: worst gap {ccr:.2e}"));

    let lam = 0.3;
    let s = 0.5;
    let t = s / (lam * lam);
    let (_, st) = chaos::evolve_truncated(&m, 1.0, lam, t, 2, ChaosGrid { xi_max: 8.0, delta: 0.05 }, 0.02)?;
    let cfg = decay_config(lam, vec![s], 2500, 40_404);
    let avg = flow::ensemble_average(&cfg)?;
    let j = avg.mode_index(&[1.0]).ok_or("k = 1 is not a retained lattice mode")?;
    let mc = avg.mean_hat[j][0] * Complex64::from_polar(1.0, t) / avg.u0_hat[j];
    let se = avg.stderr[j][0] / avg.u0_hat[j].norm();
    let gap = (st.u0() - mc).norm();
    v.check(
        gap <= 3.0 * se + 0.05,
        format!("chaos u_0 {:.4} vs Monte Carlo {:.4} (gap {gap:.4}, stderr {se:.4})", st.u0(), mc),
    );

    let g = ChaosGrid { xi_max: 6.0, delta: 0.15 };
    for tt in [1.0, 2.0, 3.0] {
        let (sp1, s1) = chaos::evolve_truncated(&m, 1.0, lam, tt, 1, g, 0.02)?;
        let (sp3, s3) = chaos::evolve_truncated(&m, 1.0, lam, tt, 3, g, 0.02)?;
        let mut diff = sp3.zero_state();
        for p in 0..=3 {
            diff.kernels[p] = s3.kernels[p].clone();
        }
        for p in 0..=1 {
            for (d, a) in diff.kernels[p].iter_mut().zip(&s1.kernels[p]) {
                *d -= a;
            }
        }
        let gap = sp3.norm(&diff);
        let bound = chaos::duhamel_bound(lam, tt, 1, sp1.discrete_variance());
        v.check(gap <= bound, format!("lambda t = {:.1}: P=1 vs P=3 gap {gap:.3e} <= bound {bound:.3e}", lam * tt));
    }
    finish(v)
}

fn criterion_5() -> Outcome {
    let mut v = Verdict::new();
    let chi = mourre::check_chi_constraints();
    v.check(chi.all(), format!("chi constraints as exact rational identities: {chi:?}"));
    let ins = mourre::lipschitz_insertion_check(100_000, 6, 5.0, 55)?;
    v.check(
        ins.violations == 0,
        format!("insertion bound on {} samples: {} violations, max ratio {:.4}", ins.samples, ins.violations, ins.max_ratio),
    );
    let gs = mourre::grad_sum_suite(10_000, 6, 5.0, 1e-6, 77)?;
    v.check(
        gs.min >= 1.0 - 1e-12 && gs.max <= 1.875 + 1e-4,
        format!("grad-sum range [{:.6}, {:.6}] against [1, 1.875 + 1e-4]", gs.min, gs.max),
    );
    for (p, n) in [(1, 256), (2, 128)] {
        let rep = mourre::commutator_suite(200, p, 1.0, KernelGrid { length: 40.0, n }, 1e-6, 90 + p as u64)?;
        v.check(
            rep.violations == 0,
            format!("commutator form p={p}: {} states, {} violations, worst margin {:.3e}", rep.samples, rep.violations, rep.worst_margin),
        );
    }
    finish(v)
}

fn criterion_6() -> Outcome {
    let mut v = Verdict::new();
    let rep = finomega::fibration_suite(50, 6_000)?;
    v.check(
        rep.worst_residual <= 1e-9,
        format!("fibration over {} instances: worst residual {:.2e} at {:?}", rep.cases, rep.worst_residual, rep.witness),
    );
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let model = FiniteOmegaModel::random(8 + 2 * seed as usize, 0.5, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = finomega::random_state(model.n, &mut rng);
        let k = 0.1 * seed as f64;
        let eig = finomega::exact_spectral_measure(&model, &phi, k, 0.0)?.merged(1e-9);
        let push = finomega::pushforward_atoms(&model, &phi, k).merged(1e-9);
        if eig.energies.len() != push.energies.len() {
            worst = f64::INFINITY;
            continue;
        }
        for i in 0..eig.energies.len() {
            worst = worst.max((eig.energies[i] - push.energies[i]).abs());
            worst = worst.max((eig.weights[i] - push.weights[i]).abs());
        }
    }
    v.check(worst <= 1e-10, format!("discrete spectral measure vs pushforward: worst gap {worst:.2e}"));
    finish(v)
}

fn criterion_7() -> Outcome {
    let mut v = Verdict::new();
    let m = gauss();
    let tests: Vec<Box<dyn Fn(f64) -> f64>> = vec![
        Box::new(|_| 1.0),
        Box::new(|e| e),
        Box::new(|e| e * e),
        Box::new(|e| e.powi(3) - 2.0 * e),
        Box::new(|e| (1.0 + e * e).recip()),
        Box::new(|e| (-(e - 1.0).powi(2)).exp()),
        Box::new(|e| (-(e + 0.5).powi(2) / 0.1).exp()),
        Box::new(|e| if (e - 2.0).abs() < 1.0 { (-1.0 / (1.0 - (e - 2.0).powi(2))).exp() } else { 0.0 }),
        Box::new(|e| e.cos()),
        Box::new(|e| (-e.abs()).exp() * e),
    ];
    let mu = SpectralMeasureRepr::new(StateSpectrum::centered(&m), &[0.8])?;
    let mut worst: f64 = 0.0;
    for g in &tests {
        let a = mu.integrate_energy(g)?;
        let b = mu.integrate_pushforward(g)?;
        worst = worst.max((a - b).abs() / (1.0 + b.abs()));
    }
    v.check(worst <= 1e-6, format!("pushforward identity on 10 test functions: worst gap {worst:.2e}"));
    let mu0 = SpectralMeasureRepr::new(StateSpectrum::centered(&m), &[0.0])?;
    let d = mu0.ac_density(1.0)?;
    let expect = (-0.5f64).exp() / (2.0 * PI).sqrt();
    v.check((d - expect).abs() <= 1e-8, format!("density at (k=0, E=1) {d:.10} vs {expect:.10}"));
    let wick = spectral::covariance_of_power(&m, 2)?;
    let mass = wick.mass();
    v.check((mass - 2.0).abs() <= 1e-6, format!("Wick square mass {mass:.10} vs 2 sigma^4"));
    finish(v)
}

fn finish(v: Verdict) -> Outcome {
    if v.pass {
        Ok(v.details)
    } else {
        Err(v.details.join("\n").into())
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 kinetic decay law", criterion_1),
        ("2 rate cross-consistency", criterion_2),
        ("3 toy-model resonance", criterion_3),
        ("4 Fock-calculus property suite", criterion_4),
        ("5 Mourre suite", criterion_5),
        ("6 exact fibration oracle", criterion_6),
        ("7 spectral measure formulas", criterion_7),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(details) => {
                println!("PASS criterion {name} ({secs:.1}s)");
                for d in details {
                    println!("    {d}");
                }
            }
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1}s)");
                for d in e.to_string().lines() {
                    println!("    {d}");
                }
            }
        }
    }
    println!("acceptance: {} of 7 criteria passed", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
