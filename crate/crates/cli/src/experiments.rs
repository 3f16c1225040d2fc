//! One function per subcommand, each returning its data files in memory.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use fiberlab::chaos::{FockSpace, TruncatedFlow};
use fiberlab::covariance::{make_gaussian_model, make_triangular_model, CovarianceModel};
use fiberlab::fermi;
use fiberlab::fieldgen::GridSpec;
use fiberlab::finomega::{self, FiniteOmegaModel};
use fiberlab::flow::{self, DecayExperimentConfig, PacketSpec};
use fiberlab::mourre::{self, KernelGrid};
use fiberlab::spectral::{SpectralMeasureRepr, StateSpectrum};
use fiberlab::toy;

use crate::config::{ExperimentConfig, Subcommand};
use crate::output::{format_number, OutputFile, Table};
use crate::CliError;

pub fn dispatch(sub: Subcommand, c: &ExperimentConfig) -> Result<Vec<OutputFile>, CliError> {
    if !(c.lambda.is_finite() && c.lambda >= 0.0) {
        return Err(CliError::Rejected(format!("lambda must be finite and nonnegative, got {}", c.lambda)));
    }
    let model = model(c)?;
    match sub {
        Subcommand::Fermi => fermi_rates(c, &model),
        Subcommand::Decay => decay(c, &model),
        Subcommand::Toy => toy_model(c, &model),
        Subcommand::Chaos => chaos(c, &model),
        Subcommand::Spectrum => spectrum(c, &model),
        Subcommand::Mourre => mourre_suite(c),
        Subcommand::Oracle => oracle(c),
    }
}

fn model(c: &ExperimentConfig) -> Result<CovarianceModel, CliError> {
    match c.family.as_str() {
        "gaussian" => Ok(make_gaussian_model(c.dim, c.length_scale, c.variance)?),
        "triangular" if c.dim == 1 => Ok(make_triangular_model(c.length_scale, c.variance)?),
        "triangular" => Err(CliError::Rejected("the triangular model exists only in dimension 1".into())),
        other => Err(CliError::Rejected(format!("unknown covariance family `{other}`"))),
    }
}

fn nonempty(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Rejected(format!("{name} must be a nonempty list of finite numbers")));
    }
    Ok(())
}

fn wave_vector(dim: usize, k: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = k;
    v
}

fn json_file(name: &str, value: serde_json::Value) -> OutputFile {
    OutputFile {
        name: name.into(),
        contents: serde_json::to_string_pretty(&value).expect("report serializes") + "\n",
    }
}

fn fermi_rates(c: &ExperimentConfig, m: &CovarianceModel) -> Result<Vec<OutputFile>, CliError> {
    nonempty("k_list", &c.k_list)?;
    let mut t = Table::new(&["k", "alpha", "beta", "beta_error"]);
    for &k in &c.k_list {
        let kv = wave_vector(m.dim(), k);
        let a = fermi::alpha_k(m, &kv)?;
        let (b, err) = fermi::beta_k_with_error(m, &kv)?;
        t.push(&[k, a, b, err]);
    }
    Ok(vec![t.into_file("fermi.csv")])
}

fn decay(c: &ExperimentConfig, m: &CovarianceModel) -> Result<Vec<OutputFile>, CliError> {
    let cfg = DecayExperimentConfig {
        model: *m,
        grid: GridSpec::new(c.dim, c.grid_length, c.grid_n)?,
        lambda: c.lambda,
        s_list: c.s_list.clone(),
        packet: PacketSpec {
            center: wave_vector(c.dim, c.packet_center),
            radius: c.packet_radius,
        },
        realizations: c.realizations,
        seed: c.seed,
        dt: Some(c.dt),
        time_unit: None,
    };
    let avg = flow::ensemble_average(&cfg)?;
    let kcols: Vec<String> = (1..=c.dim).map(|i| format!("k{i}")).collect();
    let mut head: Vec<&str> = kcols.iter().map(String::as_str).collect();
    head.extend(["s", "t", "re", "im", "stderr"]);
    let mut series = Table::new(&head);
    let mut head: Vec<&str> = kcols.iter().map(String::as_str).collect();
    head.extend(["alpha_fit", "alpha_stderr", "beta_fit", "beta_stderr", "alpha_fermi", "beta_fermi", "status"]);
    let mut fits = Table::new(&head);
    for (j, k) in avg.modes.iter().enumerate() {
        let k2: f64 = k.iter().map(|v| v * v).sum();
        let u0 = avg.u0_hat[j];
        for (ti, (&s, &t)) in avg.s_list.iter().zip(&avg.times).enumerate() {
            let v = avg.mean_hat[j][ti] * Complex64::from_polar(1.0, t * k2) / u0;
            let mut row = k.clone();
            row.extend([s, t, v.re, v.im, avg.stderr[j][ti] / u0.norm()]);
            series.push(&row);
        }
        let a = fermi::alpha_k(m, k)?;
        let b = fermi::beta_k(m, k)?;
        let mut row: Vec<String> = k.iter().map(|v| format_number(*v)).collect();
        match flow::decay_fit(&avg, k) {
            Ok(f) => {
                row.extend([f.alpha, f.alpha_stderr, f.beta, f.beta_stderr, a, b].map(format_number));
                row.push("ok".into());
            }
            Err(fiberlab::Error::Numerical(_)) => {
                row.extend([f64::NAN, f64::NAN, f64::NAN, f64::NAN, a, b].map(format_number));
                row.push("insufficient".into());
            }
            Err(e) => return Err(e.into()),
        }
        fits.push_cells(row);
    }
    Ok(vec![series.into_file("decay_series.csv"), fits.into_file("decay_fit.csv")])
}

fn toy_model(c: &ExperimentConfig, m: &CovarianceModel) -> Result<Vec<OutputFile>, CliError> {
    nonempty("t_list", &c.t_list)?;
    let res = toy::toy_resonance(m, c.lambda)?;
    let mc = c.realizations > 0;
    let grid = GridSpec::new(c.dim, c.grid_length, c.grid_n)?;
    let head: &[&str] = if mc {
        &["t", "re", "im", "abs", "mc_re", "mc_im", "mc_stderr"]
    } else {
        &["t", "re", "im", "abs"]
    };
    let mut table = Table::new(head);
    for (i, &t) in c.t_list.iter().enumerate() {
        let v = toy::correlation(m, &[], &[], c.lambda, t)?;
        let mut row = vec![t, v.re, v.im, v.norm()];
        if mc {
            let est = toy::mc_correlation(m, &grid, &[], &[], c.lambda, t, c.realizations, c.seed.wrapping_add(i as u64))?;
            row.extend([est.mean.re, est.mean.im, est.stderr]);
        }
        table.push(&row);
    }
    let report = json!({
        "lambda": c.lambda,
        "alpha_circ": res.alpha_circ,
        "z_res": [res.z_res.re, res.z_res.im],
        "gauge_prefactor": res.gauge_prefactor,
    });
    Ok(vec![table.into_file("toy.csv"), json_file("toy_resonance.json", report)])
}

fn chaos(c: &ExperimentConfig, m: &CovarianceModel) -> Result<Vec<OutputFile>, CliError> {
    nonempty("s_list", &c.s_list)?;
    if c.lambda == 0.0 {
        return Err(CliError::Rejected("chaos runs on the kinetic time s = lambda^2 t and needs lambda > 0".into()));
    }
    if c.s_list.iter().any(|s| *s < 0.0) {
        return Err(CliError::Rejected("kinetic times must be nonnegative".into()));
    }
    let space = FockSpace::new(m, c.k, c.xi_max, c.delta, c.order)?;
    let flow = TruncatedFlow::new(&space, c.lambda, c.dt)?;
    let mut order: Vec<usize> = (0..c.s_list.len()).collect();
    order.sort_by(|&a, &b| c.s_list[a].total_cmp(&c.s_list[b]));
    let times: Vec<f64> = order.iter().map(|&i| c.s_list[i] / (c.lambda * c.lambda)).collect();
    let sorted = flow.vacuum_series(&times)?;
    let mut values = vec![Complex64::new(0.0, 0.0); c.s_list.len()];
    for (slot, &i) in order.iter().enumerate() {
        values[i] = sorted[slot];
    }
    let kv = [c.k];
    let a = fermi::alpha_k(m, &kv)?;
    let b = fermi::beta_k(m, &kv)?;
    let mut table = Table::new(&["s", "t", "re", "im", "fermi_re", "fermi_im"]);
    for (&s, v) in c.s_list.iter().zip(&values) {
        let pred = (-s * Complex64::new(a, b)).exp();
        table.push(&[s, s / (c.lambda * c.lambda), v.re, v.im, pred.re, pred.im]);
    }
    Ok(vec![table.into_file("chaos.csv")])
}

fn spectrum(c: &ExperimentConfig, m: &CovarianceModel) -> Result<Vec<OutputFile>, CliError> {
    nonempty("e_list", &c.e_list)?;
    let kv = wave_vector(m.dim(), c.k);
    let mu = SpectralMeasureRepr::new(StateSpectrum::centered(m), &kv)?;
    if let Some(e) = c.e_list.iter().find(|e| **e <= mu.edge()) {
        return Err(CliError::Rejected(format!("energy {e} is at or below the spectral edge {}", mu.edge())));
    }
    let mut table = Table::new(&["energy", "density"]);
    for &e in &c.e_list {
        table.push(&[e, mu.ac_density(e)?]);
    }
    let edge = mu.edge_behaviour();
    let report = json!({
        "k": kv,
        "edge": mu.edge(),
        "atom_at_zero": mu.atom_at_zero,
        "total_mass": mu.total_mass,
        "edge_exponent": edge.exponent,
        "edge_coefficient": edge.coefficient,
    });
    Ok(vec![table.into_file("spectrum.csv"), json_file("spectrum.json", report)])
}

fn mourre_suite(c: &ExperimentConfig) -> Result<Vec<OutputFile>, CliError> {
    if c.samples == 0 || c.instances == 0 {
        return Err(CliError::Rejected("samples and instances must be positive".into()));
    }
    let chi = mourre::check_chi_constraints();
    let insertion = mourre::lipschitz_insertion_check(c.samples, 6, 5.0, c.seed)?;
    let grad = mourre::grad_sum_suite(c.samples, 6, 5.0, 1e-6, c.seed.wrapping_add(1))?;
    let p1 = mourre::commutator_suite(c.instances, 1, c.k, KernelGrid { length: 40.0, n: 256 }, 1e-6, c.seed.wrapping_add(2))?;
    let p2 = mourre::commutator_suite(c.instances, 2, c.k, KernelGrid { length: 40.0, n: 128 }, 1e-6, c.seed.wrapping_add(3))?;
    let report = json!({
        "chi_constraints": chi,
        "insertion": insertion,
        "grad_sum": grad,
        "commutator_p1": p1,
        "commutator_p2": p2,
    });
    Ok(vec![json_file("mourre.json", report)])
}

fn oracle(c: &ExperimentConfig) -> Result<Vec<OutputFile>, CliError> {
    if c.instances == 0 {
        return Err(CliError::Rejected("instances must be positive".into()));
    }
    let fibration = finomega::fibration_suite(c.instances, c.seed)?;
    let model = FiniteOmegaModel::random(16, 0.5, c.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let phi = finomega::random_state(model.n, &mut rng);
    let eig = finomega::exact_spectral_measure(&model, &phi, c.k, 0.0)?.merged(1e-9);
    let push = finomega::pushforward_atoms(&model, &phi, c.k).merged(1e-9);
    if eig.energies.len() != push.energies.len() {
        return Err(CliError::Numerical("eigenvalue and pushforward atoms do not pair up".into()));
    }
    let mut table = Table::new(&["energy", "weight_eigen", "weight_pushforward"]);
    let mut gap: f64 = 0.0;
    for i in 0..eig.energies.len() {
        gap = gap.max((eig.energies[i] - push.energies[i]).abs()).max((eig.weights[i] - push.weights[i]).abs());
        table.push(&[eig.energies[i], eig.weights[i], push.weights[i]]);
    }
    let report = json!({
        "fibration": fibration,
        "spectral_measure_gap": gap,
    });
    Ok(vec![table.into_file("oracle_atoms.csv"), json_file("oracle.json", report)])
}
