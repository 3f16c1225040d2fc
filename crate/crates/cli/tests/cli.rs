use std::fs;
use std::path::Path;
use std::process::Command;

fn fiberlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fiberlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).expect("column exists");
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn negative_coupling_is_rejected_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.cfg", "lambda = -0.1\n");
    let out = tmp.path().join("out");
    let res = fiberlab(&["fermi", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
    let res = fiberlab(&["decay", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn malformed_and_mismatched_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (name, text) in [("a.cfg", "lambda = abc\n"), ("b.cfg", "subcommand = toy\n"), ("c.json", "{\"lamda\": 0.3}")] {
        let cfg = write_config(tmp.path(), name, text);
        let res = fiberlab(&["fermi", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(2), "{name}");
    }
    let res = fiberlab(&["fermi", "--out", out.to_str().unwrap(), "--threads", "0"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn fermi_alpha_column_is_positive_and_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = fiberlab(&["fermi", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("fermi.csv")).unwrap();
    let k = column(&csv, "k");
    let alpha = column(&csv, "alpha");
    assert_eq!(k.first(), Some(&0.5));
    assert_eq!(k.last(), Some(&2.0));
    assert!(alpha.iter().all(|a| *a > 0.0));
    assert!(alpha.windows(2).all(|w| w[1] < w[0]));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "fermi");
    assert_eq!(manifest["config"]["lambda"], 0.3);
    // No temporary files are left behind.
    assert!(fs::read_dir(&out).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "decay.cfg",
        "# small ensemble\ngrid_length = 128\ngrid_n = 512\nrealizations = 24\ns_list = 0.1, 0.2, 0.3, 0.4\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let res = fiberlab(&["decay", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seed", "7", "--threads", threads]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for name in ["decay_series.csv", "decay_fit.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 7);
}

#[test]
fn every_subcommand_runs_on_small_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("toy", "realizations = 64\nt_list = 1, 2\ngrid_length = 128\ngrid_n = 512\n", "toy.csv"),
        ("chaos", "xi_max = 6\ndelta = 0.3\norder = 2\ns_list = 0.3, 0.1\n", "chaos.csv"),
        ("spectrum", "k = 0\ne_list = 1\n", "spectrum.csv"),
        ("mourre", "samples = 200\ninstances = 3\n", "mourre.json"),
        ("oracle", "instances = 3\n", "oracle_atoms.csv"),
    ];
    for (sub, text, file) in cases {
        let cfg = write_config(tmp.path(), &format!("{sub}.cfg"), text);
        let out = tmp.path().join(sub);
        let res = fiberlab(&[sub, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(out.join(file).exists() && out.join("manifest.json").exists(), "{sub}");
    }
    let density = column(&fs::read_to_string(tmp.path().join("spectrum/spectrum.csv")).unwrap(), "density");
    assert!((density[0] - (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
}
