//! Experiment configuration: a flat, typed schema read from `key = value`
//! text or from JSON.
//!
//! The key-value reader takes its types from the serialized defaults, so
//! the two formats accept exactly the same keys.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Fermi,
    Decay,
    Toy,
    Chaos,
    Spectrum,
    Mourre,
    Oracle,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Fermi => "fermi",
            Subcommand::Decay => "decay",
            Subcommand::Toy => "toy",
            Subcommand::Chaos => "chaos",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Mourre => "mourre",
            Subcommand::Oracle => "oracle",
        }
    }
}

/// Every tunable of every subcommand. Keys a subcommand does not use are
/// ignored by it but still recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must agree with the subcommand given on the command line.
    pub subcommand: Option<Subcommand>,
    /// `gaussian` or `triangular`.
    pub family: String,
    pub dim: usize,
    pub length_scale: f64,
    pub variance: f64,
    pub grid_length: f64,
    pub grid_n: usize,
    pub lambda: f64,
    /// Kinetic times `s = λ²t`.
    pub s_list: Vec<f64>,
    /// Wave numbers for `fermi` (first component; the others are zero).
    pub k_list: Vec<f64>,
    /// Wave number for `chaos` and `spectrum`.
    pub k: f64,
    /// Physical times for `toy`.
    pub t_list: Vec<f64>,
    /// Energies for `spectrum`.
    pub e_list: Vec<f64>,
    pub packet_center: f64,
    pub packet_radius: f64,
    /// Ensemble size `M` (`toy` skips Monte Carlo when zero).
    pub realizations: usize,
    /// Chaos truncation order `P`.
    pub order: usize,
    pub xi_max: f64,
    pub delta: f64,
    pub dt: f64,
    /// Random points for the `mourre` escape-function checks.
    pub samples: usize,
    /// Random states for the `mourre` commutator check; random instances
    /// for `oracle`.
    pub instances: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            subcommand: None,
            family: "gaussian".into(),
            dim: 1,
            length_scale: 1.0,
            variance: 1.0,
            grid_length: 2.0 * PI * 21.0,
            grid_n: 1024,
            lambda: 0.3,
            s_list: vec![0.2, 0.4, 0.6, 0.8],
            k_list: (0..=6).map(|j| 0.5 + 0.25 * j as f64).collect(),
            k: 1.0,
            t_list: (5..=15).map(f64::from).collect(),
            e_list: (1..=50).map(|j| 0.1 * j as f64).collect(),
            packet_center: 1.2,
            packet_radius: 0.4,
            realizations: 256,
            order: 2,
            xi_max: 8.0,
            delta: 0.05,
            dt: 0.02,
            samples: 10_000,
            instances: 50,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Parse JSON if the text starts with `{`, key-value text otherwise.
    pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| CliError::Rejected(format!("config: {e}")))
        } else {
            parse_kv(text)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Key-value rendering that [`ExperimentConfig::parse`] reads back exactly.
    pub fn to_kv(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for (key, v) in value.as_object().expect("config is an object") {
            let text = match v {
                Value::Null => continue,
                Value::String(s) => s.clone(),
                Value::Array(items) => items.iter().map(Value::to_string).collect::<Vec<_>>().join(", "),
                other => other.to_string(),
            };
            writeln!(out, "{key} = {text}").unwrap();
        }
        out
    }
}

fn parse_kv(text: &str) -> Result<ExperimentConfig, CliError> {
    let schema = serde_json::to_value(ExperimentConfig::default()).expect("config serializes");
    let schema = schema.as_object().expect("config is an object");
    let mut map = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let reject = |msg: String| CliError::Rejected(format!("config line {}: {msg}", lineno + 1));
        let (key, val) = line.split_once('=').ok_or_else(|| reject(format!("expected `key = value`, got `{line}`")))?;
        let (key, val) = (key.trim(), val.trim());
        let kind = schema.get(key).ok_or_else(|| reject(format!("unknown key `{key}`")))?;
        let parsed = match kind {
            Value::Array(_) => {
                let items: Result<Vec<Value>, CliError> = val
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| number(s).ok_or_else(|| reject(format!("`{s}` is not a number"))))
                    .collect();
                Value::Array(items?)
            }
            Value::Number(n) if n.is_u64() => {
                let v: u64 = val.parse().map_err(|_| reject(format!("`{key}` needs a nonnegative integer, got `{val}`")))?;
                Value::from(v)
            }
            Value::Number(_) => number(val).ok_or_else(|| reject(format!("`{key}` needs a number, got `{val}`")))?,
            // Strings and optional enums.
            _ => Value::String(val.to_string()),
        };
        if map.insert(key.to_string(), parsed).is_some() {
            return Err(reject(format!("duplicate key `{key}`")));
        }
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Rejected(format!("config: {e}")))
}

fn number(s: &str) -> Option<Value> {
    let v: f64 = s.parse().ok()?;
    serde_json::Number::from_f64(v).map(Value::Number)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_and_json_round_trip() {
        let mut c = ExperimentConfig::default();
        c.subcommand = Some(Subcommand::Decay);
        c.lambda = 0.1 + 0.2;
        c.s_list = vec![1.0 / 3.0, 0.7];
        c.seed = u64::MAX;
        assert_eq!(ExperimentConfig::parse(&c.to_kv()).unwrap(), c);
        assert_eq!(ExperimentConfig::parse(&c.to_json()).unwrap(), c);
        let d = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&d.to_kv()).unwrap(), d);
    }

    #[test]
    fn kv_parsing() {
        let c = ExperimentConfig::parse("# demo\nsubcommand = toy\nlambda = 0.25  # weak\nt_list = 1, 2.5\n\nrealizations = 0\n").unwrap();
        assert_eq!(c.subcommand, Some(Subcommand::Toy));
        assert_eq!(c.lambda, 0.25);
        assert_eq!(c.t_list, vec![1.0, 2.5]);
        assert_eq!(c.realizations, 0);
        for bad in ["lambda 0.3", "lamda = 0.3", "seed = -1", "lambda = x", "lambda = 1\nlambda = 2", "subcommand = plot"] {
            assert!(matches!(ExperimentConfig::parse(bad), Err(CliError::Rejected(_))), "{bad}");
        }
    }
}
