//! Scenario configuration: TOML schema, validation, and the canonical
//! fingerprint that ties report files back to the exact inputs.

use std::fmt::Write as _;
use std::path::PathBuf;

use nonloc_core::energy::EnergyMethod;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::registry;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Auto,
    Quadrature,
    MonteCarlo,
}

impl From<MethodChoice> for EnergyMethod {
    fn from(choice: MethodChoice) -> Self {
        match choice {
            MethodChoice::Auto => EnergyMethod::Auto,
            MethodChoice::Quadrature => EnergyMethod::Quadrature,
            MethodChoice::MonteCarlo => EnergyMethod::MonteCarlo,
        }
    }
}

impl MethodChoice {
    pub fn name(self) -> &'static str {
        match self {
            MethodChoice::Auto => "auto",
            MethodChoice::Quadrature => "quadrature",
            MethodChoice::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    /// `a + b * delta`.
    #[default]
    Linear,
    /// `a + b * delta^gamma` with the exponent fitted.
    Power,
}

impl ModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Linear => "linear",
            ModelChoice::Power => "power",
        }
    }
}

fn default_deltas() -> Vec<f64> {
    vec![0.08, 0.04, 0.02, 0.01]
}

fn default_outer_samples() -> usize {
    100_000
}

fn default_inner_samples() -> usize {
    64
}

/// One harness scenario: a space, a map, a kernel family, a scale grid, and
/// the tolerance the extrapolated limit is held to.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub space: String,
    pub map: String,
    /// `euclidean` or `circle`; defaults to the map's natural target.
    #[serde(default)]
    pub target: Option<String>,
    pub p: f64,
    pub family: String,
    /// Strictly decreasing scale grid in (0, 1).
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Relative tolerance of the pass verdict; must be positive.
    pub tolerance: f64,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub model: ModelChoice,
    #[serde(default = "default_outer_samples")]
    pub outer_samples: usize,
    #[serde(default = "default_inner_samples")]
    pub inner_samples: usize,
    /// Where report files go; the `--out-dir` flag overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        registry::space_by_name(&self.space)?;
        registry::map_by_name(&self.map)?;
        if let Some(t) = &self.target {
            if t != "euclidean" && t != "circle" {
                return Err(CliError::Config(format!(
                    "unknown target '{t}' (expected euclidean or circle)"
                )));
            }
        }
        nonloc_core::mollifiers::KernelKind::from_name(&self.family)?;
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(CliError::Config(format!(
                "exponent p must satisfy p >= 1, got {}",
                self.p
            )));
        }
        if self.deltas.is_empty() {
            return Err(CliError::Config("the scale grid is empty".into()));
        }
        for d in &self.deltas {
            if !(d.is_finite() && *d > 0.0 && *d < 1.0) {
                return Err(CliError::Config(format!(
                    "scales must lie in (0, 1), got {d}"
                )));
            }
        }
        for pair in self.deltas.windows(2) {
            if !(pair[1] < pair[0]) {
                return Err(CliError::Config(format!(
                    "the scale grid must be strictly decreasing, got {} before {}",
                    pair[0], pair[1]
                )));
            }
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(CliError::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.outer_samples == 0 || self.inner_samples == 0 {
            return Err(CliError::Config("sample counts must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical form of every scenario-defining field (the
    /// output directory is excluded on purpose: moving the reports must not
    /// change their contents).
    pub fn fingerprint(&self) -> String {
        let map = registry::map_by_name(&self.map).expect("validated");
        let value = serde_json::json!({
            "space": self.space,
            "map": self.map,
            "target": registry::target_name(&map, self.target.as_deref()),
            "p": self.p,
            "family": self.family,
            "deltas": self.deltas,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "method": self.method.name(),
            "model": self.model.name(),
            "outer_samples": self.outer_samples,
            "inner_samples": self.inner_samples,
        });
        let mut canon = String::new();
        canonical_json(&value, &mut canon);
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            write!(hex, "{byte:02x}").expect("writing to a string cannot fail");
        }
        hex
    }
}

/// Canonical JSON: object keys sorted, numbers in shortest round-trip form
/// with integral floats collapsed (so `2.0` and `2` hash identically).
fn canonical_json(value: &serde_json::Value, out: &mut String) {
    match value {
        serde_json::Value::Null => out.push_str("null"),
        serde_json::Value::Bool(b) => {
            out.push_str(if *b { "true" } else { "false" });
        }
        serde_json::Value::Number(n) => {
            let f = n.as_f64().expect("scenario numbers are finite");
            if f == f.trunc() && f.abs() < 9.0e15 {
                write!(out, "{}", f as i64).expect("writing to a string cannot fail");
            } else {
                write!(out, "{f}").expect("writing to a string cannot fail");
            }
        }
        serde_json::Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("strings serialize"));
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_json(item, out);
            }
            out.push(']');
        }
        serde_json::Value::Object(entries) => {
            // serde_json's default map is ordered by key
            out.push('{');
            for (i, (key, item)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("strings serialize"));
                out.push(':');
                canonical_json(item, out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        space = "unit_interval"
        map = "identity"
        p = 2.0
        family = "rho1"
        tolerance = 0.02
    "#;

    #[test]
    fn defaults_fill_in() {
        let config = ScenarioConfig::from_toml(BASE).unwrap();
        assert_eq!(config.deltas, vec![0.08, 0.04, 0.02, 0.01]);
        assert_eq!(config.seed, 0);
        assert_eq!(config.method, MethodChoice::Auto);
        assert_eq!(config.model, ModelChoice::Linear);
        assert_eq!(config.outer_samples, 100_000);
    }

    #[test]
    fn fingerprint_ignores_field_order_and_float_spelling() {
        let a = ScenarioConfig::from_toml(BASE).unwrap();
        let b = ScenarioConfig::from_toml(
            r#"
            family = "rho1"
            tolerance = 0.02
            p = 2
            map = "identity"
            space = "unit_interval"
            "#,
        )
        .unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn fingerprint_tracks_scenario_fields_but_not_out_dir() {
        let base = ScenarioConfig::from_toml(BASE).unwrap();
        let mut moved = base.clone();
        moved.out_dir = Some(PathBuf::from("elsewhere"));
        assert_eq!(base.fingerprint(), moved.fingerprint());
        let mut reseeded = base.clone();
        reseeded.seed = 7;
        assert_ne!(base.fingerprint(), reseeded.fingerprint());
    }

    #[test]
    fn bad_grids_and_tolerances_are_rejected() {
        for (field, text) in [
            ("increasing grid", "deltas = [0.01, 0.02]"),
            ("repeated scale", "deltas = [0.02, 0.02]"),
            ("scale at one", "deltas = [1.0, 0.5]"),
            ("zero tolerance", "tolerance = 0.0"),
        ] {
            let mut toml = String::from(
                "space = \"unit_interval\"\nmap = \"identity\"\np = 2.0\nfamily = \"rho1\"\n",
            );
            if !text.starts_with("tolerance") {
                toml.push_str("tolerance = 0.02\n");
            }
            toml.push_str(text);
            toml.push('\n');
            assert!(ScenarioConfig::from_toml(&toml).is_err(), "{field}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut toml = String::from(BASE);
        toml.push_str("unknown_knob = 3\n");
        assert!(ScenarioConfig::from_toml(&toml).is_err());
    }
}
