//! Run configuration: one JSON document, optionally patched by dotted-path overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::eos::{EosSpec, SampleSpec};
use crate::error::{Error, Result};
use crate::family::{SweepConfig, TppConfig};
use crate::modes::ModesConfig;
use crate::spectral::SpectralConfig;
use crate::tov::SolverConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
    /// Also write the `(S, B)` triplet dumps from `spectrum`.
    pub triplets: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "out".into(),
            formats: vec![Format::Csv, Format::Json],
            triplets: false,
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Per-command parameters that are not part of any module's own config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Central redshift for `solve`, `spectrum` and `modes`.
    pub kappa: f64,
    /// `kappa` values for `newtonian-check`.
    pub limit_kappas: Vec<f64>,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    /// Density grid for `eos-validate`.
    pub eos_sample: SampleSpec,
    /// Eigenpairs listed in the spectrum report.
    pub eigenpairs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kappa: 0.5,
            limit_kappas: vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            threads: None,
            eos_sample: SampleSpec::new(1e-12, 1e6, 400),
            eigenpairs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub eos: EosSpec,
    pub solver: SolverConfig,
    pub spectral: SpectralConfig,
    pub sweep: SweepConfig,
    pub modes: ModesConfig,
    pub tpp: TppConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema_version: SCHEMA_VERSION,
            eos: EosSpec::default(),
            solver: SolverConfig::default(),
            spectral: SpectralConfig::default(),
            sweep: SweepConfig::default(),
            modes: ModesConfig::default(),
            tpp: TppConfig::default(),
            run: RunConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Parses an override value: JSON if it parses, a bare string otherwise.
fn parse_leaf(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `path` (dot separated) in `doc`, creating intermediate objects.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override path '{path}'")));
    }
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}' descends into a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

impl Config {
    /// Builds a config from an optional JSON document and `path=value` overrides.
    pub fn from_parts(doc: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = match doc {
            Some(text) => serde_json::from_str::<Value>(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?,
            None => Value::Object(Default::default()),
        };
        if !value.is_object() {
            return Err(Error::Config("config document must be a JSON object".into()));
        }
        // Overrides patch the fully defaulted document, so a nested leaf can be
        // set without spelling out its siblings.
        if !overrides.is_empty() {
            let base: Config = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
            value = serde_json::to_value(base).expect("config serializes");
        }
        for (path, raw) in overrides {
            set_path(&mut value, path, parse_leaf(raw))?;
        }
        let cfg: Config = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_parts(Some(&text), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.solver.validate()?;
        self.spectral.validate()?;
        self.sweep.validate()?;
        self.modes.validate()?;
        if !(self.run.kappa > 0.0 && self.run.kappa.is_finite()) {
            return Err(Error::Config(format!("run.kappa must be positive, got {}", self.run.kappa)));
        }
        if self.run.threads == Some(0) {
            return Err(Error::Config("run.threads must be at least 1".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats is empty".into()));
        }
        Ok(())
    }

    /// Canonical serialization, the basis of [`Config::hash`].
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = Config::default();
        c.validate().unwrap();
        let back: Config = serde_json::from_str(&c.canonical_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn dotted_overrides_patch_leaves() {
        let c = Config::from_parts(
            Some(r#"{"sweep": {"points": 10}}"#),
            &[("sweep.points".into(), "400".into()), ("eos.type".into(), "polytrope".into())],
        )
        .unwrap();
        assert_eq!(c.sweep.points, 400);
        assert_eq!(c.eos.kind, crate::eos::EosKind::Polytrope);
    }

    #[test]
    fn nested_override_keeps_defaulted_siblings() {
        let c = Config::from_parts(None, &[("run.eos_sample.points".into(), "50".into())]).unwrap();
        assert_eq!(c.run.eos_sample.points, 50);
        assert_eq!(c.run.eos_sample.rho_max, RunConfig::default().eos_sample.rho_max);
    }

    #[test]
    fn invalid_sweep_range_is_a_config_error() {
        let e = Config::from_parts(None, &[("sweep.kappa_min".into(), "5".into()), ("sweep.kappa_max".into(), "1".into())]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_parts(Some(r#"{"swep": {}}"#), &[]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.sweep.points += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
