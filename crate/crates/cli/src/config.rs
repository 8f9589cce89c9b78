//! Run configuration.
//!
//! Precedence, lowest first: built-in defaults, the `--config` JSON file,
//! command-line flags. The output directory additionally falls back to
//! `$DSYK_OUT_DIR` and then the working directory.

use std::path::{Path, PathBuf};

use dsyk::compare::Regime;
use dsyk::saddle::{PageCurveSettings, SeedClass};
use dsyk::trajectory::TrajectorySettings;
use dsyk::ModelParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_DIR_ENV: &str = "DSYK_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub mu_list: Vec<f64>,
    /// Times in units of `1 / mu`.
    pub mu_t_list: Vec<f64>,
    pub eps_gap: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            mu_list: vec![0.01, 0.05, 0.1, 0.12, 0.13, 0.14, 0.15, 0.16, 0.18, 0.2],
            mu_t_list: (1..=10).map(|k| 0.1 * k as f64).collect(),
            eps_gap: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenConfig {
    pub t: f64,
    pub n_steps: usize,
    pub seed_class: SeedClass,
    /// Regime of the large-q diff table; none skips it.
    pub regime: Option<Regime>,
    pub twist_window: f64,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self { t: 2.0, n_steps: 100, seed_class: SeedClass::Diagonal, regime: None, twist_window: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LargeQConfig {
    /// Upper end of the `(u, u')` grid in units of `1 / Jcal`.
    pub u_max: f64,
    pub n_u: usize,
}

impl Default for LargeQConfig {
    fn default() -> Self {
        Self { u_max: 4.0, n_u: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelParams,
    pub times: Vec<f64>,
    pub saddle: PageCurveSettings,
    pub scan: ScanConfig,
    pub trajectory: TrajectorySettings,
    pub green: GreenConfig,
    pub largeq: LargeQConfig,
    /// Not part of the config hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: ModelParams { n: 8, q: 4, j: 1.0, mu: 0.05, beta: 0.0 },
            times: (0..=10).map(|k| k as f64).collect(),
            saddle: PageCurveSettings::default(),
            scan: ScanConfig::default(),
            trajectory: TrajectorySettings::default(),
            green: GreenConfig::default(),
            largeq: LargeQConfig::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(CliError::from)?;
        if self.times.is_empty() {
            return Err(CliError::config("the time list is empty"));
        }
        if self.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::config("times must be finite, non-negative and strictly ascending"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON with the output location removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

/// Parses `"0,0.5,1"` or a range `"start:stop:step"` (inclusive of `stop`).
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    if s.contains(':') {
        let parts: Vec<f64> =
            s.split(':').map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x}: {e}"))).collect::<Result<_, _>>()?;
        let [a, b, h] = parts[..] else {
            return Err(format!("range {s} must be start:stop:step"));
        };
        if !(h > 0.0) || b < a {
            return Err(format!("range {s} needs step > 0 and stop >= start"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| a + h * k as f64).collect());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x}: {e}"))).collect()
}

/// Keys at which two JSON values differ, as dotted paths.
pub fn differing_keys(a: &serde_json::Value, b: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => differing_keys(u, v, &path, out),
                    _ => out.push(path),
                }
            }
        }
        _ if a != b => out.push(prefix.to_string()),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("1, 2,3.5").unwrap(), vec![1.0, 2.0, 3.5]);
        assert_eq!(parse_list("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_list("").unwrap().is_empty());
        assert!(parse_list("0:1").is_err());
        assert!(parse_list("a").is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"schema_version":1,"saddle":{"n_steps":50}}"#).unwrap();
        assert_eq!(c.saddle.n_steps, 50);
        assert_eq!(c.saddle.solver, dsyk::saddle::SolverSettings::default());
        assert_eq!(c.trajectory, TrajectorySettings::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let b = RunConfig { out_dir: Some("/tmp/x".into()), ..RunConfig::default() };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig { times: vec![1.0], ..RunConfig::default() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn differing_keys_are_listed() {
        let a = serde_json::json!({"n": 6, "mu": 0.1, "q": 4});
        let b = serde_json::json!({"n": 8, "mu": 0.1, "q": 4, "x": 1});
        let mut keys = Vec::new();
        differing_keys(&a, &b, "", &mut keys);
        assert_eq!(keys, vec!["n", "x"]);
    }
}
