//! Run configuration: a JSON file of defaults that flags override.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Path roles a configuration may reference.
pub const KNOWN_PATH_ROLES: &[&str] = &[
    "transcripts",
    "pairs",
    "annotations",
    "gold",
    "pred",
    "errors",
    "token_probs",
    "pool",
    "out",
    "report",
    "train",
    "dev",
    "test",
];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Entropy threshold (bits) for the `entropy` strategy shorthand.
    pub entropy_t: Option<f64>,
    pub tau_cls: Option<f64>,
    pub tau_hl: Option<f64>,
    pub max_gap: Option<usize>,
    pub min_coverage: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    pub cost: Option<f64>,
    pub accuracy: Option<f64>,
    pub krr: Option<f64>,
}

/// Configuration file contents. Every field is optional; command-line
/// flags win over configuration values, which win over built-in defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Strategy grid in compact syntax (`fixed:20`, `entropy:0.8:3:15`).
    #[serde(default)]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub caps: Caps,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&raw)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for role in self.paths.keys() {
            if !KNOWN_PATH_ROLES.contains(&role.as_str()) {
                bail!(
                    "unknown path role {role:?} in config; known roles: {}",
                    KNOWN_PATH_ROLES.join(", ")
                );
            }
        }
        let t = &self.thresholds;
        if let Some(v) = t.entropy_t {
            if v < 0.0 {
                bail!("thresholds.entropy_t must be >= 0");
            }
        }
        for (name, value) in [("tau_cls", t.tau_cls), ("tau_hl", t.tau_hl)] {
            if let Some(v) = value {
                if !(v > 0.0 && v <= 1.0) {
                    bail!("thresholds.{name} must lie in (0, 1]");
                }
            }
        }
        if let (Some(hl), Some(cls)) = (t.tau_hl, t.tau_cls) {
            if hl > cls {
                bail!("thresholds.tau_hl must not exceed thresholds.tau_cls");
            }
        }
        if let Some(v) = t.min_coverage {
            if !(v > 0.0 && v <= 1.0) {
                bail!("thresholds.min_coverage must lie in (0, 1]");
            }
        }
        for s in &self.strategies {
            s.parse::<parapipe::allocation::AllocationStrategy>()
                .map_err(|e| anyhow::anyhow!("config strategy {s:?}: {e}"))?;
        }
        Ok(())
    }

    /// Path registered for a role, if any.
    pub fn path(&self, role: &str) -> Option<PathBuf> {
        self.paths.get(role).cloned()
    }
}
