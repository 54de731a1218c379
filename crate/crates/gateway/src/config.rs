//! Service configuration: a TOML file plus environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::GatewayError;

pub const ENV_BIND: &str = "GRAVLAB_BIND";
pub const ENV_RESULTS_DIR: &str = "GRAVLAB_RESULTS_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    /// Directory of scenario TOML files; the built-in library when unset.
    pub scenario_dir: Option<PathBuf>,
    /// Task manifest with extra tasks and calibrated thresholds.
    pub catalog_manifest: Option<PathBuf>,
    pub results_dir: PathBuf,
    /// Default observation budget for budget-obs episodes.
    pub budget: usize,
    /// Episodes with no traffic for this long are closed.
    pub idle_timeout_secs: u64,
    /// Include the threshold and error in verdicts (practice mode).
    pub disclose_threshold: bool,
    /// Per-episode time limit for agents driven by the runner.
    pub agent_timeout_secs: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:7878".into(),
            scenario_dir: None,
            catalog_manifest: None,
            results_dir: PathBuf::from("results"),
            budget: gravlab_core::env::DEFAULT_BUDGET,
            idle_timeout_secs: 900,
            disclose_threshold: false,
            agent_timeout_secs: 600,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    /// Reads `path` (defaults when `None`) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, GatewayError> {
        let mut cfg = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| GatewayError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(b) = get(ENV_BIND).filter(|s| !s.trim().is_empty()) {
            self.bind = b;
        }
        if let Some(d) = get(ENV_RESULTS_DIR).filter(|s| !s.trim().is_empty()) {
            self.results_dir = PathBuf::from(d);
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.budget == 0 {
            return Err(GatewayError::Config("budget must be positive".into()));
        }
        if self.idle_timeout_secs == 0 || self.agent_timeout_secs == 0 {
            return Err(GatewayError::Config("timeouts must be positive".into()));
        }
        Ok(())
    }

    pub fn idle_timeout(&self) -> Duration {
        Duration::from_secs(self.idle_timeout_secs)
    }

    pub fn agent_timeout(&self) -> Duration {
        Duration::from_secs(self.agent_timeout_secs)
    }
}
