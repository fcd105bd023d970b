//! TOML configuration file.
//!
//! ```toml
//! [engine]
//! threads = 4
//! inline = true
//! rules = "community.rules"
//!
//! [cost_model]
//! enabled = true
//! epc_mib = 96
//!
//! [vars]
//! HOME_NET = "[10.0.0.0/8,192.168.0.0/16]"
//!
//! [ports]
//! HTTP_PORTS = "[80,8080]"
//! ```
//!
//! Command-line flags override the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::experiment::{ClockMode, EngineConfig};
use super::HarnessError;
use crate::boundary::CostModelConfig;
use crate::rules::Variables;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub threads: Option<usize>,
    pub acquire_threads: Option<usize>,
    pub inline: Option<bool>,
    pub useless: Option<bool>,
    pub rules: Option<PathBuf>,
    pub take_first: Option<usize>,
    /// `"sim"` or `"real"`.
    pub clock: Option<String>,
    pub line_rate_gbps: Option<f64>,
    pub ring_capacity: Option<usize>,
    pub burst_size: Option<usize>,
    pub cpufreq: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub cost_model: CostModelConfig,
    #[serde(default)]
    pub vars: BTreeMap<String, String>,
    #[serde(default)]
    pub ports: BTreeMap<String, String>,
}

pub fn parse_clock(s: &str) -> Result<ClockMode, HarnessError> {
    match s {
        "sim" | "simulated" => Ok(ClockMode::Simulated),
        "real" => Ok(ClockMode::Real),
        other => Err(HarnessError::Config(format!("unknown clock {other:?}, expected sim or real"))),
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Overlays the `[engine]` and `[cost_model]` keys that are present.
    pub fn apply(&self, cfg: &mut EngineConfig) -> Result<(), HarnessError> {
        let e = &self.engine;
        if let Some(v) = e.threads {
            cfg.threads = v;
        }
        if let Some(v) = e.acquire_threads {
            cfg.acquire_threads = v;
        }
        if let Some(v) = e.inline {
            cfg.inline = v;
        }
        if let Some(v) = e.useless {
            cfg.useless = v;
        }
        if let Some(v) = &e.clock {
            cfg.clock = parse_clock(v)?;
        }
        if let Some(v) = e.line_rate_gbps {
            cfg.line_rate_bps = v * 1e9;
        }
        if let Some(v) = e.ring_capacity {
            cfg.ring_capacity = v;
        }
        if let Some(v) = e.burst_size {
            cfg.burst_size = v;
        }
        if let Some(v) = e.cpufreq {
            cfg.cpufreq = v;
        }
        cfg.cost.apply(&self.cost_model);
        Ok(())
    }

    /// `[vars]` and `[ports]` on top of the defaults.
    pub fn variables(&self) -> Result<Variables, HarnessError> {
        let mut v = Variables::new();
        for (name, text) in &self.vars {
            v.set_addr(name, text).map_err(|e| HarnessError::Config(format!("vars.{name}: {e}")))?;
        }
        for (name, text) in &self.ports {
            v.set_port(name, text).map_err(|e| HarnessError::Config(format!("ports.{name}: {e}")))?;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlays_present_keys() {
        let f = FileConfig::parse(
            "[engine]\nthreads = 3\nclock = \"real\"\n[cost_model]\nenabled = true\nwarmup_seconds = 2\n[vars]\nHOME_NET = \"10.0.0.0/8\"\n",
        )
        .unwrap();
        let mut cfg = EngineConfig::default();
        f.apply(&mut cfg).unwrap();
        assert_eq!(cfg.threads, 3);
        assert_eq!(cfg.clock, ClockMode::Real);
        assert!(cfg.cost.enabled);
        assert_eq!(cfg.cost.warmup_us(), 2_000_000);
        assert!(!cfg.inline);
        f.variables().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(FileConfig::parse("[engine]\nthreadz = 3\n").is_err());
        assert!(FileConfig::parse("[engine]\nclock = \"wall\"\n")
            .unwrap()
            .apply(&mut EngineConfig::default())
            .is_err());
        assert!(FileConfig::parse("[vars]\nHOME_NET = \"10.0.0.0/99\"\n").unwrap().variables().is_err());
    }
}
