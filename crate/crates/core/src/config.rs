//! Engine configuration: defaults, TOML config file, and environment
//! overrides. Flag handling (highest precedence) lives in the CLI.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchStrategy {
    Push,
    Pull,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub memory_budget_bytes: u64,
    pub threads: usize,
    /// "no dispatching" when the dispatch list is more than this factor
    /// larger than the message count.
    pub dispatch_cost_factor: u64,
    /// Overrides the graph's preprocessed value when set.
    pub filter_skip_ratio: Option<f64>,
    /// Overrides the graph's preprocessed value when set.
    pub gamma: Option<u64>,
    pub checkpointing: bool,
    pub checkpoints_keep: usize,
    pub pipeline_queue_depth: usize,
    /// Fail the run on any traffic-invariant violation.
    pub strict: bool,
    /// Process a batch's own node's messages before the received ones.
    pub self_first: bool,
    pub connect_timeout_secs: u64,
    pub io_timeout_secs: Option<u64>,
    /// Test-only overrides below are honored only when this is set.
    pub test_overrides: bool,
    pub force_dispatch: Option<DispatchStrategy>,
    pub force_filter: Option<bool>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            memory_budget_bytes: 1 << 30,
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2),
            dispatch_cost_factor: 4,
            filter_skip_ratio: None,
            gamma: None,
            checkpointing: false,
            checkpoints_keep: 2,
            pipeline_queue_depth: 4,
            strict: false,
            self_first: false,
            connect_timeout_secs: 30,
            io_timeout_secs: None,
            test_overrides: false,
            force_dispatch: None,
            force_filter: None,
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml_parse(text)
    }

    /// Apply `OOCGRAPH_*` environment overrides (between file and flags in
    /// precedence).
    pub fn apply_env(&mut self) -> Result<()> {
        fn get(name: &str) -> Option<String> {
            std::env::var(name).ok().filter(|s| !s.is_empty())
        }
        fn parse<T: std::str::FromStr>(name: &str, raw: &str) -> Result<T> {
            raw.parse().map_err(|_| {
                EngineError::Config(format!("bad value {:?} for env {}", raw, name))
            })
        }
        if let Some(v) = get("OOCGRAPH_MEMORY_BUDGET_BYTES") {
            self.memory_budget_bytes = parse("OOCGRAPH_MEMORY_BUDGET_BYTES", &v)?;
        }
        if let Some(v) = get("OOCGRAPH_THREADS") {
            self.threads = parse("OOCGRAPH_THREADS", &v)?;
        }
        if let Some(v) = get("OOCGRAPH_DISPATCH_COST_FACTOR") {
            self.dispatch_cost_factor = parse("OOCGRAPH_DISPATCH_COST_FACTOR", &v)?;
        }
        if let Some(v) = get("OOCGRAPH_FILTER_SKIP_RATIO") {
            self.filter_skip_ratio = Some(parse("OOCGRAPH_FILTER_SKIP_RATIO", &v)?);
        }
        if let Some(v) = get("OOCGRAPH_GAMMA") {
            self.gamma = Some(parse("OOCGRAPH_GAMMA", &v)?);
        }
        if let Some(v) = get("OOCGRAPH_CHECKPOINTS_KEEP") {
            let k: usize = parse("OOCGRAPH_CHECKPOINTS_KEEP", &v)?;
            self.checkpointing = k > 0;
            self.checkpoints_keep = k.max(1);
        }
        if let Some(v) = get("OOCGRAPH_PIPELINE_QUEUE_DEPTH") {
            self.pipeline_queue_depth = parse("OOCGRAPH_PIPELINE_QUEUE_DEPTH", &v)?;
        }
        Ok(())
    }

    pub fn connect_timeout(&self) -> Duration {
        Duration::from_secs(self.connect_timeout_secs)
    }

    pub fn io_timeout(&self) -> Option<Duration> {
        self.io_timeout_secs.map(Duration::from_secs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(EngineError::Config("threads must be >= 1".into()));
        }
        if self.pipeline_queue_depth == 0 {
            return Err(EngineError::Config("pipeline_queue_depth must be >= 1".into()));
        }
        if self.memory_budget_bytes == 0 {
            return Err(EngineError::Config("memory budget must be > 0".into()));
        }
        if let Some(r) = self.filter_skip_ratio {
            if !(r > 0.0) {
                return Err(EngineError::Config("filter_skip_ratio must be > 0".into()));
            }
        }
        if (self.force_dispatch.is_some() || self.force_filter.is_some()) && !self.test_overrides {
            return Err(EngineError::Config(
                "strategy overrides require the test-overrides flag".into(),
            ));
        }
        Ok(())
    }
}

fn toml_parse(text: &str) -> Result<EngineConfig> {
    // a minimal TOML subset: `key = value` lines, which is all the engine
    // config uses; full files produced by the CLI round-trip through this
    let mut cfg = EngineConfig::default();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with('[') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(EngineError::Config(format!("config line {}: expected key = value", ln + 1)));
        };
        let (k, v) = (k.trim(), v.trim().trim_matches('"'));
        let bad = || EngineError::Config(format!("config line {}: bad value for {}", ln + 1, k));
        match k {
            "memory_budget_bytes" => cfg.memory_budget_bytes = v.parse().map_err(|_| bad())?,
            "threads" => cfg.threads = v.parse().map_err(|_| bad())?,
            "dispatch_cost_factor" => cfg.dispatch_cost_factor = v.parse().map_err(|_| bad())?,
            "filter_skip_ratio" => cfg.filter_skip_ratio = Some(v.parse().map_err(|_| bad())?),
            "gamma" => cfg.gamma = Some(v.parse().map_err(|_| bad())?),
            "checkpoints_keep" => {
                let keep: usize = v.parse().map_err(|_| bad())?;
                cfg.checkpointing = keep > 0;
                cfg.checkpoints_keep = keep.max(1);
            }
            "pipeline_queue_depth" => cfg.pipeline_queue_depth = v.parse().map_err(|_| bad())?,
            "strict" => cfg.strict = v.parse().map_err(|_| bad())?,
            "self_first" => cfg.self_first = v.parse().map_err(|_| bad())?,
            "connect_timeout_secs" => cfg.connect_timeout_secs = v.parse().map_err(|_| bad())?,
            "io_timeout_secs" => cfg.io_timeout_secs = Some(v.parse().map_err(|_| bad())?),
            _ => {
                return Err(EngineError::Config(format!(
                    "config line {}: unknown key {}",
                    ln + 1,
                    k
                )))
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_env_precedence() {
        let mut cfg = EngineConfig::from_toml_str(
            "memory_budget_bytes = 1024\nthreads = 3\ncheckpoints_keep = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.memory_budget_bytes, 1024);
        assert_eq!(cfg.threads, 3);
        assert!(cfg.checkpointing);
        std::env::set_var("OOCGRAPH_MEMORY_BUDGET_BYTES", "2048");
        cfg.apply_env().unwrap();
        std::env::remove_var("OOCGRAPH_MEMORY_BUDGET_BYTES");
        assert_eq!(cfg.memory_budget_bytes, 2048);
        assert_eq!(cfg.threads, 3);
    }

    #[test]
    fn overrides_gated_behind_test_flag() {
        let cfg = EngineConfig {
            force_dispatch: Some(DispatchStrategy::Push),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = EngineConfig { test_overrides: true, ..cfg };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(EngineConfig::from_toml_str("nope = 1\n").is_err());
    }
}
