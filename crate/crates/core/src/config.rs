//! Run configuration files.
//!
//! ```toml
//! model = "qwen3-32b-like.toml"   # relative to this file
//! dp = 32
//! alpha = 1.0
//! cmax = "512MiB"
//! cost = "flops-muon"
//! strategies = ["SC", "NV_LAYERWISE", "ASC", "LB_ASC"]
//! seed = 0
//!
//! [net]
//! latency = 20e-6
//! intra_bandwidth = 150e9
//! inter_bandwidth = 25e9
//! compute_throughput = 400e12
//!
//! [sim]
//! forward_secs_per_element = 2e-12
//! redistribution = "broadcast"
//!
//! [verify]
//! steps = 20
//! lr = 0.02
//! beta = 0.95
//! ns_steps = 5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::CostKind;
use crate::error::{Error, Result};
use crate::sim::{NetModel, Redistribution, StrategyKind};
use crate::tp::{Capacity, DEFAULT_CMAX_BYTES};
use crate::verify::OptimizerConfig;
use crate::workload::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    /// Forward compute seconds per bucket element; backward takes twice as long.
    pub forward_secs_per_element: f64,
    pub redistribution: Redistribution,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            forward_secs_per_element: 2e-12,
            redistribution: Redistribution::Broadcast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub steps: usize,
    pub lr: f64,
    pub beta: f64,
    pub ns_steps: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        Self {
            steps: 20,
            lr: o.lr,
            beta: o.beta,
            ns_steps: o.ns_steps,
        }
    }
}

impl VerifySettings {
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            lr: self.lr,
            beta: self.beta,
            ns_steps: self.ns_steps,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    /// Overrides the model file's data-parallel degree.
    pub dp: Option<usize>,
    /// Overrides the model file's tensor-parallel degree.
    pub tp: Option<usize>,
    pub alpha: f64,
    /// Micro-group cap: `512MiB`, `2GiB`, a byte count, or `cost:<units>`.
    pub cmax: String,
    pub cost: CostKind,
    pub strategies: Vec<StrategyKind>,
    pub net: NetModel,
    pub sim: SimSettings,
    pub verify: VerifySettings,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            dp: None,
            tp: None,
            alpha: 1.0,
            cmax: "512MiB".into(),
            cost: CostKind::FlopsMuon,
            strategies: StrategyKind::ALL.to_vec(),
            net: NetModel::default(),
            sim: SimSettings::default(),
            verify: VerifySettings::default(),
            seed: 0,
            out: None,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a model architecture file.
pub fn load_model(path: &Path) -> Result<ModelConfig> {
    parse_model(&read(path)?).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses model architecture TOML.
pub fn parse_model(text: &str) -> Result<ModelConfig> {
    let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a network model file (the keys of `[net]`).
pub fn load_net(path: &Path) -> Result<NetModel> {
    let net: NetModel = toml::from_str(&read(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    net.validate()?;
    Ok(net)
}

impl RunConfig {
    /// Reads a run file; a relative `model` path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(&read(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(m), Some(dir)) = (&cfg.model, path.parent()) {
            if m.is_relative() {
                cfg.model = Some(dir.join(m));
            }
        }
        Ok(cfg)
    }

    /// Checks values that do not need the filesystem.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.dp == Some(0) || self.tp == Some(0) {
            return Err(Error::Config("parallel degrees must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("strategy list is empty".into()));
        }
        let fwd = self.sim.forward_secs_per_element;
        if !fwd.is_finite() || fwd < 0.0 {
            return Err(Error::Config(format!("sim.forward_secs_per_element must be >= 0, got {fwd}")));
        }
        if self.verify.ns_steps == 0 {
            return Err(Error::Config("verify.ns_steps must be >= 1".into()));
        }
        self.net.validate()?;
        self.capacity()?;
        Ok(())
    }

    pub fn capacity(&self) -> Result<Capacity> {
        parse_capacity(&self.cmax)
    }

    /// The model file with degree overrides applied.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let path = self
            .model
            .as_deref()
            .ok_or_else(|| Error::Config("no model file given".into()))?;
        let mut m = load_model(path)?;
        if let Some(dp) = self.dp {
            m.dp_degree = dp;
        }
        if let Some(tp) = self.tp {
            m.tp_degree = tp;
        }
        m.validate()?;
        Ok(m)
    }
}

/// Parses `512MiB`, `1GiB`, `1.5GB`, `4096`, or `cost:1e12`.
pub fn parse_capacity(s: &str) -> Result<Capacity> {
    let t = s.trim();
    if let Some(c) = t.strip_prefix("cost:") {
        let v: f64 = c
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad cost capacity `{s}`")))?;
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Config(format!("capacity must be positive, got `{s}`")));
        }
        return Ok(Capacity::Cost(v));
    }
    let split = t
        .find(|c: char| c.is_ascii_alphabetic())
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let scale: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "kib" => 1 << 10,
        "mib" => 1 << 20,
        "gib" => 1 << 30,
        "kb" => 1_000,
        "mb" => 1_000_000,
        "gb" => 1_000_000_000,
        _ => return Err(Error::Config(format!("unknown size unit in `{s}`"))),
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad capacity `{s}`")))?;
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Config(format!("capacity must be positive, got `{s}`")));
    }
    Ok(Capacity::Bytes((v * scale as f64).round() as u64))
}

pub const DEFAULT_CMAX: Capacity = Capacity::Bytes(DEFAULT_CMAX_BYTES);
