//! Per-parameter cost functions used as the load `W(p)` by every planner.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::ParamSpec;

pub const DEFAULT_NS_STEPS: u32 = 5;
pub const DEFAULT_PRECOND_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Numel,
    FlopsMuon,
    FlopsShampoo,
    FlopsSoap,
    Bytes,
}

impl CostKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::Numel => "numel",
            CostKind::FlopsMuon => "flops-muon",
            CostKind::FlopsShampoo => "flops-shampoo",
            CostKind::FlopsSoap => "flops-soap",
            CostKind::Bytes => "bytes",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "numel" => CostKind::Numel,
            "flops-muon" | "flops_muon" => CostKind::FlopsMuon,
            "flops-shampoo" | "flops_shampoo" => CostKind::FlopsShampoo,
            "flops-soap" | "flops_soap" => CostKind::FlopsSoap,
            "bytes" => CostKind::Bytes,
            other => return Err(Error::Config(format!("unknown cost kind `{other}`"))),
        })
    }
}

/// Optimizer-specific constants for the FLOPs models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    /// Newton-Schulz iterations per Muon step.
    pub ns_steps: u32,
    /// Multiplier on the cubic preconditioner term of Shampoo/SOAP.
    pub precond_factor: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            ns_steps: DEFAULT_NS_STEPS,
            precond_factor: DEFAULT_PRECOND_FACTOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub kind: CostKind,
    pub constants: CostConstants,
}

impl CostModel {
    pub fn new(kind: CostKind) -> Self {
        Self {
            kind,
            constants: CostConstants::default(),
        }
    }

    pub fn numel() -> Self {
        Self::new(CostKind::Numel)
    }

    pub fn muon() -> Self {
        Self::new(CostKind::FlopsMuon)
    }

    /// Load of one parameter. 1-D parameters and degenerate FLOPs models cost `numel`.
    pub fn cost(&self, p: &ParamSpec) -> f64 {
        match self.kind {
            CostKind::Numel => numel_cost(p),
            CostKind::Bytes => p.bytes() as f64,
            kind => flops_cost(p, kind, &self.constants).unwrap_or_else(|_| numel_cost(p)),
        }
    }

    pub fn costs(&self, params: &[ParamSpec]) -> Vec<f64> {
        params.iter().map(|p| self.cost(p)).collect()
    }
}

pub fn numel_cost(p: &ParamSpec) -> f64 {
    p.numel as f64
}

/// FLOPs of one optimizer step on `p`.
///
/// Muon, with `m <= n` after transposition and `k` Newton-Schulz steps, costs
/// `k * (2 m^2 n + 2 m^3 + m^2 n)`: one Gram product, one square product and
/// one application per iteration. Shampoo and SOAP cost
/// `c * (m^3 + n^3) + 2 m n (m + n)`. Vectors cost `numel`.
pub fn flops_cost(p: &ParamSpec, kind: CostKind, constants: &CostConstants) -> Result<f64> {
    if p.shape.is_empty() || p.shape.contains(&0) {
        return Err(Error::Cost(format!("`{}` has a non-positive dimension", p.name)));
    }
    if !p.is_matrix() {
        return Ok(numel_cost(p));
    }
    let (a, b) = (p.shape[0] as f64, p.shape[1] as f64);
    let (m, n) = if a <= b { (a, b) } else { (b, a) };
    let cost = match kind {
        CostKind::FlopsMuon => {
            let k = constants.ns_steps as f64;
            k * (2.0 * m * m * n + 2.0 * m * m * m + m * m * n)
        }
        CostKind::FlopsShampoo | CostKind::FlopsSoap => {
            constants.precond_factor * (m * m * m + n * n * n) + 2.0 * m * n * (m + n)
        }
        CostKind::Numel => return Ok(numel_cost(p)),
        CostKind::Bytes => return Ok(p.bytes() as f64),
    };
    if cost > 0.0 && cost.is_finite() {
        Ok(cost)
    } else {
        Err(Error::Cost(format!(
            "{kind} cost of `{}` is {cost}, costs must be positive and finite",
            p.name
        )))
    }
}

/// Communication payload of `p` in bytes.
pub fn comm_cost(p: &ParamSpec, dtype_bytes: u32) -> Result<u64> {
    if p.numel == 0 {
        return Err(Error::Cost(format!("`{}` is empty", p.name)));
    }
    Ok(p.numel * dtype_bytes as u64)
}
