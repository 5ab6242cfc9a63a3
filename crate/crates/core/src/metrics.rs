//! Load-balance metrics and plan comparison.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::dp::{rank_loads_under, DpPartitionPlan};
use crate::error::{Error, Result};
use crate::tp::MicroGroupPlan;
use crate::workload::BufferLayout;

/// Optimizer-state elements held per parameter element (master weight plus moments).
pub const DEFAULT_MEMORY_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Flops,
    MemoryElements,
    Bytes,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Flops => "flops",
            MetricKind::MemoryElements => "memory-elements",
            MetricKind::Bytes => "bytes",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub metric: MetricKind,
    pub per_rank: Vec<f64>,
    pub max: f64,
    pub avg: f64,
    /// `max / avg`; 1.0 is perfect balance.
    pub r_lb: f64,
}

/// `R_LB = max_r v_r / avg_r v_r`.
pub fn load_balance_ratio(values: &[f64], metric: MetricKind) -> Result<LoadReport> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values to balance".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "load values must be finite and non-negative".into(),
        ));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    if avg <= 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(LoadReport {
        metric,
        per_rank: values.to_vec(),
        max,
        avg,
        r_lb: max / avg,
    })
}

/// `(J_DP, J_Comm)`: the largest deviation of a rank's load from the mean,
/// and the total deviation of slice sizes from an even split.
pub fn dp_objectives(plan: &DpPartitionPlan, layout: &BufferLayout, cost: &CostModel) -> (f64, f64) {
    let loads = rank_loads_under(plan, layout, cost);
    (max_deviation(&loads), comm_deviation(plan, layout))
}

pub fn max_deviation(loads: &[f64]) -> f64 {
    if loads.is_empty() {
        return 0.0;
    }
    let mu = loads.iter().sum::<f64>() / loads.len() as f64;
    loads.iter().map(|l| (l - mu).abs()).fold(0.0, f64::max)
}

fn comm_deviation(plan: &DpPartitionPlan, layout: &BufferLayout) -> f64 {
    let r = plan.world_size as f64;
    layout
        .buckets
        .iter()
        .zip(&plan.rank_sizes)
        .map(|(b, sizes)| {
            let even = b.size as f64 / r;
            sizes.iter().map(|&s| (s as f64 - even).abs()).sum::<f64>()
        })
        .sum()
}

/// A plan to place in a comparison table.
#[derive(Debug, Clone, Copy)]
pub enum PlanRef<'a> {
    Dp(&'a DpPartitionPlan),
    Tp(&'a MicroGroupPlan),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub plan: String,
    pub flops_rlb: f64,
    pub memory_rlb: f64,
    pub j_dp: Option<f64>,
    pub j_comm: Option<f64>,
    pub groups: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub const COLUMNS: [&'static str; 6] =
        ["plan", "flops_rlb", "memory_rlb", "j_dp", "j_comm", "groups"];

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, plan: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.plan == plan)
    }
}

fn ratio_or_one(values: &[f64]) -> f64 {
    load_balance_ratio(values, MetricKind::Flops)
        .map(|r| r.r_lb)
        .unwrap_or(1.0)
}

/// Per-rank optimizer-state elements of an atomic DP plan.
pub fn dp_memory(plan: &DpPartitionPlan, multiplier: f64) -> Vec<f64> {
    plan.rank_elements()
        .into_iter()
        .map(|e| e as f64 * multiplier)
        .collect()
}

/// Per-rank optimizer-state elements hosted under a micro-group plan.
pub fn tp_memory(plan: &MicroGroupPlan, multiplier: f64) -> Vec<f64> {
    let mut out = vec![0.0; plan.world_size];
    for g in &plan.groups {
        for (r, list) in g.assignments.iter().enumerate() {
            for a in list {
                out[r] += a.shape.iter().product::<u64>() as f64 * multiplier;
            }
        }
    }
    out
}

/// One row per plan, in input order. `cost` scores the compute column.
pub fn compare_plans(
    plans: &[PlanRef<'_>],
    layout: &BufferLayout,
    cost: &CostModel,
    memory_multiplier: f64,
) -> ComparisonTable {
    let rows = plans
        .iter()
        .map(|p| match *p {
            PlanRef::Dp(plan) => {
                let loads = rank_loads_under(plan, layout, cost);
                let (j_dp, j_comm) = dp_objectives(plan, layout, cost);
                ComparisonRow {
                    plan: plan.label(),
                    flops_rlb: ratio_or_one(&loads),
                    memory_rlb: ratio_or_one(&dp_memory(plan, memory_multiplier)),
                    j_dp: Some(j_dp),
                    j_comm: Some(j_comm),
                    groups: None,
                }
            }
            PlanRef::Tp(plan) => {
                let mut loads = vec![0.0; plan.world_size];
                for g in &plan.groups {
                    for (r, list) in g.assignments.iter().enumerate() {
                        for a in list {
                            loads[r] += cost.cost(layout.param(a.param_id));
                        }
                    }
                }
                ComparisonRow {
                    plan: format!("micro-groups({})", plan.capacity),
                    flops_rlb: ratio_or_one(&loads),
                    memory_rlb: ratio_or_one(&tp_memory(plan, memory_multiplier)),
                    j_dp: None,
                    j_comm: None,
                    groups: Some(plan.groups.len()),
                }
            }
        })
        .collect();
    ComparisonTable { rows }
}
