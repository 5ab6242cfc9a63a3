//! Atomicity-respecting optimizer-state partitioning for matrix-based
//! optimizers: data-parallel bucket partitioning, tensor-parallel micro-group
//! scheduling, load metrics, an execution simulator and a numerical verifier.

pub mod config;
pub mod cost;
pub mod dp;
pub mod error;
pub mod io;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod tp;
pub mod verify;
pub mod workload;

pub use cost::{CostKind, CostModel};
pub use dp::{
    alpha_balanced_partition, atomic_ownership_partition, equal_chunk_partition, validate_plan,
    DpPartitionPlan, PlanKind, Violation,
};
pub use error::{Error, Result};
pub use metrics::{compare_plans, load_balance_ratio, ComparisonTable, LoadReport, MetricKind, PlanRef};
pub use sim::{NetModel, Primitive, SimTimeline, StrategyKind};
pub use tp::{build_micro_groups, validate_micro_groups, Capacity, MicroGroup, MicroGroupPlan};
pub use workload::{build_buffer_layout, BufferLayout, ModelConfig, ParamSpec, TpSplit};
