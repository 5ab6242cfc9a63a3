//! A model config turned into the inputs every planner and simulator needs.

use crate::dp::DpPartitionPlan;
use crate::error::Result;
use crate::sim::sweep::owned_micro_group_params;
use crate::sim::FwdBwdProfile;
use crate::workload::{
    build_buffer_layout, generate_transformer_params, micro_group_params, tp_local_params,
    BufferLayout, ModelConfig, ParamSpec,
};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelConfig,
    /// Full-shape parameters.
    pub params: Vec<ParamSpec>,
    /// Data-parallel layout of one tensor-parallel rank's shards.
    pub layout: BufferLayout,
}

impl Scenario {
    pub fn new(model: &ModelConfig) -> Result<Self> {
        model.validate()?;
        let params = generate_transformer_params(model)?;
        let local = tp_local_params(&params, model.tp_degree)?;
        let layout = build_buffer_layout(&local, model.bucket_capacity, model.dp_degree)?;
        Ok(Self {
            model: model.clone(),
            params,
            layout,
        })
    }

    pub fn profile(&self, forward_secs_per_element: f64) -> FwdBwdProfile {
        FwdBwdProfile::proportional(&self.layout, forward_secs_per_element)
    }

    /// Every matrix the micro-group scheduler sees, ignoring data-parallel ownership.
    pub fn micro_group_params(&self) -> Vec<ParamSpec> {
        micro_group_params(&self.params)
    }

    /// Micro-group parameters split by data-parallel owner under `plan`.
    pub fn tp_shares(&self, plan: &DpPartitionPlan) -> Vec<Vec<ParamSpec>> {
        owned_micro_group_params(&self.params, &self.layout, plan)
    }
}
