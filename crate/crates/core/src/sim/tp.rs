use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ring_traffic, Channel, Event, Lane, LinkClass, NetModel, Phase, Primitive, SimTimeline};
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::tp::MicroGroupPlan;
use crate::workload::ParamSpec;

/// How gradient gathers and update scatters are batched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TpFusion {
    /// One all-to-all per micro group in each direction.
    #[default]
    Fused,
    /// One all-to-all per tensor; hosts and order still come from the plan.
    PerTensor,
}

struct Stage {
    name: String,
    bytes: f64,
    /// Cost hosted by each rank.
    loads: Vec<f64>,
}

fn index_params(params: &[ParamSpec]) -> HashMap<usize, &ParamSpec> {
    params.iter().map(|p| (p.id, p)).collect()
}

fn stages(
    plan: &MicroGroupPlan,
    params: &[ParamSpec],
    cost: &CostModel,
    fusion: TpFusion,
) -> Result<Vec<Stage>> {
    let by_id = index_params(params);
    let r = plan.world_size;
    let mut out = Vec::new();
    for g in &plan.groups {
        let mut group = Stage {
            name: format!("g{}", g.index),
            bytes: 0.0,
            loads: vec![0.0; r],
        };
        for (rank, list) in g.assignments.iter().enumerate() {
            for a in list {
                let p = by_id.get(&a.param_id).ok_or_else(|| {
                    Error::PlanMismatch(format!("plan hosts unknown parameter {}", a.param_id))
                })?;
                let c = cost.cost(p);
                match fusion {
                    TpFusion::Fused => {
                        group.bytes += p.bytes() as f64;
                        group.loads[rank] += c;
                    }
                    TpFusion::PerTensor => {
                        let mut loads = vec![0.0; r];
                        loads[rank] = c;
                        out.push(Stage {
                            name: p.name.clone(),
                            bytes: p.bytes() as f64,
                            loads,
                        });
                    }
                }
            }
        }
        if fusion == TpFusion::Fused {
            out.push(group);
        }
    }
    Ok(out)
}

/// Simulates the tensor-parallel optimizer step under a micro-group plan.
///
/// Each stage gathers full gradients onto host ranks with an all-to-all,
/// computes the holistic updates there, and scatters the update shards back.
/// The communication channel runs `G0, G1, S0, G2, S1, ...` so the gather of
/// the next stage overlaps the current stage's compute.
pub fn simulate_tp_step(
    plan: &MicroGroupPlan,
    params: &[ParamSpec],
    tp_degree: usize,
    net: &NetModel,
    cost: &CostModel,
    fusion: TpFusion,
) -> Result<SimTimeline> {
    net.validate()?;
    if plan.world_size != tp_degree {
        return Err(Error::PlanMismatch(format!(
            "plan spans {} ranks, tp degree is {tp_degree}",
            plan.world_size
        )));
    }
    let r = tp_degree;
    let stages = stages(plan, params, cost, fusion)?;
    let label = match fusion {
        TpFusion::Fused => "TP_MICRO_GROUPS",
        TpFusion::PerTensor => "TP_NO_FUSE",
    };
    let mut tl = SimTimeline::new(label, r);
    let bw = net.bandwidth(LinkClass::IntraNode);
    let a2a = |bytes: f64| net.latency + ring_traffic(bytes, Primitive::AllToAll, r) / bw;

    let mut comm = Lane::default();
    let mut compute: Vec<Lane> = vec![Lane::default(); r];
    let mut gather_end = vec![0.0; stages.len()];
    let mut compute_end = vec![0.0; stages.len()];

    let collective = |tl: &mut SimTimeline, name: String, bytes: f64, s: f64, e: f64| {
        tl.add_volume(Primitive::AllToAll, ring_traffic(bytes, Primitive::AllToAll, r));
        for rank in 0..r {
            tl.events.push(Event {
                rank,
                channel: Channel::Comm,
                phase: Phase::Optimizer,
                name: name.clone(),
                primitive: Some(Primitive::AllToAll),
                start: s,
                end: e,
                amount: bytes,
            });
        }
    };

    let mut run_compute = |tl: &mut SimTimeline, k: usize, ready: f64| -> f64 {
        let mut end: f64 = ready;
        for (rank, &load) in stages[k].loads.iter().enumerate() {
            if load == 0.0 {
                continue;
            }
            let (s, e) = compute[rank].reserve(ready, net.compute_time(load));
            end = end.max(e);
            tl.events.push(Event {
                rank,
                channel: Channel::Compute,
                phase: Phase::Optimizer,
                name: format!("update[{}]", stages[k].name),
                primitive: None,
                start: s,
                end: e,
                amount: load,
            });
        }
        end
    };

    for k in 0..=stages.len() {
        if k < stages.len() {
            let (s, e) = comm.reserve(0.0, a2a(stages[k].bytes));
            collective(&mut tl, format!("gather[{}]", stages[k].name), stages[k].bytes, s, e);
            gather_end[k] = e;
            compute_end[k] = run_compute(&mut tl, k, e);
        }
        if k >= 1 {
            let j = k - 1;
            let (s, e) = comm.reserve(compute_end[j], a2a(stages[j].bytes));
            collective(&mut tl, format!("scatter[{}]", stages[j].name), stages[j].bytes, s, e);
        }
    }

    let end = compute
        .iter()
        .map(|l| l.free_at)
        .fold(comm.free_at, f64::max);
    tl.totals.optimizer_time = end;
    tl.totals.iteration_time = end;
    tl.totals.optimizer_comm_time = tl
        .events_of(0, Channel::Comm)
        .map(|e| e.duration())
        .sum();
    tl.totals.optimizer_comm_bytes = tl.volume(Primitive::AllToAll);
    tl.totals.total_compute_cost = stages.iter().flat_map(|s| s.loads.iter()).sum();
    Ok(tl)
}

/// Synchronous baseline: every rank all-gathers each sharded gradient and
/// computes every update redundantly.
pub fn simulate_tp_sc(
    params: &[ParamSpec],
    tp_degree: usize,
    net: &NetModel,
    cost: &CostModel,
) -> Result<SimTimeline> {
    net.validate()?;
    if tp_degree == 0 {
        return Err(Error::InvalidArgument("tp degree must be >= 1".into()));
    }
    let r = tp_degree;
    let mut tl = SimTimeline::new("TP_SC", r);
    let bw = net.bandwidth(LinkClass::IntraNode);
    let mut comm = Lane::default();
    let mut compute = Lane::default();
    let mut total = 0.0;
    for p in params {
        let bytes = p.bytes() as f64;
        let traffic = ring_traffic(bytes, Primitive::AllGather, r);
        let (gs, ge) = comm.reserve(0.0, net.latency + traffic / bw);
        tl.add_volume(Primitive::AllGather, traffic);
        let c = cost.cost(p);
        total += c * r as f64;
        let (cs, ce) = compute.reserve(ge, net.compute_time(c));
        for rank in 0..r {
            tl.events.push(Event {
                rank,
                channel: Channel::Comm,
                phase: Phase::Optimizer,
                name: format!("all_gather[{}]", p.name),
                primitive: Some(Primitive::AllGather),
                start: gs,
                end: ge,
                amount: bytes,
            });
            tl.events.push(Event {
                rank,
                channel: Channel::Compute,
                phase: Phase::Optimizer,
                name: format!("update[{}]", p.name),
                primitive: None,
                start: cs,
                end: ce,
                amount: c,
            });
        }
    }
    let end = comm.free_at.max(compute.free_at);
    tl.totals.optimizer_time = end;
    tl.totals.iteration_time = end;
    tl.totals.optimizer_comm_time = tl.events_of(0, Channel::Comm).map(|e| e.duration()).sum();
    tl.totals.optimizer_comm_bytes = tl.volume(Primitive::AllGather);
    tl.totals.total_compute_cost = total;
    Ok(tl)
}
