use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Channel, Event, Lane, LinkClass, NetModel, Phase, Primitive, SimTimeline, StrategyKind};
use crate::cost::CostModel;
use crate::dp::{rank_loads_under, DpPartitionPlan, PlanKind};
use crate::error::{Error, Result};
use crate::tp::{min_heap_balance, Task};
use crate::workload::{layer_of, BufferLayout};

/// Per-bucket forward and backward compute durations, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwdBwdProfile {
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

impl FwdBwdProfile {
    pub fn new(forward: Vec<f64>, backward: Vec<f64>) -> Self {
        Self { forward, backward }
    }

    /// Durations proportional to bucket size; backward takes twice the forward time.
    pub fn proportional(layout: &BufferLayout, forward_secs_per_element: f64) -> Self {
        let forward: Vec<f64> = layout
            .buckets
            .iter()
            .map(|b| b.size as f64 * forward_secs_per_element)
            .collect();
        let backward = forward.iter().map(|f| 2.0 * f).collect();
        Self { forward, backward }
    }

    pub fn zero(num_buckets: usize) -> Self {
        Self {
            forward: vec![0.0; num_buckets],
            backward: vec![0.0; num_buckets],
        }
    }

    fn total(&self) -> f64 {
        self.forward.iter().sum::<f64>() + self.backward.iter().sum::<f64>()
    }
}

/// How the layerwise baseline redistributes updated parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Redistribution {
    #[default]
    Broadcast,
    AllGather,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpSimOptions {
    pub redistribution: Redistribution,
}

/// Whole-layer optimizer assignment by global LPT.
///
/// Parameters of one transformer layer form one unit; parameters outside
/// any layer are units on their own. Returns per-rank loads and per-rank
/// owned bytes.
pub fn layerwise_assignment(layout: &BufferLayout, cost: &CostModel) -> (Vec<f64>, Vec<u64>) {
    let mut units: BTreeMap<(usize, usize), (f64, u64)> = BTreeMap::new();
    for p in &layout.params {
        // (0, layer) for layers, (1, id) for loose parameters.
        let key = match layer_of(&p.name) {
            Some(l) => (0, l),
            None => (1, p.id),
        };
        let e = units.entry(key).or_insert((0.0, 0));
        e.0 += cost.cost(p);
        e.1 += p.bytes();
    }
    let tasks: Vec<Task> = units
        .values()
        .enumerate()
        .map(|(id, &(c, b))| Task {
            id,
            cost: c,
            bytes: b,
            shape: Vec::new(),
        })
        .collect();
    let sol = min_heap_balance(&tasks, layout.world_size);
    (sol.loads, sol.bytes)
}

fn check_plan<'a>(
    strategy: StrategyKind,
    plan: Option<&'a DpPartitionPlan>,
    layout: &BufferLayout,
) -> Result<Option<&'a DpPartitionPlan>> {
    let want = match strategy {
        StrategyKind::Sc | StrategyKind::NvLayerwise => return Ok(None),
        StrategyKind::Asc => PlanKind::AtomicOwnership,
        StrategyKind::LbAsc => PlanKind::AlphaBalanced,
    };
    let plan = plan.ok_or_else(|| {
        Error::PlanMismatch(format!("{strategy} needs a {want} plan, none given"))
    })?;
    if plan.kind != want {
        return Err(Error::PlanMismatch(format!(
            "{strategy} needs a {want} plan, got {}",
            plan.kind
        )));
    }
    if plan.world_size != layout.world_size || plan.cut_vectors.len() != layout.buckets.len() {
        return Err(Error::PlanMismatch(
            "plan and layout disagree on ranks or buckets".into(),
        ));
    }
    Ok(Some(plan))
}

/// Simulates forward, backward and optimizer phases of one data-parallel step.
///
/// Gradient collectives for a bucket launch once its backward compute ends
/// and run on the communication channel while later buckets compute. Sharded
/// strategies prefetch parameter all-gathers ahead of each bucket's forward.
/// Variable-size collectives are paced by their largest slice: a ring step
/// cannot finish before the largest chunk has moved.
pub fn simulate_dp_step(
    layout: &BufferLayout,
    plan: Option<&DpPartitionPlan>,
    strategy: StrategyKind,
    cost: &CostModel,
    net: &NetModel,
    profile: &FwdBwdProfile,
    opts: &DpSimOptions,
) -> Result<SimTimeline> {
    net.validate()?;
    let plan = check_plan(strategy, plan, layout)?;
    let n = layout.buckets.len();
    if profile.forward.len() != n || profile.backward.len() != n {
        return Err(Error::PlanMismatch(format!(
            "profile covers {} buckets, layout has {n}",
            profile.forward.len().min(profile.backward.len())
        )));
    }
    let r = layout.world_size;
    let link = LinkClass::InterNode;
    let bw = net.bandwidth(link);
    let mut tl = SimTimeline::new(strategy.as_str(), r);

    let bucket_bytes: Vec<f64> = (0..n)
        .map(|i| layout.bucket_params(i).map(|p| p.bytes() as f64).sum())
        .collect();
    // Bytes a variable-size collective is paced by: R times its largest slice.
    let paced: Vec<f64> = (0..n)
        .map(|i| match plan {
            Some(p) if layout.buckets[i].size > 0 => {
                let per_elem = bucket_bytes[i] / layout.buckets[i].size as f64;
                let largest = p.rank_sizes[i].iter().copied().max().unwrap_or(0);
                r as f64 * largest as f64 * per_elem
            }
            _ => bucket_bytes[i],
        })
        .collect();

    let mut compute = Lane::default();
    let mut comm = Lane::default();
    let push_all = |tl: &mut SimTimeline, ev: Event| {
        for rank in 0..r {
            tl.events.push(Event { rank, ..ev.clone() });
        }
    };

    // Forward: sharded strategies gather parameters bucket by bucket.
    let sharded = matches!(strategy, StrategyKind::Asc | StrategyKind::LbAsc);
    for i in 0..n {
        let mut ready = 0.0;
        if sharded {
            let t = net.latency + super::ring_traffic(paced[i], Primitive::AllGather, r) / bw;
            let (s, e) = comm.reserve(0.0, if r > 1 { t } else { net.latency });
            tl.add_volume(
                Primitive::AllGather,
                super::ring_traffic(bucket_bytes[i], Primitive::AllGather, r),
            );
            push_all(
                &mut tl,
                Event {
                    rank: 0,
                    channel: Channel::Comm,
                    phase: Phase::Forward,
                    name: format!("all_gather[b{i}]"),
                    primitive: Some(Primitive::AllGather),
                    start: s,
                    end: e,
                    amount: bucket_bytes[i],
                },
            );
            ready = e;
        }
        let (s, e) = compute.reserve(ready, profile.forward[i]);
        push_all(
            &mut tl,
            Event {
                rank: 0,
                channel: Channel::Compute,
                phase: Phase::Forward,
                name: format!("forward[b{i}]"),
                primitive: None,
                start: s,
                end: e,
                amount: 0.0,
            },
        );
    }

    // Backward: last bucket first, gradient collective right behind each.
    let grad_prim = if sharded {
        Primitive::ReduceScatter
    } else {
        Primitive::AllReduce
    };
    for i in (0..n).rev() {
        let (s, e) = compute.reserve(0.0, profile.backward[i]);
        push_all(
            &mut tl,
            Event {
                rank: 0,
                channel: Channel::Compute,
                phase: Phase::Backward,
                name: format!("backward[b{i}]"),
                primitive: None,
                start: s,
                end: e,
                amount: 0.0,
            },
        );
        let traffic = super::ring_traffic(paced[i], grad_prim, r);
        let (cs, ce) = comm.reserve(e, net.latency + traffic / bw);
        tl.add_volume(grad_prim, super::ring_traffic(bucket_bytes[i], grad_prim, r));
        push_all(
            &mut tl,
            Event {
                rank: 0,
                channel: Channel::Comm,
                phase: Phase::Backward,
                name: format!("{grad_prim}[b{i}]"),
                primitive: Some(grad_prim),
                start: cs,
                end: ce,
                amount: bucket_bytes[i],
            },
        );
    }
    let fwd_bwd = compute.free_at.max(comm.free_at);

    // Optimizer step.
    let (loads, owned_bytes) = match strategy {
        StrategyKind::Sc => {
            let total: f64 = layout.params.iter().map(|p| cost.cost(p)).sum();
            (vec![total; r], Vec::new())
        }
        StrategyKind::NvLayerwise => layerwise_assignment(layout, cost),
        StrategyKind::Asc | StrategyKind::LbAsc => (
            rank_loads_under(plan.expect("checked above"), layout, cost),
            Vec::new(),
        ),
    };
    let mut compute_end: f64 = fwd_bwd;
    for (rank, &load) in loads.iter().enumerate() {
        let end = fwd_bwd + net.compute_time(load);
        compute_end = compute_end.max(end);
        tl.events.push(Event {
            rank,
            channel: Channel::Compute,
            phase: Phase::Optimizer,
            name: "optimizer".into(),
            primitive: None,
            start: fwd_bwd,
            end,
            amount: load,
        });
    }
    let mut opt_comm = Lane {
        free_at: compute_end,
    };
    let mut opt_comm_time = 0.0;
    let mut opt_comm_bytes = 0.0;
    if strategy == StrategyKind::NvLayerwise && r > 1 {
        let mut collectives: Vec<(Primitive, f64, f64, String)> = Vec::new();
        match opts.redistribution {
            Redistribution::Broadcast => {
                for (owner, &b) in owned_bytes.iter().enumerate() {
                    if b > 0 {
                        let b = b as f64;
                        collectives.push((Primitive::Broadcast, b, b, format!("broadcast[r{owner}]")));
                    }
                }
            }
            Redistribution::AllGather => {
                let total: f64 = owned_bytes.iter().map(|&b| b as f64).sum();
                let largest = owned_bytes.iter().copied().max().unwrap_or(0) as f64;
                collectives.push((
                    Primitive::AllGather,
                    total,
                    r as f64 * largest,
                    "all_gather[params]".into(),
                ));
            }
        }
        for (prim, volume, paced, name) in collectives {
            let dur = net.latency + super::ring_traffic(paced, prim, r) / bw;
            let (s, e) = opt_comm.reserve(compute_end, dur);
            let traffic = super::ring_traffic(volume, prim, r);
            tl.add_volume(prim, traffic);
            opt_comm_time += dur;
            opt_comm_bytes += traffic;
            push_all(
                &mut tl,
                Event {
                    rank: 0,
                    channel: Channel::Comm,
                    phase: Phase::Optimizer,
                    name,
                    primitive: Some(prim),
                    start: s,
                    end: e,
                    amount: volume,
                },
            );
        }
    }
    let opt_end = compute_end.max(opt_comm.free_at);

    tl.totals.fwd_bwd_time = fwd_bwd;
    tl.totals.optimizer_time = opt_end - fwd_bwd;
    tl.totals.iteration_time = opt_end;
    tl.totals.exposed_comm_time = (fwd_bwd - profile.total()).max(0.0);
    tl.totals.optimizer_comm_time = opt_comm_time;
    tl.totals.optimizer_comm_bytes = opt_comm_bytes;
    tl.totals.total_compute_cost = loads.iter().sum();
    Ok(tl)
}
