//! Parameter sweeps built on the step simulators.

use serde::{Deserialize, Serialize};

use super::{
    simulate_dp_step, simulate_tp_step, DpSimOptions, FwdBwdProfile, NetModel, SimTimeline,
    StrategyKind, TpFusion,
};
use crate::cost::CostModel;
use crate::dp::{alpha_balanced_partition, atomic_ownership_partition, DpPartitionPlan};
use crate::error::{Error, Result};
use crate::tp::{build_micro_groups, Capacity};
use crate::workload::{micro_group_params, BufferLayout, ParamSpec};

/// Shared inputs of a data-parallel sweep.
#[derive(Debug, Clone, Copy)]
pub struct DpScenario<'a> {
    pub layout: &'a BufferLayout,
    /// Cost model the partitioner plans with.
    pub plan_cost: &'a CostModel,
    /// Cost model the simulator charges compute with.
    pub sim_cost: &'a CostModel,
    pub net: &'a NetModel,
    pub profile: &'a FwdBwdProfile,
    pub opts: DpSimOptions,
}

impl DpScenario<'_> {
    /// Simulates one strategy, building whatever plan it needs.
    pub fn run(&self, strategy: StrategyKind, alpha: f64) -> Result<SimTimeline> {
        let plan = match strategy {
            StrategyKind::Sc | StrategyKind::NvLayerwise => None,
            StrategyKind::Asc => Some(atomic_ownership_partition(self.layout, self.plan_cost)),
            StrategyKind::LbAsc => {
                Some(alpha_balanced_partition(self.layout, alpha, self.plan_cost)?)
            }
        };
        simulate_dp_step(
            self.layout,
            plan.as_ref(),
            strategy,
            self.sim_cost,
            self.net,
            self.profile,
            &self.opts,
        )
    }

    pub fn strategies(&self, strategies: &[StrategyKind], alpha: f64) -> Result<Vec<SimTimeline>> {
        strategies.iter().map(|&s| self.run(s, alpha)).collect()
    }

    /// LB_ASC timelines at each balance factor.
    pub fn alpha_sweep(&self, alphas: &[f64]) -> Result<Vec<(f64, SimTimeline)>> {
        alphas
            .iter()
            .map(|&a| Ok((a, self.run(StrategyKind::LbAsc, a)?)))
            .collect()
    }
}

/// One point of a micro-group capacity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CmaxPoint {
    /// One all-to-all per tensor.
    NoFuse,
    Fused(Capacity),
}

impl CmaxPoint {
    pub fn label(&self) -> String {
        match self {
            CmaxPoint::NoFuse => "no-fuse".into(),
            CmaxPoint::Fused(Capacity::Bytes(b)) => format_bytes(*b),
            CmaxPoint::Fused(Capacity::Cost(c)) => format!("cost:{c}"),
        }
    }
}

/// `512MiB`, `2GiB`, or a plain byte count.
pub fn format_bytes(b: u64) -> String {
    const MIB: u64 = 1 << 20;
    const GIB: u64 = 1 << 30;
    if b >= GIB && b.is_multiple_of(GIB) {
        format!("{}GiB", b / GIB)
    } else if b >= MIB && b.is_multiple_of(MIB) {
        format!("{}MiB", b / MIB)
    } else {
        format!("{b}B")
    }
}

/// Full-shape micro-group parameters whose data-parallel owner is each rank.
///
/// `layout` is the data-parallel layout (possibly of tensor-parallel shards)
/// with the same ids as `full`.
pub fn owned_micro_group_params(
    full: &[ParamSpec],
    layout: &BufferLayout,
    plan: &DpPartitionPlan,
) -> Vec<Vec<ParamSpec>> {
    let owners = plan.owners(layout);
    let mut out = vec![Vec::new(); plan.world_size];
    for p in micro_group_params(full) {
        out[owners[p.id]].push(p);
    }
    out
}

/// Simulates the micro-group pipeline at each capacity.
///
/// Every data-parallel rank runs its own tensor-parallel step over the
/// parameters it owns (`shares`); the slowest share's timeline is reported.
/// The no-fuse point keeps the host assignment of the `no_fuse_plan`
/// capacity and sends every tensor on its own. A point whose plan cannot be
/// built (a tensor above the cap) carries the planner error.
pub fn cmax_sweep(
    shares: &[Vec<ParamSpec>],
    tp_degree: usize,
    cost: &CostModel,
    net: &NetModel,
    points: &[CmaxPoint],
    no_fuse_plan: Capacity,
) -> Vec<(CmaxPoint, Result<SimTimeline>)> {
    points
        .iter()
        .map(|&pt| {
            let (cap, fusion) = match pt {
                CmaxPoint::NoFuse => (no_fuse_plan, TpFusion::PerTensor),
                CmaxPoint::Fused(c) => (c, TpFusion::Fused),
            };
            let mut slowest: Option<SimTimeline> = None;
            for params in shares {
                let tl = match build_micro_groups(params, cost, tp_degree, cap)
                    .and_then(|plan| simulate_tp_step(&plan, params, tp_degree, net, cost, fusion))
                {
                    Ok(tl) => tl,
                    Err(e) => return (pt, Err(e)),
                };
                if slowest
                    .as_ref()
                    .is_none_or(|s| tl.totals.optimizer_time > s.totals.optimizer_time)
                {
                    slowest = Some(tl);
                }
            }
            let tl = slowest.ok_or_else(|| Error::InvalidArgument("no parameter shares".into()));
            (pt, tl)
        })
        .collect()
}

/// Relative spread `(max - min) / min` of a series.
pub fn relative_spread(values: &[f64]) -> f64 {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || min <= 0.0 {
        return 0.0;
    }
    (max - min) / min
}

/// Least-squares slope of `ys` against `xs`.
pub fn trend_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_labels() {
        assert_eq!(format_bytes(512 << 20), "512MiB");
        assert_eq!(format_bytes(2 << 30), "2GiB");
        assert_eq!(format_bytes(1000), "1000B");
        assert_eq!(CmaxPoint::NoFuse.label(), "no-fuse");
    }

    #[test]
    fn slope_and_spread() {
        assert_eq!(trend_slope(&[0.0, 1.0, 2.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(trend_slope(&[1.0], &[1.0]), 0.0);
        assert_eq!(relative_spread(&[2.0, 2.5, 2.0]), 0.25);
    }
}
