//! Data-parallel partitioning of bucketed buffers.
//!
//! Every plan assigns each rank one contiguous slice `[s_{i,r}, s_{i,r+1})`
//! of every bucket `i`, with cut points monotone in `r`. That is the only
//! geometry a bucketed reduce-scatter can serve. Plans differ in where the
//! cuts fall:
//!
//! * [`equal_chunk_partition`] cuts at `r * |B_i| / R`, ignoring parameter
//!   boundaries (standard sharded-optimizer behaviour).
//! * [`atomic_ownership_partition`] gives each parameter to the rank whose
//!   stride contains its start offset.
//! * [`alpha_balanced_partition`] moves cuts along parameter boundaries to
//!   fill per-rank load deficits, visiting buckets heaviest first.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::{CostKind, CostModel};
use crate::error::{Error, Result};
use crate::workload::{Bucket, BufferLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanKind {
    EqualChunk,
    AtomicOwnership,
    AlphaBalanced,
}

impl PlanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::EqualChunk => "equal-chunk",
            PlanKind::AtomicOwnership => "atomic-ownership",
            PlanKind::AlphaBalanced => "alpha-balanced",
        }
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpPartitionPlan {
    pub kind: PlanKind,
    pub world_size: usize,
    pub cost_kind: CostKind,
    pub alpha: Option<f64>,
    /// Per bucket, `R + 1` cut offsets relative to the bucket start.
    pub cut_vectors: Vec<Vec<u64>>,
    /// `S_{i,r}`: elements of bucket `i` owned by rank `r`.
    pub rank_sizes: Vec<Vec<u64>>,
    /// `L_{i,r}`: load of bucket `i` owned by rank `r`.
    pub bucket_loads: Vec<Vec<f64>>,
    /// `L_r`: total load of rank `r`.
    pub rank_loads: Vec<f64>,
    /// All cuts lie on parameter boundaries.
    pub atomic: bool,
}

impl DpPartitionPlan {
    /// Owning rank of each parameter (indexed by id), keyed by the slice holding its start.
    pub fn owners(&self, layout: &BufferLayout) -> Vec<usize> {
        let mut owners = vec![0; layout.params.len()];
        for (bucket, cuts) in layout.buckets.iter().zip(&self.cut_vectors) {
            for (&id, off) in bucket.params.iter().zip(bucket.local_offsets()) {
                owners[id] = slice_of(cuts, off);
            }
        }
        owners
    }

    /// Total elements owned by each rank across all buckets.
    pub fn rank_elements(&self) -> Vec<u64> {
        let mut out = vec![0; self.world_size];
        for sizes in &self.rank_sizes {
            for (o, s) in out.iter_mut().zip(sizes) {
                *o += s;
            }
        }
        out
    }

    pub fn max_load(&self) -> f64 {
        self.rank_loads.iter().copied().fold(0.0, f64::max)
    }

    /// Human-readable plan label, e.g. `alpha-balanced(0.5)`.
    pub fn label(&self) -> String {
        match self.alpha {
            Some(a) => format!("{}({a})", self.kind),
            None => self.kind.to_string(),
        }
    }
}

/// Index of the last slice whose start is `<= offset` (empty slices are skipped).
fn slice_of(cuts: &[u64], offset: u64) -> usize {
    let r = cuts.partition_point(|&c| c <= offset);
    r.saturating_sub(1).min(cuts.len().saturating_sub(2))
}

/// Cumulative load `Phi(u)` at each parameter boundary of a bucket.
fn cumulative_loads(layout: &BufferLayout, bucket: &Bucket, cost: &CostModel) -> Vec<f64> {
    let mut phi = Vec::with_capacity(bucket.params.len() + 1);
    let mut acc = 0.0;
    phi.push(acc);
    for &id in &bucket.params {
        acc += cost.cost(layout.param(id));
        phi.push(acc);
    }
    phi
}

fn sizes_from_cuts(cuts: &[u64]) -> Vec<u64> {
    cuts.windows(2).map(|w| w[1].saturating_sub(w[0])).collect()
}

/// Load of `[lo, hi)` within a bucket. Partially covered parameters contribute
/// in proportion to the covered elements.
fn slice_load(layout: &BufferLayout, bucket: &Bucket, cost: &CostModel, lo: u64, hi: u64) -> f64 {
    let mut load = 0.0;
    for ((&id, start), &n) in bucket
        .params
        .iter()
        .zip(bucket.local_offsets())
        .zip(&bucket.numels)
    {
        let end = start + n;
        let covered = end.min(hi).saturating_sub(start.max(lo));
        if covered == n {
            load += cost.cost(layout.param(id));
        } else if covered > 0 {
            load += cost.cost(layout.param(id)) * covered as f64 / n as f64;
        }
    }
    load
}

fn slice_loads(layout: &BufferLayout, cut_vectors: &[Vec<u64>], cost: &CostModel) -> Vec<Vec<f64>> {
    layout
        .buckets
        .iter()
        .zip(cut_vectors)
        .map(|(bucket, cuts)| {
            cuts.windows(2)
                .map(|w| slice_load(layout, bucket, cost, w[0], w[1]))
                .collect()
        })
        .collect()
}

fn sum_ranks(bucket_loads: &[Vec<f64>], r: usize) -> Vec<f64> {
    let mut rank_loads = vec![0.0; r];
    for loads in bucket_loads {
        for (acc, l) in rank_loads.iter_mut().zip(loads) {
            *acc += l;
        }
    }
    rank_loads
}

/// Per-rank loads of an existing plan re-evaluated under another cost model.
pub fn rank_loads_under(plan: &DpPartitionPlan, layout: &BufferLayout, cost: &CostModel) -> Vec<f64> {
    sum_ranks(&slice_loads(layout, &plan.cut_vectors, cost), plan.world_size)
}

fn finish_plan(
    layout: &BufferLayout,
    cost: &CostModel,
    kind: PlanKind,
    alpha: Option<f64>,
    cut_vectors: Vec<Vec<u64>>,
) -> DpPartitionPlan {
    let r = layout.world_size;
    let atomic = layout.buckets.iter().zip(&cut_vectors).all(|(bucket, cuts)| {
        let bounds = bucket.boundaries();
        cuts.iter().all(|c| bounds.binary_search(c).is_ok())
    });
    let bucket_loads = slice_loads(layout, &cut_vectors, cost);
    let rank_loads = sum_ranks(&bucket_loads, r);
    DpPartitionPlan {
        kind,
        world_size: r,
        cost_kind: cost.kind,
        alpha,
        rank_sizes: cut_vectors.iter().map(|c| sizes_from_cuts(c)).collect(),
        cut_vectors,
        bucket_loads,
        rank_loads,
        atomic,
    }
}

/// Equal contiguous segments: `s_{i,r} = round(r * |B_i| / R)`.
pub fn equal_chunk_partition(layout: &BufferLayout, cost: &CostModel) -> DpPartitionPlan {
    let r = layout.world_size as u64;
    let cuts = layout
        .buckets
        .iter()
        .map(|b| (0..=r).map(|k| (2 * k * b.size + r) / (2 * r)).collect())
        .collect();
    finish_plan(layout, cost, PlanKind::EqualChunk, None, cuts)
}

/// Each parameter goes to the rank `r` with `r*S <= start < (r+1)*S`, `S = |B_i|/R`.
pub fn atomic_ownership_partition(layout: &BufferLayout, cost: &CostModel) -> DpPartitionPlan {
    let r = layout.world_size;
    let cuts = layout
        .buckets
        .iter()
        .map(|b| {
            let mut cuts = vec![b.size; r + 1];
            cuts[0] = 0;
            if b.size == 0 {
                return cuts;
            }
            // Filling from the back leaves cuts[k] = first start owned by a rank >= k.
            for off in b.local_offsets().collect::<Vec<_>>().into_iter().rev() {
                let owner = ((off as u128 * r as u128) / b.size as u128) as usize;
                for c in cuts.iter_mut().take(owner + 1).skip(1) {
                    *c = off;
                }
            }
            cuts
        })
        .collect();
    finish_plan(layout, cost, PlanKind::AtomicOwnership, None, cuts)
}

/// Per-rank load deficits against the target mean.
#[derive(Debug, Clone, PartialEq)]
pub struct DeficitState {
    pub loads: Vec<f64>,
    pub mu: f64,
    pub deficits: Vec<f64>,
    pub total: f64,
}

impl DeficitState {
    pub fn new(loads: &[f64], mu: f64) -> Self {
        let deficits: Vec<f64> = loads.iter().map(|&l| (mu - l).max(0.0)).collect();
        let total = deficits.iter().sum();
        Self {
            loads: loads.to_vec(),
            mu,
            deficits,
            total,
        }
    }

    /// Share of the next bucket each rank should receive:
    /// `(1 - alpha) * v_even + alpha * v_fill`.
    pub fn blended_target(&self, alpha: f64) -> Vec<f64> {
        let r = self.loads.len() as f64;
        let even = 1.0 / r;
        self.deficits
            .iter()
            .map(|&d| {
                let fill = if self.total > 0.0 { d / self.total } else { even };
                (1.0 - alpha) * even + alpha * fill
            })
            .collect()
    }
}

/// Index `j >= from` minimizing `|phi[j] - target|`; ties go to the smaller index.
fn nearest_cut(phi: &[f64], from: usize, target: f64) -> usize {
    let tail = &phi[from..];
    let pos = tail.partition_point(|&v| v < target);
    if pos == 0 {
        return from;
    }
    if pos == tail.len() {
        return phi.len() - 1;
    }
    let below = target - tail[pos - 1];
    let above = tail[pos] - target;
    if below <= above {
        from + pos - 1
    } else {
        from + pos
    }
}

/// Balanced greedy partition over atomic cut points.
///
/// Buckets are visited in descending total load (ties by ascending index).
/// For each, the target share blends an even split with the current deficit
/// profile, and every cut snaps to the parameter boundary whose cumulative
/// load is nearest the running target. Loads are then updated with the load
/// actually assigned. `alpha = 0` ignores history; `alpha = 1` fills deficits.
pub fn alpha_balanced_partition(
    layout: &BufferLayout,
    alpha: f64,
    cost: &CostModel,
) -> Result<DpPartitionPlan> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let r = layout.world_size;
    let phis: Vec<Vec<f64>> = layout
        .buckets
        .iter()
        .map(|b| cumulative_loads(layout, b, cost))
        .collect();
    let totals: Vec<f64> = phis.iter().map(|p| *p.last().unwrap_or(&0.0)).collect();
    let mu = totals.iter().sum::<f64>() / r as f64;

    let mut order: Vec<usize> = (0..layout.buckets.len()).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));

    let mut loads = vec![0.0; r];
    let mut cut_vectors = vec![Vec::new(); layout.buckets.len()];
    for k in order {
        let bucket = &layout.buckets[k];
        if bucket.is_empty() {
            cut_vectors[k] = vec![0; r + 1];
            continue;
        }
        let phi = &phis[k];
        let bounds = bucket.boundaries();
        let shares = DeficitState::new(&loads, mu).blended_target(alpha);

        let mut cuts = Vec::with_capacity(r + 1);
        cuts.push(0);
        let mut prev = 0usize;
        let mut running = 0.0;
        for rank in 0..r - 1 {
            running += totals[k] * shares[rank];
            let j = nearest_cut(phi, prev, running);
            loads[rank] += phi[j] - phi[prev];
            cuts.push(bounds[j]);
            prev = j;
        }
        loads[r - 1] += phi[phi.len() - 1] - phi[prev];
        cuts.push(bucket.size);
        cut_vectors[k] = cuts;
    }
    Ok(finish_plan(
        layout,
        cost,
        PlanKind::AlphaBalanced,
        Some(alpha),
        cut_vectors,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    BucketCount { expected: usize, found: usize },
    CutCount { bucket: usize, expected: usize, found: usize },
    Endpoints { bucket: usize },
    NonMonotone { bucket: usize, rank: usize },
    Coverage { bucket: usize },
    NonAtomicCut { bucket: usize, offset: u64 },
    /// A parameter's owner precedes the owner of an earlier parameter.
    OwnershipOrder { bucket: usize, param: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BucketCount { expected, found } => {
                write!(f, "plan has {found} buckets, layout has {expected}")
            }
            Violation::CutCount {
                bucket,
                expected,
                found,
            } => write!(f, "bucket {bucket}: {found} cuts, expected {expected}"),
            Violation::Endpoints { bucket } => {
                write!(f, "bucket {bucket}: cuts must start at 0 and end at the bucket size")
            }
            Violation::NonMonotone { bucket, rank } => {
                write!(f, "bucket {bucket}: cut {rank} decreases")
            }
            Violation::Coverage { bucket } => {
                write!(f, "bucket {bucket}: slice sizes do not cover the bucket")
            }
            Violation::NonAtomicCut { bucket, offset } => {
                write!(f, "bucket {bucket}: cut at offset {offset} splits a parameter")
            }
            Violation::OwnershipOrder { bucket, param } => {
                write!(f, "bucket {bucket}: owner of parameter {param} breaks rank order")
            }
        }
    }
}

/// Checks geometric (monotone, covering) and atomicity constraints of a plan.
pub fn validate_plan(plan: &DpPartitionPlan, layout: &BufferLayout) -> Vec<Violation> {
    let mut out = Vec::new();
    if plan.cut_vectors.len() != layout.buckets.len() {
        out.push(Violation::BucketCount {
            expected: layout.buckets.len(),
            found: plan.cut_vectors.len(),
        });
        return out;
    }
    let r = plan.world_size;
    for (i, (bucket, cuts)) in layout.buckets.iter().zip(&plan.cut_vectors).enumerate() {
        if cuts.len() != r + 1 {
            out.push(Violation::CutCount {
                bucket: i,
                expected: r + 1,
                found: cuts.len(),
            });
            continue;
        }
        if cuts[0] != 0 || cuts[r] != bucket.size {
            out.push(Violation::Endpoints { bucket: i });
        }
        for (k, w) in cuts.windows(2).enumerate() {
            if w[1] < w[0] {
                out.push(Violation::NonMonotone {
                    bucket: i,
                    rank: k + 1,
                });
            }
        }
        let sizes = plan.rank_sizes.get(i);
        let covered = sizes.map(|s| s.iter().sum::<u64>());
        let sizes_match = sizes.is_some_and(|s| s.as_slice() == sizes_from_cuts(cuts));
        if covered != Some(bucket.size) || !sizes_match {
            out.push(Violation::Coverage { bucket: i });
        }
        let bounds = bucket.boundaries();
        for &c in cuts {
            if c <= bucket.size && bounds.binary_search(&c).is_err() {
                out.push(Violation::NonAtomicCut {
                    bucket: i,
                    offset: c,
                });
            }
        }
        // Owner of each parameter by its start; must never step back to a lower rank.
        let mut last_owner = 0;
        for (&id, off) in bucket.params.iter().zip(bucket.local_offsets()) {
            let owner = (0..r)
                .find(|&k| cuts[k] <= off && off < cuts[k + 1])
                .unwrap_or(r - 1);
            if owner < last_owner {
                out.push(Violation::OwnershipOrder {
                    bucket: i,
                    param: id,
                });
            }
            last_owner = last_owner.max(owner);
        }
    }
    out
}
