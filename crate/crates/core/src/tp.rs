//! Tensor-parallel micro-group scheduling.
//!
//! Every TP-split parameter becomes one update task that a single host rank
//! executes on the full (reconstructed) tensor. Tasks are sorted once by
//! descending `(cost, id)` and streamed into micro groups. Each time a task
//! is appended the whole candidate group is re-balanced with LPT over a
//! min-heap of rank loads; when the resulting makespan breaks the capacity,
//! the task is rolled back, the group is sealed, and the task seeds the next
//! group.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::workload::ParamSpec;

/// Default per-rank capacity of one micro group, in gradient bytes.
pub const DEFAULT_CMAX_BYTES: u64 = 512 * 1024 * 1024;

/// Per-rank cap on a micro group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capacity {
    /// Bound on the LPT makespan in cost units.
    Cost(f64),
    /// Bound on the gradient bytes any single rank hosts.
    Bytes(u64),
}

impl Capacity {
    pub fn limit(&self) -> f64 {
        match *self {
            Capacity::Cost(c) => c,
            Capacity::Bytes(b) => b as f64,
        }
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Cost(c) => write!(f, "{c} cost"),
            Capacity::Bytes(b) => write!(f, "{b} bytes"),
        }
    }
}

/// One schedulable update task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub cost: f64,
    pub bytes: u64,
    pub shape: Vec<u64>,
}

impl Task {
    pub fn from_param(p: &ParamSpec, cost: &CostModel) -> Self {
        Self {
            id: p.id,
            cost: cost.cost(p),
            bytes: p.bytes(),
            shape: p.shape.clone(),
        }
    }

    fn measure(&self, cap: &Capacity) -> f64 {
        match cap {
            Capacity::Cost(_) => self.cost,
            Capacity::Bytes(_) => self.bytes as f64,
        }
    }
}

/// Descending by cost, then descending by id.
fn lpt_order(a: &Task, b: &Task) -> Ordering {
    b.cost.total_cmp(&a.cost).then(b.id.cmp(&a.id))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    load: f64,
    rank: usize,
}

impl Eq for Slot {}

impl Ord for Slot {
    fn cmp(&self, other: &Self) -> Ordering {
        self.load
            .total_cmp(&other.load)
            .then(self.rank.cmp(&other.rank))
    }
}

impl PartialOrd for Slot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Result of one LPT solve.
#[derive(Debug, Clone, PartialEq)]
pub struct HeapSolution {
    /// Task ids per rank, in placement order.
    pub assignments: Vec<Vec<usize>>,
    pub loads: Vec<f64>,
    pub bytes: Vec<u64>,
    pub l_max: f64,
}

impl HeapSolution {
    pub fn max_bytes(&self) -> u64 {
        self.bytes.iter().copied().max().unwrap_or(0)
    }
}

/// LPT on `r` ranks: tasks in descending cost, each onto the least-loaded
/// rank (lowest rank index on ties).
pub fn min_heap_balance(tasks: &[Task], r: usize) -> HeapSolution {
    assert!(r >= 1, "min_heap_balance needs at least one rank");
    let mut sorted: Vec<&Task> = tasks.iter().collect();
    sorted.sort_by(|a, b| lpt_order(a, b));

    let mut heap: BinaryHeap<Reverse<Slot>> =
        (0..r).map(|rank| Reverse(Slot { load: 0.0, rank })).collect();
    let mut assignments = vec![Vec::new(); r];
    let mut bytes = vec![0u64; r];
    for t in sorted {
        let Reverse(slot) = heap.pop().expect("heap holds one slot per rank");
        assignments[slot.rank].push(t.id);
        bytes[slot.rank] += t.bytes;
        heap.push(Reverse(Slot {
            load: slot.load + t.cost,
            rank: slot.rank,
        }));
    }
    let mut loads = vec![0.0; r];
    for Reverse(s) in heap {
        loads[s.rank] = s.load;
    }
    let l_max = loads.iter().copied().fold(0.0, f64::max);
    HeapSolution {
        assignments,
        loads,
        bytes,
        l_max,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub param_id: usize,
    pub shape: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroGroup {
    pub index: usize,
    /// Tasks hosted by each rank.
    pub assignments: Vec<Vec<Assignment>>,
    pub rank_loads: Vec<f64>,
    pub rank_bytes: Vec<u64>,
    pub l_max: f64,
}

impl MicroGroup {
    /// Max minus min rank load.
    pub fn imbalance(&self) -> f64 {
        let min = self.rank_loads.iter().copied().fold(f64::INFINITY, f64::min);
        self.l_max - min
    }

    /// Total load of the group.
    pub fn saturation(&self) -> f64 {
        self.rank_loads.iter().sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.rank_bytes.iter().sum()
    }

    pub fn param_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().flatten().map(|a| a.param_id)
    }

    /// Host rank of each task in the group.
    pub fn hosts(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .flat_map(|(r, list)| list.iter().map(move |a| (a.param_id, r)))
    }

    fn measure(&self, cap: &Capacity) -> f64 {
        match cap {
            Capacity::Cost(_) => self.l_max,
            Capacity::Bytes(_) => self.rank_bytes.iter().copied().max().unwrap_or(0) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroGroupPlan {
    pub groups: Vec<MicroGroup>,
    pub capacity: Capacity,
    pub cost: CostModel,
    pub world_size: usize,
}

impl MicroGroupPlan {
    /// Host rank of every scheduled parameter, as `(param_id, rank)` pairs.
    pub fn hosts(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = self.groups.iter().flat_map(|g| g.hosts()).collect();
        v.sort_unstable();
        v
    }

    /// Per-rank load summed over all groups.
    pub fn rank_loads(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.world_size];
        for g in &self.groups {
            for (o, l) in out.iter_mut().zip(&g.rank_loads) {
                *o += l;
            }
        }
        out
    }

    pub fn rank_bytes(&self) -> Vec<u64> {
        let mut out = vec![0; self.world_size];
        for g in &self.groups {
            for (o, b) in out.iter_mut().zip(&g.rank_bytes) {
                *o += b;
            }
        }
        out
    }
}

fn seal(index: usize, tasks: &[Task], r: usize) -> MicroGroup {
    let sol = min_heap_balance(tasks, r);
    let shape_of = |id: usize| {
        tasks
            .iter()
            .find(|t| t.id == id)
            .map(|t| t.shape.clone())
            .unwrap_or_default()
    };
    MicroGroup {
        index,
        assignments: sol
            .assignments
            .iter()
            .map(|ids| {
                ids.iter()
                    .map(|&id| Assignment {
                        param_id: id,
                        shape: shape_of(id),
                    })
                    .collect()
            })
            .collect(),
        rank_loads: sol.loads,
        rank_bytes: sol.bytes,
        l_max: sol.l_max,
    }
}

/// Builds micro groups from explicit tasks.
pub fn build_micro_groups_from_tasks(
    tasks: &[Task],
    names: impl Fn(usize) -> String,
    r: usize,
    capacity: Capacity,
) -> Result<Vec<MicroGroup>> {
    if r == 0 {
        return Err(Error::InvalidArgument("world size must be >= 1".into()));
    }
    let mut sorted = tasks.to_vec();
    sorted.sort_by(lpt_order);

    let limit = capacity.limit();
    let mut groups = Vec::new();
    let mut current: Vec<Task> = Vec::new();
    let mut idx = 0;
    while idx < sorted.len() {
        current.push(sorted[idx].clone());
        let sol = min_heap_balance(&current, r);
        let measure = match capacity {
            Capacity::Cost(_) => sol.l_max,
            Capacity::Bytes(_) => sol.max_bytes() as f64,
        };
        if measure <= limit {
            idx += 1;
            continue;
        }
        let item = current.pop().expect("just pushed");
        if current.is_empty() {
            return Err(Error::Unschedulable {
                id: item.id,
                name: names(item.id),
                load: item.measure(&capacity),
                capacity: limit,
            });
        }
        groups.push(seal(groups.len(), &current, r));
        current.clear();
        // idx unchanged: the rolled-back item seeds the next group.
    }
    if !current.is_empty() {
        groups.push(seal(groups.len(), &current, r));
    }
    Ok(groups)
}

/// Global-LPT micro-group construction with greedy rollback.
pub fn build_micro_groups(
    params: &[ParamSpec],
    cost: &CostModel,
    r: usize,
    capacity: Capacity,
) -> Result<MicroGroupPlan> {
    let tasks: Vec<Task> = params.iter().map(|p| Task::from_param(p, cost)).collect();
    let name_of = |id: usize| {
        params
            .iter()
            .find(|p| p.id == id)
            .map(|p| p.name.clone())
            .unwrap_or_else(|| format!("#{id}"))
    };
    let groups = build_micro_groups_from_tasks(&tasks, name_of, r, capacity)?;
    Ok(MicroGroupPlan {
        groups,
        capacity,
        cost: *cost,
        world_size: r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum GroupViolation {
    Missing { param: usize },
    Duplicate { param: usize },
    Unknown { param: usize },
    CapacityExceeded { group: usize, load: f64 },
    /// Rebuilding from the same inputs gives a different plan (or fails).
    NotReproducible,
}

impl fmt::Display for GroupViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupViolation::Missing { param } => write!(f, "parameter {param} is not scheduled"),
            GroupViolation::Duplicate { param } => {
                write!(f, "parameter {param} is scheduled more than once")
            }
            GroupViolation::Unknown { param } => {
                write!(f, "parameter {param} is not part of the workload")
            }
            GroupViolation::CapacityExceeded { group, load } => {
                write!(f, "group {group} has load {load} above capacity")
            }
            GroupViolation::NotReproducible => {
                write!(f, "plan differs from a fresh build on the same inputs")
            }
        }
    }
}

pub fn validate_micro_groups(plan: &MicroGroupPlan, params: &[ParamSpec]) -> Vec<GroupViolation> {
    let mut out = Vec::new();
    let expected: BTreeSet<usize> = params.iter().map(|p| p.id).collect();
    let mut seen = BTreeSet::new();
    for g in &plan.groups {
        for id in g.param_ids() {
            if !expected.contains(&id) {
                out.push(GroupViolation::Unknown { param: id });
            } else if !seen.insert(id) {
                out.push(GroupViolation::Duplicate { param: id });
            }
        }
        let measure = g.measure(&plan.capacity);
        if measure > plan.capacity.limit() {
            out.push(GroupViolation::CapacityExceeded {
                group: g.index,
                load: measure,
            });
        }
    }
    for id in expected.difference(&seen) {
        out.push(GroupViolation::Missing { param: *id });
    }
    match build_micro_groups(params, &plan.cost, plan.world_size, plan.capacity) {
        Ok(fresh) if fresh == *plan => {}
        _ => out.push(GroupViolation::NotReproducible),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tasks(costs: &[f64]) -> Vec<Task> {
        costs
            .iter()
            .enumerate()
            .map(|(id, &cost)| Task {
                id,
                cost,
                bytes: cost as u64,
                shape: vec![cost as u64],
            })
            .collect()
    }

    fn params(costs: &[u64]) -> Vec<ParamSpec> {
        crate::workload::params_from_numels(costs)
    }

    #[test]
    fn heap_trace() {
        let sol = min_heap_balance(&tasks(&[5.0, 4.0, 3.0, 2.0, 1.0]), 2);
        assert_eq!(sol.loads, vec![8.0, 7.0]);
        assert_eq!(sol.l_max, 8.0);
        assert_eq!(sol.assignments, vec![vec![0, 3, 4], vec![1, 2]]);
    }

    #[test]
    fn heap_singleton_and_single_rank() {
        let sol = min_heap_balance(&tasks(&[3.5]), 4);
        assert_eq!(sol.assignments[0], vec![0]);
        assert_eq!(sol.l_max, 3.5);
        let sol = min_heap_balance(&tasks(&[1.0, 2.0, 3.0]), 1);
        assert_eq!(sol.l_max, 6.0);
    }

    #[test]
    fn heap_empty() {
        let sol = min_heap_balance(&[], 3);
        assert_eq!(sol.loads, vec![0.0; 3]);
        assert_eq!(sol.l_max, 0.0);
    }

    #[test]
    fn rollback_trace() {
        let p = params(&[6, 5, 4]);
        let plan = build_micro_groups(&p, &CostModel::numel(), 2, Capacity::Cost(6.0)).unwrap();
        assert_eq!(plan.groups.len(), 2);
        let g0: Vec<Vec<usize>> = plan.groups[0]
            .assignments
            .iter()
            .map(|a| a.iter().map(|x| x.param_id).collect())
            .collect();
        assert_eq!(g0, vec![vec![0], vec![1]]);
        assert_eq!(plan.groups[1].assignments[0][0].param_id, 2);
        assert!(validate_micro_groups(&plan, &p).is_empty());
    }

    #[test]
    fn equal_costs_fill_one_per_rank() {
        let p = params(&[3; 8]);
        let plan = build_micro_groups(&p, &CostModel::numel(), 4, Capacity::Cost(3.0)).unwrap();
        assert_eq!(plan.groups.len(), 2);
        for g in &plan.groups {
            assert!(g.assignments.iter().all(|a| a.len() == 1));
        }
    }

    #[test]
    fn unbounded_capacity_single_group() {
        let p = params(&[4, 2, 9, 1]);
        let plan = build_micro_groups(&p, &CostModel::numel(), 1, Capacity::Cost(16.0)).unwrap();
        assert_eq!(plan.groups.len(), 1);
        assert_eq!(plan.groups[0].l_max, 16.0);
    }

    #[test]
    fn oversized_item_is_named() {
        let mut p = params(&[2, 10, 3]);
        p[1].name = "big".into();
        let err = build_micro_groups(&p, &CostModel::numel(), 2, Capacity::Cost(5.0)).unwrap_err();
        match err {
            Error::Unschedulable { id, name, .. } => {
                assert_eq!(id, 1);
                assert_eq!(name, "big");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn global_sort_ties_descend_by_id() {
        let p = params(&[2, 2, 2]);
        let plan = build_micro_groups(&p, &CostModel::numel(), 3, Capacity::Cost(2.0)).unwrap();
        let hosts: Vec<usize> = plan.groups[0]
            .assignments
            .iter()
            .map(|a| a[0].param_id)
            .collect();
        assert_eq!(hosts, vec![2, 1, 0]);
    }

    #[test]
    fn byte_capacity() {
        // bytes are 4 * numel for params_from_numels
        let p = params(&[4, 4, 4]);
        let plan =
            build_micro_groups(&p, &CostModel::numel(), 2, Capacity::Bytes(16)).unwrap();
        assert_eq!(plan.groups.len(), 2);
        assert_eq!(plan.groups[0].rank_bytes, vec![16, 16]);
        assert!(validate_micro_groups(&plan, &p).is_empty());
    }

    #[test]
    fn validation_flags_forgeries() {
        let p = params(&[5, 3, 2]);
        let plan = build_micro_groups(&p, &CostModel::numel(), 2, Capacity::Cost(6.0)).unwrap();

        let mut dup = plan.clone();
        let extra = dup.groups[0].assignments[0][0].clone();
        dup.groups[0].assignments[1].push(extra);
        let v = validate_micro_groups(&dup, &p);
        assert!(v.contains(&GroupViolation::Duplicate { param: 0 }));

        let mut over = plan.clone();
        over.groups[0].l_max = 7.0;
        let v = validate_micro_groups(&over, &p);
        assert!(v.iter().any(|v| matches!(v, GroupViolation::CapacityExceeded { .. })));

        let mut missing = plan;
        missing.groups.pop();
        let v = validate_micro_groups(&missing, &p);
        assert!(v.iter().any(|v| matches!(v, GroupViolation::Missing { .. })));
    }

    #[test]
    fn group_diagnostics() {
        let p = params(&[5, 4, 3]);
        let plan = build_micro_groups(&p, &CostModel::numel(), 2, Capacity::Cost(100.0)).unwrap();
        let g = &plan.groups[0];
        assert_eq!(g.rank_loads, vec![5.0, 7.0]);
        assert_eq!(g.imbalance(), 2.0);
        assert_eq!(g.saturation(), 12.0);
    }
}
