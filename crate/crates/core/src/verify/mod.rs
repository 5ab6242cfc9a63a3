//! Numerical equivalence of partitioned and replicated optimizer steps.
//!
//! The partitioned run simulates every rank of a `dp x tp` grid in one
//! thread. Ranks exchange data only through the reduce-scatter, micro-group
//! all-to-all and all-gather routines below, and optimizer state is only
//! reachable through [`StateStore`], which records every access.

mod ns;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dp::{validate_plan, DpPartitionPlan};
use crate::error::{Error, Result};
use crate::tp::{validate_micro_groups, MicroGroupPlan};
use crate::workload::{
    build_buffer_layout, generate_transformer_params, tp_local_params, tp_shard, BufferLayout, ModelConfig,
    ParamSpec, TpSplit,
};

pub use ns::{
    muon_step, newton_schulz_orthogonalize, newton_schulz_with, sgd_momentum_step, NsCoefficients,
    OptimizerConfig,
};

/// Gradient contributions are summed in ascending data-parallel rank order.
pub const REDUCTION_ORDER: &str = "ascending-rank";

/// Parameters plus the parallel grid they are trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorkload {
    pub params: Vec<ParamSpec>,
    pub dp_degree: usize,
    pub tp_degree: usize,
    pub bucket_capacity: u64,
}

impl ToyWorkload {
    pub fn new(
        params: Vec<ParamSpec>,
        dp_degree: usize,
        tp_degree: usize,
        bucket_capacity: u64,
    ) -> Result<Self> {
        if dp_degree == 0 || tp_degree == 0 {
            return Err(Error::Config("parallel degrees must be >= 1".into()));
        }
        let w = Self {
            params,
            dp_degree,
            tp_degree,
            bucket_capacity,
        };
        for p in &w.params {
            if w.is_tp_split(p) {
                tp_shard(p, tp_degree)?;
            }
        }
        w.dp_layout()?;
        Ok(w)
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        Self::new(
            generate_transformer_params(cfg)?,
            cfg.dp_degree,
            cfg.tp_degree,
            cfg.bucket_capacity,
        )
    }

    pub fn is_tp_split(&self, p: &ParamSpec) -> bool {
        self.tp_degree > 1 && p.is_matrix() && p.tp_split != TpSplit::None
    }

    /// Parameters as seen by one tensor-parallel rank: split matrices carry
    /// their shard shape.
    pub fn local_params(&self) -> Vec<ParamSpec> {
        tp_local_params(&self.params, self.tp_degree).expect("checked in new")
    }

    /// The data-parallel buffer layout every tensor-parallel rank shares.
    pub fn dp_layout(&self) -> Result<BufferLayout> {
        build_buffer_layout(&self.local_params(), self.bucket_capacity, self.dp_degree)
    }

    /// Full-shape parameters scheduled by the micro-group planner.
    pub fn tp_params(&self) -> Vec<ParamSpec> {
        self.params
            .iter()
            .filter(|p| self.is_tp_split(p))
            .cloned()
            .collect()
    }

    fn rank(&self, dp: usize, tp: usize) -> usize {
        dp * self.tp_degree + tp
    }

    fn world(&self) -> usize {
        self.dp_degree * self.tp_degree
    }
}

fn matrix_shape(p: &ParamSpec) -> (usize, usize) {
    match p.shape.as_slice() {
        [r, c] => (*r as usize, *c as usize),
        _ => (p.numel as usize, 1),
    }
}

/// Standard normal entries scaled by `1/sqrt(fan_in)`, drawn from a stream
/// keyed by `(seed, domain, step, param, contribution)` so generation order
/// cannot change values.
fn seeded_matrix(p: &ParamSpec, seed: u64, domain: u8, step: u64, contribution: u32) -> DMatrix<f64> {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&(p.id as u64).to_le_bytes());
    key[24..28].copy_from_slice(&contribution.to_le_bytes());
    key[31] = domain;
    let mut rng = ChaCha8Rng::from_seed(key);
    let (rows, cols) = matrix_shape(p);
    let scale = 1.0 / (rows as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * scale
    })
}

fn gradient_contribution(p: &ParamSpec, seed: u64, step: usize, dp_rank: usize) -> DMatrix<f64> {
    seeded_matrix(p, seed, 0, step as u64, dp_rank as u32)
}

/// Dense weights and momenta keyed by parameter id.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub weights: BTreeMap<usize, DMatrix<f64>>,
    pub momenta: BTreeMap<usize, DMatrix<f64>>,
}

impl ToyModel {
    pub fn init(params: &[ParamSpec], seed: u64) -> Self {
        let weights: BTreeMap<_, _> = params
            .iter()
            .map(|p| (p.id, seeded_matrix(p, seed, 1, 0, 0)))
            .collect();
        let momenta = weights
            .iter()
            .map(|(&id, w)| (id, DMatrix::zeros(w.nrows(), w.ncols())))
            .collect();
        Self { weights, momenta }
    }
}

/// Column-major values and shape of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for DenseTensor {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub reduction_order: String,
    /// Frobenius norm of every parameter's update, per step.
    pub update_norms: Vec<BTreeMap<usize, f64>>,
    pub final_weights: BTreeMap<usize, DenseTensor>,
    /// Largest disagreement between any rank's copy and the reported weights.
    pub replica_spread: f64,
}

/// Largest elementwise difference of final weights; infinite on any shape
/// or key mismatch.
pub fn max_abs_diff(a: &StepTrace, b: &StepTrace) -> f64 {
    if a.final_weights.len() != b.final_weights.len() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for (id, x) in &a.final_weights {
        let Some(y) = b.final_weights.get(id) else {
            return f64::INFINITY;
        };
        if (x.rows, x.cols) != (y.rows, y.cols) {
            return f64::INFINITY;
        }
        for (u, v) in x.data.iter().zip(&y.data) {
            let d = (u - v).abs();
            if d.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(d);
        }
    }
    worst
}

fn update_param(
    p: &ParamSpec,
    grad: &DMatrix<f64>,
    momentum: &DMatrix<f64>,
    cfg: &OptimizerConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if p.is_matrix() {
        muon_step(grad, momentum, cfg)
    } else {
        sgd_momentum_step(grad, momentum, cfg)
    }
}

fn reduce_contributions(p: &ParamSpec, seed: u64, step: usize, dp: usize) -> DMatrix<f64> {
    let (rows, cols) = matrix_shape(p);
    let mut acc = DMatrix::zeros(rows, cols);
    for d in 0..dp {
        acc += gradient_contribution(p, seed, step, d);
    }
    acc
}

/// Reference run: every parameter updated whole on one logical rank.
pub fn run_replicated(
    w: &ToyWorkload,
    cfg: &OptimizerConfig,
    steps: usize,
    seed: u64,
) -> Result<StepTrace> {
    let mut model = ToyModel::init(&w.params, seed);
    let mut update_norms = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut norms = BTreeMap::new();
        for p in &w.params {
            let grad = reduce_contributions(p, seed, step, w.dp_degree);
            let (update, m) = update_param(p, &grad, &model.momenta[&p.id], cfg)?;
            *model.weights.get_mut(&p.id).expect("initialized") += &update;
            model.momenta.insert(p.id, m);
            norms.insert(p.id, update.norm());
        }
        update_norms.push(norms);
    }
    Ok(StepTrace {
        reduction_order: REDUCTION_ORDER.into(),
        update_norms,
        final_weights: model.weights.iter().map(|(&id, m)| (id, m.into())).collect(),
        replica_spread: 0.0,
    })
}

/// Routes one parameter's update to the wrong rank from `from_step` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub param_id: usize,
    pub from_step: usize,
}

impl Fault {
    /// Misroutes the first tensor-parallel parameter, or the first parameter
    /// when there are none, from step 1 on.
    pub fn default_for(w: &ToyWorkload) -> Self {
        let param_id = w
            .params
            .iter()
            .find(|p| w.is_tp_split(p))
            .map(|p| p.id)
            .unwrap_or(0);
        Self {
            param_id,
            from_step: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateAccess {
    pub step: usize,
    pub rank: usize,
    pub param_id: usize,
}

/// Per-rank optimizer state; every read-modify-write is logged.
#[derive(Debug, Default)]
pub struct StateStore {
    per_rank: Vec<BTreeMap<usize, DMatrix<f64>>>,
    pub log: Vec<StateAccess>,
}

impl StateStore {
    fn new(world: usize) -> Self {
        Self {
            per_rank: vec![BTreeMap::new(); world],
            log: Vec::new(),
        }
    }

    /// Momentum held on `rank`, created as zeros on first touch.
    fn take(&mut self, step: usize, rank: usize, id: usize, shape: (usize, usize)) -> DMatrix<f64> {
        self.log.push(StateAccess {
            step,
            rank,
            param_id: id,
        });
        self.per_rank[rank]
            .remove(&id)
            .unwrap_or_else(|| DMatrix::zeros(shape.0, shape.1))
    }

    fn put(&mut self, rank: usize, id: usize, m: DMatrix<f64>) {
        self.per_rank[rank].insert(id, m);
    }
}

/// Ranks allowed to hold each parameter's optimizer state: the data-parallel
/// owner, on the micro-group host for split parameters and on every
/// tensor-parallel rank otherwise.
pub fn expected_state_ranks(
    w: &ToyWorkload,
    dp_plan: &DpPartitionPlan,
    tp_plan: Option<&MicroGroupPlan>,
) -> Result<BTreeMap<usize, BTreeSet<usize>>> {
    let layout = w.dp_layout()?;
    let owners = dp_plan.owners(&layout);
    let hosts: BTreeMap<usize, usize> = tp_plan.map(|t| t.hosts()).unwrap_or_default().into_iter().collect();
    let mut out = BTreeMap::new();
    for p in &w.params {
        let d = owners[p.id];
        let set: BTreeSet<usize> = if w.is_tp_split(p) {
            let h = *hosts.get(&p.id).ok_or_else(|| {
                Error::PlanMismatch(format!("`{}` has no micro-group host", p.name))
            })?;
            [w.rank(d, h)].into()
        } else {
            (0..w.tp_degree).map(|t| w.rank(d, t)).collect()
        };
        out.insert(p.id, set);
    }
    Ok(out)
}

/// Accesses that touched state outside its expected ranks.
pub fn locality_violations(
    log: &[StateAccess],
    expected: &BTreeMap<usize, BTreeSet<usize>>,
) -> Vec<StateAccess> {
    log.iter()
        .filter(|a| !expected.get(&a.param_id).is_some_and(|s| s.contains(&a.rank)))
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PartitionOptions {
    pub fault: Option<Fault>,
}

#[derive(Debug)]
pub struct PartitionedRun {
    pub trace: StepTrace,
    pub accesses: Vec<StateAccess>,
}

fn shard_of(full: &DMatrix<f64>, split: TpSplit, t: usize, tp: usize) -> DMatrix<f64> {
    match split {
        TpSplit::Column => {
            let w = full.ncols() / tp;
            full.columns(t * w, w).into_owned()
        }
        TpSplit::Row => {
            let h = full.nrows() / tp;
            full.rows(t * h, h).into_owned()
        }
        TpSplit::None => full.clone(),
    }
}

fn concat_shards(shards: &[DMatrix<f64>], split: TpSplit) -> DMatrix<f64> {
    let (r, c) = shards[0].shape();
    let n = shards.len();
    match split {
        TpSplit::Column => DMatrix::from_fn(r, c * n, |i, j| shards[j / c][(i, j % c)]),
        TpSplit::Row => DMatrix::from_fn(r * n, c, |i, j| shards[i / r][(i % r, j)]),
        TpSplit::None => shards[0].clone(),
    }
}

/// Flat bucket buffer built from per-parameter tensors (column-major).
fn pack(layout: &BufferLayout, bucket: usize, tensors: &BTreeMap<usize, DMatrix<f64>>) -> Vec<f64> {
    let b = &layout.buckets[bucket];
    let mut buf = vec![0.0; b.size as usize];
    for (&id, off) in b.params.iter().zip(b.local_offsets()) {
        let src = tensors[&id].as_slice();
        buf[off as usize..off as usize + src.len()].copy_from_slice(src);
    }
    buf
}

/// Parameters whose storage lies entirely inside `[lo, hi)` of a bucket,
/// read out of a buffer that holds that range starting at index 0.
fn unpack_range(
    layout: &BufferLayout,
    bucket: usize,
    lo: u64,
    hi: u64,
    slice: &[f64],
) -> Result<Vec<(usize, DMatrix<f64>)>> {
    let b = &layout.buckets[bucket];
    let mut out = Vec::new();
    for (&id, off) in b.params.iter().zip(b.local_offsets()) {
        let p = layout.param(id);
        let end = off + p.numel;
        if off >= lo && off < hi {
            if end > hi {
                return Err(Error::PlanMismatch(format!(
                    "`{}` straddles a slice boundary at {hi}",
                    p.name
                )));
            }
            let (r, c) = matrix_shape(p);
            let s = (off - lo) as usize;
            out.push((id, DMatrix::from_column_slice(r, c, &slice[s..s + p.numel as usize])));
        }
    }
    Ok(out)
}

/// Partitioned run with simulated collectives.
pub fn run_partitioned(
    w: &ToyWorkload,
    dp_plan: &DpPartitionPlan,
    tp_plan: Option<&MicroGroupPlan>,
    cfg: &OptimizerConfig,
    steps: usize,
    seed: u64,
) -> Result<StepTrace> {
    run_partitioned_with(w, dp_plan, tp_plan, cfg, steps, seed, &PartitionOptions::default())
        .map(|r| r.trace)
}

pub fn run_partitioned_with(
    w: &ToyWorkload,
    dp_plan: &DpPartitionPlan,
    tp_plan: Option<&MicroGroupPlan>,
    cfg: &OptimizerConfig,
    steps: usize,
    seed: u64,
    opts: &PartitionOptions,
) -> Result<PartitionedRun> {
    let layout = w.dp_layout()?;
    let violations = validate_plan(dp_plan, &layout);
    if !violations.is_empty() {
        return Err(Error::PlanMismatch(format!(
            "data-parallel plan is invalid: {}",
            violations[0]
        )));
    }
    let (dp, tp) = (w.dp_degree, w.tp_degree);
    let tp_params = w.tp_params();
    let groups = match (tp > 1, tp_plan) {
        (false, _) => Vec::new(),
        (true, None) => {
            return Err(Error::PlanMismatch(format!(
                "tp degree {tp} needs a micro-group plan"
            )))
        }
        (true, Some(plan)) => {
            if plan.world_size != tp {
                return Err(Error::PlanMismatch(format!(
                    "micro-group plan spans {} ranks, tp degree is {tp}",
                    plan.world_size
                )));
            }
            if let Some(v) = validate_micro_groups(plan, &tp_params).first() {
                return Err(Error::PlanMismatch(format!("micro-group plan is invalid: {v:?}")));
            }
            plan.groups
                .iter()
                .map(|g| {
                    let mut hosts: Vec<(usize, usize)> = g.hosts().collect();
                    hosts.sort_unstable();
                    hosts
                })
                .collect()
        }
    };
    if let Some(f) = opts.fault {
        let p = w.params.get(f.param_id).ok_or_else(|| {
            Error::InvalidArgument(format!("fault names unknown parameter {}", f.param_id))
        })?;
        let spare = if w.is_tp_split(p) { tp } else { dp };
        if spare < 2 {
            return Err(Error::InvalidArgument(format!(
                "no other rank to misroute `{}` to",
                p.name
            )));
        }
    }
    let misrouted = |id: usize, step: usize| {
        opts.fault
            .is_some_and(|f| f.param_id == id && step >= f.from_step)
    };

    let owners = dp_plan.owners(&layout);
    let local_params = layout.params.clone();
    let full = ToyModel::init(&w.params, seed);
    // weights[rank][id]: local copy (shard for split parameters).
    let mut weights: Vec<BTreeMap<usize, DMatrix<f64>>> = (0..w.world())
        .map(|rank| {
            let t = rank % tp;
            w.params
                .iter()
                .map(|p| {
                    let m = &full.weights[&p.id];
                    let local = if w.is_tp_split(p) {
                        shard_of(m, p.tp_split, t, tp)
                    } else {
                        m.clone()
                    };
                    (p.id, local)
                })
                .collect()
        })
        .collect();
    let mut state = StateStore::new(w.world());
    let mut update_norms = Vec::with_capacity(steps);

    for step in 0..steps {
        let mut norms = BTreeMap::new();
        // Local gradients, packed into each rank's bucket buffers.
        let grads: Vec<BTreeMap<usize, DMatrix<f64>>> = (0..w.world())
            .map(|rank| {
                let (d, t) = (rank / tp, rank % tp);
                w.params
                    .iter()
                    .map(|p| {
                        let g = gradient_contribution(p, seed, step, d);
                        let g = if w.is_tp_split(p) {
                            shard_of(&g, p.tp_split, t, tp)
                        } else {
                            g
                        };
                        (p.id, g)
                    })
                    .collect()
            })
            .collect();

        // Variable-size reduce-scatter within each tensor-parallel slot.
        let mut reduced: Vec<BTreeMap<usize, DMatrix<f64>>> = vec![BTreeMap::new(); w.world()];
        for t in 0..tp {
            for (bi, cuts) in dp_plan.cut_vectors.iter().enumerate() {
                let buffers: Vec<Vec<f64>> = (0..dp)
                    .map(|d| pack(&layout, bi, &grads[w.rank(d, t)]))
                    .collect();
                for owner in 0..dp {
                    let (lo, hi) = (cuts[owner], cuts[owner + 1]);
                    let mut slice = vec![0.0; (hi - lo) as usize];
                    for buf in &buffers {
                        for (acc, v) in slice.iter_mut().zip(&buf[lo as usize..hi as usize]) {
                            *acc += v;
                        }
                    }
                    for (id, g) in unpack_range(&layout, bi, lo, hi, &slice)? {
                        reduced[w.rank(owner, t)].insert(id, g);
                    }
                }
            }
        }

        // Parameters updated in place by their data-parallel owner.
        for p in local_params.iter().filter(|p| !w.is_tp_split(&w.params[p.id])) {
            let d = owners[p.id];
            for t in 0..tp {
                let rank = w.rank(d, t);
                let state_rank = if misrouted(p.id, step) {
                    w.rank((d + 1) % dp, t)
                } else {
                    rank
                };
                let grad = &reduced[rank][&p.id];
                let m = state.take(step, state_rank, p.id, grad.shape());
                let (update, m) = update_param(p, grad, &m, cfg)?;
                state.put(state_rank, p.id, m);
                *weights[rank].get_mut(&p.id).expect("resident") += &update;
                if t == 0 {
                    norms.insert(p.id, update.norm());
                }
            }
        }

        // Micro groups: gather full gradients on hosts, update, scatter shards.
        for group in &groups {
            for &(id, host) in group {
                let p = &w.params[id];
                let d = owners[id];
                let shards: Vec<DMatrix<f64>> =
                    (0..tp).map(|t| reduced[w.rank(d, t)][&id].clone()).collect();
                let grad = concat_shards(&shards, p.tp_split);
                let host = if misrouted(id, step) { (host + 1) % tp } else { host };
                let host_rank = w.rank(d, host);
                let m = state.take(step, host_rank, id, grad.shape());
                let (update, m) = update_param(p, &grad, &m, cfg)?;
                state.put(host_rank, id, m);
                norms.insert(id, update.norm());
                for t in 0..tp {
                    let delta = shard_of(&update, p.tp_split, t, tp);
                    *weights[w.rank(d, t)].get_mut(&id).expect("resident") += &delta;
                }
            }
        }

        // All-gather updated slices back to every data-parallel rank.
        for t in 0..tp {
            for (bi, cuts) in dp_plan.cut_vectors.iter().enumerate() {
                let size = layout.buckets[bi].size as usize;
                let mut gathered = vec![0.0; size];
                for owner in 0..dp {
                    let (lo, hi) = (cuts[owner] as usize, cuts[owner + 1] as usize);
                    let src = pack(&layout, bi, &weights[w.rank(owner, t)]);
                    gathered[lo..hi].copy_from_slice(&src[lo..hi]);
                }
                for d in 0..dp {
                    for (id, m) in unpack_range(&layout, bi, 0, size as u64, &gathered)? {
                        weights[w.rank(d, t)].insert(id, m);
                    }
                }
            }
        }
        update_norms.push(norms);
    }

    // Report data-parallel rank 0's view; measure disagreement everywhere.
    let mut final_weights = BTreeMap::new();
    let mut spread: f64 = 0.0;
    for p in &w.params {
        let shards: Vec<DMatrix<f64>> = (0..tp).map(|t| weights[w.rank(0, t)][&p.id].clone()).collect();
        let assembled = if w.is_tp_split(p) {
            concat_shards(&shards, p.tp_split)
        } else {
            shards[0].clone()
        };
        for (rank, held) in weights.iter().enumerate() {
            let t = rank % tp;
            let expect = if w.is_tp_split(p) {
                shard_of(&assembled, p.tp_split, t, tp)
            } else {
                assembled.clone()
            };
            spread = spread.max((&held[&p.id] - expect).amax());
        }
        final_weights.insert(p.id, DenseTensor::from(&assembled));
    }
    Ok(PartitionedRun {
        trace: StepTrace {
            reduction_order: REDUCTION_ORDER.into(),
            update_norms,
            final_weights,
            replica_spread: spread,
        },
        accesses: state.log,
    })
}

/// Largest weight difference still counted as agreement.
pub const VERIFY_TOLERANCE: f64 = 1e-9;

/// Outcome of comparing a partitioned run with the replicated reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub steps: usize,
    pub seed: u64,
    pub dp_degree: usize,
    pub tp_degree: usize,
    pub fault: Option<Fault>,
    pub tolerance: f64,
    pub max_abs_diff: f64,
    pub locality_violations: Vec<StateAccess>,
    pub passed: bool,
    pub reference: StepTrace,
    pub partitioned: StepTrace,
}

/// Runs the reference and the partitioned step loop and compares them.
pub fn verify_equivalence(
    w: &ToyWorkload,
    dp_plan: &DpPartitionPlan,
    tp_plan: Option<&MicroGroupPlan>,
    cfg: &OptimizerConfig,
    steps: usize,
    seed: u64,
    fault: Option<Fault>,
) -> Result<VerifyReport> {
    let reference = run_replicated(w, cfg, steps, seed)?;
    let run = run_partitioned_with(w, dp_plan, tp_plan, cfg, steps, seed, &PartitionOptions { fault })?;
    let expected = expected_state_ranks(w, dp_plan, tp_plan)?;
    let locality_violations = locality_violations(&run.accesses, &expected);
    let diff = max_abs_diff(&reference, &run.trace);
    let passed = diff <= VERIFY_TOLERANCE
        && run.trace.replica_spread <= VERIFY_TOLERANCE
        && locality_violations.is_empty();
    Ok(VerifyReport {
        steps,
        seed,
        dp_degree: w.dp_degree,
        tp_degree: w.tp_degree,
        fault,
        tolerance: VERIFY_TOLERANCE,
        max_abs_diff: diff,
        locality_violations,
        passed,
        reference,
        partitioned: run.trace,
    })
}
