//! Workload generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use atomshard::workload::{build_buffer_layout, Bucket};
use atomshard::{BufferLayout, CostModel, ParamSpec, TpSplit};
use rand::Rng;

/// Matrices with random shapes, plus a vector every so often.
pub fn random_params(rng: &mut impl Rng, n: usize) -> Vec<ParamSpec> {
    (0..n)
        .map(|id| {
            if rng.random_bool(0.2) {
                ParamSpec::vector(id, rng.random_range(1..=256))
            } else {
                let shape = vec![rng.random_range(1..=96), rng.random_range(1..=96)];
                ParamSpec::new(id, format!("w{id}"), shape, 2, TpSplit::None)
            }
        })
        .collect()
}

/// Packs `params` into between 1 and `max_buckets` buckets.
pub fn layout_with_buckets(
    rng: &mut impl Rng,
    params: &[ParamSpec],
    max_buckets: usize,
    r: usize,
) -> BufferLayout {
    let total: u64 = params.iter().map(|p| p.numel).sum();
    let largest = params.iter().map(|p| p.numel).max().unwrap_or(1);
    let k = rng.random_range(1..=max_buckets) as u64;
    let mut cap = largest.max(total.div_ceil(k));
    loop {
        let layout = build_buffer_layout(params, cap, r).unwrap();
        if layout.buckets.len() <= max_buckets {
            return layout;
        }
        cap += cap / 2 + 1;
    }
}

/// Explicit buckets of 1-D parameters, ids in buffer order.
pub fn explicit_layout(buckets: &[&[u64]], r: usize) -> BufferLayout {
    let mut id = 0;
    let specs: Vec<Vec<ParamSpec>> = buckets
        .iter()
        .map(|b| {
            b.iter()
                .map(|&n| {
                    id += 1;
                    ParamSpec::vector(id - 1, n)
                })
                .collect()
        })
        .collect();
    layout_from_buckets(&specs, r)
}

/// A layout with exactly the given bucket membership. Ids must be dense and
/// in buffer order.
pub fn layout_from_buckets(buckets: &[Vec<ParamSpec>], r: usize) -> BufferLayout {
    let params: Vec<ParamSpec> = buckets.iter().flatten().cloned().collect();
    let mut out = build_buffer_layout(&params, u64::MAX, r).unwrap();
    out.buckets.clear();
    let mut cursor = 0u64;
    for (index, b) in buckets.iter().enumerate() {
        let mut bucket = Bucket {
            index,
            params: vec![],
            start: cursor,
            offsets: vec![],
            numels: vec![],
            size: 0,
        };
        for p in b {
            bucket.params.push(p.id);
            bucket.offsets.push(cursor);
            bucket.numels.push(p.numel);
            bucket.size += p.numel;
            cursor += p.numel;
        }
        out.buckets.push(bucket);
    }
    out
}

/// Every monotone atomic cut vector of one bucket, as per-rank slice loads.
fn bucket_options(layout: &BufferLayout, bucket: usize, cost: &CostModel) -> Vec<Vec<f64>> {
    let b = &layout.buckets[bucket];
    let r = layout.world_size;
    let mut phi = vec![0.0];
    for &id in &b.params {
        phi.push(phi.last().unwrap() + cost.cost(layout.param(id)));
    }
    let k = phi.len() - 1;
    let mut out = Vec::new();
    // cuts[j] indexes a boundary; cuts are non-decreasing, first 0, last k.
    let mut cuts = vec![0usize; r + 1];
    cuts[r] = k;
    fn rec(pos: usize, r: usize, k: usize, cuts: &mut Vec<usize>, phi: &[f64], out: &mut Vec<Vec<f64>>) {
        if pos == r {
            out.push((0..r).map(|j| phi[cuts[j + 1]] - phi[cuts[j]]).collect());
            return;
        }
        for c in cuts[pos - 1]..=k {
            cuts[pos] = c;
            rec(pos + 1, r, k, cuts, phi, out);
        }
    }
    if r == 1 {
        out.push(vec![phi[k]]);
    } else {
        rec(1, r, k, &mut cuts, &phi, &mut out);
    }
    out
}

/// Smallest `max_r |L_r - mu|` over every combination of atomic cuts.
pub fn min_atomic_deviation(layout: &BufferLayout, cost: &CostModel) -> f64 {
    let r = layout.world_size;
    let options: Vec<Vec<Vec<f64>>> =
        (0..layout.buckets.len()).map(|i| bucket_options(layout, i, cost)).collect();
    let total: f64 = options.iter().map(|o| o[0].iter().sum::<f64>()).sum();
    let mu = total / r as f64;
    let mut best = f64::INFINITY;
    let mut loads = vec![0.0; r];
    fn rec(i: usize, options: &[Vec<Vec<f64>>], loads: &mut Vec<f64>, mu: f64, best: &mut f64) {
        if i == options.len() {
            let dev = loads.iter().map(|l| (l - mu).abs()).fold(0.0, f64::max);
            *best = best.min(dev);
            return;
        }
        for opt in &options[i] {
            for (l, x) in loads.iter_mut().zip(opt) {
                *l += x;
            }
            rec(i + 1, options, loads, mu, best);
            for (l, x) in loads.iter_mut().zip(opt) {
                *l -= x;
            }
        }
    }
    rec(0, &options, &mut loads, mu, &mut best);
    best
}

/// Optimal makespan of `costs` on `r` identical machines, by exhaustive search.
pub fn opt_makespan(costs: &[f64], r: usize) -> f64 {
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut best = sorted.iter().sum::<f64>();
    let mut loads = vec![0.0; r];
    fn rec(i: usize, items: &[f64], loads: &mut [f64], best: &mut f64) {
        let cur = loads.iter().copied().fold(0.0, f64::max);
        if cur >= *best {
            return;
        }
        if i == items.len() {
            *best = cur;
            return;
        }
        for m in 0..loads.len() {
            // Machines with equal load are interchangeable.
            if loads[..m].contains(&loads[m]) {
                continue;
            }
            loads[m] += items[i];
            rec(i + 1, items, loads, best);
            loads[m] -= items[i];
        }
    }
    rec(0, &sorted, &mut loads, &mut best);
    best
}
