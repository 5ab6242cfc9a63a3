mod common;

use atomshard::dp::rank_loads_under;
use atomshard::metrics::{dp_objectives, max_deviation};
use atomshard::tp::{build_micro_groups_from_tasks, min_heap_balance, Task};
use atomshard::{
    alpha_balanced_partition, atomic_ownership_partition, validate_micro_groups, Capacity,
    CostModel,
};
use common::{explicit_layout, min_atomic_deviation, opt_makespan, random_params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lpt_factor(r: usize) -> f64 {
    4.0 / 3.0 - 1.0 / (3.0 * r as f64)
}

fn tasks(costs: &[f64]) -> Vec<Task> {
    costs
        .iter()
        .enumerate()
        .map(|(id, &c)| Task {
            id,
            cost: c,
            bytes: c as u64,
            shape: vec![c as u64],
        })
        .collect()
}

#[test]
fn oracle_agrees_on_trivial_layouts() {
    let cost = CostModel::numel();
    assert_eq!(min_atomic_deviation(&explicit_layout(&[&[8, 4, 2, 2]], 2), &cost), 0.0);
    assert_eq!(min_atomic_deviation(&explicit_layout(&[&[5]], 2), &cost), 2.5);
    assert_eq!(min_atomic_deviation(&explicit_layout(&[&[1, 1, 1]], 3), &cost), 0.0);
}

#[test]
fn two_bucket_example_is_optimal() {
    let layout = explicit_layout(&[&[7, 3], &[3, 3]], 2);
    let cost = CostModel::numel();
    let plan = alpha_balanced_partition(&layout, 1.0, &cost).unwrap();
    assert_eq!(plan.rank_loads, vec![7.0, 9.0]);
    let (j_dp, _) = dp_objectives(&plan, &layout, &cost);
    assert_eq!(j_dp, 1.0);
    assert_eq!(min_atomic_deviation(&layout, &cost), j_dp);
}

#[test]
fn single_bucket_example_is_optimal() {
    let layout = explicit_layout(&[&[8, 4, 2, 2]], 2);
    let plan = alpha_balanced_partition(&layout, 1.0, &CostModel::numel()).unwrap();
    assert_eq!(plan.cut_vectors[0], vec![0, 8, 16]);
    assert_eq!(plan.rank_loads, vec![8.0, 8.0]);
}

#[test]
fn no_planner_beats_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cost = CostModel::muon();
    for _ in 0..200 {
        let r = rng.random_range(2..=3);
        let n = rng.random_range(2..=7);
        let params = random_params(&mut rng, n);
        let layout = common::layout_with_buckets(&mut rng, &params, 2, r);
        let best = min_atomic_deviation(&layout, &cost);
        for plan in [
            atomic_ownership_partition(&layout, &cost),
            alpha_balanced_partition(&layout, 1.0, &cost).unwrap(),
            alpha_balanced_partition(&layout, 0.5, &cost).unwrap(),
        ] {
            let dev = max_deviation(&rank_loads_under(&plan, &layout, &cost));
            assert!(dev >= best - 1e-9 * best.max(1.0), "{dev} < oracle {best}");
        }
    }
}

#[test]
fn lpt_oracle_matches_known_makespans() {
    assert_eq!(opt_makespan(&[3.0, 3.0, 2.0, 2.0, 2.0], 2), 6.0);
    assert_eq!(opt_makespan(&[5.0], 3), 5.0);
    // Classic LPT-tight instance for R=2: LPT gives 7, optimum 6.
    let costs = [3.0, 3.0, 2.0, 2.0, 2.0];
    assert_eq!(min_heap_balance(&tasks(&costs), 2).l_max, 7.0);
    assert!(7.0 <= lpt_factor(2) * 6.0 + 1e-12);
}

/// Every multiset of up to 7 items with weights 1..=4, on 2..=4 ranks, at
/// three capacities.
#[test]
fn micro_groups_meet_lpt_bound_exhaustively() {
    fn multisets(n: usize, min: u32, acc: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if !acc.is_empty() {
            out.push(acc.clone());
        }
        if acc.len() == n {
            return;
        }
        for w in min..=4 {
            acc.push(w as f64);
            multisets(n, w, acc, out);
            acc.pop();
        }
    }
    let mut all = Vec::new();
    multisets(7, 1, &mut Vec::new(), &mut all);
    let mut checked = 0;
    for costs in &all {
        let ts = tasks(costs);
        let largest = costs.iter().copied().fold(0.0, f64::max);
        let total: f64 = costs.iter().sum();
        for r in 2..=4 {
            for cap in [largest, (largest + total) / 2.0, total] {
                let groups =
                    build_micro_groups_from_tasks(&ts, |i| format!("t{i}"), r, Capacity::Cost(cap))
                        .unwrap();
                for g in &groups {
                    let items: Vec<f64> = g.param_ids().map(|id| costs[id]).collect();
                    let opt = opt_makespan(&items, r);
                    assert!(g.l_max <= lpt_factor(r) * opt + 1e-9, "{costs:?} r={r}");
                    assert!(g.l_max <= cap + 1e-9);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(all.len(), 329);
    assert!(checked >= all.len() * 9);
}

#[test]
fn micro_groups_cover_each_param_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cost = CostModel::muon();
    for _ in 0..50 {
        let n = rng.random_range(1..=40);
        let params = random_params(&mut rng, n);
        let r = rng.random_range(1..=8);
        let largest = params.iter().map(|p| p.bytes()).max().unwrap();
        let plan = atomshard::build_micro_groups(&params, &cost, r, Capacity::Bytes(largest * 2)).unwrap();
        assert!(validate_micro_groups(&plan, &params).is_empty());
        for g in &plan.groups {
            assert!(g.rank_bytes.iter().all(|&b| b <= largest * 2));
        }
    }
}
