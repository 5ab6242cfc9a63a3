use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atomshard::config::{load_net, parse_capacity, parse_model, RunConfig};
use atomshard::io::{
    csv_table, dp_plan_to_json, load_report_csv, plot_data, summary_csv, timeline_to_json,
    to_versioned_json, tp_plan_to_json, LOAD_REPORT_FORMAT, STEP_TRACE_FORMAT,
};
use atomshard::metrics::{load_balance_ratio, tp_memory, DEFAULT_MEMORY_MULTIPLIER};
use atomshard::scenario::Scenario;
use atomshard::sim::sweep::{cmax_sweep, CmaxPoint, DpScenario};
use atomshard::sim::{simulate_tp_sc, simulate_tp_step, DpSimOptions, TpFusion};
use atomshard::verify::{verify_equivalence, Fault, ToyWorkload};
use atomshard::{
    alpha_balanced_partition, atomic_ownership_partition, build_micro_groups, compare_plans,
    equal_chunk_partition, validate_micro_groups, validate_plan, CostModel, Error, MetricKind,
    PlanRef, Result, SimTimeline, StrategyKind,
};

use crate::Common;

const TOY_MODEL: &str = include_str!("../../../configs/toy.toml");
const DEFAULT_OUT: &str = "atomshard-out";

/// 2 for bad input, 1 for everything that fails at run time.
pub fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::UnknownPrimitive(_)
        | Error::ParamExceedsBucket { .. }
        | Error::Sharding(_)
        | Error::UnsupportedSplit(_) => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &c.model {
        cfg.model = Some(m.clone());
    }
    if c.dp.is_some() {
        cfg.dp = c.dp;
    }
    if c.tp.is_some() {
        cfg.tp = c.tp;
    }
    if let Some(a) = c.alpha {
        cfg.alpha = a;
    }
    if let Some(s) = &c.cmax {
        cfg.cmax = s.clone();
    }
    if let Some(k) = c.cost {
        cfg.cost = k;
    }
    if let Some(n) = &c.net {
        cfg.net = load_net(n)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| DEFAULT_OUT.into());
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn plan_dp(c: &Common) -> Result<ExitCode> {
    let cfg = resolve(c)?;
    let s = Scenario::new(&cfg.model_config()?)?;
    let cost = CostModel::new(cfg.cost);
    let equal = equal_chunk_partition(&s.layout, &cost);
    let atomic = atomic_ownership_partition(&s.layout, &cost);
    let balanced = alpha_balanced_partition(&s.layout, cfg.alpha, &cost)?;
    let table = compare_plans(
        &[PlanRef::Dp(&equal), PlanRef::Dp(&atomic), PlanRef::Dp(&balanced)],
        &s.layout,
        &cost,
        DEFAULT_MEMORY_MULTIPLIER,
    );
    let dir = out_dir(&cfg)?;
    write(&dir, "dp-plan.json", &dp_plan_to_json(&balanced)?)?;
    write(&dir, "dp-plan-atomic.json", &dp_plan_to_json(&atomic)?)?;
    write(&dir, "dp-report.csv", &load_report_csv(&table)?)?;

    println!(
        "{} buckets, {} ranks, cost {}",
        s.layout.buckets.len(),
        s.layout.world_size,
        cfg.cost
    );
    for row in &table.rows {
        println!(
            "{:<28} flops R_LB {:>8.4}  memory R_LB {:>8.4}",
            row.plan, row.flops_rlb, row.memory_rlb
        );
    }
    let mut ok = true;
    for plan in [&atomic, &balanced] {
        let v = validate_plan(plan, &s.layout);
        if v.is_empty() {
            println!("{}: valid", plan.label());
        } else {
            ok = false;
            for x in v {
                println!("{}: {x}", plan.label());
            }
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn plan_tp(c: &Common) -> Result<ExitCode> {
    let cfg = resolve(c)?;
    let s = Scenario::new(&cfg.model_config()?)?;
    let cost = CostModel::new(cfg.cost);
    let params = s.micro_group_params();
    let tp = s.model.tp_degree;
    let plan = build_micro_groups(&params, &cost, tp, cfg.capacity()?)?;

    let rows: Vec<Vec<String>> = plan
        .groups
        .iter()
        .map(|g| {
            vec![
                g.index.to_string(),
                g.param_ids().count().to_string(),
                g.l_max.to_string(),
                g.imbalance().to_string(),
                g.saturation().to_string(),
                g.rank_bytes.iter().max().copied().unwrap_or(0).to_string(),
                g.total_bytes().to_string(),
            ]
        })
        .collect();
    let groups = csv_table(
        LOAD_REPORT_FORMAT,
        &["group", "params", "l_max", "imbalance", "saturation", "max_rank_bytes", "total_bytes"],
        &rows,
    )?;
    let dir = out_dir(&cfg)?;
    write(&dir, "tp-plan.json", &tp_plan_to_json(&plan)?)?;
    write(&dir, "tp-groups.csv", &groups)?;

    println!("{} micro groups over {} ranks ({} tensors)", plan.groups.len(), tp, params.len());
    let loads = plan.rank_loads();
    if loads.iter().any(|&l| l > 0.0) {
        let flops = load_balance_ratio(&loads, MetricKind::Flops)?;
        let mem = load_balance_ratio(&tp_memory(&plan, DEFAULT_MEMORY_MULTIPLIER), MetricKind::MemoryElements)?;
        println!("flops R_LB {:.4}  memory R_LB {:.4}", flops.r_lb, mem.r_lb);
    }
    let v = validate_micro_groups(&plan, &params);
    if v.is_empty() {
        println!("plan valid");
        Ok(ExitCode::SUCCESS)
    } else {
        for x in &v {
            println!("violation: {x:?}");
        }
        Ok(ExitCode::FAILURE)
    }
}

fn parse_strategies(list: Option<Vec<String>>, cfg: &RunConfig) -> Result<Vec<StrategyKind>> {
    let Some(list) = list else {
        return Ok(cfg.strategies.clone());
    };
    let out = list
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<StrategyKind>>>()?;
    if out.is_empty() {
        return Err(Error::Config("strategy list is empty".into()));
    }
    Ok(out)
}

fn cmax_points(list: &[String]) -> Result<Vec<CmaxPoint>> {
    list.iter()
        .map(|s| match s.trim() {
            "no-fuse" | "nofuse" => Ok(CmaxPoint::NoFuse),
            other => parse_capacity(other).map(CmaxPoint::Fused),
        })
        .collect()
}

fn cell(v: f64) -> String {
    v.to_string()
}

/// Slowest data-parallel share's tensor-parallel step.
fn slowest(timelines: Vec<SimTimeline>) -> Option<SimTimeline> {
    timelines
        .into_iter()
        .reduce(|a, b| if b.totals.optimizer_time > a.totals.optimizer_time { b } else { a })
}

pub fn simulate(
    c: &Common,
    strategy: Option<Vec<String>>,
    alpha_sweep: Option<Vec<f64>>,
    cmax_sweep_list: Option<Vec<String>>,
) -> Result<ExitCode> {
    let cfg = resolve(c)?;
    let strategies = parse_strategies(strategy, &cfg)?;
    if let Some(a) = alpha_sweep.as_ref().and_then(|v| v.iter().find(|a| !(0.0..=1.0).contains(*a))) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {a}")));
    }
    let points = cmax_sweep_list.as_deref().map(cmax_points).transpose()?;
    let s = Scenario::new(&cfg.model_config()?)?;
    let cost = CostModel::new(cfg.cost);
    let profile = s.profile(cfg.sim.forward_secs_per_element);
    let sc = DpScenario {
        layout: &s.layout,
        plan_cost: &cost,
        sim_cost: &cost,
        net: &cfg.net,
        profile: &profile,
        opts: DpSimOptions {
            redistribution: cfg.sim.redistribution,
        },
    };
    let dir = out_dir(&cfg)?;
    let tp = s.model.tp_degree;

    let mut rows: Vec<(String, SimTimeline)> = Vec::new();
    for tl in sc.strategies(&strategies, cfg.alpha)? {
        write(&dir, &format!("timelines/{}.json", tl.label), &timeline_to_json(&tl)?)?;
        rows.push(("base".into(), tl));
    }
    if tp > 1 {
        let balanced = alpha_balanced_partition(&s.layout, cfg.alpha, &cost)?;
        let shares = s.tp_shares(&balanced);
        let mut fused = Vec::new();
        let mut replicated = Vec::new();
        for params in &shares {
            let plan = build_micro_groups(params, &cost, tp, cfg.capacity()?)?;
            fused.push(simulate_tp_step(&plan, params, tp, &cfg.net, &cost, TpFusion::Fused)?);
            replicated.push(simulate_tp_sc(params, tp, &cfg.net, &cost)?);
        }
        for tl in [slowest(fused), slowest(replicated)].into_iter().flatten() {
            write(&dir, &format!("timelines/{}.json", tl.label), &timeline_to_json(&tl)?)?;
            rows.push(("base".into(), tl));
        }
    }
    let base_plot: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, tl)| {
            let t = &tl.totals;
            vec![tl.label.clone(), cell(t.fwd_bwd_time), cell(t.optimizer_time), cell(t.iteration_time)]
        })
        .collect();
    write(
        &dir,
        "strategies.dat",
        &plot_data(&["strategy", "fwd_bwd_time", "optimizer_time", "iteration_time"], &base_plot),
    )?;

    if let Some(alphas) = &alpha_sweep {
        let mut plot = Vec::new();
        for (a, tl) in sc.alpha_sweep(alphas)? {
            write(&dir, &format!("alpha-{a}/timeline.json"), &timeline_to_json(&tl)?)?;
            plot.push(vec![cell(a), cell(tl.totals.optimizer_time), cell(tl.totals.iteration_time)]);
            rows.push((format!("alpha={a}"), tl));
        }
        write(&dir, "alpha-sweep.dat", &plot_data(&["alpha", "optimizer_time", "iteration_time"], &plot))?;
    }

    // Unschedulable caps are a sweep result, not a failure, unless every point fails.
    let mut failed = false;
    if let Some(points) = &points {
        let balanced = alpha_balanced_partition(&s.layout, cfg.alpha, &cost)?;
        let shares = s.tp_shares(&balanced);
        let mut plot = Vec::new();
        let mut any_ok = false;
        for (pt, res) in cmax_sweep(&shares, tp, &cost, &cfg.net, points, cfg.capacity()?) {
            let label = pt.label();
            match res {
                Ok(tl) => {
                    any_ok = true;
                    write(&dir, &format!("cmax-{label}/timeline.json"), &timeline_to_json(&tl)?)?;
                    plot.push(vec![label.clone(), cell(tl.totals.optimizer_time)]);
                    rows.push((format!("cmax={label}"), tl));
                }
                Err(e) => {
                    eprintln!("cmax {label}: {e}");
                    plot.push(vec![label, "nan".into()]);
                }
            }
        }
        failed = !points.is_empty() && !any_ok;
        write(&dir, "cmax-sweep.dat", &plot_data(&["cmax", "optimizer_time"], &plot))?;
    }

    let refs: Vec<(String, &SimTimeline)> = rows.iter().map(|(p, t)| (p.clone(), t)).collect();
    write(&dir, "summary.csv", &summary_csv(&refs)?)?;
    for (point, tl) in &rows {
        let t = &tl.totals;
        println!(
            "{point:<14} {:<16} fwd+bwd {:>10.6}s  optimizer {:>10.6}s  iteration {:>10.6}s",
            tl.label, t.fwd_bwd_time, t.optimizer_time, t.iteration_time
        );
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

pub fn verify(c: &Common, steps: Option<usize>, fault: bool) -> Result<ExitCode> {
    let cfg = resolve(c)?;
    let model = if cfg.model.is_some() {
        cfg.model_config()?
    } else {
        let mut m = parse_model(TOY_MODEL)?;
        if let Some(dp) = cfg.dp {
            m.dp_degree = dp;
        }
        if let Some(tp) = cfg.tp {
            m.tp_degree = tp;
        }
        m.validate()?;
        m
    };
    let w = ToyWorkload::from_config(&model)?;
    let cost = CostModel::new(cfg.cost);
    let dp_plan = alpha_balanced_partition(&w.dp_layout()?, cfg.alpha, &cost)?;
    let tp_plan = if w.tp_degree > 1 {
        Some(build_micro_groups(&w.tp_params(), &cost, w.tp_degree, cfg.capacity()?)?)
    } else {
        None
    };
    let steps = steps.unwrap_or(cfg.verify.steps);
    let fault = fault.then(|| Fault::default_for(&w));
    let report = verify_equivalence(
        &w,
        &dp_plan,
        tp_plan.as_ref(),
        &cfg.verify.optimizer(),
        steps,
        cfg.seed,
        fault,
    )?;
    let dir = out_dir(&cfg)?;
    write(&dir, "verify-trace.json", &to_versioned_json(STEP_TRACE_FORMAT, &report)?)?;

    println!(
        "dp {} tp {}, {} steps, seed {}{}",
        w.dp_degree,
        w.tp_degree,
        steps,
        cfg.seed,
        fault.map(|f| format!(", fault on parameter {} from step {}", f.param_id, f.from_step))
            .unwrap_or_default()
    );
    println!("max_abs_diff {:e} (tolerance {:e})", report.max_abs_diff, report.tolerance);
    println!("locality violations {}", report.locality_violations.len());
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
