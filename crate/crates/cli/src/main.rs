//! `atomshard` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use atomshard::cost::CostKind;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "atomshard", version, about = "Optimizer-state partition planning and step simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand; each overrides the run file.
#[derive(Debug, Clone, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model architecture file (TOML).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Data-parallel degree.
    #[arg(long, global = true)]
    dp: Option<usize>,
    /// Tensor-parallel degree.
    #[arg(long, global = true)]
    tp: Option<usize>,
    /// Balance factor in [0, 1].
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Micro-group cap, e.g. `512MiB` or `cost:1e12`.
    #[arg(long, global = true)]
    cmax: Option<String>,
    /// numel, flops-muon, flops-shampoo or flops-soap.
    #[arg(long, global = true)]
    cost: Option<CostKind>,
    /// Network model file (TOML with latency and bandwidth keys).
    #[arg(long, global = true)]
    net: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "ATOMSHARD_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Partition optimizer state across data-parallel ranks.
    PlanDp {
        #[command(flatten)]
        common: Common,
    },
    /// Build tensor-parallel micro groups.
    PlanTp {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one training step per strategy, optionally sweeping.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strategies (SC, NV_LAYERWISE, ASC, LB_ASC).
        #[arg(long, value_delimiter = ',')]
        strategy: Option<Vec<String>>,
        /// Comma-separated balance factors for LB_ASC.
        #[arg(long, value_delimiter = ',')]
        alpha_sweep: Option<Vec<f64>>,
        /// Comma-separated micro-group caps; `no-fuse` sends tensors one by one.
        #[arg(long, value_delimiter = ',')]
        cmax_sweep: Option<Vec<String>>,
    },
    /// Check partitioned optimizer steps against a replicated reference.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<usize>,
        /// Misroute one parameter's update to demonstrate detection.
        #[arg(long)]
        fault: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::PlanDp { common } => commands::plan_dp(&common),
        Command::PlanTp { common } => commands::plan_tp(&common),
        Command::Simulate {
            common,
            strategy,
            alpha_sweep,
            cmax_sweep,
        } => commands::simulate(&common, strategy, alpha_sweep, cmax_sweep),
        Command::Verify {
            common,
            steps,
            fault,
        } => commands::verify(&common, steps, fault),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            commands::exit_code(&e)
        }
    }
}
