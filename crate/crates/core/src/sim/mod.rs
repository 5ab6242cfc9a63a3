//! Deterministic execution simulator for one training iteration.
//!
//! Each rank owns two serial resources: a compute channel and a
//! communication channel. Work on different channels may overlap; work on
//! the same channel may not. Collectives occupy the communication channel of
//! every participating rank for the same interval.

mod dp;
pub mod net;
pub mod sweep;
mod tp;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dp::{layerwise_assignment, simulate_dp_step, DpSimOptions, FwdBwdProfile, Redistribution};
pub use net::{collective_time, ring_traffic, LinkClass, NetModel, Primitive};
pub use tp::{simulate_tp_sc, simulate_tp_step, TpFusion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    /// Replicated optimizer: every rank updates every parameter.
    #[serde(rename = "SC")]
    Sc,
    /// Whole layers assigned by global LPT; all-reduce plus in-step redistribution.
    #[serde(rename = "NV_LAYERWISE")]
    NvLayerwise,
    /// Atomic ownership by start index, reduce-scatter, local update.
    #[serde(rename = "ASC")]
    Asc,
    /// As `Asc` with the balanced partition.
    #[serde(rename = "LB_ASC")]
    LbAsc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Sc,
        StrategyKind::NvLayerwise,
        StrategyKind::Asc,
        StrategyKind::LbAsc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Sc => "SC",
            StrategyKind::NvLayerwise => "NV_LAYERWISE",
            StrategyKind::Asc => "ASC",
            StrategyKind::LbAsc => "LB_ASC",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Compute,
    Comm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forward,
    Backward,
    Optimizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub rank: usize,
    pub channel: Channel,
    pub phase: Phase,
    pub name: String,
    pub primitive: Option<Primitive>,
    pub start: f64,
    pub end: f64,
    /// Payload bytes for communication, cost units for compute.
    pub amount: f64,
}

impl Event {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub fwd_bwd_time: f64,
    pub optimizer_time: f64,
    pub iteration_time: f64,
    /// Forward/backward time not covered by forward/backward compute.
    pub exposed_comm_time: f64,
    /// Communication time spent inside the optimizer step.
    pub optimizer_comm_time: f64,
    /// Bytes moved per rank inside the optimizer step.
    pub optimizer_comm_bytes: f64,
    /// Cost units executed, summed over ranks.
    pub total_compute_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTimeline {
    pub label: String,
    pub world_size: usize,
    pub events: Vec<Event>,
    pub totals: Totals,
    /// Per-rank ring traffic by primitive.
    pub comm_volumes: BTreeMap<Primitive, f64>,
}

impl SimTimeline {
    fn new(label: impl Into<String>, world_size: usize) -> Self {
        Self {
            label: label.into(),
            world_size,
            events: Vec::new(),
            totals: Totals::default(),
            comm_volumes: BTreeMap::new(),
        }
    }

    pub fn volume(&self, prim: Primitive) -> f64 {
        self.comm_volumes.get(&prim).copied().unwrap_or(0.0)
    }

    fn add_volume(&mut self, prim: Primitive, traffic: f64) {
        *self.comm_volumes.entry(prim).or_insert(0.0) += traffic;
    }

    pub fn events_of(&self, rank: usize, channel: Channel) -> impl Iterator<Item = &Event> + '_ {
        self.events
            .iter()
            .filter(move |e| e.rank == rank && e.channel == channel)
    }

    /// Serializes as a chrome trace (`chrome://tracing`, Perfetto) document.
    ///
    /// Timestamps are microseconds. Each rank is a process with one thread
    /// per channel.
    pub fn to_chrome_trace(&self) -> serde_json::Value {
        let mut events = Vec::with_capacity(self.events.len() + 2 * self.world_size);
        for rank in 0..self.world_size {
            events.push(serde_json::json!({
                "name": "process_name", "ph": "M", "pid": rank,
                "args": { "name": format!("rank {rank}") }
            }));
            for (tid, name) in [(0, "compute"), (1, "comm")] {
                events.push(serde_json::json!({
                    "name": "thread_name", "ph": "M", "pid": rank, "tid": tid,
                    "args": { "name": name }
                }));
            }
        }
        for e in &self.events {
            let tid = match e.channel {
                Channel::Compute => 0,
                Channel::Comm => 1,
            };
            let mut args = serde_json::Map::new();
            let key = if e.channel == Channel::Comm { "bytes" } else { "cost" };
            args.insert(key.into(), serde_json::json!(e.amount));
            if let Some(p) = e.primitive {
                args.insert("primitive".into(), serde_json::json!(p.as_str()));
            }
            events.push(serde_json::json!({
                "name": e.name,
                "cat": match e.phase {
                    Phase::Forward => "forward",
                    Phase::Backward => "backward",
                    Phase::Optimizer => "optimizer",
                },
                "ph": "X",
                "ts": e.start * 1e6,
                "dur": e.duration() * 1e6,
                "pid": e.rank,
                "tid": tid,
                "args": args,
            }));
        }
        serde_json::json!({
            "traceEvents": events,
            "displayTimeUnit": "ms",
            "otherData": {
                "format": crate::io::TIMELINE_FORMAT,
                "label": self.label,
                "world_size": self.world_size,
                "fwd_bwd_time": self.totals.fwd_bwd_time,
                "optimizer_time": self.totals.optimizer_time,
                "iteration_time": self.totals.iteration_time,
            }
        })
    }
}

/// A serial resource: work is placed at the later of its ready time and the
/// end of the previous item.
#[derive(Debug, Clone, Copy, Default)]
struct Lane {
    free_at: f64,
}

impl Lane {
    fn reserve(&mut self, ready: f64, duration: f64) -> (f64, f64) {
        let start = self.free_at.max(ready);
        let end = start + duration;
        self.free_at = end;
        (start, end)
    }
}
