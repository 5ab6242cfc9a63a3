//! Alpha-beta cost model for ring collectives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    ReduceScatter,
    AllGather,
    AllReduce,
    AllToAll,
    Broadcast,
}

impl Primitive {
    pub const ALL: [Primitive; 5] = [
        Primitive::ReduceScatter,
        Primitive::AllGather,
        Primitive::AllReduce,
        Primitive::AllToAll,
        Primitive::Broadcast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::ReduceScatter => "reduce_scatter",
            Primitive::AllGather => "all_gather",
            Primitive::AllReduce => "all_reduce",
            Primitive::AllToAll => "all_to_all",
            Primitive::Broadcast => "broadcast",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPrimitive(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkClass {
    /// NVLink-class links inside a node (tensor parallel groups).
    IntraNode,
    /// Network links between nodes (data parallel groups).
    InterNode,
}

/// Network and device constants. Bandwidths are bytes/second per link,
/// throughput is cost units/second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetModel {
    pub latency: f64,
    pub intra_bandwidth: f64,
    pub inter_bandwidth: f64,
    pub compute_throughput: f64,
}

impl Default for NetModel {
    /// 20 us per collective, 150 GB/s intra-node, 25 GB/s inter-node, 400 TFLOP/s.
    fn default() -> Self {
        Self {
            latency: 20e-6,
            intra_bandwidth: 150e9,
            inter_bandwidth: 25e9,
            compute_throughput: 400e12,
        }
    }
}

impl NetModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("latency", self.latency),
            ("intra_bandwidth", self.intra_bandwidth),
            ("inter_bandwidth", self.inter_bandwidth),
            ("compute_throughput", self.compute_throughput),
        ];
        for (name, v) in fields {
            let ok = if name == "latency" { v >= 0.0 } else { v > 0.0 };
            if !ok || v.is_nan() {
                return Err(Error::Config(format!("net.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn bandwidth(&self, link: LinkClass) -> f64 {
        match link {
            LinkClass::IntraNode => self.intra_bandwidth,
            LinkClass::InterNode => self.inter_bandwidth,
        }
    }

    /// `latency + ring_traffic / bandwidth`.
    pub fn collective_time(&self, volume: f64, prim: Primitive, r: usize, link: LinkClass) -> f64 {
        collective_time(volume, prim, r, self.latency, self.bandwidth(link))
    }

    pub fn compute_time(&self, cost: f64) -> f64 {
        cost / self.compute_throughput
    }
}

/// Bytes each rank sends for a collective over a `volume`-byte buffer on `r` ranks.
///
/// Ring algorithms: reduce-scatter, all-gather and all-to-all move
/// `V (R-1) / R`; all-reduce is a reduce-scatter followed by an all-gather,
/// `2 V (R-1) / R`; broadcast moves `V`. Single-rank groups move nothing.
pub fn ring_traffic(volume: f64, prim: Primitive, r: usize) -> f64 {
    if r <= 1 {
        return 0.0;
    }
    let share = volume * (r - 1) as f64 / r as f64;
    match prim {
        Primitive::ReduceScatter | Primitive::AllGather | Primitive::AllToAll => share,
        Primitive::AllReduce => 2.0 * share,
        Primitive::Broadcast => volume,
    }
}

pub fn collective_time(volume: f64, prim: Primitive, r: usize, latency: f64, bandwidth: f64) -> f64 {
    let traffic = ring_traffic(volume, prim, r);
    if traffic == 0.0 {
        latency
    } else {
        latency + traffic / bandwidth
    }
}

/// Looks up a primitive by name and times it.
pub fn collective_time_named(
    volume: f64,
    prim: &str,
    r: usize,
    latency: f64,
    bandwidth: f64,
) -> Result<f64> {
    if volume < 0.0 || volume.is_nan() {
        return Err(Error::InvalidArgument(format!("negative volume {volume}")));
    }
    Ok(collective_time(volume, prim.parse()?, r, latency, bandwidth))
}
