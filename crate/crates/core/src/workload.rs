//! Parameters, flat gradient buffers, buckets and tensor-parallel shards.
//!
//! A workload is an ordered list of [`ParamSpec`]s. [`build_buffer_layout`]
//! packs them, in declaration order, into the buckets of one flat buffer the
//! way a bucketed data-parallel runtime registers its gradients. Nothing here
//! ever reorders parameters: every partitioner downstream works on virtual
//! orderings only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bucket capacity, in elements.
pub const DEFAULT_BUCKET_CAPACITY: u64 = 40_000_000;

/// How a parameter is split under tensor parallelism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TpSplit {
    /// Output dimension (dim 1) is split.
    Column,
    /// Input dimension (dim 0) is split.
    Row,
    /// Replicated across tensor-parallel ranks.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub id: usize,
    pub name: String,
    pub shape: Vec<u64>,
    pub numel: u64,
    pub dtype_bytes: u32,
    pub tp_split: TpSplit,
}

impl ParamSpec {
    pub fn new(
        id: usize,
        name: impl Into<String>,
        shape: Vec<u64>,
        dtype_bytes: u32,
        tp_split: TpSplit,
    ) -> Self {
        let numel = shape.iter().product();
        Self {
            id,
            name: name.into(),
            shape,
            numel,
            dtype_bytes,
            tp_split,
        }
    }

    /// A 1-D parameter of `numel` elements with 4-byte elements and no TP split.
    pub fn vector(id: usize, numel: u64) -> Self {
        Self::new(id, format!("p{id}"), vec![numel], 4, TpSplit::None)
    }

    /// True for parameters with exactly two dimensions.
    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn bytes(&self) -> u64 {
        self.numel * self.dtype_bytes as u64
    }
}

/// Builds 1-D parameters with the given element counts and dense ids.
pub fn params_from_numels(numels: &[u64]) -> Vec<ParamSpec> {
    numels
        .iter()
        .enumerate()
        .map(|(id, &n)| ParamSpec::vector(id, n))
        .collect()
}

/// A contiguous segment of the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub index: usize,
    /// Member parameter ids in buffer order.
    pub params: Vec<usize>,
    /// Start of this bucket within the flat buffer.
    pub start: u64,
    /// Start offset of each member within the flat buffer.
    pub offsets: Vec<u64>,
    /// Element count of each member.
    pub numels: Vec<u64>,
    pub size: u64,
}

impl Bucket {
    /// Parameter boundaries relative to the bucket start: `[0, n0, n0+n1, .., size]`.
    ///
    /// These are the only cut points that keep every parameter whole.
    pub fn boundaries(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.offsets.len() + 1);
        out.extend(self.offsets.iter().map(|o| o - self.start));
        out.push(self.size);
        out
    }

    /// Start offsets of members relative to the bucket start.
    pub fn local_offsets(&self) -> impl Iterator<Item = u64> + '_ {
        self.offsets.iter().map(move |o| o - self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferLayout {
    pub buckets: Vec<Bucket>,
    pub total_size: u64,
    /// Data-parallel world size.
    pub world_size: usize,
    /// The workload, indexed by parameter id.
    pub params: Vec<ParamSpec>,
}

impl BufferLayout {
    pub fn param(&self, id: usize) -> &ParamSpec {
        &self.params[id]
    }

    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    /// Member parameters of bucket `i`, in buffer order.
    pub fn bucket_params(&self, i: usize) -> impl Iterator<Item = &ParamSpec> + '_ {
        self.buckets[i].params.iter().map(move |&id| &self.params[id])
    }
}

fn check_ids(params: &[ParamSpec]) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        if p.id != i {
            return Err(Error::Config(format!(
                "parameter ids must be dense and ordered: position {i} holds id {}",
                p.id
            )));
        }
        if p.numel == 0 || p.shape.contains(&0) {
            return Err(Error::Config(format!("parameter `{}` is empty", p.name)));
        }
    }
    Ok(())
}

/// Packs parameters into buckets in the given order.
///
/// A new bucket starts whenever appending the next parameter would push the
/// current bucket past `bucket_capacity` elements.
pub fn build_buffer_layout(
    params: &[ParamSpec],
    bucket_capacity: u64,
    world_size: usize,
) -> Result<BufferLayout> {
    if world_size == 0 {
        return Err(Error::Config("data-parallel world size must be >= 1".into()));
    }
    check_ids(params)?;
    let mut buckets: Vec<Bucket> = Vec::new();
    let mut cursor = 0u64;
    for p in params {
        if p.numel > bucket_capacity {
            return Err(Error::ParamExceedsBucket {
                name: p.name.clone(),
                numel: p.numel,
                capacity: bucket_capacity,
            });
        }
        let fits = buckets
            .last()
            .is_some_and(|b| b.size + p.numel <= bucket_capacity);
        if !fits {
            buckets.push(Bucket {
                index: buckets.len(),
                params: Vec::new(),
                start: cursor,
                offsets: Vec::new(),
                numels: Vec::new(),
                size: 0,
            });
        }
        let b = buckets.last_mut().expect("bucket pushed above");
        b.params.push(p.id);
        b.offsets.push(cursor);
        b.numels.push(p.numel);
        b.size += p.numel;
        cursor += p.numel;
    }
    Ok(BufferLayout {
        buckets,
        total_size: cursor,
        world_size,
        params: params.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TpShardSpec {
    pub param_id: usize,
    pub tp_rank: usize,
    pub tp_degree: usize,
    pub shard_dim: usize,
    pub shard_shape: Vec<u64>,
    pub shard_numel: u64,
}

/// Splits a matrix parameter into `tp_degree` equal shards.
pub fn tp_shard(p: &ParamSpec, tp_degree: usize) -> Result<Vec<TpShardSpec>> {
    if tp_degree == 0 {
        return Err(Error::Sharding("tp_degree must be >= 1".into()));
    }
    let dim = match p.tp_split {
        TpSplit::None => return Err(Error::UnsupportedSplit(p.name.clone())),
        TpSplit::Column => 1,
        TpSplit::Row => 0,
    };
    if p.shape.len() != 2 {
        return Err(Error::Sharding(format!(
            "`{}` has {} dims, tensor-parallel splits need a matrix",
            p.name,
            p.shape.len()
        )));
    }
    let extent = p.shape[dim];
    if !extent.is_multiple_of(tp_degree as u64) {
        return Err(Error::Sharding(format!(
            "`{}`: extent {extent} along dim {dim} is not divisible by tp_degree {tp_degree}",
            p.name
        )));
    }
    let mut shard_shape = p.shape.clone();
    shard_shape[dim] = extent / tp_degree as u64;
    let shard_numel = shard_shape.iter().product();
    Ok((0..tp_degree)
        .map(|tp_rank| TpShardSpec {
            param_id: p.id,
            tp_rank,
            tp_degree,
            shard_dim: dim,
            shard_shape: shard_shape.clone(),
            shard_numel,
        })
        .collect())
}

fn default_dtype_bytes() -> u32 {
    2
}
fn default_one() -> usize {
    1
}
fn default_bucket_capacity() -> u64 {
    DEFAULT_BUCKET_CAPACITY
}

/// Transformer architecture plus parallel layout, used to synthesize workloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: u64,
    pub ffn_size: u64,
    pub num_heads: u64,
    pub vocab_size: u64,
    #[serde(default = "default_dtype_bytes")]
    pub dtype_bytes: u32,
    #[serde(default = "default_one")]
    pub tp_degree: usize,
    #[serde(default = "default_one")]
    pub dp_degree: usize,
    #[serde(default = "default_bucket_capacity")]
    pub bucket_capacity: u64,
    /// Fuse gate and up projections into one `hidden x 2*ffn` matrix.
    #[serde(default)]
    pub gated_ffn: bool,
    /// Output head shares storage with the embedding (no separate head parameter).
    #[serde(default)]
    pub tie_embeddings: bool,
}

impl ModelConfig {
    /// A minimal config with unit parallel degrees and the default bucket capacity.
    pub fn new(
        num_layers: usize,
        hidden_size: u64,
        ffn_size: u64,
        num_heads: u64,
        vocab_size: u64,
    ) -> Self {
        Self {
            num_layers,
            hidden_size,
            ffn_size,
            num_heads,
            vocab_size,
            dtype_bytes: default_dtype_bytes(),
            tp_degree: 1,
            dp_degree: 1,
            bucket_capacity: DEFAULT_BUCKET_CAPACITY,
            gated_ffn: false,
            tie_embeddings: false,
        }
    }

    fn validate_extents(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("ffn_size", self.ffn_size),
            ("num_heads", self.num_heads),
            ("vocab_size", self.vocab_size),
            ("dtype_bytes", self.dtype_bytes as u64),
            ("tp_degree", self.tp_degree as u64),
            ("dp_degree", self.dp_degree as u64),
            ("bucket_capacity", self.bucket_capacity),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden_size {} is not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        Ok(())
    }

    /// Full validation, including that every generated parameter fits in a bucket.
    pub fn validate(&self) -> Result<()> {
        self.validate_extents()?;
        // Buckets hold one tensor-parallel rank's shards.
        let params = tp_local_params(&generate_transformer_params(self)?, self.tp_degree)?;
        if let Some(p) = params.iter().max_by_key(|p| p.numel) {
            if p.numel > self.bucket_capacity {
                return Err(Error::Config(format!(
                    "bucket_capacity {} is smaller than parameter `{}` ({} elements)",
                    self.bucket_capacity, p.name, p.numel
                )));
            }
        }
        Ok(())
    }
}

/// Emits the parameters of a decoder-only transformer in registration order.
///
/// Layout per layer: one norm vector, fused QKV (`h x 3h`, column-split),
/// attention output (`h x h`, row-split), FFN up (`h x f`, or `h x 2f` when
/// gated, column-split) and FFN down (`f x h`, row-split). The model is
/// bracketed by the embedding (`vocab x h`, split along vocab) and a final
/// norm plus output head (`h x vocab`, split along vocab). Shapes are
/// `(in, out)`.
pub fn generate_transformer_params(cfg: &ModelConfig) -> Result<Vec<ParamSpec>> {
    cfg.validate_extents()?;
    let h = cfg.hidden_size;
    let f = cfg.ffn_size;
    let up = if cfg.gated_ffn { 2 * f } else { f };
    let db = cfg.dtype_bytes;
    let mut out = Vec::with_capacity(cfg.num_layers * 5 + 3);
    let mut push = |name: String, shape: Vec<u64>, split: TpSplit| {
        let id = out.len();
        out.push(ParamSpec::new(id, name, shape, db, split));
    };
    push("embed".into(), vec![cfg.vocab_size, h], TpSplit::Row);
    for l in 0..cfg.num_layers {
        push(format!("layers.{l}.norm"), vec![h], TpSplit::None);
        push(format!("layers.{l}.qkv"), vec![h, 3 * h], TpSplit::Column);
        push(format!("layers.{l}.attn_out"), vec![h, h], TpSplit::Row);
        push(format!("layers.{l}.ffn_up"), vec![h, up], TpSplit::Column);
        push(format!("layers.{l}.ffn_down"), vec![f, h], TpSplit::Row);
    }
    push("final_norm".into(), vec![h], TpSplit::None);
    if !cfg.tie_embeddings {
        push("head".into(), vec![h, cfg.vocab_size], TpSplit::Column);
    }
    Ok(out)
}

/// Layer index of a generated parameter name, `None` for embedding, final norm and head.
pub fn layer_of(name: &str) -> Option<usize> {
    name.strip_prefix("layers.")?
        .split('.')
        .next()?
        .parse()
        .ok()
}

/// Parameters as held by one tensor-parallel rank: splittable matrices take
/// their shard shape, everything else is replicated whole.
pub fn tp_local_params(params: &[ParamSpec], tp_degree: usize) -> Result<Vec<ParamSpec>> {
    params
        .iter()
        .map(|p| {
            if tp_degree <= 1 || !p.is_matrix() || p.tp_split == TpSplit::None {
                return Ok(p.clone());
            }
            let shard = tp_shard(p, tp_degree)?.swap_remove(0);
            Ok(ParamSpec::new(p.id, p.name.clone(), shard.shard_shape, p.dtype_bytes, p.tp_split))
        })
        .collect()
}

/// Tensor-parallel matrices handled by the micro-group scheduler.
///
/// Vocabulary-sized embedding and output head are left to an element-wise
/// optimizer, as is usual for Muon, and never enter micro groups.
pub fn micro_group_params(params: &[ParamSpec]) -> Vec<ParamSpec> {
    params
        .iter()
        .filter(|p| p.is_matrix() && p.tp_split != TpSplit::None)
        .filter(|p| p.name != "embed" && p.name != "head")
        .cloned()
        .collect()
}
