use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("layout error: parameter `{name}` ({numel} elements) exceeds bucket capacity {capacity}")]
    ParamExceedsBucket {
        name: String,
        numel: u64,
        capacity: u64,
    },

    #[error("sharding error: {0}")]
    Sharding(String),

    #[error("parameter `{0}` is not tensor-parallel splittable")]
    UnsupportedSplit(String),

    #[error("cost error: {0}")]
    Cost(String),

    #[error("invalid parameter: {0}")]
    InvalidArgument(String),

    #[error("unschedulable: parameter `{name}` (id {id}) has load {load} exceeding capacity {capacity}")]
    Unschedulable {
        id: usize,
        name: String,
        load: f64,
        capacity: f64,
    },

    #[error("undefined load-balance ratio: all values are zero")]
    UndefinedRatio,

    #[error("plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("unknown collective primitive `{0}`")]
    UnknownPrimitive(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}
