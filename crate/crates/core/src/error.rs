use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("value {value} does not fit in {bits}-bit {}", if *.signed { "signed" } else { "unsigned" })]
    BitWidth { value: i64, bits: u8, signed: bool },
    #[error("invalid scale {0}: scales must be positive and finite")]
    Scale(f64),
    #[error("invalid network: {0}")]
    Network(String),
    #[error("missing weights for layer `{0}`")]
    MissingWeights(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("invalid macro configuration: {0}")]
    MacroConfig(String),
    #[error("geometry overflow: {0}")]
    Geometry(String),
    #[error("row-step budget exceeded: {active} rows active, at most {budget} allowed")]
    RowBudget { active: usize, budget: usize },
    #[error("channel count {channels} of `{layer}` is not divisible by {ratio}")]
    Divisibility { layer: String, channels: usize, ratio: usize },
    #[error("transform rejected: {0}")]
    Transform(String),
    #[error("layer `{0}` has no placement")]
    Unplaced(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("gradient set mismatch: {0}")]
    GradientSet(String),
    #[error("training diverged at epoch {epoch}: loss {loss} exceeded 10x the initial loss {initial} for 3 consecutive epochs")]
    Diverged { epoch: usize, loss: f64, initial: f64 },
    /// `needed` and `available` share a unit (cells or bits) named by context.
    #[error("{kind} capacity exceeded: {needed} needed, {available} available (deficit {})", .needed.saturating_sub(*.available))]
    Capacity { kind: String, needed: u64, available: u64 },
    #[error("invalid mapping plan: {0}")]
    Plan(String),
    #[error("invalid system configuration: {0}")]
    System(String),
    #[error("workload mismatch: `{0}` vs `{1}`")]
    WorkloadMismatch(String, String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
}
