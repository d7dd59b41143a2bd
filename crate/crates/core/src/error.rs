use thiserror::Error;

/// Errors raised by the market model, the belief engine and the mechanism.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    /// One or more configuration fields violate their invariants.
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("invalid cost model: {0}")]
    InvalidCostModel(String),

    #[error("cost {cost} outside support [{c_min}, {c_max}]")]
    CostOutOfSupport { cost: f64, c_min: f64, c_max: f64 },

    #[error("virtual cost {value} outside range [{lo}, {hi}]")]
    VirtualCostOutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("illegal free-sample count {0} (must be 0 or in 2..=M)")]
    IllegalSampleCount(usize),

    #[error("maximum free samples must be at least 2, got {0}")]
    MaxSamplesTooSmall(usize),

    #[error("sample variance must be present iff m >= 2 (m = {m}, present = {present})")]
    SampleVariancePresence { m: usize, present: bool },

    #[error("sample variance must be finite and nonnegative, got {0}")]
    NegativeSampleVariance(f64),

    #[error("belief-shift margin {name} = {value} outside ({lo}, {hi})")]
    ShiftOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("empty market")]
    EmptyMarket,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),

    #[error("allocation is zero for every seller")]
    ZeroAllocation,

    #[error("seller {0} has positive weight but no purchased samples")]
    WeightWithoutSamples(usize),

    #[error("reported winner does not win: score {score} exceeds rival score {rival}")]
    NotWinning { score: f64, rival: f64 },

    #[error("strategy profile has length {got}, expected {expected}")]
    ProfileLength { got: usize, expected: usize },

    #[error("n_rounds must be at least {min}, got {got}")]
    TooFewRounds { min: usize, got: usize },

    #[error("empty grid")]
    EmptyGrid,
}

pub type Result<T> = std::result::Result<T, MarketError>;
