use alloc::string::String;
use thiserror::Error;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A tensor did not have the shape a layer expects.
    #[error("layer {layer}: shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: usize,
        expected: String,
        got: String,
    },

    /// A network or encoder specification is internally inconsistent.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// A configuration value is out of its legal range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A batch sample produced a non-finite loss during backpropagation.
    #[error("non-finite loss for batch sample {sample}")]
    NonFiniteLoss { sample: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// An operation that needs data was handed none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Zero-padding to a width smaller than the current one.
    #[error("cannot pad {current} features down to {target}")]
    PadTooNarrow { current: usize, target: usize },

    /// Too few rows to split.
    #[error("dataset has {rows} rows, need at least {min}")]
    TooFewRows { rows: usize, min: usize },

    /// A class does not have enough rows for stratified sampling.
    #[error("class {class} has {available} rows, need {required}")]
    ClassTooSmall {
        class: usize,
        available: usize,
        required: usize,
    },

    /// No draw count can reach the requested number of dissimilar subsets.
    #[error("sampling plan infeasible: best expected dissimilar count is {max_expected}")]
    InfeasiblePlan { max_expected: f64 },

    /// The draw budget ran out before enough dissimilar subsets were kept.
    #[error("retained only {retained} of {required} dissimilar subsets")]
    TooFewRetained { retained: usize, required: usize },

    /// A hyperparameter value escaped its declared bounds.
    #[error("hyperparameter {index} = {value} outside [{min}, {max}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    /// A split whose training side holds a single class cannot be scored.
    #[error("degenerate split: training side holds a single class")]
    DegenerateSplit,

    /// Encoded meta-features were produced by a different encoder spec.
    #[error("encoder spec hash mismatch: model {expected:#018x}, meta {got:#018x}")]
    SpecHashMismatch { expected: u64, got: u64 },

    /// An evaluation budget below the minimum the operation needs.
    #[error("budget {budget} below minimum {min}")]
    BudgetTooSmall { budget: usize, min: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
