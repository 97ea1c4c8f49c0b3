use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}: non-finite {loss} loss")]
    TrainingDiverged { epoch: usize, loss: &'static str },

    #[error("search never produced a feasible allocation")]
    InfeasibleSearch,

    #[error("exhaustive search over {count} subsets exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("metric {0} is undefined: zero denominator")]
    UndefinedMetric(&'static str),

    #[error("cannot compare allocations with budgets {left} and {right}")]
    InvalidComparison { left: usize, right: usize },
}

macro_rules! invalid_param {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}

macro_rules! invalid_input {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidInput(alloc::format!($($arg)*))
    };
}

pub(crate) use invalid_input;
pub(crate) use invalid_param;
