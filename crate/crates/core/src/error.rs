use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid volatility band: need 0 < sigma_low <= sigma_high < inf, got sigma_low={low}, sigma_high={high}")]
    InvalidBand { low: f64, high: f64 },

    #[error("invalid time grid: need horizon > 0 finite and steps >= 1, got horizon={horizon}, steps={steps}")]
    InvalidGrid { horizon: f64, steps: usize },

    #[error("non-finite input {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("control density {value} at interval {index} lies outside the band [{low}, {high}]")]
    ControlOutOfBand {
        index: usize,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("control lattice of {requested} controls exceeds the cap of {cap}")]
    LatticeTooLarge { requested: u128, cap: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("ensemble needs {required} bytes of noise storage, over the budget of {budget} bytes; use streaming mode")]
    MemoryBudget { required: u128, budget: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite payoff {value} on scenario (control {control}, replica {replica})")]
    NonFinitePayoff {
        control: usize,
        replica: usize,
        value: f64,
    },

    #[error("non-finite coefficient value {value} at outer index {i}, inner index {j}, x={x}")]
    NonFiniteCoefficient { i: usize, j: usize, x: f64, value: f64 },

    #[error("unknown coefficient family `{0}`")]
    UnknownFamily(String),

    #[error("family `{family}`: {message}")]
    FamilyParameter { family: String, message: String },
}
