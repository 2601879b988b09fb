use thiserror::Error;

/// Failures raised by the filter algebra, the matrix routines and the runners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("root {re}{im:+}i lies on the unit circle")]
    UnitCircleRoot { re: f64, im: f64 },

    #[error("non-causal filter: {zeros} zeros but only {poles} poles")]
    NonCausal { zeros: usize, poles: usize },

    #[error("complex root {re}{im:+}i has no conjugate partner")]
    MissingConjugate { re: f64, im: f64 },

    #[error("filter is not stable (largest pole modulus {max_modulus})")]
    Unstable { max_modulus: f64 },

    #[error("closed loop is unstable (largest characteristic root modulus {max_modulus})")]
    UnstableClosedLoop { max_modulus: f64 },

    #[error("filter must be biproper")]
    NotBiproper,

    #[error("plant must be strictly proper with relative degree one")]
    NotRelativeDegreeOne,

    #[error("filter has poles away from the origin; a FIR filter is required")]
    NotFir,

    #[error("rank deficient {what}")]
    RankDeficient { what: String },

    #[error("overflow budget exceeded at n = {n}; largest safe n is {safe_n}")]
    OverflowBudget { n: usize, safe_n: usize },

    #[error("matrix dimension {n} exceeds the cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("{usable} usable lengths in the grid, at least {required} required")]
    InsufficientData { usable: usize, required: usize },

    #[error("numerical failure at n = {n} (condition estimate {condition:e})")]
    NumericalFailure { n: usize, condition: f64 },

    #[error("distortion {distortion} is not below the stationary source variance {variance}")]
    InfeasibleDistortion { distortion: f64, variance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
