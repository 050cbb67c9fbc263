use thiserror::Error;

use crate::BusId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid case: {0}")]
    Semantic(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("laplacian is rank deficient beyond one; smallest eigenvalues {smallest:e}, {second:e}")]
    RankDeficient { smallest: f64, second: f64 },

    #[error("index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("node set must not be empty")]
    EmptySet,

    #[error("k = {k} is out of range 1..={n}")]
    InvalidK { k: usize, n: usize },

    #[error("exhaustive search needs C({n},{k}) = {combinations} evaluations, budget is {budget}")]
    BudgetExceeded {
        n: usize,
        k: usize,
        combinations: u128,
        budget: u128,
    },

    #[error("eliminated block of the admittance matrix is singular")]
    SingularBlock,

    #[error("non-finite state at step {step} (t = {time:.4} s)")]
    NumericalBlowUp { step: usize, time: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("riccati iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("input hessian is indefinite (smallest eigenvalue {0:e})")]
    IndefiniteHessian(f64),

    #[error("model is not stabilizable: closed-loop spectral radius {0}")]
    Unstabilizable(f64),

    #[error("operating point did not converge: {0}")]
    OperatingPoint(String),

    #[error("scenario with generator {bus} disturbed failed: {source}")]
    Scenario { bus: BusId, source: Box<Error> },

    #[error("invalid configuration: {0}")]
    Config(String),
}
