use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("characteristic left the disc at t = {t:e}")]
    Escape { t: f64 },
    #[error("step size underflow near t = {t:e}")]
    Stiffness { t: f64 },
    #[error("specification violates {assumption}: {detail}")]
    SpecInvalid { assumption: String, detail: String },
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("weight is not integrable: {0}")]
    NonIntegrableWeight(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no contraction: observed ratio {ratio:.4}")]
    NoContraction { ratio: f64 },
    #[error("no convergence after {iterations} iterations (last ratio {ratio:.4})")]
    NoConvergence { iterations: usize, ratio: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("accuracy error: {0}")]
    Accuracy(String),
    #[error("not a family member: {0}")]
    NonMember(String),
    #[error("invalid base solution: {0}")]
    InvalidBase(String),
    #[error("division by zero: {0}")]
    Division(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown identifier `{name}` at line {line}, column {column}")]
    UnknownIdentifier { name: String, line: usize, column: usize },
    #[error("exponent must be a real literal (line {line}, column {column})")]
    NonLiteralExponent { line: usize, column: usize },
    #[error("problem file: {0}")]
    Problem(String),
}

impl Error {
    pub fn spec(assumption: &str, detail: impl Into<String>) -> Self {
        Error::SpecInvalid { assumption: assumption.to_string(), detail: detail.into() }
    }

    /// True for failures of the iterative solvers (as opposed to bad input).
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::NoContraction { .. }
                | Error::NoConvergence { .. }
                | Error::Stiffness { .. }
                | Error::Accuracy(_)
                | Error::Range(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
