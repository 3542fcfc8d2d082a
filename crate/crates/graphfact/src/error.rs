use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),
    #[error("inhomogeneous element where a homogeneous one is required")]
    Inhomogeneous,
    #[error("variable sets do not match")]
    VariableMismatch,
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("not a Maurer-Cartan element: {0}")]
    NotMaurerCartan(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("image leaves the codomain sector: {0}")]
    SectorEscape(String),
    #[error("differential does not square to zero: {0}")]
    NotDifferential(String),
    #[error("filtration violated by {0}")]
    Filtration(String),
    #[error("unbounded sector: {0}")]
    Unbounded(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
