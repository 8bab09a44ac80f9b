use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid datum: {0}")]
    Datum(String),
    #[error("not coprime: {0}")]
    NotCoprime(String),
    #[error("bad prime: {0}")]
    Prime(String),
    #[error("precision infeasible: {0}")]
    Precision(String),
    #[error("division by zero")]
    DivByZero,
    #[error("non-unit: {0}")]
    NonUnit(String),
    #[error("series: {0}")]
    Series(String),
    #[error("not an eigenform: {0}")]
    NotEigen(String),
    #[error("insufficient precision: {0}")]
    Insufficient(String),
    #[error("linear algebra: {0}")]
    Linear(String),
    #[error("non-ordinary prime: {0}")]
    NonOrdinary(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
