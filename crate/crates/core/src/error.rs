use thiserror::Error;

pub type Result<T, E = PirError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PirError {
    #[error("modulus {0} is not a prime below 2^32")]
    NotPrime(u64),

    #[error("symbol {value} is outside [0, {q})")]
    SymbolOutOfRange { value: u64, q: u64 },

    #[error("zero has no multiplicative inverse")]
    ZeroInverse,

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("field of size {q} is too small for {n} databases (need q > N)")]
    FieldTooSmall { q: u64, n: usize },

    #[error("evaluation points are not distinct nonzero field elements")]
    DuplicatePoints,

    #[error("generator matrix is not MDS: some set of K columns is linearly dependent")]
    NotMds,

    #[error("C({n},{k}) = {subsets} column subsets exceeds the verification limit")]
    TooLargeToVerify { n: usize, k: usize, subsets: u128 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("answers do not match the query plan: {0}")]
    InconsistentAnswers(String),

    #[error("invalid failure set: {0}")]
    InvalidFailureSet(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
