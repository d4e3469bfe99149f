use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signature: {0}")]
    Signature(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("value `{value}` is not in the domain of `{feature}`")]
    UnknownValue { feature: String, value: String },
    #[error("feature `{0}` defined twice on one node")]
    DuplicateFeature(String),
    #[error("notation: {0}")]
    Notation(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("template `{template}`: {message}")]
    Validation { template: String, message: String },
    #[error("empty input")]
    EmptyInput,
    #[error("node {ancestor} does not dominate node {descendant}")]
    NotAncestor { ancestor: String, descendant: String },
    #[error("{nodes} description nodes exceed the oracle bound of {bound}")]
    OracleTooLarge { nodes: usize, bound: usize },
    #[error("description is not saturated")]
    NotSaturated,
    #[error("no linearization: {0}")]
    NoLinearization(String),
    #[error("interpretation: {0}")]
    Interpretation(String),
    #[error("tree: {0}")]
    Tree(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Signature(_) => "SIGNATURE_ERROR",
            Error::UnknownFeature(_) => "UNKNOWN_FEATURE",
            Error::UnknownValue { .. } => "UNKNOWN_VALUE",
            Error::DuplicateFeature(_) => "DUPLICATE_FEATURE",
            Error::Notation(_) => "NOTATION_ERROR",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Validation { .. } => "VALIDATION_ERROR",
            Error::EmptyInput => "EMPTY_INPUT",
            Error::NotAncestor { .. } => "NOT_ANCESTOR",
            Error::OracleTooLarge { .. } => "ORACLE_TOO_LARGE",
            Error::NotSaturated => "NOT_SATURATED",
            Error::NoLinearization(_) => "NO_LINEARIZATION",
            Error::Interpretation(_) => "BAD_INTERPRETATION",
            Error::Tree(_) => "BAD_TREE",
            Error::Internal(_) => "INTERNAL",
            Error::Io(_) => "IO_ERROR",
        }
    }

    pub(crate) fn from_json(err: &serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
