use thiserror::Error;

/// Errors surfaced by every module of the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown value `{value}` for variable `{var}`")]
    UnknownValue { var: String, value: String },
    #[error("malformed table for `{var}`: {reason}")]
    MalformedTable { var: String, reason: String },
    #[error("arc {parent} -> {child} would create a cycle")]
    Cycle { parent: String, child: String },
    #[error("arc {parent} -> {child} already exists")]
    ArcExists { parent: String, child: String },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown eval node {0}")]
    UnknownNode(usize),
    #[error("conditioning on `{var}` is not allowed at node {node}")]
    IllegalConditioning { node: usize, var: String },
    #[error("empty query")]
    EmptyQuery,
    #[error("unknown query handle {0}")]
    UnknownQuery(usize),
    #[error("query variable `{0}` is observed")]
    QueryObserved(String),
    #[error("conflicting evidence for `{var}`: already observed as `{existing}`")]
    ConflictingEvidence { var: String, existing: String },
    #[error("joint of {0} entries exceeds the enumeration guard")]
    SizeGuard(u128),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported circuit layout: {0}")]
    UnsupportedLayout(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
