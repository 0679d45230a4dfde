//! Crate error type.

/// Where an expression evaluation left its domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    /// `log` of a non-positive value.
    LogNonPositive,
    /// `sqrt` of a negative value.
    SqrtNegative,
    /// Division by zero.
    DivByZero,
    /// Power of a negative base with a non-integer exponent.
    PowNegativeBase,
    /// Evaluation produced a non-finite value.
    NonFinite,
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DomainKind::LogNonPositive => "log of a non-positive value",
            DomainKind::SqrtNegative => "sqrt of a negative value",
            DomainKind::DivByZero => "division by zero",
            DomainKind::PowNegativeBase => "negative base with non-integer exponent",
            DomainKind::NonFinite => "non-finite value",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdent { name: String, offset: usize },

    #[error("domain error at byte {offset} in `{node}`: {kind}")]
    Domain {
        offset: usize,
        node: String,
        kind: DomainKind,
    },

    #[error("invalid system: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("enumeration cap exceeded: N^n = {needed:.3e} words exceed cap {cap}")]
    CapExceeded { needed: f64, cap: u64 },

    #[error("orbit escaped [0,1]^2 applying map {map}: reached ({x}, {y})")]
    Escape { map: usize, x: f64, y: f64 },

    #[error("pressure not bracketed: P_n(0) <= 0 for this system")]
    NotBracketed,

    #[error("leaf solution exceeded |y| = {guard} near x = {x}")]
    LeafBlowup { x: f64, guard: f64 },

    #[error("strong-stable series tail not certifiable at ({x}, {y}); point too close to the singular set")]
    SeriesNotCertified { x: f64, y: f64 },

    #[error("validation failed for family {family}: {detail}")]
    ValidationFailed { family: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
