//! Error type shared by every module of the engine.

/// Engine-wide error enumeration.
///
/// Variants map one-to-one onto the failure classes surfaced by the CLI:
/// domain/shape/parse/size problems are data errors, `Conditioning` is a
/// numerical failure, and `NsaoViolated` signals that the market admits a
/// strictly acceptable opportunity so no finite price bound exists.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Index-aligned inputs disagree in length or labeling.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scenario file, sample file or measure spec failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// The instance exceeds a documented size cap (e.g. the subset oracle).
    #[error("size error: {0}")]
    Size(String),

    /// A solver or transform broke down numerically.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// The no-strictly-acceptable-opportunities condition fails, so the
    /// requested price bound is unbounded.
    #[error("no-strictly-acceptable-opportunities condition violated: {0}")]
    NsaoViolated(String),

    /// The combination of inputs is valid but deliberately out of scope.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Crate-wide result alias.
pub type Result<V> = std::result::Result<V, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
