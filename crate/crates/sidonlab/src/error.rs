//! Error taxonomy shared by every module.
//!
//! Three kinds of failure are kept apart because callers react to them
//! differently:
//!
//! * **domain** — the input is malformed or outside an operation's
//!   contract (mixed character families, the identity where it is
//!   forbidden, a phase that is not unimodular, …);
//! * **capacity** — the input is valid but the requested exact
//!   computation would exceed the configured search budget;
//! * **extraction** — a randomized extraction exhausted its attempt
//!   budget without producing a certified output.

use crate::relations::EpsilonRelation;
use std::fmt;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone)]
pub enum Error {
    /// Input violates a precondition (bad value, mixed families, …).
    Domain(String),
    /// The set is not quasi-independent; carries a verified witness
    /// relation so the caller can inspect why.
    NotQuasiIndependent(EpsilonRelation),
    /// Exact computation would exceed the configured budget.
    Capacity(String),
    /// A rigorous certificate of the requested kind cannot be produced
    /// for this character family.
    UnsupportedCertification(String),
    /// A Las Vegas extraction ran out of attempts.
    Extraction { attempts: u32, reason: String },
    /// An internal consistency check failed; indicates a bug, never
    /// bad input.
    Internal(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::NotQuasiIndependent(rel) => write!(
                f,
                "domain error: set is not quasi-independent (witness relation of height {})",
                rel.height()
            ),
            Error::Capacity(msg) => write!(f, "capacity error: {msg}"),
            Error::UnsupportedCertification(msg) => {
                write!(f, "unsupported certification: {msg}")
            }
            Error::Extraction { attempts, reason } => {
                write!(f, "extraction failed after {attempts} attempts: {reason}")
            }
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    /// Convenience constructor for domain errors.
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Convenience constructor for capacity errors.
    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
}
