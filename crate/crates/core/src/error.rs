use thiserror::Error;

use crate::tree::{PatchPath, PrivilegedTree};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What was built before a window ran out.
#[derive(Debug, Clone)]
pub enum Partial {
    None,
    Tree(Box<PrivilegedTree>),
    Path(PatchPath),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cell {0:?} lies outside the trusted window")]
    OutOfWindow(Vec<i64>),

    #[error("substitution is not primitive")]
    NotPrimitive,

    #[error("no iterate of the substitution admits a legal two-sided seed")]
    NoFixedSeed,

    #[error("continued fraction terms cannot settle floor(n*alpha) at n = {n}; supply more terms")]
    InsufficientPrecision { n: i64 },

    #[error("unknown builtin system `{0}`")]
    UnknownSystem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fewer than two occurrences")]
    TooFewOccurrences,

    #[error("no second occurrence inside the window (level {level})")]
    WindowExhausted { level: usize, partial: Partial },

    #[error("patch has no occurrence in the window interior")]
    NoInteriorSites,

    #[error("paths belong to different trees")]
    DisjointRoots,

    #[error("oracles have different dimensions ({0} vs {1})")]
    DifferentDimensions(usize, usize),

    #[error("vertices are not connected in the approximation graph")]
    Disconnected,

    #[error("window labeling is periodic with period {0:?}")]
    PeriodicInput(Vec<i64>),

    #[error("derived patch claimed by two parents at level {level}")]
    ParentConflict { level: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn exhausted(level: usize) -> Self {
        Error::WindowExhausted {
            level,
            partial: Partial::None,
        }
    }
}
