use alloc::string::String;
use alloc::vec::Vec;

use crate::domain::{DeviceKind, Timestamp, Violation};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("dataset failed validation with {} violation(s)", .0.len())]
    InvalidDataset(Vec<Violation>),
    #[error("unknown radiator {0}")]
    UnknownRadiator(String),
    #[error("radiator {radiator}: no {kind} series")]
    MissingSeries { radiator: String, kind: DeviceKind },
    #[error("period {period} is not covered by samples")]
    UncoveredPeriod { period: usize },
    #[error("negative flow reading at {t}")]
    NegativeFlow { t: Timestamp },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("normal equations are singular; use a positive regularization parameter")]
    Singular,
    #[error(
        "L-curve has no corner over the grid: the problem is not ill-posed enough to need regularization"
    )]
    DegenerateLCurve,
    #[error("total consumption is zero")]
    ZeroTotal,
    #[error("reference fraction of subset {0} is zero")]
    ZeroReference(usize),
    #[error("subset {0} has zero consumption but nonzero uncertainty")]
    ZeroConsumption(usize),
    #[error("degenerate input distribution")]
    DegenerateDistribution,
}
