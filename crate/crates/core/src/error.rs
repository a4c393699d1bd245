use thiserror::Error;

use crate::bids::BidderId;

/// Every failure the engine can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quantity {x} exceeds the curve's maximum {max}")]
    InfeasibleQuantity { x: f64, max: f64 },
    #[error("increment grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid bid curve: {0}")]
    InvalidBid(String),
    #[error("model error: {0}")]
    ModelError(String),
    #[error("solver stalled after {iterations} pivots")]
    SolverStalled { iterations: usize },
    #[error("{count} indicator groups exceed the limit of {limit}")]
    TooManyIndicators { count: usize, limit: usize },
    #[error("clearing is infeasible")]
    ClearingInfeasible,
    #[error("removing winner {0} leaves the market infeasible")]
    PivotInfeasible(BidderId),
    #[error("rule {rule} is not supported here: {reason}")]
    RuleUnsupported { rule: String, reason: String },
    #[error("{count} winners exceed the limit of {limit}")]
    TooManyWinners { count: usize, limit: usize },
    #[error("{count} bidders exceed the limit of {limit}")]
    TooManyBidders { count: usize, limit: usize },
    #[error("{count} types exceed the limit of {limit}")]
    TooManyTypes { count: usize, limit: usize },
    #[error("constraint generation did not converge within {0} iterations")]
    Diverged(usize),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
