//! Reverse-auction mechanism engine.
//!
//! Clears procurement markets (single good, multi-type, DC network), prices
//! the outcome under pay-as-bid, LMP, VCG and bidder-optimal core-selecting
//! rules, and checks core membership, supermodularity and manipulation
//! resistance.

pub mod bids;
pub mod coreanalysis;
pub mod error;
pub mod generate;
pub mod markets;
pub mod mechanisms;
pub mod scenario;
pub mod solver;

pub use bids::{BidCurve, BidProfile, BidderId, Cost};
pub use error::{Error, Result};
pub use markets::{ClearingResult, ClearingStatus, Coalition, Hook, Market};
pub use mechanisms::{PaymentOutcome, Rule};

/// Feasibility tolerance used by solvers and allocation snapping.
pub const FEAS_TOL: f64 = 1e-9;
/// Optimality and duality tolerance.
pub const OPT_TOL: f64 = 1e-6;
/// Tolerance on blocking and attack margins, in money units.
pub const MARGIN_TOL: f64 = 1e-6;

/// Rounds a money or quantity value to the 1e-6 grid used at the API boundary.
pub fn round6(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}
