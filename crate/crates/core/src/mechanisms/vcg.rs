//! VCG with the Clarke pivot.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{build_outcome, clear_feasible, PaymentOutcome, Rule};
use crate::bids::{BidProfile, BidderId, Cost};
use crate::error::{Error, Result};
use crate::markets::{clear, ClearingResult, Market};

/// `J(B_{-l})`.
pub fn clarke_pivot_term(market: &Market, profile: &BidProfile, l: BidderId) -> Result<Cost> {
    if profile.index_of(l).is_none() {
        return Err(Error::ModelError(format!("unknown bidder {l}")));
    }
    let rest: Vec<BidderId> = profile.ids().into_iter().filter(|&id| id != l).collect();
    Ok(clear(market, profile, &rest)?.objective)
}

/// Revealed VCG utilities `J(B_{-l}) - J(B)` of the winners of `clearing`.
pub fn vcg_revealed(
    market: &Market,
    profile: &BidProfile,
    clearing: &ClearingResult,
) -> Result<BTreeMap<BidderId, f64>> {
    let j = clearing.objective.finite().ok_or(Error::ClearingInfeasible)?;
    let pivots: Vec<(BidderId, Result<Cost>)> = clearing
        .winners
        .par_iter()
        .map(|&l| (l, clarke_pivot_term(market, profile, l)))
        .collect();
    let mut out = BTreeMap::new();
    for (l, pivot) in pivots {
        match pivot? {
            Cost::Finite(v) => {
                out.insert(l, (v - j).max(0.0));
            }
            Cost::Infinite => return Err(Error::PivotInfeasible(l)),
        }
    }
    Ok(out)
}

pub fn vcg(market: &Market, bids: &BidProfile, true_costs: &BidProfile) -> Result<PaymentOutcome> {
    let clearing = clear_feasible(market, bids)?;
    let ubar = vcg_revealed(market, bids, &clearing)?;
    let mut payments = BTreeMap::new();
    for (&l, u) in &ubar {
        let bid = bids.get(l).expect("winner is in the profile");
        payments.insert(l, bid.eval_clamped(clearing.quantity(l))? + u);
    }
    build_outcome(Rule::Vcg, clearing, bids, true_costs, payments)
}
