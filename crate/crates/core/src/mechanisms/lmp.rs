//! Locational marginal pricing from the nodal balance duals.

use std::collections::BTreeMap;

use super::{build_outcome, clear_feasible, PaymentOutcome, Rule};
use crate::bids::{BidCurve, BidProfile};
use crate::error::{Error, Result};
use crate::markets::{Market, MarketFamily};

pub fn lmp(market: &Market, bids: &BidProfile, true_costs: &BidProfile) -> Result<PaymentOutcome> {
    let unsupported = |reason: &str| Error::RuleUnsupported { rule: "lmp".into(), reason: reason.into() };
    let MarketFamily::Network(net) = &market.family else {
        return Err(unsupported("nodal prices exist only in network markets"));
    };
    for (id, b) in bids.iter() {
        let convex = matches!(b, BidCurve::Quadratic { .. } | BidCurve::Zero { .. });
        if !convex {
            return Err(unsupported(&format!("bidder {id} has a nonconvex bid")));
        }
    }
    let clearing = clear_feasible(market, bids)?;
    let prices = clearing
        .nodal_prices
        .clone()
        .ok_or_else(|| Error::Internal("network clearing returned no duals".into()))?;
    let mut payments = BTreeMap::new();
    for id in bids.ids() {
        let node = net.node_of(id).expect("profile checked against market");
        payments.insert(id, prices[&node] * clearing.quantity(id));
    }
    build_outcome(Rule::Lmp, clearing, bids, true_costs, payments)
}
