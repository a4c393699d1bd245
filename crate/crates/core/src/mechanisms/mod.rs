//! Payment rules.

mod bocs;
mod ccg;
mod lmp;
mod vcg;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use bocs::bocs_direct;
pub use ccg::{ccg, CcgState, CcgStep, GeneratedConstraint};
pub use lmp::lmp;
pub use vcg::{clarke_pivot_term, vcg, vcg_revealed};

use crate::bids::{BidProfile, BidderId};
use crate::error::{Error, Result};
use crate::markets::{clear_all, ClearingResult, Market};

/// Core solves only consider winners; this bounds the 2^|W| clears.
pub const MAX_CORE_WINNERS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    PayAsBid,
    Lmp,
    Vcg,
    Bocs,
    Ccg,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::PayAsBid, Rule::Lmp, Rule::Vcg, Rule::Bocs, Rule::Ccg];

    pub fn name(self) -> &'static str {
        match self {
            Rule::PayAsBid => "payasbid",
            Rule::Lmp => "lmp",
            Rule::Vcg => "vcg",
            Rule::Bocs => "bocs",
            Rule::Ccg => "ccg",
        }
    }

    /// Whether payments are drawn from the revealed core.
    pub fn is_core_selecting(self) -> bool {
        matches!(self, Rule::Bocs | Rule::Ccg)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Rule> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::RuleUnsupported { rule: s.to_string(), reason: "unknown rule".into() })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaymentOutcome {
    pub rule: Rule,
    pub clearing: ClearingResult,
    pub payments: BTreeMap<BidderId, f64>,
    /// `p - b(x)`.
    pub revealed: BTreeMap<BidderId, f64>,
    /// `p - c(x)`.
    pub utilities: BTreeMap<BidderId, f64>,
    /// `-sum p - d`.
    pub operator: f64,
    pub total: f64,
    /// Bidder ids in profile order, for display.
    pub order: Vec<BidderId>,
    pub trace: Option<CcgState>,
}

impl PaymentOutcome {
    pub fn payment(&self, id: BidderId) -> f64 {
        self.payments.get(&id).copied().unwrap_or(0.0)
    }

    pub fn utility(&self, id: BidderId) -> f64 {
        self.utilities.get(&id).copied().unwrap_or(0.0)
    }

    pub fn revealed_utility(&self, id: BidderId) -> f64 {
        self.revealed.get(&id).copied().unwrap_or(0.0)
    }
}

/// Assembles utilities from payments. Bidders missing from `payments` are paid 0.
pub(crate) fn build_outcome(
    rule: Rule,
    clearing: ClearingResult,
    bids: &BidProfile,
    true_costs: &BidProfile,
    payments: BTreeMap<BidderId, f64>,
) -> Result<PaymentOutcome> {
    let mut pay = BTreeMap::new();
    let mut revealed = BTreeMap::new();
    let mut utilities = BTreeMap::new();
    for (id, bid) in bids.iter() {
        let x = clearing.quantity(id);
        let p = payments.get(&id).copied().unwrap_or(0.0);
        let cost = true_costs
            .get(id)
            .ok_or_else(|| Error::ModelError(format!("no true cost for bidder {id}")))?;
        pay.insert(id, p);
        revealed.insert(id, p - bid.eval_clamped(x)?);
        utilities.insert(id, p - cost.eval_clamped(x)?);
    }
    let total: f64 = pay.values().sum();
    Ok(PaymentOutcome {
        rule,
        operator: -total - clearing.second_stage,
        clearing,
        payments: pay,
        revealed,
        utilities,
        total,
        order: bids.ids(),
        trace: None,
    })
}

pub(crate) fn clear_feasible(market: &Market, bids: &BidProfile) -> Result<ClearingResult> {
    let c = clear_all(market, bids)?;
    if !c.is_feasible() {
        return Err(Error::ClearingInfeasible);
    }
    Ok(c)
}

pub fn pay_as_bid(market: &Market, bids: &BidProfile, true_costs: &BidProfile) -> Result<PaymentOutcome> {
    let clearing = clear_feasible(market, bids)?;
    let mut payments = BTreeMap::new();
    for (id, bid) in bids.iter() {
        payments.insert(id, bid.eval_clamped(clearing.quantity(id))?);
    }
    build_outcome(Rule::PayAsBid, clearing, bids, true_costs, payments)
}

/// Runs any rule.
pub fn run(rule: Rule, market: &Market, bids: &BidProfile, true_costs: &BidProfile) -> Result<PaymentOutcome> {
    match rule {
        Rule::PayAsBid => pay_as_bid(market, bids, true_costs),
        Rule::Lmp => lmp(market, bids, true_costs),
        Rule::Vcg => vcg(market, bids, true_costs),
        Rule::Bocs => bocs_direct(market, bids, true_costs),
        Rule::Ccg => ccg(market, bids, true_costs),
    }
}
