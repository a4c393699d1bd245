//! Core constraint generation: add one blocking-coalition row per round.

use std::collections::BTreeMap;

use super::bocs::UtilityPolytope;
use super::{build_outcome, clear_feasible, vcg_revealed, PaymentOutcome, Rule, MAX_CORE_WINNERS};
use crate::bids::{BidProfile, BidderId};
use crate::coreanalysis::find_blocking_coalition_at;
use crate::error::{Error, Result};
use crate::markets::{Coalition, Market};
use crate::MARGIN_TOL;

/// `sum_{blocked} u <= rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedConstraint {
    pub blocked: Coalition,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CcgStep {
    pub k: usize,
    /// Candidate revealed utilities of the winners.
    pub revealed: BTreeMap<BidderId, f64>,
    /// Total-utility bound of the LP that produced `revealed`; none at k = 0.
    pub nu: Option<f64>,
    /// Most blocking coalition against `revealed`.
    pub coalition: Coalition,
    /// Its inflated clearing value.
    pub z: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CcgState {
    pub steps: Vec<CcgStep>,
    pub constraints: Vec<GeneratedConstraint>,
}

impl CcgState {
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }
}

pub fn ccg(market: &Market, bids: &BidProfile, true_costs: &BidProfile) -> Result<PaymentOutcome> {
    let clearing = clear_feasible(market, bids)?;
    let w = clearing.winners.clone();
    if w.len() > MAX_CORE_WINNERS {
        return Err(Error::TooManyWinners { count: w.len(), limit: MAX_CORE_WINNERS });
    }
    let j = clearing.objective.finite().expect("feasible");
    let vcg_map = vcg_revealed(market, bids, &clearing)?;
    let vcg: Vec<f64> = w.iter().map(|l| vcg_map[l]).collect();
    let mut u = vcg.clone();
    let mut nu = None;
    let mut state = CcgState::default();
    let cap = (1usize << w.len()) + 8;

    for k in 0..=cap {
        let ubar: BTreeMap<BidderId, f64> = w.iter().cloned().zip(u.iter().cloned()).collect();
        let block = find_blocking_coalition_at(market, bids, j, &ubar)?;
        let blocked: Coalition = w.iter().filter(|l| !block.coalition.contains(l)).cloned().collect();
        state.steps.push(CcgStep {
            k,
            revealed: ubar,
            nu,
            coalition: block.coalition.clone(),
            z: block.z,
            margin: block.margin,
        });
        if blocked.is_empty() || block.margin <= MARGIN_TOL {
            let mut payments = BTreeMap::new();
            for (i, &l) in w.iter().enumerate() {
                let bid = bids.get(l).expect("winner is in the profile");
                payments.insert(l, bid.eval_clamped(clearing.quantity(l))? + u[i].max(0.0));
            }
            let mut out = build_outcome(Rule::Ccg, clearing, bids, true_costs, payments)?;
            out.trace = Some(state);
            return Ok(out);
        }
        let kept: f64 = w.iter().zip(&u).filter(|(l, _)| block.coalition.contains(l)).map(|(_, v)| v).sum();
        let rhs = (block.z - kept - j).max(0.0);
        state.constraints.push(GeneratedConstraint { blocked, rhs });
        let rows = state
            .constraints
            .iter()
            .map(|c| (c.blocked.iter().map(|l| w.iter().position(|x| x == l).unwrap()).collect(), c.rhs))
            .collect();
        let poly = UtilityPolytope { upper: vcg.clone(), rows };
        let v = poly.max_total()?;
        u = poly.closest_on_slice(v, &vcg)?;
        nu = Some(v);
    }
    Err(Error::Diverged(cap))
}
