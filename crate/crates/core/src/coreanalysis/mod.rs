//! Core membership, supermodularity, blocking coalitions and attacks.

mod attacks;
mod supermod;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use attacks::{
    deviation_bids, shill_splits, simulate_collusion, simulate_shill, AttackKind, AttackReport, Deviation,
};
pub use supermod::{
    check_m_supermodular, check_supermodularity, vcg_in_core_for_all_subsets, JTable, MSupermodReport, MWitness,
    SupermodWitness, MAX_SUPERMOD_BIDDERS,
};

use crate::bids::{BidProfile, BidderId, Cost};
use crate::error::{Error, Result};
use crate::markets::{clear, clear_all, ClearingResult, Coalition, Market};
use crate::mechanisms::{vcg, PaymentOutcome, MAX_CORE_WINNERS};
use crate::{MARGIN_TOL, OPT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    /// Built from true costs.
    Truthful,
    /// Built from submitted bids.
    Revealed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoreConstraint {
    pub coalition: Coalition,
    /// `J(profile_{-K}) - J(profile)`, infinite when removing `K` is infeasible.
    pub rhs: Cost,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoreConstraintSet {
    pub reference: Reference,
    pub base: f64,
    pub winners: Coalition,
    pub constraints: Vec<CoreConstraint>,
}

/// One constraint per nonempty `K` of the winners, ordered by bitmask over `W`.
pub fn core_constraints(market: &Market, profile: &BidProfile, reference: Reference) -> Result<CoreConstraintSet> {
    let clearing = clear_all(market, profile)?;
    core_constraints_for(market, profile, &clearing, reference)
}

pub(crate) fn core_constraints_for(
    market: &Market,
    profile: &BidProfile,
    clearing: &ClearingResult,
    reference: Reference,
) -> Result<CoreConstraintSet> {
    let base = clearing.objective.finite().ok_or(Error::ClearingInfeasible)?;
    let w = clearing.winners.clone();
    if w.len() > MAX_CORE_WINNERS {
        return Err(Error::TooManyWinners { count: w.len(), limit: MAX_CORE_WINNERS });
    }
    let ids = profile.ids();
    let results: Vec<Result<CoreConstraint>> = (1u64..1 << w.len())
        .into_par_iter()
        .map(|mask| {
            let k: Coalition = (0..w.len()).filter(|i| mask >> i & 1 == 1).map(|i| w[i]).collect();
            let rest: Vec<BidderId> = ids.iter().filter(|id| !k.contains(id)).cloned().collect();
            let rhs = match clear(market, profile, &rest)?.objective {
                Cost::Finite(v) => Cost::Finite((v - base).max(0.0)),
                Cost::Infinite => Cost::Infinite,
            };
            Ok(CoreConstraint { coalition: k, rhs })
        })
        .collect();
    Ok(CoreConstraintSet { reference, base, winners: w, constraints: results.into_iter().collect::<Result<_>>()? })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub coalition: Coalition,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoreCheck {
    pub in_core: bool,
    pub violations: Vec<Violation>,
    /// `u_0 + sum u + J`, zero for efficient outcomes.
    pub efficiency_gap: f64,
    /// Bidders with negative utility.
    pub irrational: Vec<BidderId>,
}

/// Membership in the reduced system over coalitions of winners.
pub fn in_core(outcome: &PaymentOutcome, cs: &CoreConstraintSet) -> Result<CoreCheck> {
    let utils = match cs.reference {
        Reference::Truthful => &outcome.utilities,
        Reference::Revealed => &outcome.revealed,
    };
    for l in &cs.winners {
        if !utils.contains_key(l) {
            return Err(Error::ModelError(format!("outcome does not cover winner {l}")));
        }
    }
    let sum: f64 = utils.values().sum();
    let efficiency_gap = outcome.operator + sum + cs.base;
    let irrational: Vec<BidderId> =
        utils.iter().filter(|(_, u)| **u < -OPT_TOL).map(|(l, _)| *l).collect();
    let mut violations = Vec::new();
    // Losers sit in every K of the full system with a zero right-hand side.
    for (l, u) in utils {
        if !cs.winners.contains(l) && *u > OPT_TOL {
            violations.push(Violation { coalition: vec![*l], lhs: *u, rhs: 0.0 });
        }
    }
    for c in &cs.constraints {
        if let Cost::Finite(rhs) = c.rhs {
            let lhs: f64 = c.coalition.iter().map(|l| utils[l]).sum();
            if lhs > rhs + OPT_TOL {
                violations.push(Violation { coalition: c.coalition.clone(), lhs, rhs });
            }
        }
    }
    Ok(CoreCheck {
        in_core: violations.is_empty() && irrational.is_empty() && efficiency_gap.abs() <= OPT_TOL,
        violations,
        efficiency_gap,
        irrational,
    })
}

/// Membership in the unreduced system over every coalition of the profile.
/// `u0` is the operator utility and `u` the bidder utilities.
pub fn in_core_full(table: &JTable, u0: f64, u: &BTreeMap<BidderId, f64>) -> Result<bool> {
    let ids = table.ids();
    let n = ids.len();
    let full = (1u64 << n) - 1;
    let Cost::Finite(jall) = table.value(full) else {
        return Err(Error::ClearingInfeasible);
    };
    let util = |i: usize| u.get(&ids[i]).copied().unwrap_or(0.0);
    if (0..n).any(|i| util(i) < -OPT_TOL) {
        return Ok(false);
    }
    let total: f64 = (0..n).map(util).sum();
    if (u0 + total + jall).abs() > OPT_TOL {
        return Ok(false);
    }
    for s in 0..full {
        if let Cost::Finite(js) = table.value(s) {
            let part: f64 = (0..n).filter(|i| s >> i & 1 == 1).map(util).sum();
            if u0 + part < -js - OPT_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// VCG outcome of the profile checked against its own core.
pub fn vcg_in_core(market: &Market, profile: &BidProfile) -> Result<(PaymentOutcome, CoreCheck)> {
    let out = vcg(market, profile, profile)?;
    let cs = core_constraints_for(market, profile, &out.clearing, Reference::Revealed)?;
    let check = in_core(&out, &cs)?;
    Ok((out, check))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Blocking {
    /// Support of the inflated clearing.
    pub coalition: Coalition,
    /// `J(B_C) + sum_{C} u`.
    pub z: f64,
    /// `(J(B) + sum u) - z`; positive beyond tolerance means `C` blocks.
    pub margin: f64,
}

impl Blocking {
    pub fn blocks(&self) -> bool {
        self.margin > MARGIN_TOL
    }
}

/// Most blocking coalition against revealed utilities `ubar` of the winners.
pub fn find_blocking_coalition(
    market: &Market,
    profile: &BidProfile,
    ubar: &BTreeMap<BidderId, f64>,
) -> Result<Blocking> {
    let j = clear_all(market, profile)?.objective.finite().ok_or(Error::ClearingInfeasible)?;
    find_blocking_coalition_at(market, profile, j, ubar)
}

pub(crate) fn find_blocking_coalition_at(
    market: &Market,
    profile: &BidProfile,
    j: f64,
    ubar: &BTreeMap<BidderId, f64>,
) -> Result<Blocking> {
    if ubar.values().any(|u| !(*u >= 0.0)) {
        return Err(Error::PreconditionViolated("revealed utilities must be nonnegative".into()));
    }
    let inflated = profile.inflated(ubar)?;
    let c = clear_all(market, &inflated)?;
    let z = c.objective.finite().ok_or(Error::ClearingInfeasible)?;
    let total: f64 = ubar.values().sum();
    Ok(Blocking { coalition: c.winners, z, margin: j + total - z })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseReport {
    pub all_infeasible: bool,
    /// Winner pairs whose joint removal still clears.
    pub feasible_pairs: Vec<(BidderId, BidderId)>,
    /// VCG core membership, when the winner count allows the check.
    pub vcg_in_core: Option<bool>,
}

/// Whether removing any two winners leaves the market infeasible.
pub fn check_pairwise_removal_infeasible(market: &Market, profile: &BidProfile) -> Result<PairwiseReport> {
    let c = clear_all(market, profile)?;
    if !c.is_feasible() {
        return Err(Error::ClearingInfeasible);
    }
    let w = &c.winners;
    if w.len() < 2 {
        return Err(Error::NotApplicable(format!("{} winner(s); need at least 2", w.len())));
    }
    let pairs: Vec<(BidderId, BidderId)> =
        (0..w.len()).flat_map(|a| (a + 1..w.len()).map(move |b| (a, b))).map(|(a, b)| (w[a], w[b])).collect();
    let ids = profile.ids();
    let feasible: Vec<Result<bool>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let rest: Vec<BidderId> = ids.iter().filter(|&&i| i != a && i != b).cloned().collect();
            Ok(clear(market, profile, &rest)?.is_feasible())
        })
        .collect();
    let mut feasible_pairs = Vec::new();
    for (p, f) in pairs.into_iter().zip(feasible) {
        if f? {
            feasible_pairs.push(p);
        }
    }
    let vcg_in_core = if w.len() <= MAX_CORE_WINNERS {
        match vcg_in_core(market, profile) {
            Ok((_, check)) => Some(check.in_core),
            Err(Error::PivotInfeasible(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(PairwiseReport { all_infeasible: feasible_pairs.is_empty(), feasible_pairs, vcg_in_core })
}
