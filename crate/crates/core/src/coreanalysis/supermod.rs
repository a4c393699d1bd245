//! Exhaustive subset tables and supermodularity checks.

use rayon::prelude::*;

use crate::bids::{BidProfile, BidderId, Cost};
use crate::error::{Error, Result};
use crate::markets::{clear_mask, Coalition, Market, MultiTypeMarket};

pub const MAX_SUPERMOD_BIDDERS: usize = 12;
/// Hard ceiling for building a full table at all.
const MAX_TABLE_BIDDERS: usize = 20;

/// `J` of every active subset, keyed by bitmask over profile order.
#[derive(Clone, Debug, PartialEq)]
pub struct JTable {
    ids: Vec<BidderId>,
    values: Vec<Cost>,
    winners: Vec<u64>,
}

impl JTable {
    /// Clears all `2^|L|` subsets in parallel, then freezes the table.
    pub fn build(market: &Market, profile: &BidProfile) -> Result<JTable> {
        let n = profile.len();
        if n > MAX_TABLE_BIDDERS {
            return Err(Error::TooManyBidders { count: n, limit: MAX_TABLE_BIDDERS });
        }
        let cleared: Vec<Result<(Cost, u64)>> = (0..1u64 << n)
            .into_par_iter()
            .map(|mask| {
                let c = clear_mask(market, profile, mask)?;
                let w = c.winners.iter().fold(0u64, |acc, id| acc | 1 << profile.index_of(*id).unwrap());
                Ok((c.objective, w))
            })
            .collect();
        let mut values = Vec::with_capacity(cleared.len());
        let mut winners = Vec::with_capacity(cleared.len());
        for r in cleared {
            let (v, w) = r?;
            values.push(v);
            winners.push(w);
        }
        Ok(JTable { ids: profile.ids(), values, winners })
    }

    /// Table from explicit values, without winner information.
    pub fn from_values(ids: Vec<BidderId>, values: Vec<Cost>) -> Result<JTable> {
        if values.len() != 1 << ids.len() {
            return Err(Error::ModelError("table needs one value per subset".into()));
        }
        let winners = vec![0; values.len()];
        Ok(JTable { ids, values, winners })
    }

    pub fn ids(&self) -> &[BidderId] {
        &self.ids
    }

    pub fn value(&self, mask: u64) -> Cost {
        self.values[mask as usize]
    }

    pub fn winners(&self, mask: u64) -> u64 {
        self.winners[mask as usize]
    }

    pub fn coalition(&self, mask: u64) -> Coalition {
        (0..self.ids.len()).filter(|i| mask >> i & 1 == 1).map(|i| self.ids[i]).collect()
    }

    /// First `(S, R, l)` in mask order with `f(S) + f(R-l) > f(R) + f(S-l)`.
    pub fn supermodular_witness(&self) -> Option<SupermodWitness> {
        let n = self.ids.len();
        for r in 0..1u64 << n {
            if !self.values[r as usize].is_finite() {
                continue;
            }
            for l in (0..n).filter(|l| r >> l & 1 == 1) {
                let rl = r & !(1 << l);
                let mut sub = rl;
                loop {
                    let s = sub | 1 << l;
                    let lhs = self.value(s).plus(self.value(rl));
                    let rhs = self.value(r).plus(self.value(sub));
                    if !lhs.le_tol(rhs, tol(rhs)) {
                        return Some(SupermodWitness {
                            s: self.coalition(s),
                            r: self.coalition(r),
                            l: self.ids[l],
                            lhs,
                            rhs,
                        });
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & rl;
                }
            }
        }
        None
    }
}

fn tol(v: Cost) -> f64 {
    1e-6 + 1e-9 * v.finite().map_or(0.0, f64::abs)
}

/// Violating triple: `S ⊆ R`, `l ∈ S`, with `f(S) + f(R-l) > f(R) + f(S-l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupermodWitness {
    pub s: Coalition,
    pub r: Coalition,
    pub l: BidderId,
    pub lhs: Cost,
    pub rhs: Cost,
}

pub fn check_supermodularity(market: &Market, profile: &BidProfile) -> Result<(bool, Option<SupermodWitness>)> {
    if profile.len() > MAX_SUPERMOD_BIDDERS {
        return Err(Error::TooManyBidders { count: profile.len(), limit: MAX_SUPERMOD_BIDDERS });
    }
    let w = JTable::build(market, profile)?.supermodular_witness();
    Ok((w.is_none(), w))
}

/// Whether the truthful VCG outcome lies in the core of every participant
/// subset `R`, using the table's own allocations. Returns the first failing
/// `(R, K)` otherwise. Subsets that cannot clear are skipped; rows with an
/// infinite right-hand side are vacuous.
pub fn vcg_in_core_for_all_subsets(table: &JTable) -> (bool, Option<(Coalition, Coalition)>) {
    let n = table.ids.len();
    for r in 0..1u64 << n {
        let Cost::Finite(jr) = table.value(r) else { continue };
        let w: Vec<usize> = (0..n).filter(|i| table.winners(r) >> i & 1 == 1).collect();
        let util: Vec<Cost> = w
            .iter()
            .map(|&l| match table.value(r & !(1 << l)) {
                Cost::Finite(v) => Cost::Finite(v - jr),
                Cost::Infinite => Cost::Infinite,
            })
            .collect();
        for kmask in 1u64..1 << w.len() {
            let mut k = 0u64;
            let mut lhs = Cost::Finite(0.0);
            for (j, &l) in w.iter().enumerate() {
                if kmask >> j & 1 == 1 {
                    k |= 1 << l;
                    lhs = lhs.plus(util[j]);
                }
            }
            let rhs = match table.value(r & !k) {
                Cost::Finite(v) => Cost::Finite(v - jr),
                Cost::Infinite => continue,
            };
            if !lhs.le_tol(rhs, tol(rhs)) {
                return (false, Some((table.coalition(r), table.coalition(k))));
            }
        }
    }
    (true, None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MSupermodReport {
    pub supermodular: bool,
    pub nondecreasing: bool,
    pub normalized: bool,
    /// Pair with the largest `M(S) + M(R) - M(S∪R) - M(S∩R)`.
    pub witness: Option<MWitness>,
    /// Pair `(S, T)` with `S ⊆ T` and `M(S) > M(T)`.
    pub monotone_witness: Option<(Vec<String>, Vec<String>)>,
}

/// `M(union) + M(intersection) < M(left) + M(right)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MWitness {
    pub union: Vec<String>,
    pub intersection: Vec<String>,
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub gap: f64,
}

impl MSupermodReport {
    pub fn holds(&self) -> bool {
        self.supermodular && self.nondecreasing && self.normalized
    }
}

pub fn check_m_supermodular(market: &MultiTypeMarket) -> MSupermodReport {
    let t = market.type_count();
    let m = |s: usize| market.requirement(s);
    let mut worst: Option<(usize, usize, f64)> = None;
    for s in 0..1usize << t {
        for r in s + 1..1usize << t {
            let gap = m(s) + m(r) - m(s | r) - m(s & r);
            if gap > 1e-9 && worst.is_none_or(|w| gap > w.2) {
                worst = Some((s, r, gap));
            }
        }
    }
    let mut monotone = None;
    'outer: for s in 0..1usize << t {
        for k in 0..t {
            let bigger = s | 1 << k;
            if m(s) > m(bigger) + 1e-9 {
                monotone = Some((s, bigger));
                break 'outer;
            }
        }
    }
    MSupermodReport {
        supermodular: worst.is_none(),
        nondecreasing: monotone.is_none(),
        normalized: m(0) == 0.0,
        witness: worst.map(|(s, r, gap)| MWitness {
            union: market.names(s | r),
            intersection: market.names(s & r),
            left: market.names(s),
            right: market.names(r),
            gap,
        }),
        monotone_witness: monotone.map(|(s, b)| (market.names(s), market.names(b))),
    }
}
