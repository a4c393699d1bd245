//! Several good types with covering requirements `M(T)` over type subsets.

use std::collections::BTreeMap;

use super::hook::Hook;
use crate::bids::{BidProfile, BidderId};
use crate::error::{Error, Result};

pub const MAX_TYPES: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiTypeMarket {
    types: Vec<String>,
    /// Indexed by type bitmask; entry 0 is zero.
    requirement: Vec<f64>,
    bidder_types: BTreeMap<BidderId, usize>,
}

impl MultiTypeMarket {
    pub fn new(
        types: Vec<String>,
        requirement: Vec<f64>,
        bidder_types: BTreeMap<BidderId, usize>,
    ) -> Result<MultiTypeMarket> {
        let t = types.len();
        if t > MAX_TYPES {
            return Err(Error::TooManyTypes { count: t, limit: MAX_TYPES });
        }
        if requirement.len() != 1 << t {
            return Err(Error::ModelError(format!("requirement table needs {} entries", 1 << t)));
        }
        if requirement[0] != 0.0 {
            return Err(Error::ModelError("requirement of the empty type set must be 0".into()));
        }
        if requirement.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::ModelError("requirements must be finite and nonnegative".into()));
        }
        if bidder_types.values().any(|&k| k >= t) {
            return Err(Error::ModelError("bidder tagged with an unknown type".into()));
        }
        Ok(MultiTypeMarket { types, requirement, bidder_types })
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn requirement(&self, mask: usize) -> f64 {
        self.requirement[mask]
    }

    pub fn requirement_table(&self) -> &[f64] {
        &self.requirement
    }

    pub fn type_of(&self, b: BidderId) -> Option<usize> {
        self.bidder_types.get(&b).copied()
    }

    pub fn bidder_types(&self) -> &BTreeMap<BidderId, usize> {
        &self.bidder_types
    }

    pub(crate) fn set_type(&mut self, b: BidderId, t: usize) {
        self.bidder_types.insert(b, t);
    }

    /// Type names of a mask, in declaration order.
    pub fn names(&self, mask: usize) -> Vec<String> {
        (0..self.types.len()).filter(|k| mask >> k & 1 == 1).map(|k| self.types[k].clone()).collect()
    }

    pub fn mask_of(&self, names: &[String]) -> Result<usize> {
        let mut m = 0;
        for n in names {
            let k = self
                .types
                .iter()
                .position(|t| t == n)
                .ok_or_else(|| Error::ModelError(format!("unknown type {n}")))?;
            m |= 1 << k;
        }
        Ok(m)
    }
}

struct Search<'a> {
    market: &'a MultiTypeMarket,
    hook: &'a Hook,
    stages: Vec<(usize, usize)>,
    opts: Vec<Vec<(f64, f64)>>,
    /// `rest[s][k]`: most that stages `s..` can supply of type `k`.
    rest: Vec<Vec<f64>>,
    cur: Vec<f64>,
    per_type: Vec<f64>,
    best: f64,
    best_x: Option<Vec<f64>>,
}

impl Search<'_> {
    fn covered(&self, extra: Option<&[f64]>) -> bool {
        let t = self.market.type_count();
        (1..1usize << t).all(|mask| {
            let mut have = 0.0;
            for k in 0..t {
                if mask >> k & 1 == 1 {
                    have += self.per_type[k] + extra.map_or(0.0, |e| e[k]);
                }
            }
            have >= self.market.requirement[mask] - 1e-9
        })
    }

    fn run(&mut self, s: usize, partial: f64) {
        if self.best.is_finite() && partial >= self.best - 1e-9 * (1.0 + self.best.abs()) {
            return;
        }
        if !self.covered(Some(&self.rest[s])) {
            return;
        }
        let done = s == self.stages.len() || (self.hook.is_zero() && self.covered(None));
        if done {
            let total: f64 = self.cur.iter().sum();
            let cost = partial + self.hook.second_stage_cost(total).0;
            if !self.best.is_finite() || cost < self.best - 1e-9 * (1.0 + self.best.abs()) {
                self.best = cost;
                self.best_x = Some(self.cur.clone());
            }
            return;
        }
        let (i, k) = self.stages[s];
        for o in 0..self.opts[s].len() {
            let (q, p) = self.opts[s][o];
            self.cur[i] = q;
            self.per_type[k] += q;
            self.run(s + 1, partial + p);
            self.per_type[k] -= q;
            self.cur[i] = 0.0;
        }
    }
}

/// Enumeration with bounding for step-type offers.
pub(crate) fn solve_discrete(
    market: &MultiTypeMarket,
    hook: &Hook,
    profile: &BidProfile,
    on: &[bool],
) -> Result<Option<Vec<f64>>> {
    let t = market.type_count();
    let mut stages = Vec::new();
    let mut opts = Vec::new();
    for i in (0..profile.len()).filter(|&i| on[i]) {
        let id = profile.id_at(i);
        let k = market.type_of(id).ok_or_else(|| Error::ModelError(format!("bidder {id} has no type")))?;
        let mut o = profile
            .curve_at(i)
            .discrete_options(None)
            .ok_or_else(|| Error::ModelError(format!("bidder {id} mixes step and continuous bids")))?;
        o.sort_by(|a, b| b.0.total_cmp(&a.0));
        o.push((0.0, 0.0));
        stages.push((i, k));
        opts.push(o);
    }
    let mut rest = vec![vec![0.0; t]; stages.len() + 1];
    for s in (0..stages.len()).rev() {
        rest[s] = rest[s + 1].clone();
        rest[s][stages[s].1] += opts[s][0].0;
    }
    let mut search = Search {
        market,
        hook,
        stages,
        opts,
        rest,
        cur: vec![0.0; profile.len()],
        per_type: vec![0.0; t],
        best: f64::INFINITY,
        best_x: None,
    };
    search.run(0, 0.0);
    Ok(search.best_x)
}
