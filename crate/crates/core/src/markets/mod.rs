//! Market families and subset clearing `J(B_S)`.

mod hook;
mod multi_type;
mod network;
mod ptdf;
mod single_good;

use std::collections::BTreeMap;

pub use hook::Hook;
pub use multi_type::{MultiTypeMarket, MAX_TYPES};
pub use network::{Line, NetworkMarket, NodeId};
pub use ptdf::ptdf_matrix;
pub use single_good::SingleGoodMarket;

use crate::bids::{BidProfile, BidderId, Cost};
use crate::error::{Error, Result};
use crate::solver::{self, ConvexProgram, IndicatorGroup, IndicatorProgram, SolveStatus};
use crate::FEAS_TOL;

/// Per-unit cost added for tie-breaking in continuous clearings, scaled by
/// priority rank. `J` is always re-evaluated from the unperturbed curves.
const TIE_EPS: f64 = 1e-10;

/// Bidder ids, in profile order.
pub type Coalition = Vec<BidderId>;

#[derive(Clone, Debug, PartialEq)]
pub enum MarketFamily {
    SingleGood(SingleGoodMarket),
    MultiType(MultiTypeMarket),
    Network(NetworkMarket),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Market {
    pub family: MarketFamily,
    pub hook: Hook,
}

impl Market {
    pub fn new(family: MarketFamily, hook: Hook) -> Result<Market> {
        hook.validate()?;
        Ok(Market { family, hook })
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            MarketFamily::SingleGood(_) => "single_good",
            MarketFamily::MultiType(_) => "multi_type",
            MarketFamily::Network(_) => "network",
        }
    }

    /// Every bidder in the profile must be placed in the market.
    pub fn check_profile(&self, profile: &BidProfile) -> Result<()> {
        for id in profile.ids() {
            let ok = match &self.family {
                MarketFamily::SingleGood(_) => true,
                MarketFamily::MultiType(m) => m.type_of(id).is_some(),
                MarketFamily::Network(n) => n.node_of(id).is_some(),
            };
            if !ok {
                return Err(Error::ModelError(format!("bidder {id} has no type or node in the market")));
            }
        }
        Ok(())
    }

    /// Copy where `new` shares the type or node of `like`.
    pub fn with_alias(&self, new: BidderId, like: BidderId) -> Result<Market> {
        let mut out = self.clone();
        match &mut out.family {
            MarketFamily::SingleGood(_) => {}
            MarketFamily::MultiType(m) => {
                let t = m.type_of(like).ok_or_else(|| Error::ModelError(format!("bidder {like} has no type")))?;
                m.set_type(new, t);
            }
            MarketFamily::Network(n) => {
                let node = n.node_of(like).ok_or_else(|| Error::ModelError(format!("bidder {like} has no node")))?;
                n.set_node(new, node);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClearingStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClearingResult {
    pub status: ClearingStatus,
    /// Quantity per bidder of the profile, zero for inactive bidders.
    pub allocation: BTreeMap<BidderId, f64>,
    pub objective: Cost,
    /// Bidders with positive quantity, in profile order.
    pub winners: Coalition,
    /// Second-stage cost `d` at the optimum.
    pub second_stage: f64,
    /// Minimizing second-stage variable, when the hook has one.
    pub y: Option<f64>,
    /// Nodal prices (marginal cost of demand at each node), network only.
    pub nodal_prices: Option<BTreeMap<NodeId, f64>>,
}

impl ClearingResult {
    fn infeasible(profile: &BidProfile) -> ClearingResult {
        ClearingResult {
            status: ClearingStatus::Infeasible,
            allocation: profile.ids().into_iter().map(|id| (id, 0.0)).collect(),
            objective: Cost::Infinite,
            winners: Vec::new(),
            second_stage: 0.0,
            y: None,
            nodal_prices: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == ClearingStatus::Optimal
    }

    pub fn quantity(&self, id: BidderId) -> f64 {
        self.allocation.get(&id).copied().unwrap_or(0.0)
    }

    pub fn total_quantity(&self) -> f64 {
        self.allocation.values().sum()
    }
}

fn finalize(
    hook: &Hook,
    profile: &BidProfile,
    mut x: Vec<f64>,
    nodal_prices: Option<BTreeMap<NodeId, f64>>,
) -> Result<ClearingResult> {
    let mut j = 0.0;
    for (i, xi) in x.iter_mut().enumerate() {
        if *xi <= FEAS_TOL {
            *xi = 0.0;
        }
        j += profile.curve_at(i).eval_clamped(*xi)?;
    }
    let total: f64 = x.iter().sum();
    let (d, y) = hook.second_stage_cost(total);
    let winners = (0..profile.len()).filter(|&i| x[i] > 0.0).map(|i| profile.id_at(i)).collect();
    Ok(ClearingResult {
        status: ClearingStatus::Optimal,
        allocation: (0..profile.len()).map(|i| (profile.id_at(i), x[i])).collect(),
        objective: Cost::Finite(j + d),
        winners,
        second_stage: d,
        y,
        nodal_prices,
    })
}

fn active_flags(profile: &BidProfile, active: &[BidderId]) -> Result<Vec<bool>> {
    let mut on = vec![false; profile.len()];
    for id in active {
        let i = profile
            .index_of(*id)
            .ok_or_else(|| Error::ModelError(format!("active bidder {id} is not in the profile")))?;
        on[i] = true;
    }
    Ok(on)
}

/// Clears with only `active` allowed to supply.
pub fn clear(market: &Market, profile: &BidProfile, active: &[BidderId]) -> Result<ClearingResult> {
    market.check_profile(profile)?;
    let on = active_flags(profile, active)?;
    clear_flags(market, profile, &on)
}

/// Clears with every bidder active.
pub fn clear_all(market: &Market, profile: &BidProfile) -> Result<ClearingResult> {
    clear(market, profile, &profile.ids())
}

/// Clears the coalition whose profile indices are the set bits of `mask`.
pub fn clear_mask(market: &Market, profile: &BidProfile, mask: u64) -> Result<ClearingResult> {
    market.check_profile(profile)?;
    let on: Vec<bool> = (0..profile.len()).map(|i| mask >> i & 1 == 1).collect();
    clear_flags(market, profile, &on)
}

fn clear_flags(market: &Market, profile: &BidProfile, on: &[bool]) -> Result<ClearingResult> {
    let hook = &market.hook;
    match &market.family {
        MarketFamily::SingleGood(m) => {
            finish(hook, profile, single_good::solve(m, hook, profile, on)?.map(|x| (x, None)))
        }
        MarketFamily::MultiType(m) => finish(hook, profile, multi_type_solve(m, hook, profile, on)?),
        MarketFamily::Network(n) => finish(hook, profile, network_solve(n, hook, profile, on)?),
    }
}

type Solved = Option<(Vec<f64>, Option<BTreeMap<NodeId, f64>>)>;

fn finish(hook: &Hook, profile: &BidProfile, solved: Solved) -> Result<ClearingResult> {
    match solved {
        None => Ok(ClearingResult::infeasible(profile)),
        Some((x, prices)) => finalize(hook, profile, x, prices),
    }
}

pub fn clear_single_good(
    market: &SingleGoodMarket,
    hook: &Hook,
    profile: &BidProfile,
    active: &[BidderId],
) -> Result<ClearingResult> {
    let on = active_flags(profile, active)?;
    finish(hook, profile, single_good::solve(market, hook, profile, &on)?.map(|x| (x, None)))
}

pub fn clear_multi_type(
    market: &MultiTypeMarket,
    hook: &Hook,
    profile: &BidProfile,
    active: &[BidderId],
) -> Result<ClearingResult> {
    let on = active_flags(profile, active)?;
    for id in active {
        if market.type_of(*id).is_none() {
            return Err(Error::ModelError(format!("bidder {id} has no type")));
        }
    }
    finish(hook, profile, multi_type_solve(market, hook, profile, &on)?)
}

pub fn clear_network(
    market: &NetworkMarket,
    hook: &Hook,
    profile: &BidProfile,
    active: &[BidderId],
) -> Result<ClearingResult> {
    let on = active_flags(profile, active)?;
    for id in active {
        if market.node_of(*id).is_none() {
            return Err(Error::ModelError(format!("bidder {id} has no node")));
        }
    }
    finish(hook, profile, network_solve(market, hook, profile, &on)?)
}

/// Continuous clearing program over the active bidders.
struct Continuous {
    prog: ConvexProgram,
    groups: Vec<IndicatorGroup>,
    /// `(profile index, variable)` for each active bidder.
    vars: Vec<(usize, usize)>,
}

impl Continuous {
    fn build(hook: &Hook, profile: &BidProfile, on: &[bool]) -> Result<Continuous> {
        let active: Vec<usize> = (0..profile.len()).filter(|&i| on[i]).collect();
        let y = match hook {
            Hook::Shortfall { .. } => 1,
            Hook::Zero => 0,
        };
        let n = active.len() + y;
        let mut prog = ConvexProgram::new(n);
        let mut groups = Vec::new();
        let mut vars = Vec::with_capacity(active.len());
        for (v, &i) in active.iter().enumerate() {
            let (a, b, cap, uplift) = profile.curve_at(i).continuous_form().ok_or_else(|| {
                Error::ModelError(format!(
                    "bidder {} needs a convex continuous bid in this market",
                    profile.id_at(i)
                ))
            })?;
            prog.q[v * n + v] = 2.0 * a;
            prog.c[v] = b + TIE_EPS * (i + 1) as f64;
            prog.upper[v] = cap;
            if uplift > 0.0 {
                groups.push(IndicatorGroup { vars: vec![v], charge: uplift });
            }
            vars.push((i, v));
        }
        if let Hook::Shortfall { alpha, target } = hook {
            let yv = n - 1;
            prog.q[yv * n + yv] = 2.0 * alpha;
            // sum x + y >= target
            prog.add_ge(vec![1.0; n], *target);
        }
        Ok(Continuous { prog, groups, vars })
    }

    /// Row over the program variables from per-bidder coefficients.
    fn row(&self, coef: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut r = vec![0.0; self.prog.n];
        for &(i, v) in &self.vars {
            r[v] = coef(i);
        }
        r
    }

    fn solve(&self, profile_len: usize) -> Result<Option<(Vec<f64>, Option<solver::Duals>)>> {
        let rep = if self.groups.is_empty() {
            solver::solve_convex(&self.prog)?
        } else {
            solver::solve_indicator(&IndicatorProgram { base: self.prog.clone(), groups: self.groups.clone() })?
        };
        match rep.status {
            SolveStatus::Infeasible => Ok(None),
            SolveStatus::Unbounded => Err(Error::Internal("clearing program is unbounded".into())),
            SolveStatus::Optimal => {
                let mut x = vec![0.0; profile_len];
                for &(i, v) in &self.vars {
                    x[i] = rep.x[v];
                }
                Ok(Some((x, rep.duals)))
            }
        }
    }
}

fn all_discrete(profile: &BidProfile, on: &[bool]) -> bool {
    (0..profile.len()).filter(|&i| on[i]).all(|i| {
        let c = profile.curve_at(i);
        c.is_discrete() || matches!(c, crate::bids::BidCurve::Zero { cap } if cap.is_finite())
    })
}

fn multi_type_solve(m: &MultiTypeMarket, hook: &Hook, profile: &BidProfile, on: &[bool]) -> Result<Solved> {
    let any_discrete = (0..profile.len()).any(|i| on[i] && profile.curve_at(i).is_discrete());
    if any_discrete {
        if !all_discrete(profile, on) {
            return Err(Error::ModelError("cannot mix step and continuous bids in one market".into()));
        }
        return Ok(multi_type::solve_discrete(m, hook, profile, on)?.map(|x| (x, None)));
    }
    let mut c = Continuous::build(hook, profile, on)?;
    let t = m.type_count();
    let mut type_of = vec![0usize; profile.len()];
    for &(i, _) in &c.vars {
        type_of[i] = m.type_of(profile.id_at(i)).ok_or_else(|| Error::ModelError("bidder has no type".into()))?;
    }
    for mask in 1..1usize << t {
        let row = c.row(|i| if mask >> type_of[i] & 1 == 1 { 1.0 } else { 0.0 });
        c.prog.add_ge(row, m.requirement(mask));
    }
    Ok(c.solve(profile.len())?.map(|(x, _)| (x, None)))
}

fn network_solve(n: &NetworkMarket, hook: &Hook, profile: &BidProfile, on: &[bool]) -> Result<Solved> {
    let mut c = Continuous::build(hook, profile, on)?;
    let ptdf = n.ptdf();
    let mut col = vec![0usize; profile.len()];
    for &(i, _) in &c.vars {
        let node = n.node_of(profile.id_at(i)).ok_or_else(|| Error::ModelError("bidder has no node".into()))?;
        col[i] = n.node_index(node).expect("validated at construction");
    }
    c.prog.add_eq(c.row(|_| 1.0), n.total_demand());
    let base_flow = n.flows(&n.demand_injection());
    let mut line_rows = Vec::new();
    for (k, line) in n.lines().iter().enumerate() {
        if let Some(limit) = line.limit {
            let up = c.row(|i| ptdf[(k, col[i])]);
            let down: Vec<f64> = up.iter().map(|v| -v).collect();
            let first = c.prog.a_in.len();
            c.prog.add_le(up, limit - base_flow[k]);
            c.prog.add_le(down, limit + base_flow[k]);
            line_rows.push((k, first));
        }
    }
    let Some((x, duals)) = c.solve(profile.len())? else { return Ok(None) };
    let prices = duals.map(|d| {
        let lambda = d.eq[0];
        n.nodes()
            .iter()
            .enumerate()
            .map(|(m, node)| {
                let mut pi = -lambda;
                for &(k, r) in &line_rows {
                    pi -= ptdf[(k, m)] * (d.ineq[r] - d.ineq[r + 1]);
                }
                (*node, pi)
            })
            .collect()
    });
    Ok(Some((x, prices)))
}
