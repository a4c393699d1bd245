//! One good, a hard demand `M` and step offers on the increment grid.

use super::hook::Hook;
use crate::bids::BidProfile;
use crate::error::{Error, Result};

/// Caps the DP table so a pathological grid fails loudly instead of hanging.
const MAX_DP_CELLS: usize = 50_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SingleGoodMarket {
    demand: f64,
    increment: f64,
}

impl SingleGoodMarket {
    pub fn new(demand: f64, increment: f64) -> Result<SingleGoodMarket> {
        if !(increment > 0.0 && increment.is_finite()) {
            return Err(Error::ModelError(format!("increment must be positive, got {increment}")));
        }
        if !(demand >= 0.0 && demand.is_finite()) {
            return Err(Error::ModelError(format!("demand must be nonnegative, got {demand}")));
        }
        let r = demand / increment;
        if (r - r.round()).abs() > 1e-6 {
            return Err(Error::ModelError(format!("demand {demand} is not a multiple of {increment}")));
        }
        Ok(SingleGoodMarket { demand, increment })
    }

    pub fn demand(&self) -> f64 {
        self.demand
    }

    pub fn increment(&self) -> f64 {
        self.increment
    }

    fn units(&self, q: f64) -> Result<usize> {
        let r = q / self.increment;
        let k = r.round();
        if (r - k).abs() > 1e-6 || k < 0.0 {
            return Err(Error::GridMismatch(format!(
                "offered quantity {q} is off the market increment {}",
                self.increment
            )));
        }
        Ok(k as usize)
    }
}

/// Exact DP over the grid. Returns the allocation by profile index, or `None`
/// when no selection covers the demand.
pub(crate) fn solve(
    market: &SingleGoodMarket,
    hook: &Hook,
    profile: &BidProfile,
    on: &[bool],
) -> Result<Option<Vec<f64>>> {
    let need = (market.demand / market.increment).round() as usize;
    let idx: Vec<usize> = (0..profile.len()).filter(|&i| on[i]).collect();
    // Options per stage, largest quantity first, zero last.
    let mut opts: Vec<Vec<(usize, f64, f64)>> = Vec::with_capacity(idx.len());
    for &i in &idx {
        let curve = profile.curve_at(i);
        let offered = curve.discrete_options(Some(market.increment)).ok_or_else(|| {
            Error::ModelError(format!("bidder {} needs a step bid in a single-good market", profile.id_at(i)))
        })?;
        let mut o = Vec::with_capacity(offered.len() + 1);
        for (q, p) in offered {
            o.push((market.units(q)?, q, p));
        }
        o.sort_by(|a, b| b.0.cmp(&a.0));
        o.push((0, 0.0, 0.0));
        opts.push(o);
    }
    let capped = hook.is_zero();
    let qmax = if capped { need } else { opts.iter().map(|o| o[0].0).sum::<usize>().max(need) };
    let n = idx.len();
    if (qmax + 1).saturating_mul(n + 1) > MAX_DP_CELLS {
        return Err(Error::ModelError("increment grid too fine for exact clearing".into()));
    }
    let next = |q: usize, u: usize| if capped { (q + u).min(need) } else { q + u };
    let mut v = vec![vec![f64::INFINITY; qmax + 1]; n + 1];
    for q in need..=qmax {
        v[n][q] = hook.second_stage_cost(q as f64 * market.increment).0;
    }
    for s in (0..n).rev() {
        for q in 0..=qmax {
            let mut best = f64::INFINITY;
            for &(u, _, p) in &opts[s] {
                let nq = next(q, u);
                if nq <= qmax {
                    best = best.min(p + v[s + 1][nq]);
                }
            }
            v[s][q] = best;
        }
    }
    if !v[0][0].is_finite() {
        return Ok(None);
    }
    let mut x = vec![0.0; profile.len()];
    let mut q = 0;
    for s in 0..n {
        if capped && q >= need {
            break;
        }
        let target = v[s][q];
        let tol = 1e-9 * (1.0 + target.abs());
        let &(u, qty, _) = opts[s]
            .iter()
            .find(|&&(u, _, p)| {
                let nq = next(q, u);
                nq <= qmax && p + v[s + 1][nq] <= target + tol
            })
            .expect("an option attains the stage value");
        x[idx[s]] = qty;
        q = next(q, u);
    }
    Ok(Some(x))
}
