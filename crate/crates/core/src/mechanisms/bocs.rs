//! Bidder-optimal core-selecting payments from the full revealed core.

use std::collections::BTreeMap;

use super::{build_outcome, clear_feasible, PaymentOutcome, Rule};
use crate::bids::{BidProfile, Cost};
use crate::coreanalysis::{core_constraints_for, Reference};
use crate::error::{Error, Result};
use crate::markets::Market;
use crate::solver::{solve_convex, ConvexProgram, SolveStatus};

/// Rows added per round when activating violated constraints lazily.
const ROWS_PER_ROUND: usize = 64;

/// `{u : 0 <= u <= upper, sum_{members} u <= rhs for each row}`.
#[derive(Clone, Debug)]
pub(crate) struct UtilityPolytope {
    pub upper: Vec<f64>,
    pub rows: Vec<(Vec<usize>, f64)>,
}

impl UtilityPolytope {
    fn violated(&self, u: &[f64], active: &[bool]) -> Vec<usize> {
        let mut v: Vec<(usize, f64)> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(r, _)| !active[*r])
            .filter_map(|(r, (m, rhs))| {
                let lhs: f64 = m.iter().map(|&i| u[i]).sum();
                let gap = lhs - rhs;
                (gap > 1e-9 * (1.0 + rhs.abs())).then_some((r, gap))
            })
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.into_iter().take(ROWS_PER_ROUND).map(|x| x.0).collect()
    }

    /// Solves `make(active rows)` and re-solves with violated rows until none
    /// remain. Exact because the final point is optimal for a relaxation and
    /// feasible for the full system.
    fn solve_lazy(&self, make: impl Fn(&[usize]) -> ConvexProgram) -> Result<Vec<f64>> {
        let mut active = vec![false; self.rows.len()];
        for (r, (m, _)) in self.rows.iter().enumerate() {
            if m.len() == 1 {
                active[r] = true;
            }
        }
        loop {
            let rows: Vec<usize> = (0..self.rows.len()).filter(|&r| active[r]).collect();
            let rep = solve_convex(&make(&rows))?;
            if rep.status != SolveStatus::Optimal {
                return Err(Error::Internal(format!("core program reported {:?}", rep.status)));
            }
            let add = self.violated(&rep.x, &active);
            if add.is_empty() {
                return Ok(rep.x);
            }
            for r in add {
                active[r] = true;
            }
        }
    }

    fn base(&self, rows: &[usize]) -> ConvexProgram {
        let n = self.upper.len();
        let mut p = ConvexProgram::new(n);
        p.upper = self.upper.clone();
        for &r in rows {
            let (m, rhs) = &self.rows[r];
            let mut row = vec![0.0; n];
            for &i in m {
                row[i] = 1.0;
            }
            p.add_le(row, *rhs);
        }
        p
    }

    /// Largest total utility over the polytope.
    pub fn max_total(&self) -> Result<f64> {
        let u = self.solve_lazy(|rows| {
            let mut p = self.base(rows);
            p.c = vec![-1.0; p.n];
            p
        })?;
        Ok(u.iter().sum())
    }

    /// Point of the `nu` slice nearest to `target`.
    pub fn closest_on_slice(&self, nu: f64, target: &[f64]) -> Result<Vec<f64>> {
        let n = self.upper.len();
        let floor = nu - 1e-9 * (1.0 + nu.abs());
        self.solve_lazy(|rows| {
            let mut p = self.base(rows);
            for i in 0..n {
                p.q[i * n + i] = 2.0;
                p.c[i] = -2.0 * target[i];
            }
            p.add_ge(vec![1.0; n], floor);
            p
        })
    }
}

pub fn bocs_direct(market: &Market, bids: &BidProfile, true_costs: &BidProfile) -> Result<PaymentOutcome> {
    let clearing = clear_feasible(market, bids)?;
    let cs = core_constraints_for(market, bids, &clearing, Reference::Revealed)?;
    let w = &cs.winners;
    let mut vcg = vec![0.0; w.len()];
    let mut rows = Vec::new();
    for c in &cs.constraints {
        let members: Vec<usize> = c.coalition.iter().map(|id| w.iter().position(|x| x == id).unwrap()).collect();
        match c.rhs {
            Cost::Finite(rhs) => {
                if let [i] = members[..] {
                    vcg[i] = rhs;
                }
                rows.push((members, rhs));
            }
            Cost::Infinite => {
                if let [i] = members[..] {
                    return Err(Error::PivotInfeasible(w[i]));
                }
            }
        }
    }
    let poly = UtilityPolytope { upper: vcg.clone(), rows };
    let nu = poly.max_total()?;
    let u = poly.closest_on_slice(nu, &vcg)?;
    let mut payments = BTreeMap::new();
    for (i, &l) in w.iter().enumerate() {
        let bid = bids.get(l).expect("winner is in the profile");
        payments.insert(l, bid.eval_clamped(clearing.quantity(l))? + u[i].max(0.0));
    }
    build_outcome(Rule::Bocs, clearing, bids, true_costs, payments)
}
