//! Fixed-charge groups on top of a convex program, solved by best-bound
//! branch-and-bound. A group pays its charge whenever any of its variables is
//! nonzero.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{solve_convex, ConvexProgram, SolveReport, SolveStatus};
use crate::error::{Error, Result};

pub const MAX_INDICATOR_GROUPS: usize = 32;

/// Magnitude below which a variable counts as zero.
const ZERO_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorGroup {
    pub vars: Vec<usize>,
    pub charge: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorProgram {
    pub base: ConvexProgram,
    pub groups: Vec<IndicatorGroup>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fix {
    Free,
    On,
    Off,
}

struct Node {
    bound: f64,
    seq: u64,
    fix: Vec<Fix>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: reverse so the lowest bound, then the
    // earliest node, comes out first.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.seq.cmp(&self.seq))
    }
}

impl IndicatorProgram {
    /// Objective including the charges of every nonzero group.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.base.objective(x)
            + self
                .groups
                .iter()
                .filter(|g| g.vars.iter().any(|&v| x[v].abs() > ZERO_TOL))
                .map(|g| g.charge)
                .sum::<f64>()
    }

    fn relaxation(&self, fix: &[Fix]) -> (ConvexProgram, f64) {
        let mut p = self.base.clone();
        let mut fixed_charge = 0.0;
        for (g, f) in self.groups.iter().zip(fix) {
            match f {
                Fix::Off => {
                    for &v in &g.vars {
                        p.upper[v] = 0.0;
                    }
                }
                Fix::On => fixed_charge += g.charge,
                Fix::Free => {
                    // A single bounded variable admits the linear underestimate
                    // charge * x / U of its fixed charge.
                    if let [v] = g.vars[..] {
                        let u = p.upper[v];
                        if u.is_finite() && u > 0.0 {
                            p.c[v] += g.charge / u;
                        }
                    }
                }
            }
        }
        (p, fixed_charge)
    }
}

pub fn solve_indicator(p: &IndicatorProgram) -> Result<SolveReport> {
    let k = p.groups.len();
    if k > MAX_INDICATOR_GROUPS {
        return Err(Error::TooManyIndicators { count: k, limit: MAX_INDICATOR_GROUPS });
    }
    for g in &p.groups {
        if !(g.charge >= 0.0) {
            return Err(Error::ModelError("indicator charges must be nonnegative".into()));
        }
        if g.vars.iter().any(|&v| v >= p.base.n || p.base.lower[v] != 0.0) {
            return Err(Error::ModelError("indicator variables must be nonnegative program variables".into()));
        }
    }
    let n = p.base.n;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node { bound: f64::NEG_INFINITY, seq, fix: vec![Fix::Free; k] });

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &best {
            if node.bound >= inc - 1e-9 * (1.0 + inc.abs()) {
                continue;
            }
        }
        let (relax, charge) = p.relaxation(&node.fix);
        let rep = solve_convex(&relax)?;
        match rep.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => return Ok(rep),
            SolveStatus::Optimal => {}
        }
        let bound = rep.objective + charge;
        let value = p.objective(&rep.x);
        let improves = match &best {
            None => true,
            Some((inc, _)) => value < inc - 1e-9 * (1.0 + inc.abs()),
        };
        if improves {
            best = Some((value, rep.x.clone()));
        }
        let inc = best.as_ref().map(|b| b.0).unwrap_or(f64::INFINITY);
        if bound >= inc - 1e-9 * (1.0 + inc.abs()) {
            continue;
        }
        let branch = (0..k).find(|&g| {
            node.fix[g] == Fix::Free && p.groups[g].vars.iter().any(|&v| rep.x[v].abs() > ZERO_TOL)
        });
        let Some(g) = branch else { continue };
        for f in [Fix::Off, Fix::On] {
            let mut fix = node.fix.clone();
            fix[g] = f;
            seq += 1;
            heap.push(Node { bound, seq, fix });
        }
    }
    Ok(match best {
        Some((objective, x)) => SolveReport { status: SolveStatus::Optimal, x, objective, duals: None },
        None => SolveReport {
            status: SolveStatus::Infeasible,
            x: vec![0.0; n],
            objective: f64::INFINITY,
            duals: None,
        },
    })
}
