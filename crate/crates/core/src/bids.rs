//! Bid and cost curves.
//!
//! A curve maps a quantity to money, is zero at zero and nondecreasing.
//! True costs use the same type as bids.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{self, ConvexProgram, SolveStatus};

/// Quantities closer than this to a grid point are snapped to it.
const GRID_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BidderId(pub u32);

impl fmt::Display for BidderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Clearing cost in the extended reals. Infeasible clearings are `Infinite`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cost {
    Finite(f64),
    Infinite,
}

impl Cost {
    pub fn is_finite(self) -> bool {
        matches!(self, Cost::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }

    /// Extended-real sum.
    pub fn plus(self, other: Cost) -> Cost {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => Cost::Finite(a + b),
            _ => Cost::Infinite,
        }
    }

    /// `self <= other + tol` in the extended reals.
    pub fn le_tol(self, other: Cost, tol: f64) -> bool {
        match (self, other) {
            (_, Cost::Infinite) => true,
            (Cost::Infinite, Cost::Finite(_)) => false,
            (Cost::Finite(a), Cost::Finite(b)) => a <= b + tol,
        }
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{v}"),
            Cost::Infinite => write!(f, "inf"),
        }
    }
}

/// One offered step: pay `price` for any quantity up to `qty`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub price: f64,
    pub qty: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BidCurve {
    /// Mutually exclusive offers on an equally spaced quantity grid.
    Step { increment: f64, steps: Vec<Step> },
    /// `a x^2 + b x` on `[0, cap]`; `cap` may be infinite.
    Quadratic { a: f64, b: f64, cap: f64 },
    /// Free supply up to `cap`.
    Zero { cap: f64 },
    /// Zero at zero, `inner(x) + uplift` elsewhere.
    Inflated { inner: Box<BidCurve>, uplift: f64 },
    /// Min-convolution of its parts.
    Merged(Merged),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Merged {
    pub parts: Vec<BidCurve>,
    repr: MergedRepr,
}

#[derive(Clone, Debug, PartialEq)]
enum MergedRepr {
    /// `values[k]` is the merged price of `k * grid`.
    Grid { grid: f64, values: Vec<f64> },
    /// Flattened `(a, b, cap)` pieces of convex parts.
    Convex { pieces: Vec<(f64, f64, f64)> },
}

/// Quantities of a violating quadruple for the marginally-increasing test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadruple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl BidCurve {
    pub fn step(increment: f64, steps: &[(f64, f64)]) -> Result<BidCurve> {
        if !(increment > 0.0 && increment.is_finite()) {
            return Err(Error::InvalidBid(format!("increment must be positive, got {increment}")));
        }
        if steps.is_empty() {
            return Err(Error::InvalidBid("step bid needs at least one step".into()));
        }
        let mut out = Vec::with_capacity(steps.len());
        for &(price, qty) in steps {
            if !(price >= 0.0 && price.is_finite()) {
                return Err(Error::InvalidBid(format!("step price must be nonnegative, got {price}")));
            }
            let k = grid_index(qty, increment).ok_or_else(|| {
                Error::GridMismatch(format!("quantity {qty} is not a multiple of {increment}"))
            })?;
            if k == 0 {
                return Err(Error::InvalidBid("step quantities must be positive".into()));
            }
            out.push(Step { price, qty: k as f64 * increment });
        }
        out.sort_by(|x, y| x.qty.total_cmp(&y.qty));
        for w in out.windows(2) {
            if w[0].qty == w[1].qty {
                return Err(Error::InvalidBid(format!("duplicate step quantity {}", w[0].qty)));
            }
            if w[1].price <= w[0].price {
                return Err(Error::InvalidBid("step prices must be strictly increasing".into()));
            }
        }
        Ok(BidCurve::Step { increment, steps: out })
    }

    pub fn quadratic(a: f64, b: f64, cap: f64) -> Result<BidCurve> {
        if !(a >= 0.0 && a.is_finite() && b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidBid(format!("quadratic needs a, b >= 0, got a={a}, b={b}")));
        }
        check_cap(cap)?;
        Ok(BidCurve::Quadratic { a, b, cap })
    }

    pub fn zero(cap: f64) -> Result<BidCurve> {
        check_cap(cap)?;
        Ok(BidCurve::Zero { cap })
    }

    /// Largest quantity the curve is defined for.
    pub fn max_quantity(&self) -> f64 {
        match self {
            BidCurve::Step { steps, .. } => steps.last().map_or(0.0, |s| s.qty),
            BidCurve::Quadratic { cap, .. } | BidCurve::Zero { cap } => *cap,
            BidCurve::Inflated { inner, .. } => inner.max_quantity(),
            BidCurve::Merged(m) => match &m.repr {
                MergedRepr::Grid { grid, values } => (values.len() - 1) as f64 * grid,
                MergedRepr::Convex { pieces } => pieces.iter().map(|p| p.2).sum(),
            },
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        let max = self.max_quantity();
        if x > max + GRID_TOL * (1.0 + max.abs().min(1e12)) {
            return Err(Error::InfeasibleQuantity { x, max });
        }
        match self {
            BidCurve::Step { steps, .. } => {
                let s = steps
                    .iter()
                    .find(|s| s.qty >= x - GRID_TOL)
                    .expect("bounded by max_quantity");
                Ok(s.price)
            }
            BidCurve::Quadratic { a, b, .. } => Ok(a * x * x + b * x),
            BidCurve::Zero { .. } => Ok(0.0),
            BidCurve::Inflated { inner, uplift } => Ok(inner.eval(x)? + uplift),
            BidCurve::Merged(m) => m.eval(x),
        }
    }

    /// Same curve evaluated on a quantity that may carry tiny solver noise.
    pub fn eval_clamped(&self, x: f64) -> Result<f64> {
        let max = self.max_quantity();
        if x > max && x <= max + 1e-7 * (1.0 + max.abs()) {
            return self.eval(max);
        }
        self.eval(x)
    }

    /// Offered `(quantity, price)` points for discrete clearing, excluding zero.
    /// `grid` lets a zero bid offer every multiple of the market increment.
    /// Returns `None` for curves without a finite discrete form.
    pub fn discrete_options(&self, grid: Option<f64>) -> Option<Vec<(f64, f64)>> {
        match self {
            BidCurve::Step { steps, .. } => Some(steps.iter().map(|s| (s.qty, s.price)).collect()),
            BidCurve::Zero { cap } => {
                if !cap.is_finite() {
                    return None;
                }
                match grid {
                    Some(g) => {
                        let n = (cap / g + GRID_TOL).floor() as usize;
                        Some((1..=n).map(|k| (k as f64 * g, 0.0)).collect())
                    }
                    None => Some(vec![(*cap, 0.0)]),
                }
            }
            BidCurve::Inflated { inner, uplift } => inner
                .discrete_options(grid)
                .map(|o| o.into_iter().map(|(q, p)| (q, p + uplift)).collect()),
            BidCurve::Merged(m) => match &m.repr {
                MergedRepr::Grid { grid, values } => {
                    Some(values.iter().enumerate().skip(1).map(|(k, v)| (k as f64 * grid, *v)).collect())
                }
                MergedRepr::Convex { .. } => None,
            },
            BidCurve::Quadratic { .. } => None,
        }
    }

    /// `(a, b, cap, uplift)` when the curve is a (possibly inflated) convex
    /// quadratic usable in a continuous clearing program.
    pub fn continuous_form(&self) -> Option<(f64, f64, f64, f64)> {
        match self {
            BidCurve::Quadratic { a, b, cap } => Some((*a, *b, *cap, 0.0)),
            BidCurve::Zero { cap } => Some((0.0, 0.0, *cap, 0.0)),
            BidCurve::Inflated { inner, uplift } => {
                inner.continuous_form().map(|(a, b, c, u)| (a, b, c, u + uplift))
            }
            _ => None,
        }
    }

    /// True for step-like curves that clear by enumeration.
    pub fn is_discrete(&self) -> bool {
        match self {
            BidCurve::Step { .. } => true,
            BidCurve::Merged(m) => matches!(m.repr, MergedRepr::Grid { .. }),
            BidCurve::Inflated { inner, .. } => inner.is_discrete(),
            _ => false,
        }
    }

    /// Multiplies every price by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<BidCurve> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidBid(format!("scale factor must be positive, got {s}")));
        }
        Ok(match self {
            BidCurve::Step { increment, steps } => BidCurve::Step {
                increment: *increment,
                steps: steps.iter().map(|st| Step { price: st.price * s, qty: st.qty }).collect(),
            },
            BidCurve::Quadratic { a, b, cap } => BidCurve::Quadratic { a: a * s, b: b * s, cap: *cap },
            BidCurve::Zero { cap } => BidCurve::Zero { cap: *cap },
            BidCurve::Inflated { inner, uplift } => {
                BidCurve::Inflated { inner: Box::new(inner.scaled(s)?), uplift: uplift * s }
            }
            BidCurve::Merged(m) => {
                let parts = m.parts.iter().map(|p| p.scaled(s)).collect::<Result<Vec<_>>>()?;
                merge_bids(&parts)?
            }
        })
    }
}

fn check_cap(cap: f64) -> Result<()> {
    if cap > 0.0 || cap == f64::INFINITY {
        Ok(())
    } else {
        Err(Error::InvalidBid(format!("capacity must be positive, got {cap}")))
    }
}

/// `Some(k)` when `x` is within tolerance of `k * grid`.
fn grid_index(x: f64, grid: f64) -> Option<u64> {
    let r = x / grid;
    let k = r.round();
    if k >= 0.0 && (r - k).abs() <= GRID_TOL {
        Some(k as u64)
    } else {
        None
    }
}

/// Smallest grid index whose quantity covers `x`.
fn ceil_index(x: f64, grid: f64) -> usize {
    (x / grid - GRID_TOL).ceil().max(0.0) as usize
}

impl Merged {
    fn eval(&self, x: f64) -> Result<f64> {
        match &self.repr {
            MergedRepr::Grid { grid, values } => {
                let k = ceil_index(x, *grid);
                values.get(k).copied().ok_or(Error::InfeasibleQuantity {
                    x,
                    max: (values.len() - 1) as f64 * grid,
                })
            }
            MergedRepr::Convex { pieces } => merged_convex_value(pieces, x),
        }
    }

    /// Grid spacing and tabulated values for step-type merges.
    pub fn grid_table(&self) -> Option<(f64, &[f64])> {
        match &self.repr {
            MergedRepr::Grid { grid, values } => Some((*grid, values)),
            MergedRepr::Convex { .. } => None,
        }
    }
}

fn merged_convex_value(pieces: &[(f64, f64, f64)], x: f64) -> Result<f64> {
    let n = pieces.len();
    let mut p = ConvexProgram::new(n);
    for (i, &(a, b, cap)) in pieces.iter().enumerate() {
        p.q[i * n + i] = 2.0 * a;
        p.c[i] = b;
        p.upper[i] = cap;
    }
    p.add_eq(vec![1.0; n], x);
    let rep = solver::solve_convex(&p)?;
    match rep.status {
        SolveStatus::Optimal => Ok(rep.objective.max(0.0)),
        _ => Err(Error::InfeasibleQuantity { x, max: pieces.iter().map(|p| p.2).sum() }),
    }
}

enum Flavor {
    Grid,
    Convex,
    Neutral,
}

fn flavor(b: &BidCurve) -> Result<Flavor> {
    Ok(match b {
        BidCurve::Step { .. } => Flavor::Grid,
        BidCurve::Quadratic { .. } => Flavor::Convex,
        BidCurve::Zero { .. } => Flavor::Neutral,
        BidCurve::Merged(m) => match m.repr {
            MergedRepr::Grid { .. } => Flavor::Grid,
            MergedRepr::Convex { .. } => Flavor::Convex,
        },
        BidCurve::Inflated { inner, .. } => match flavor(inner)? {
            Flavor::Grid => Flavor::Grid,
            _ => {
                return Err(Error::InvalidBid(
                    "inflated continuous curves cannot be merged".into(),
                ))
            }
        },
    })
}

/// Grid spacing a curve needs when merged on a common grid, in micro-units.
fn grid_micro(b: &BidCurve) -> Result<u64> {
    let to_micro = |v: f64| -> Result<u64> {
        let m = v * 1e6;
        let r = m.round();
        if r >= 1.0 && (m - r).abs() <= 1e-3 {
            Ok(r as u64)
        } else {
            Err(Error::GridMismatch(format!("{v} has no common grid at 1e-6 resolution")))
        }
    };
    match b {
        BidCurve::Step { increment, .. } => to_micro(*increment),
        BidCurve::Zero { cap } => {
            if cap.is_finite() {
                to_micro(*cap)
            } else {
                Err(Error::GridMismatch("unbounded zero bid cannot join a step merge".into()))
            }
        }
        BidCurve::Inflated { inner, .. } => grid_micro(inner),
        BidCurve::Merged(m) => match &m.repr {
            MergedRepr::Grid { grid, .. } => to_micro(*grid),
            MergedRepr::Convex { .. } => Err(Error::GridMismatch("convex part in a step merge".into())),
        },
        BidCurve::Quadratic { .. } => Err(Error::GridMismatch("convex part in a step merge".into())),
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Min-convolution of several curves over the same good.
pub fn merge_bids(bids: &[BidCurve]) -> Result<BidCurve> {
    if bids.is_empty() {
        return Err(Error::InvalidBid("cannot merge an empty list".into()));
    }
    let mut any_grid = false;
    let mut any_convex = false;
    for b in bids {
        match flavor(b)? {
            Flavor::Grid => any_grid = true,
            Flavor::Convex => any_convex = true,
            Flavor::Neutral => {}
        }
    }
    if any_grid && any_convex {
        return Err(Error::GridMismatch("cannot merge step and continuous curves".into()));
    }
    if any_grid {
        let mut g = 0u64;
        for b in bids {
            g = gcd(g, grid_micro(b)?);
        }
        let grid = g as f64 / 1e6;
        let mut acc = vec![0.0];
        for b in bids {
            let n = (b.max_quantity() / grid + GRID_TOL).floor() as usize;
            let own: Vec<f64> = (0..=n).map(|k| b.eval(k as f64 * grid)).collect::<Result<_>>()?;
            acc = min_convolve(&acc, &own);
        }
        Ok(BidCurve::Merged(Merged { parts: bids.to_vec(), repr: MergedRepr::Grid { grid, values: acc } }))
    } else {
        let mut pieces = Vec::new();
        for b in bids {
            flatten_convex(b, &mut pieces);
        }
        Ok(BidCurve::Merged(Merged { parts: bids.to_vec(), repr: MergedRepr::Convex { pieces } }))
    }
}

fn flatten_convex(b: &BidCurve, out: &mut Vec<(f64, f64, f64)>) {
    match b {
        BidCurve::Quadratic { a, b, cap } => out.push((*a, *b, *cap)),
        BidCurve::Zero { cap } => out.push((0.0, 0.0, *cap)),
        BidCurve::Merged(Merged { repr: MergedRepr::Convex { pieces }, .. }) => out.extend_from_slice(pieces),
        _ => unreachable!("flavor checked before flattening"),
    }
}

fn min_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; a.len() + b.len() - 1];
    for (i, va) in a.iter().enumerate() {
        for (j, vb) in b.iter().enumerate() {
            let v = va + vb;
            if v < out[i + j] {
                out[i + j] = v;
            }
        }
    }
    // Nondecreasing by construction of the inputs; enforce against rounding.
    for k in (0..out.len().saturating_sub(1)).rev() {
        if out[k] > out[k + 1] {
            out[k] = out[k + 1];
        }
    }
    out
}

pub fn inflate(bid: &BidCurve, uplift: f64) -> Result<BidCurve> {
    if !(uplift >= 0.0 && uplift.is_finite()) {
        return Err(Error::InvalidBid(format!("uplift must be nonnegative, got {uplift}")));
    }
    Ok(BidCurve::Inflated { inner: Box::new(bid.clone()), uplift })
}

/// Values of a step curve at every multiple of its increment up to its largest
/// offer, starting with 0 at quantity 0.
fn completed_grid(increment: f64, steps: &[Step]) -> Vec<f64> {
    let n = steps.last().map_or(0, |s| (s.qty / increment).round() as usize);
    let mut v = vec![0.0; n + 1];
    let mut j = 0;
    for (k, slot) in v.iter_mut().enumerate().skip(1) {
        let q = k as f64 * increment;
        while steps[j].qty < q - GRID_TOL {
            j += 1;
        }
        *slot = steps[j].price;
    }
    v
}

/// Strictly increasing marginal prices on the completed grid. Returns a
/// violating quadruple when the test fails.
pub fn is_marginally_increasing(bid: &BidCurve) -> Result<(bool, Option<Quadruple>)> {
    let BidCurve::Step { increment, steps } = bid else {
        return Err(Error::InvalidBid("marginal test needs a step bid".into()));
    };
    let v = completed_grid(*increment, steps);
    for k in 1..v.len().saturating_sub(1) {
        let left = v[k] - v[k - 1];
        let right = v[k + 1] - v[k];
        if !(left < right) {
            let m = *increment;
            let q = Quadruple {
                a: (k - 1) as f64 * m,
                b: k as f64 * m,
                c: k as f64 * m,
                d: (k + 1) as f64 * m,
            };
            return Ok((false, Some(q)));
        }
    }
    Ok((true, None))
}

pub fn is_convex_increasing(bid: &BidCurve) -> bool {
    let nondecreasing_increments = |v: &[f64]| {
        v.windows(3).all(|w| w[1] - w[0] <= w[2] - w[1] + 1e-12)
    };
    match bid {
        BidCurve::Quadratic { a, b, .. } => *a >= 0.0 && *b > 0.0,
        BidCurve::Step { increment, steps } => nondecreasing_increments(&completed_grid(*increment, steps)),
        BidCurve::Zero { .. } => false,
        BidCurve::Inflated { inner, uplift } => *uplift == 0.0 && is_convex_increasing(inner),
        BidCurve::Merged(m) => match &m.repr {
            MergedRepr::Grid { values, .. } => nondecreasing_increments(values),
            MergedRepr::Convex { .. } => m.parts.iter().all(is_convex_increasing),
        },
    }
}

/// Bids of every bidder, in tie-break priority order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BidProfile {
    entries: Vec<(BidderId, BidCurve)>,
}

impl BidProfile {
    /// Keeps the given order as the tie-break priority.
    pub fn new(entries: Vec<(BidderId, BidCurve)>) -> Result<BidProfile> {
        let mut seen = std::collections::BTreeSet::new();
        for (id, _) in &entries {
            if !seen.insert(*id) {
                return Err(Error::ModelError(format!("duplicate bidder id {id}")));
            }
        }
        Ok(BidProfile { entries })
    }

    /// Ascending-id priority.
    pub fn from_map(map: BTreeMap<BidderId, BidCurve>) -> BidProfile {
        BidProfile { entries: map.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<BidderId> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BidderId, &BidCurve)> {
        self.entries.iter().map(|(id, c)| (*id, c))
    }

    pub fn get(&self, id: BidderId) -> Option<&BidCurve> {
        self.entries.iter().find(|e| e.0 == id).map(|e| &e.1)
    }

    pub fn index_of(&self, id: BidderId) -> Option<usize> {
        self.entries.iter().position(|e| e.0 == id)
    }

    pub fn id_at(&self, i: usize) -> BidderId {
        self.entries[i].0
    }

    pub fn curve_at(&self, i: usize) -> &BidCurve {
        &self.entries[i].1
    }

    /// Copy with `id`'s curve replaced.
    pub fn with_curve(&self, id: BidderId, curve: BidCurve) -> Result<BidProfile> {
        let i = self
            .index_of(id)
            .ok_or_else(|| Error::ModelError(format!("unknown bidder {id}")))?;
        let mut out = self.clone();
        out.entries[i].1 = curve;
        Ok(out)
    }

    /// Copy with `id` replaced, in place, by the given identities.
    pub fn with_split(&self, id: BidderId, parts: Vec<(BidderId, BidCurve)>) -> Result<BidProfile> {
        let i = self
            .index_of(id)
            .ok_or_else(|| Error::ModelError(format!("unknown bidder {id}")))?;
        let mut entries = self.entries.clone();
        entries.splice(i..=i, parts);
        BidProfile::new(entries)
    }

    /// Every curve inflated by the matching uplift (missing ids get none).
    pub fn inflated(&self, uplift: &BTreeMap<BidderId, f64>) -> Result<BidProfile> {
        let entries = self
            .entries
            .iter()
            .map(|(id, c)| {
                let u = uplift.get(id).copied().unwrap_or(0.0);
                Ok((*id, if u > 0.0 { inflate(c, u)? } else { c.clone() }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BidProfile { entries })
    }
}
