//! Collusion and shill simulations over fixed, seeded deviation families.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bids::{merge_bids, BidCurve, BidProfile, BidderId};
use crate::error::{Error, Result};
use crate::markets::{clear_all, Coalition, Market, MarketFamily};
use crate::mechanisms::{run, vcg, Rule};
use crate::MARGIN_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    Collusion,
    Shill,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deviation {
    /// Offer the full true quantity for free.
    Zero,
    /// Every price halved.
    Halved,
    /// Every colluder scales its prices by a seeded factor in `[0.05, 1.5)`.
    RandomScale,
    /// Merge the colluders' step bids, then each bids its own quantities at
    /// an equal share of the merged price.
    MergedResplit,
}

impl Deviation {
    pub const ALL: [Deviation; 4] =
        [Deviation::Zero, Deviation::Halved, Deviation::RandomScale, Deviation::MergedResplit];

    pub fn name(self) -> &'static str {
        match self {
            Deviation::Zero => "zero",
            Deviation::Halved => "halved",
            Deviation::RandomScale => "random_scale",
            Deviation::MergedResplit => "merged_resplit",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub rule: Rule,
    pub attackers: Coalition,
    /// Deviation family or split label.
    pub label: String,
    pub seed: Option<u64>,
    pub manipulated: BidProfile,
    pub utility_before: f64,
    pub utility_after: f64,
    /// `utility_after - utility_before`.
    pub margin: f64,
    pub profitable: bool,
    /// Truthful VCG utility of the shill bidder, the bound for core-selecting rules.
    pub vcg_reference: Option<f64>,
}

impl AttackReport {
    /// `utility_after - vcg_reference`.
    pub fn vcg_margin(&self) -> Option<f64> {
        self.vcg_reference.map(|v| self.utility_after - v)
    }
}

fn zero_of(c: &BidCurve) -> Result<Option<BidCurve>> {
    Ok(match c {
        BidCurve::Step { increment, steps } => {
            Some(BidCurve::step(*increment, &[(0.0, steps.last().expect("nonempty").qty)])?)
        }
        BidCurve::Quadratic { cap, .. } | BidCurve::Zero { cap } => Some(BidCurve::zero(*cap)?),
        _ => None,
    })
}

/// Deviating bids for `colluders`, or `None` when the family does not apply.
pub fn deviation_bids(
    market: &Market,
    true_costs: &BidProfile,
    colluders: &[BidderId],
    family: Deviation,
    seed: u64,
) -> Result<Option<BTreeMap<BidderId, BidCurve>>> {
    let mut curves = Vec::with_capacity(colluders.len());
    for &l in colluders {
        let c = true_costs.get(l).ok_or_else(|| Error::ModelError(format!("unknown bidder {l}")))?;
        curves.push((l, c));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    match family {
        Deviation::Zero => {
            for (l, c) in curves {
                match zero_of(c)? {
                    Some(z) => out.insert(l, z),
                    None => return Ok(None),
                };
            }
        }
        Deviation::Halved => {
            for (l, c) in curves {
                out.insert(l, c.scaled(0.5)?);
            }
        }
        Deviation::RandomScale => {
            for (l, c) in curves {
                out.insert(l, c.scaled(rng.gen_range(0.05..1.5))?);
            }
        }
        Deviation::MergedResplit => {
            if !curves.iter().all(|(_, c)| matches!(c, BidCurve::Step { .. })) {
                return Ok(None);
            }
            if let MarketFamily::MultiType(m) = &market.family {
                let t0 = m.type_of(colluders[0]);
                if colluders.iter().any(|l| m.type_of(*l) != t0) {
                    return Ok(None);
                }
            }
            let parts: Vec<BidCurve> = curves.iter().map(|(_, c)| (*c).clone()).collect();
            let merged = merge_bids(&parts)?;
            let share = colluders.len() as f64;
            for (l, c) in curves {
                let BidCurve::Step { increment, steps } = c else { unreachable!() };
                let mut kept: Vec<(f64, f64)> = Vec::new();
                for s in steps {
                    let price = merged.eval(s.qty)? / share;
                    match kept.last_mut() {
                        Some(last) if price <= last.0 => *last = (last.0, s.qty),
                        _ => kept.push((price, s.qty)),
                    }
                }
                out.insert(l, BidCurve::step(*increment, &kept)?);
            }
        }
    }
    Ok(Some(out))
}

/// Colluders `K`, all losing under truth, switch to `deviation`.
pub fn simulate_collusion(
    market: &Market,
    true_costs: &BidProfile,
    colluders: &[BidderId],
    deviation: &BTreeMap<BidderId, BidCurve>,
    rule: Rule,
) -> Result<AttackReport> {
    let truthful = clear_all(market, true_costs)?;
    if !truthful.is_feasible() {
        return Err(Error::ClearingInfeasible);
    }
    for &l in colluders {
        if true_costs.index_of(l).is_none() {
            return Err(Error::ModelError(format!("unknown bidder {l}")));
        }
        if truthful.quantity(l) > 0.0 {
            return Err(Error::PreconditionViolated(format!("colluder {l} wins under truthful bidding")));
        }
    }
    let mut manipulated = true_costs.clone();
    for (&l, b) in deviation {
        if !colluders.contains(&l) {
            return Err(Error::PreconditionViolated(format!("bidder {l} deviates but is not a colluder")));
        }
        manipulated = manipulated.with_curve(l, b.clone())?;
    }
    let out = run(rule, market, &manipulated, true_costs)?;
    // Losers are paid nothing under every rule, so the truthful baseline is 0.
    let before = 0.0;
    let after: f64 = colluders.iter().map(|&l| out.utility(l)).sum();
    let margin = after - before;
    Ok(AttackReport {
        kind: AttackKind::Collusion,
        rule,
        attackers: colluders.to_vec(),
        label: String::new(),
        seed: None,
        manipulated,
        utility_before: before,
        utility_after: after,
        margin,
        profitable: margin > MARGIN_TOL,
        vcg_reference: None,
    })
}

/// Bidder `l` enters as several identities at its own location.
pub fn simulate_shill(
    market: &Market,
    true_costs: &BidProfile,
    l: BidderId,
    split: &[BidCurve],
    rule: Rule,
) -> Result<AttackReport> {
    let cost = true_costs.get(l).ok_or_else(|| Error::ModelError(format!("unknown bidder {l}")))?.clone();
    if split.is_empty() {
        return Err(Error::PreconditionViolated("a split needs at least one identity".into()));
    }
    let mut next = true_costs.ids().iter().map(|b| b.0).max().unwrap_or(0) + 1;
    let mut ids = vec![l];
    let mut market2 = market.clone();
    for _ in 1..split.len() {
        let fresh = BidderId(next);
        next += 1;
        market2 = market2.with_alias(fresh, l)?;
        ids.push(fresh);
    }
    let parts: Vec<(BidderId, BidCurve)> = ids.iter().cloned().zip(split.iter().cloned()).collect();
    let manipulated = true_costs.with_split(l, parts)?;
    let out = run(rule, &market2, &manipulated, &manipulated)?;
    let paid: f64 = ids.iter().map(|&i| out.payment(i)).sum();
    let qty: f64 = ids.iter().map(|&i| out.clearing.quantity(i)).sum();
    let after = paid - cost.eval_clamped(qty)?;
    let truthful = run(rule, market, true_costs, true_costs)?;
    let before = truthful.utility(l);
    let vcg_reference = if rule == Rule::Vcg { before } else { vcg(market, true_costs, true_costs)?.utility(l) };
    let margin = after - before;
    Ok(AttackReport {
        kind: AttackKind::Shill,
        rule,
        attackers: ids,
        label: String::new(),
        seed: None,
        manipulated,
        utility_before: before,
        utility_after: after,
        margin,
        profitable: margin > MARGIN_TOL,
        vcg_reference: Some(vcg_reference),
    })
}

/// Labelled identity splits of a true cost curve. Every split stays within the
/// curve's own capacity.
pub fn shill_splits(curve: &BidCurve, seed: u64) -> Result<Vec<(String, Vec<BidCurve>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![("identity".to_string(), vec![curve.clone()])];
    match curve {
        BidCurve::Step { increment, steps } => {
            let max = steps.last().expect("nonempty").qty;
            let units = (max / increment).round() as u64;
            if units >= 2 {
                let h = (units / 2) as f64 * increment;
                out.push((
                    "zero_halves".into(),
                    vec![BidCurve::step(*increment, &[(0.0, h)])?, BidCurve::step(*increment, &[(0.0, max - h)])?],
                ));
                let trunc = |limit: f64, s: f64| -> Result<Option<BidCurve>> {
                    let kept: Vec<(f64, f64)> =
                        steps.iter().filter(|st| st.qty <= limit + 1e-9).map(|st| (st.price * s, st.qty)).collect();
                    if kept.is_empty() {
                        Ok(None)
                    } else {
                        Ok(Some(BidCurve::step(*increment, &kept)?))
                    }
                };
                if let (Some(a), Some(b)) = (trunc(h, 1.0)?, trunc(max - h, 1.0)?) {
                    out.push(("truncated_halves".into(), vec![a, b]));
                }
                let (sa, sb) = (rng.gen_range(0.3..1.2), rng.gen_range(0.3..1.2));
                if let (Some(a), Some(b)) = (trunc(h, sa)?, trunc(max - h, sb)?) {
                    out.push(("random_halves".into(), vec![a, b]));
                }
            }
        }
        BidCurve::Quadratic { a, b, cap } => {
            let half = cap / 2.0;
            out.push(("zero_halves".into(), vec![BidCurve::zero(half)?, BidCurve::zero(half)?]));
            out.push((
                "faithful_halves".into(),
                vec![BidCurve::quadratic(2.0 * a, *b, half)?, BidCurve::quadratic(2.0 * a, *b, half)?],
            ));
            let (sa, sb) = (rng.gen_range(0.3..1.2), rng.gen_range(0.3..1.2));
            out.push((
                "random_halves".into(),
                vec![BidCurve::quadratic(2.0 * a * sa, b * sa, half)?, BidCurve::quadratic(2.0 * a * sb, b * sb, half)?],
            ));
        }
        BidCurve::Zero { cap } => {
            out.push(("zero_halves".into(), vec![BidCurve::zero(cap / 2.0)?, BidCurve::zero(cap / 2.0)?]));
        }
        _ => {}
    }
    Ok(out)
}
