//! Seeded random instance families for property suites and benchmarks.
//! Market instances are truthful: bids equal true costs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bids::{BidCurve, BidProfile, BidderId};
use crate::markets::{Hook, Line, Market, MarketFamily, MultiTypeMarket, NetworkMarket, NodeId, SingleGoodMarket};
use crate::scenario::Instance;
use crate::solver::{ConvexProgram, IndicatorGroup, IndicatorProgram};

fn truthful(market: Market, curves: Vec<BidCurve>) -> Instance {
    let entries: Vec<(BidderId, BidCurve)> =
        curves.into_iter().enumerate().map(|(i, c)| (BidderId(i as u32 + 1), c)).collect();
    let p = BidProfile::new(entries).expect("fresh ids");
    Instance { market, bids: p.clone(), true_costs: p }
}

/// Step bids on a unit grid. With `marginal`, every bid offers each unit up
/// to its capacity at strictly increasing marginal prices.
pub fn single_good<R: Rng>(rng: &mut R, n: usize, marginal: bool) -> Instance {
    let mut curves = Vec::with_capacity(n);
    let mut units = 0;
    for _ in 0..n {
        let steps: Vec<(f64, f64)> = if marginal {
            let k = rng.gen_range(1..=3);
            let mut d = rng.gen_range(1..=20) as f64;
            let mut price = 0.0;
            (1..=k)
                .map(|q| {
                    price += d;
                    d += rng.gen_range(1..=10) as f64;
                    (price, q as f64)
                })
                .collect()
        } else {
            // Half the bidders offer one indivisible block.
            let mut qs: Vec<u32> = if rng.gen_bool(0.5) {
                vec![rng.gen_range(2..=4)]
            } else {
                (1..=4).filter(|_| rng.gen_bool(0.5)).collect()
            };
            if qs.is_empty() {
                qs.push(rng.gen_range(1..=4));
            }
            let mut price = 0.0;
            qs.iter()
                .map(|&q| {
                    price += rng.gen_range(1..=30) as f64;
                    (price, q as f64)
                })
                .collect()
        };
        units += steps.last().unwrap().1 as u32;
        curves.push(BidCurve::step(1.0, &steps).expect("valid steps"));
    }
    let demand = rng.gen_range(1..=(units * 3 / 4).max(1)) as f64;
    let market = Market::new(
        MarketFamily::SingleGood(SingleGoodMarket::new(demand, 1.0).unwrap()),
        Hook::Zero,
    )
    .unwrap();
    truthful(market, curves)
}

/// Capacity offered by the bidders of each type subset.
fn subset_caps(t: usize, types: &BTreeMap<BidderId, usize>, curves: &[BidCurve]) -> Vec<f64> {
    (0..1usize << t)
        .map(|mask| {
            curves
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> types[&BidderId(*i as u32 + 1)] & 1 == 1)
                .map(|(_, c)| c.max_quantity())
                .sum()
        })
        .collect()
}

fn type_names(t: usize) -> Vec<String> {
    (0..t).map(|k| ((b'A' + k as u8) as char).to_string()).collect()
}

/// Step bids with random types and an arbitrary (often non-supermodular)
/// requirement table that full participation can always meet.
pub fn multi_type_steps<R: Rng>(rng: &mut R, n: usize, t: usize) -> Instance {
    let mut types = BTreeMap::new();
    let mut curves = Vec::with_capacity(n);
    for i in 0..n {
        types.insert(BidderId(i as u32 + 1), rng.gen_range(0..t));
        let k = rng.gen_range(1..=2);
        let mut price = 0.0;
        let mut q = 0.0;
        let steps: Vec<(f64, f64)> = (0..k)
            .map(|_| {
                q += (rng.gen_range(1..=3) * 10) as f64;
                price += rng.gen_range(5..=60) as f64;
                (price, q)
            })
            .collect();
        curves.push(BidCurve::step(10.0, &steps).unwrap());
    }
    let caps = subset_caps(t, &types, &curves);
    let mut table = vec![0.0; 1 << t];
    for (mask, v) in table.iter_mut().enumerate().skip(1) {
        if rng.gen_bool(0.6) {
            let units = (caps[mask] / 10.0) as u32;
            *v = (rng.gen_range(0..=units) * 10) as f64;
        }
    }
    let m = MultiTypeMarket::new(type_names(t), table, types).unwrap();
    truthful(Market::new(MarketFamily::MultiType(m), Hook::Zero).unwrap(), curves)
}

/// Convex quadratic bids. With `supermodular`, `M(T) = g(sum of weights)`
/// for a convex increasing `g`, which is normalized, nondecreasing and
/// supermodular; otherwise the table is arbitrary. Full participation can
/// always meet the requirements.
pub fn multi_type_convex<R: Rng>(rng: &mut R, n: usize, t: usize, supermodular: bool) -> Instance {
    let mut types = BTreeMap::new();
    let mut curves = Vec::with_capacity(n);
    for i in 0..n {
        types.insert(BidderId(i as u32 + 1), rng.gen_range(0..t));
        let cap = if rng.gen_bool(0.3) { f64::INFINITY } else { rng.gen_range(5..=40) as f64 };
        let a = rng.gen_range(0.0..0.3);
        let b = rng.gen_range(1.0..20.0);
        curves.push(BidCurve::quadratic(a, b, cap).unwrap());
    }
    let caps = subset_caps(t, &types, &curves);
    let mut table = vec![0.0; 1 << t];
    if supermodular {
        // Types nobody offers get weight 0 so every requirement stays coverable.
        let w: Vec<f64> =
            (0..t).map(|k| if caps[1 << k] > 0.0 { rng.gen_range(0..=5) as f64 } else { 0.0 }).collect();
        let (alpha, beta) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..3.0));
        for (mask, v) in table.iter_mut().enumerate() {
            let s: f64 = (0..t).filter(|k| mask >> k & 1 == 1).map(|k| w[k]).sum();
            *v = alpha * s * s + beta * s;
        }
        let scale = (1..1usize << t)
            .filter(|&m| table[m] > 0.0)
            .map(|m| rng.gen_range(0.3..0.9) * caps[m] / table[m])
            .fold(1.0, f64::min);
        for v in table.iter_mut() {
            *v *= scale;
        }
    } else {
        for (mask, v) in table.iter_mut().enumerate().skip(1) {
            *v = crate::round6(rng.gen_range(0.0..1.0) * caps[mask].min(40.0));
        }
    }
    let m = MultiTypeMarket::new(type_names(t), table, types).unwrap();
    truthful(Market::new(MarketFamily::MultiType(m), Hook::Zero).unwrap(), curves)
}

/// Four-node meshed network with quadratic suppliers and one or two loads.
pub fn network<R: Rng>(rng: &mut R, n: usize) -> Instance {
    let nodes: Vec<NodeId> = (1..=4).map(NodeId).collect();
    let mut pairs = vec![(1, 2), (2, 3), (3, 4), (4, 1)];
    if rng.gen_bool(0.5) {
        pairs.push((1, 3));
    }
    let lines = pairs
        .into_iter()
        .map(|(a, b)| Line {
            from: NodeId(a),
            to: NodeId(b),
            susceptance: rng.gen_range(1..=3) as f64,
            limit: if rng.gen_bool(0.6) { Some(rng.gen_range(5..=25) as f64) } else { None },
        })
        .collect();
    let mut demand = BTreeMap::new();
    let loads = if rng.gen_bool(0.5) { 1 } else { 2 };
    let mut shuffled = nodes.clone();
    shuffled.shuffle(rng);
    for node in shuffled.iter().take(loads) {
        demand.insert(*node, rng.gen_range(5..=20) as f64);
    }
    let mut at = BTreeMap::new();
    let mut curves = Vec::with_capacity(n);
    for i in 0..n {
        at.insert(BidderId(i as u32 + 1), nodes[rng.gen_range(0..4)]);
        let a = rng.gen_range(0.02..0.3);
        let b = rng.gen_range(2.0..20.0);
        let cap = rng.gen_range(10..=40) as f64;
        curves.push(BidCurve::quadratic(a, b, cap).unwrap());
    }
    let net = NetworkMarket::new(nodes, lines, demand, at).unwrap();
    truthful(Market::new(MarketFamily::Network(net), Hook::Zero).unwrap(), curves)
}

/// One of the families above, chosen by the generator.
pub fn mixed<R: Rng>(rng: &mut R, n: usize) -> Instance {
    match rng.gen_range(0..5) {
        0 => single_good(rng, n, false),
        1 => single_good(rng, n, true),
        2 => {
            let t = rng.gen_range(2..=3);
            multi_type_steps(rng, n, t)
        }
        3 => {
            let (t, sm) = (rng.gen_range(2..=3), rng.gen_bool(0.5));
            multi_type_convex(rng, n, t, sm)
        }
        _ => network(rng, n),
    }
}

/// A fixed-charge program with `k` groups of one or two bounded variables,
/// a separable convex objective and one covering row.
pub fn indicator_program<R: Rng>(rng: &mut R, k: usize) -> IndicatorProgram {
    let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=2)).collect();
    let n: usize = sizes.iter().sum();
    let mut base = ConvexProgram::new(n);
    for i in 0..n {
        base.q[i * n + i] = rng.gen_range(0.0..2.0);
        base.c[i] = rng.gen_range(-10.0..10.0);
        base.upper[i] = rng.gen_range(1.0..10.0);
    }
    let reach: f64 = base.upper.iter().sum();
    base.add_ge(vec![1.0; n], rng.gen_range(0.0..0.6) * reach);
    let mut groups = Vec::with_capacity(k);
    let mut next = 0;
    for s in sizes {
        groups.push(IndicatorGroup { vars: (next..next + s).collect(), charge: rng.gen_range(0.0..30.0) });
        next += s;
    }
    IndicatorProgram { base, groups }
}
