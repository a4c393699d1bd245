//! Scenario files: market, bidders with true costs and bids, second-stage hook.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bids::{BidCurve, BidProfile, BidderId};
use crate::error::{Error, Result};
use crate::markets::{
    Hook, Line, Market, MarketFamily, MultiTypeMarket, NetworkMarket, NodeId, SingleGoodMarket,
};
use crate::round6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Step {
        increment: f64,
        /// `[price, quantity]` pairs.
        steps: Vec<[f64; 2]>,
    },
    Quad {
        a: f64,
        b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    Zero {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
}

impl CurveSpec {
    pub fn to_curve(&self) -> Result<BidCurve> {
        match self {
            CurveSpec::Step { increment, steps } => {
                let s: Vec<(f64, f64)> = steps.iter().map(|p| (p[0], p[1])).collect();
                BidCurve::step(*increment, &s)
            }
            CurveSpec::Quad { a, b, cap } => BidCurve::quadratic(*a, *b, cap.unwrap_or(f64::INFINITY)),
            CurveSpec::Zero { cap } => BidCurve::zero(cap.unwrap_or(f64::INFINITY)),
        }
    }

    /// Serializable form; runtime-only curves have none.
    pub fn from_curve(c: &BidCurve) -> Option<CurveSpec> {
        let cap = |v: f64| v.is_finite().then_some(v);
        match c {
            BidCurve::Step { increment, steps } => Some(CurveSpec::Step {
                increment: *increment,
                steps: steps.iter().map(|s| [s.price, s.qty]).collect(),
            }),
            BidCurve::Quadratic { a, b, cap: c } => Some(CurveSpec::Quad { a: *a, b: *b, cap: cap(*c) }),
            BidCurve::Zero { cap: c } => Some(CurveSpec::Zero { cap: cap(*c) }),
            BidCurve::Inflated { .. } | BidCurve::Merged(_) => None,
        }
    }

    fn normalize(&mut self) {
        match self {
            CurveSpec::Step { increment, steps } => {
                *increment = round6(*increment);
                for s in steps {
                    s[0] = round6(s[0]);
                    s[1] = round6(s[1]);
                }
            }
            CurveSpec::Quad { a, b, cap } => {
                *a = round6(*a);
                *b = round6(*b);
                *cap = cap.map(round6);
            }
            CurveSpec::Zero { cap } => *cap = cap.map(round6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub types: Vec<String>,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketSpec {
    SingleGood {
        demand: f64,
        increment: f64,
    },
    MultiType {
        types: Vec<String>,
        /// Subsets not listed require nothing.
        requirements: Vec<Requirement>,
    },
    Network {
        nodes: Vec<NodeId>,
        lines: Vec<Line>,
        #[serde(deserialize_with = "node_keys")]
        demand: BTreeMap<NodeId, f64>,
    },
}

// Tagged enums buffer their content, which turns numeric map keys into strings.
fn node_keys<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<NodeId, f64>, D::Error> {
    let raw = BTreeMap::<String, f64>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim().parse::<u32>().map(|n| (NodeId(n), v)).map_err(|_| serde::de::Error::custom(format!("bad node id {k:?}")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidderSpec {
    pub id: BidderId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub type_tag: Option<String>,
    pub true_cost: CurveSpec,
    /// Defaults to the true cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bid: Option<CurveSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub market: MarketSpec,
    pub bidders: Vec<BidderSpec>,
    #[serde(default, skip_serializing_if = "Hook::is_zero")]
    pub d_hook: Hook,
    /// Tie-break priority; ascending id when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_break: Option<Vec<BidderId>>,
}

/// A scenario turned into engine objects.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub market: Market,
    pub bids: BidProfile,
    pub true_costs: BidProfile,
}

impl Scenario {
    /// Parses and rounds every number onto the 1e-6 grid.
    pub fn from_json(text: &str) -> std::result::Result<Scenario, serde_json::Error> {
        let mut s: Scenario = serde_json::from_str(text)?;
        s.normalize();
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn normalize(&mut self) {
        match &mut self.market {
            MarketSpec::SingleGood { demand, increment } => {
                *demand = round6(*demand);
                *increment = round6(*increment);
            }
            MarketSpec::MultiType { requirements, .. } => {
                for r in requirements {
                    r.amount = round6(r.amount);
                }
            }
            MarketSpec::Network { lines, demand, .. } => {
                for l in lines {
                    l.susceptance = round6(l.susceptance);
                    l.limit = l.limit.map(round6);
                }
                for v in demand.values_mut() {
                    *v = round6(*v);
                }
            }
        }
        for b in &mut self.bidders {
            b.true_cost.normalize();
            if let Some(bid) = &mut b.bid {
                bid.normalize();
            }
        }
        if let Hook::Shortfall { alpha, target } = &mut self.d_hook {
            *alpha = round6(*alpha);
            *target = round6(*target);
        }
    }

    fn order(&self) -> Result<Vec<BidderId>> {
        let mut ids: Vec<BidderId> = self.bidders.iter().map(|b| b.id).collect();
        let unique: BTreeSet<BidderId> = ids.iter().cloned().collect();
        if unique.len() != ids.len() {
            return Err(Error::ModelError("duplicate bidder ids".into()));
        }
        match &self.tie_break {
            None => {
                ids.sort();
                Ok(ids)
            }
            Some(order) => {
                let o: BTreeSet<BidderId> = order.iter().cloned().collect();
                if o != unique || o.len() != order.len() {
                    return Err(Error::ModelError("tie_break must list every bidder exactly once".into()));
                }
                Ok(order.clone())
            }
        }
    }

    pub fn build(&self) -> Result<Instance> {
        let order = self.order()?;
        let by_id: BTreeMap<BidderId, &BidderSpec> = self.bidders.iter().map(|b| (b.id, b)).collect();
        let family = match &self.market {
            MarketSpec::SingleGood { demand, increment } => {
                MarketFamily::SingleGood(SingleGoodMarket::new(*demand, *increment)?)
            }
            MarketSpec::MultiType { types, requirements } => {
                let t = types.len();
                if t > crate::markets::MAX_TYPES {
                    return Err(Error::TooManyTypes { count: t, limit: crate::markets::MAX_TYPES });
                }
                let index = |name: &String| {
                    types.iter().position(|x| x == name).ok_or_else(|| Error::ModelError(format!("unknown type {name}")))
                };
                let mut table = vec![0.0; 1 << t];
                let mut seen = BTreeSet::new();
                for r in requirements {
                    let mut mask = 0usize;
                    for name in &r.types {
                        mask |= 1 << index(name)?;
                    }
                    if !seen.insert(mask) {
                        return Err(Error::ModelError(format!("requirement for {:?} given twice", r.types)));
                    }
                    table[mask] = r.amount;
                }
                let mut tags = BTreeMap::new();
                for b in &self.bidders {
                    let name = b
                        .type_tag
                        .as_ref()
                        .ok_or_else(|| Error::ModelError(format!("bidder {} needs a type", b.id)))?;
                    tags.insert(b.id, index(name)?);
                }
                MarketFamily::MultiType(MultiTypeMarket::new(types.clone(), table, tags)?)
            }
            MarketSpec::Network { nodes, lines, demand } => {
                let mut at = BTreeMap::new();
                for b in &self.bidders {
                    let n = b.node.ok_or_else(|| Error::ModelError(format!("bidder {} needs a node", b.id)))?;
                    at.insert(b.id, n);
                }
                MarketFamily::Network(NetworkMarket::new(nodes.clone(), lines.clone(), demand.clone(), at)?)
            }
        };
        let market = Market::new(family, self.d_hook.clone())?;
        let mut bids = Vec::new();
        let mut costs = Vec::new();
        for id in order {
            let b = by_id[&id];
            let cost = b.true_cost.to_curve()?;
            let bid = match &b.bid {
                Some(s) => s.to_curve()?,
                None => cost.clone(),
            };
            costs.push((id, cost));
            bids.push((id, bid));
        }
        Ok(Instance { market, bids: BidProfile::new(bids)?, true_costs: BidProfile::new(costs)? })
    }
}
