//! Transmission-constrained dispatch under the DC approximation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ptdf::ptdf_matrix;
use crate::bids::BidderId;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(default = "unit")]
    pub susceptance: f64,
    /// Thermal limit; `None` means unconstrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkMarket {
    nodes: Vec<NodeId>,
    lines: Vec<Line>,
    demand: BTreeMap<NodeId, f64>,
    bidder_nodes: BTreeMap<BidderId, NodeId>,
    ptdf: DMatrix<f64>,
}

impl NetworkMarket {
    /// The first node is the PTDF reference.
    pub fn new(
        nodes: Vec<NodeId>,
        lines: Vec<Line>,
        demand: BTreeMap<NodeId, f64>,
        bidder_nodes: BTreeMap<BidderId, NodeId>,
    ) -> Result<NetworkMarket> {
        for l in &lines {
            if let Some(c) = l.limit {
                if !(c >= 0.0) {
                    return Err(Error::ModelError(format!("line {}-{} has a negative limit", l.from, l.to)));
                }
            }
        }
        for (n, d) in &demand {
            if !nodes.contains(n) || !(d.is_finite()) {
                return Err(Error::ModelError(format!("bad demand entry at node {n}")));
            }
        }
        for (b, n) in &bidder_nodes {
            if !nodes.contains(n) {
                return Err(Error::ModelError(format!("bidder {b} sits at unknown node {n}")));
            }
        }
        let ptdf = ptdf_matrix(&nodes, &lines)?;
        Ok(NetworkMarket { nodes, lines, demand, bidder_nodes, ptdf })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn demand(&self) -> &BTreeMap<NodeId, f64> {
        &self.demand
    }

    pub fn bidder_nodes(&self) -> &BTreeMap<BidderId, NodeId> {
        &self.bidder_nodes
    }

    pub fn ptdf(&self) -> &DMatrix<f64> {
        &self.ptdf
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.values().sum()
    }

    pub fn node_index(&self, n: NodeId) -> Option<usize> {
        self.nodes.iter().position(|m| *m == n)
    }

    pub fn node_of(&self, b: BidderId) -> Option<NodeId> {
        self.bidder_nodes.get(&b).copied()
    }

    pub(crate) fn set_node(&mut self, b: BidderId, n: NodeId) {
        self.bidder_nodes.insert(b, n);
    }

    /// Line flows for a vector of net injections indexed like `nodes()`.
    pub fn flows(&self, injection: &[f64]) -> Vec<f64> {
        (0..self.lines.len())
            .map(|k| (0..self.nodes.len()).map(|m| self.ptdf[(k, m)] * injection[m]).sum())
            .collect()
    }

    /// Demand as an injection vector (negative withdrawals).
    pub fn demand_injection(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| -self.demand.get(n).copied().unwrap_or(0.0)).collect()
    }
}
