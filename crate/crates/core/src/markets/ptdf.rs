//! DC power-flow sensitivities.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::network::{Line, NodeId};
use crate::error::{Error, Result};

/// Line-by-node matrix of flow per unit injection, withdrawn at `nodes[0]`.
pub fn ptdf_matrix(nodes: &[NodeId], lines: &[Line]) -> Result<DMatrix<f64>> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::ModelError("network has no nodes".into()));
    }
    let index: BTreeMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    if index.len() != n {
        return Err(Error::ModelError("duplicate node ids".into()));
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    let mut ends = Vec::with_capacity(lines.len());
    for l in lines {
        let (Some(&i), Some(&j)) = (index.get(&l.from), index.get(&l.to)) else {
            return Err(Error::ModelError(format!("line {}-{} references an unknown node", l.from, l.to)));
        };
        if i == j || !(l.susceptance > 0.0 && l.susceptance.is_finite()) {
            return Err(Error::ModelError(format!("line {}-{} is malformed", l.from, l.to)));
        }
        lap[(i, i)] += l.susceptance;
        lap[(j, j)] += l.susceptance;
        lap[(i, j)] -= l.susceptance;
        lap[(j, i)] -= l.susceptance;
        ends.push((i, j));
    }
    if !connected(n, &ends) {
        return Err(Error::ModelError("network is not connected".into()));
    }
    // Ground the reference node and invert the reduced Laplacian.
    let reduced = lap.view((1, 1), (n - 1, n - 1)).into_owned();
    let inv = reduced
        .try_inverse()
        .ok_or_else(|| Error::ModelError("singular reduced Laplacian".into()))?;
    let mut x = DMatrix::<f64>::zeros(n, n);
    x.view_mut((1, 1), (n - 1, n - 1)).copy_from(&inv);
    let mut ptdf = DMatrix::<f64>::zeros(lines.len(), n);
    for (k, (&(i, j), l)) in ends.iter().zip(lines).enumerate() {
        for m in 0..n {
            ptdf[(k, m)] = l.susceptance * (x[(i, m)] - x[(j, m)]);
        }
    }
    Ok(ptdf)
}

fn connected(n: usize, ends: &[(usize, usize)]) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &(a, b) in ends {
            let w = if a == v { b } else if b == v { a } else { continue };
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
