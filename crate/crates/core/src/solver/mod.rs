//! Small dense convex QP/LP solves and an indicator-group branch-and-bound.
//!
//! Programs are `min 1/2 x'Qx + c'x` subject to `A_eq x = b_eq`,
//! `A_in x <= b_in` and `lower <= x <= upper`. The KKT system is handed to
//! Lemke's method, which also yields the multipliers.

mod indicator;
mod lcp;

use std::fmt::Write as _;

pub use indicator::{solve_indicator, IndicatorGroup, IndicatorProgram, MAX_INDICATOR_GROUPS};

use crate::error::{Error, Result};
use lcp::{lemke, LcpOutcome};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexProgram {
    pub n: usize,
    /// Row-major `n x n`, symmetric positive semidefinite.
    pub q: Vec<f64>,
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_in: Vec<Vec<f64>>,
    pub b_in: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Multipliers under the stationarity convention
/// `Qx + c + A_eq' eq + A_in' ineq - lower + upper = 0`, with `ineq`,
/// `lower`, `upper` nonnegative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Option<Duals>,
}

impl SolveReport {
    fn non_optimal(status: SolveStatus, n: usize) -> SolveReport {
        let objective = match status {
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        SolveReport { status, x: vec![0.0; n], objective, duals: None }
    }
}

impl ConvexProgram {
    /// `n` variables bounded below by zero, with no other constraints.
    pub fn new(n: usize) -> ConvexProgram {
        ConvexProgram {
            n,
            q: vec![0.0; n * n],
            c: vec![0.0; n],
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            a_in: Vec::new(),
            b_in: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_in.push(row);
        self.b_in.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.add_le(row.into_iter().map(|v| -v).collect(), -rhs);
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut v = 0.0;
        for i in 0..n {
            let mut qi = 0.0;
            for j in 0..n {
                qi += self.q[i * n + j] * x[j];
            }
            v += 0.5 * x[i] * qi + self.c[i] * x[i];
        }
        v
    }

    /// Largest constraint or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut v: f64 = 0.0;
        for (r, b) in self.a_eq.iter().zip(&self.b_eq) {
            v = v.max((dot(r) - b).abs());
        }
        for (r, b) in self.a_in.iter().zip(&self.b_in) {
            v = v.max(dot(r) - b);
        }
        for i in 0..self.n {
            v = v.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        v
    }

    /// Infinity norm of the stationarity residual for a primal/dual pair.
    pub fn stationarity_residual(&self, x: &[f64], d: &Duals) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut g = self.c[i] - d.lower[i] + d.upper[i];
            for j in 0..n {
                g += self.q[i * n + j] * x[j];
            }
            for (r, l) in self.a_eq.iter().zip(&d.eq) {
                g += r[i] * l;
            }
            for (r, m) in self.a_in.iter().zip(&d.ineq) {
                g += r[i] * m;
            }
            worst = worst.max(g.abs());
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        let bad = self.q.len() != n * n
            || self.c.len() != n
            || self.lower.len() != n
            || self.upper.len() != n
            || self.a_eq.len() != self.b_eq.len()
            || self.a_in.len() != self.b_in.len()
            || self.a_eq.iter().chain(&self.a_in).any(|r| r.len() != n);
        if bad {
            return Err(Error::ModelError("convex program dimensions are inconsistent".into()));
        }
        Ok(())
    }

    /// Plain-text dump in an LP-like layout, for debugging.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::from("minimize\n  ");
        for i in 0..self.n {
            if self.c[i] != 0.0 {
                let _ = write!(s, "{:+} x{} ", self.c[i], i);
            }
        }
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.q[i * self.n + j];
                if v != 0.0 {
                    let coef = if i == j { 0.5 * v } else { v };
                    let _ = write!(s, "{coef:+} x{i}*x{j} ");
                }
            }
        }
        s.push_str("\nsubject to\n");
        let row = |r: &[f64]| {
            r.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| format!("{v:+} x{i}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        for (r, b) in self.a_eq.iter().zip(&self.b_eq) {
            let _ = writeln!(s, "  {} = {b}", row(r));
        }
        for (r, b) in self.a_in.iter().zip(&self.b_in) {
            let _ = writeln!(s, "  {} <= {b}", row(r));
        }
        s.push_str("bounds\n");
        for i in 0..self.n {
            let _ = writeln!(s, "  {} <= x{i} <= {}", self.lower[i], self.upper[i]);
        }
        s
    }
}

/// How an original variable maps onto nonnegative LCP variables.
#[derive(Clone, Copy)]
enum VarMap {
    /// `x = lo + z`
    Shift(f64, usize),
    /// `x = hi - z`
    Flip(f64, usize),
    /// `x = z+ - z-`
    Split(usize, usize),
}

#[derive(Clone, Copy)]
enum RowKind {
    EqPlus(usize),
    EqMinus(usize),
    Ineq(usize),
    Upper(usize),
}

pub fn solve_convex(p: &ConvexProgram) -> Result<SolveReport> {
    p.validate()?;
    let n = p.n;
    for i in 0..n {
        if p.lower[i] > p.upper[i] + crate::FEAS_TOL {
            return Ok(SolveReport::non_optimal(SolveStatus::Infeasible, n));
        }
    }
    // Variable transform.
    let mut maps = Vec::with_capacity(n);
    let mut nz = 0;
    for i in 0..n {
        let (lo, hi) = (p.lower[i], p.upper[i]);
        if lo.is_finite() {
            maps.push(VarMap::Shift(lo, nz));
            nz += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Flip(hi, nz));
            nz += 1;
        } else {
            maps.push(VarMap::Split(nz, nz + 1));
            nz += 2;
        }
    }
    // x = x0 + T z, with T stored as a list of (z index, sign) per variable.
    let mut x0 = vec![0.0; n];
    let mut tcols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, m) in maps.iter().enumerate() {
        match *m {
            VarMap::Shift(lo, k) => {
                x0[i] = lo;
                tcols[i].push((k, 1.0));
            }
            VarMap::Flip(hi, k) => {
                x0[i] = hi;
                tcols[i].push((k, -1.0));
            }
            VarMap::Split(a, b) => {
                tcols[i].push((a, 1.0));
                tcols[i].push((b, -1.0));
            }
        }
    }
    let to_z = |row: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; nz];
        let mut shift = 0.0;
        for i in 0..n {
            if row[i] != 0.0 {
                shift += row[i] * x0[i];
                for &(k, s) in &tcols[i] {
                    out[k] += row[i] * s;
                }
            }
        }
        (out, shift)
    };

    // Rows as `A z >= b`.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut kinds: Vec<RowKind> = Vec::new();
    for (k, (r, b)) in p.a_eq.iter().zip(&p.b_eq).enumerate() {
        let (a, s) = to_z(r);
        rows.push(a.clone());
        rhs.push(b - s);
        kinds.push(RowKind::EqPlus(k));
        rows.push(a.iter().map(|v| -v).collect());
        rhs.push(-(b - s));
        kinds.push(RowKind::EqMinus(k));
    }
    for (k, (r, b)) in p.a_in.iter().zip(&p.b_in).enumerate() {
        let (a, s) = to_z(r);
        rows.push(a.iter().map(|v| -v).collect());
        rhs.push(-(b - s));
        kinds.push(RowKind::Ineq(k));
    }
    for (i, m) in maps.iter().enumerate() {
        if let VarMap::Shift(lo, k) = *m {
            if p.upper[i].is_finite() {
                let mut a = vec![0.0; nz];
                a[k] = -1.0;
                rows.push(a);
                rhs.push(-(p.upper[i] - lo));
                kinds.push(RowKind::Upper(i));
            }
        }
    }

    // Objective in z: 1/2 z' T'QT z + (T'(Q x0 + c))' z.
    let mut qz = vec![0.0; nz * nz];
    let mut cz = vec![0.0; nz];
    for i in 0..n {
        let mut g = p.c[i];
        for j in 0..n {
            g += p.q[i * n + j] * x0[j];
        }
        for &(k, s) in &tcols[i] {
            cz[k] += s * g;
        }
        for j in 0..n {
            let v = p.q[i * n + j];
            if v != 0.0 {
                for &(ki, si) in &tcols[i] {
                    for &(kj, sj) in &tcols[j] {
                        qz[ki * nz + kj] += si * sj * v;
                    }
                }
            }
        }
    }

    let mrows = rows.len();
    let nl = nz + mrows;
    let build = |qz: &[f64], cz: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut m = vec![0.0; nl * nl];
        let mut q = vec![0.0; nl];
        for i in 0..nz {
            for j in 0..nz {
                m[i * nl + j] = qz[i * nz + j];
            }
            q[i] = cz[i];
        }
        for (r, row) in rows.iter().enumerate() {
            for j in 0..nz {
                m[j * nl + nz + r] = -row[j];
                m[(nz + r) * nl + j] = row[j];
            }
            q[nz + r] = -rhs[r];
        }
        (m, q)
    };
    let (m, q) = build(&qz, &cz);
    let cap = 1000 + 50 * nl;
    let (z, w) = match lemke(&m, &q, nl, cap) {
        LcpOutcome::Solved { z, w } => (z, w),
        LcpOutcome::Stalled(it) => return Err(Error::SolverStalled { iterations: it }),
        LcpOutcome::Ray => {
            let (m1, q1) = build(&vec![0.0; nz * nz], &vec![0.0; nz]);
            return match lemke(&m1, &q1, nl, cap) {
                LcpOutcome::Solved { .. } => Ok(SolveReport::non_optimal(SolveStatus::Unbounded, n)),
                LcpOutcome::Ray => Ok(SolveReport::non_optimal(SolveStatus::Infeasible, n)),
                LcpOutcome::Stalled(it) => Err(Error::SolverStalled { iterations: it }),
            };
        }
    };

    let mut x = x0.clone();
    for i in 0..n {
        for &(k, s) in &tcols[i] {
            x[i] += s * z[k];
        }
        // Snap onto bounds against pivoting noise.
        if x[i] < p.lower[i] {
            x[i] = p.lower[i];
        }
        if x[i] > p.upper[i] {
            x[i] = p.upper[i];
        }
    }
    let mut d = Duals {
        eq: vec![0.0; p.a_eq.len()],
        ineq: vec![0.0; p.a_in.len()],
        lower: vec![0.0; n],
        upper: vec![0.0; n],
    };
    for (r, kind) in kinds.iter().enumerate() {
        let y = z[nz + r];
        match *kind {
            RowKind::EqPlus(k) => d.eq[k] -= y,
            RowKind::EqMinus(k) => d.eq[k] += y,
            RowKind::Ineq(k) => d.ineq[k] = y,
            RowKind::Upper(i) => d.upper[i] = y,
        }
    }
    for (i, m) in maps.iter().enumerate() {
        match *m {
            VarMap::Shift(_, k) => d.lower[i] = w[k],
            VarMap::Flip(_, k) => d.upper[i] = w[k],
            VarMap::Split(..) => {}
        }
    }
    let objective = p.objective(&x);
    Ok(SolveReport { status: SolveStatus::Optimal, x, objective, duals: Some(d) })
}
