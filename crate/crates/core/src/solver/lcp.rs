//! Lemke's complementary pivoting for `w = M z + q, w, z >= 0, w'z = 0`.
//!
//! Ratio ties are broken lexicographically against the initial basis so the
//! method cannot cycle on degenerate problems.

const PIV_TOL: f64 = 1e-10;

#[derive(Debug)]
pub(crate) enum LcpOutcome {
    Solved { z: Vec<f64>, w: Vec<f64> },
    /// Secondary ray: no solution reachable from this start.
    Ray,
    Stalled(usize),
}

struct Tableau {
    n: usize,
    width: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let w = self.width;
        let p = self.t[r * w + col];
        for k in 0..w {
            self.t[r * w + k] /= p;
        }
        self.t[r * w + col] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[col];
            if f != 0.0 {
                for k in 0..w {
                    row[k] -= f * prow[k];
                }
                row[col] = 0.0;
            }
        }
        self.basis[r] = col;
    }

    /// Lexicographic comparison of `B^-1` rows scaled by the pivot column.
    fn lex_less(&self, i: usize, j: usize, col: usize) -> bool {
        let (ai, aj) = (self.at(i, col), self.at(j, col));
        for k in 0..self.n {
            let (vi, vj) = (self.at(i, k) / ai, self.at(j, k) / aj);
            let scale = 1.0 + vi.abs().max(vj.abs());
            if (vi - vj).abs() > 1e-12 * scale {
                return vi < vj;
            }
        }
        i < j
    }
}

pub(crate) fn lemke(m: &[f64], q: &[f64], n: usize, max_iter: usize) -> LcpOutcome {
    if q.iter().all(|&v| v >= 0.0) {
        return LcpOutcome::Solved { z: vec![0.0; n], w: q.to_vec() };
    }
    // Columns: w (0..n), z (n..2n), z0 (2n), rhs.
    let width = 2 * n + 2;
    let mut t = vec![0.0; n * width];
    for i in 0..n {
        t[i * width + i] = 1.0;
        for j in 0..n {
            t[i * width + n + j] = -m[i * n + j];
        }
        t[i * width + 2 * n] = -1.0;
        t[i * width + width - 1] = q[i];
    }
    let mut tab = Tableau { n, width, t, basis: (0..n).collect() };
    let z0 = 2 * n;

    let qmin = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * (1.0 + qmin.abs());
    let r = (0..n).rev().find(|&i| q[i] <= qmin + tol).expect("n > 0");
    tab.pivot(r, z0);
    let mut entering = n + r;

    for iter in 0..max_iter {
        let col = entering;
        let mut best: Option<(usize, f64)> = None;
        let mut ties: Vec<usize> = Vec::new();
        for i in 0..n {
            let a = tab.at(i, col);
            if a > PIV_TOL {
                let ratio = tab.rhs(i).max(0.0) / a;
                match best {
                    None => {
                        best = Some((i, ratio));
                        ties = vec![i];
                    }
                    Some((_, b)) => {
                        let tol = 1e-11 * (1.0 + b.abs().max(ratio.abs()));
                        if ratio < b - tol {
                            best = Some((i, ratio));
                            ties = vec![i];
                        } else if (ratio - b).abs() <= tol {
                            ties.push(i);
                        }
                    }
                }
            }
        }
        if best.is_none() {
            return LcpOutcome::Ray;
        }
        let r = if let Some(&i) = ties.iter().find(|&&i| tab.basis[i] == z0) {
            i
        } else {
            let mut r = ties[0];
            for &i in &ties[1..] {
                if tab.lex_less(i, r, col) {
                    r = i;
                }
            }
            r
        };
        let leaving = tab.basis[r];
        tab.pivot(r, col);
        if leaving == z0 {
            let mut z = vec![0.0; n];
            let mut w = vec![0.0; n];
            for (row, &b) in tab.basis.iter().enumerate() {
                let v = tab.rhs(row).max(0.0);
                if b < n {
                    w[b] = v;
                } else if b < 2 * n {
                    z[b - n] = v;
                }
            }
            return LcpOutcome::Solved { z, w };
        }
        entering = if leaving < n { leaving + n } else { leaving - n };
        let _ = iter;
    }
    LcpOutcome::Stalled(max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_psd_lcp() {
        // M = [[2,1],[1,2]], q = [-5,-6]: z = (4/3, 7/3), w = 0.
        let m = [2.0, 1.0, 1.0, 2.0];
        let LcpOutcome::Solved { z, w } = lemke(&m, &[-5.0, -6.0], 2, 100) else {
            panic!("expected solution")
        };
        assert!((z[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((z[1] - 7.0 / 3.0).abs() < 1e-12);
        assert!(w.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn trivial_when_q_nonnegative() {
        let LcpOutcome::Solved { z, .. } = lemke(&[1.0], &[3.0], 1, 10) else { panic!() };
        assert_eq!(z, vec![0.0]);
    }

    #[test]
    fn ray_on_unsolvable() {
        // w = -z - 1 has no nonnegative solution.
        assert!(matches!(lemke(&[-1.0], &[-1.0], 1, 10), LcpOutcome::Ray));
    }
}
