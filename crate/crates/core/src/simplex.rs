//! Dense tableau simplex for `max cᵀx  s.t.  A x = b, x ≥ 0`, started from a
//! caller-supplied feasible basis. Bland's rule prevents cycling.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub struct DenseLp {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl DenseLp {
    /// `max cᵀx s.t. A x ≤ b, x ≥ 0` with `b ≥ 0`, starting from the slack basis.
    pub fn maximize_leq(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution> {
        if b.iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("slack basis needs b >= 0"));
        }
        let m = a.len();
        let n = c.len();
        let rows = a
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
                r
            })
            .collect();
        let mut cost = c.to_vec();
        cost.extend(std::iter::repeat_n(0.0, m));
        let lp = DenseLp { a: rows, b: b.to_vec(), c: cost };
        let mut sol = lp.solve((n..n + m).collect())?;
        sol.x.truncate(n);
        Ok(sol)
    }

    /// Runs the simplex method from `basis`, which must be feasible.
    pub fn solve(&self, mut basis: Vec<usize>) -> Result<LpSolution> {
        let m = self.a.len();
        let n = self.c.len();
        if basis.len() != m || self.b.len() != m || self.a.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("inconsistent LP dimensions"));
        }
        // Tableau rows: [A | b]; bring the basis columns to identity.
        let mut t: Vec<Vec<f64>> = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| {
                let mut r = row.clone();
                r.push(*bi);
                r
            })
            .collect();
        for (row, &col) in basis.iter().enumerate() {
            let piv = t[row][col];
            if piv.abs() < PIVOT_EPS {
                return Err(Error::invalid(format!("basis column {col} is singular in row {row}")));
            }
            pivot(&mut t, row, col);
        }
        if t.iter().any(|r| r[n] < -1e-9) {
            return Err(Error::invalid("initial basis is infeasible"));
        }
        let mut pivots = 0;
        let max_pivots = 50 * (m + n) * (m + n) + 1000;
        loop {
            // Reduced costs c_j − c_Bᵀ B⁻¹ A_j.
            let entering = (0..n).find(|&j| {
                if basis.contains(&j) {
                    return false;
                }
                let z: f64 = basis.iter().enumerate().map(|(r, &bj)| self.c[bj] * t[r][j]).sum();
                self.c[j] - z > 1e-10
            });
            let Some(e) = entering else { break };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if t[r][e] > PIVOT_EPS {
                    let ratio = t[r][n] / t[r][e];
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-15 || (ratio <= lratio + 1e-15 && basis[r] < basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((lr, _)) = leave else {
                return Err(Error::invalid("LP is unbounded"));
            };
            pivot(&mut t, lr, e);
            basis[lr] = e;
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::NonConvergence { iterations: pivots, detail: "simplex pivot budget".into() });
            }
        }
        let mut x = vec![0.0; n];
        for (r, &bj) in basis.iter().enumerate() {
            x[bj] = t[r][n].max(0.0);
        }
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        Ok(LpSolution { objective, x, pivots })
    }
}

fn pivot(t: &mut [Vec<f64>], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let prow = t[row].clone();
    for (r, tr) in t.iter_mut().enumerate() {
        if r == row {
            continue;
        }
        let f = tr[col];
        if f != 0.0 {
            for (v, pv) in tr.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y  s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18  →  36 at (2, 6).
        let a = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]];
        let s = DenseLp::maximize_leq(&a, &[4.0, 12.0, 18.0], &[3.0, 5.0]).unwrap();
        assert_abs_diff_eq!(s.objective, 36.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[1], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        let a = vec![vec![1.0, -1.0]];
        assert!(DenseLp::maximize_leq(&a, &[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn degenerate_problem_terminates() {
        // A classic cycling example under the largest-coefficient rule.
        let a = vec![
            vec![0.5, -5.5, -2.5, 9.0],
            vec![0.5, -1.5, -0.5, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
        ];
        let s = DenseLp::maximize_leq(&a, &[0.0, 0.0, 1.0], &[10.0, -57.0, -9.0, -24.0]).unwrap();
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-12);
    }
}
