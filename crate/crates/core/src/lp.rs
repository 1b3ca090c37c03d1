//! Dense two-phase simplex with Bland's rule.
//!
//! Problems here have a handful of variables and constraints (face
//! feasibility and recession-cone probes), so a full tableau is fine and
//! Bland's rule keeps the pivot sequence deterministic and cycle-free.

use crate::error::{HgmError, Result};

const PIVOT_EPS: f64 = 1e-11;

/// `min c.x  s.t.  A x = b, x >= 0`.
#[derive(Debug, Clone)]
pub struct StandardLp {
    /// Row-major `rows x vars`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub vars: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal {
        x: Vec<f64>,
        value: f64,
    },
    /// Phase one could not drive the artificial sum below the tolerance.
    Infeasible {
        residual: f64,
    },
    Unbounded,
}

impl StandardLp {
    pub fn new(vars: usize) -> Self {
        Self {
            a: Vec::new(),
            b: Vec::new(),
            c: vec![0.0; vars],
            vars,
        }
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn push_row(&mut self, coeffs: &[f64], rhs: f64) {
        assert_eq!(coeffs.len(), self.vars);
        self.a.extend_from_slice(coeffs);
        self.b.push(rhs);
    }
}

struct Tableau {
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let w = self.cols + 1;
        let p = self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let prow: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for rr in 0..self.basis.len() {
            if rr == r {
                continue;
            }
            let f = self.data[rr * w + c];
            if f != 0.0 {
                for (v, pv) in self.data[rr * w..(rr + 1) * w].iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Minimize the objective row `obj` (reduced costs, last entry holds
    /// `-value`) over columns accepted by `allowed`.  Returns `false` if the
    /// problem is unbounded.
    fn optimize(
        &mut self,
        obj: &mut [f64],
        allowed: impl Fn(usize) -> bool,
        max_iter: usize,
    ) -> Result<bool> {
        for _ in 0..max_iter {
            // Bland: lowest-index improving column.
            let Some(enter) = (0..self.cols).find(|&c| allowed(c) && obj[c] < -PIVOT_EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.basis.len() {
                let v = self.at(r, enter);
                if v > PIVOT_EPS {
                    let ratio = self.rhs(r) / v;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-14
                                || (ratio <= lratio + 1e-14 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.pivot(r, enter, obj);
        }
        Err(HgmError::LpNumericalFailure(max_iter))
    }
}

/// Solve a standard-form LP.  `feas_tol` bounds the phase-one artificial
/// sum accepted as feasible.
pub fn solve(lp: &StandardLp, feas_tol: f64, max_iter: usize) -> Result<LpStatus> {
    let m = lp.rows();
    let nv = lp.vars;
    let cols = nv + m;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    for r in 0..m {
        let sign = if lp.b[r] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..nv {
            data[r * w + c] = sign * lp.a[r * nv + c];
        }
        data[r * w + nv + r] = 1.0;
        data[r * w + cols] = sign * lp.b[r];
    }
    let mut t = Tableau {
        cols,
        data,
        basis: (nv..nv + m).collect(),
    };

    // Phase one: minimize the sum of artificials.
    let mut obj = vec![0.0; w];
    for r in 0..m {
        for c in 0..nv {
            obj[c] -= t.at(r, c);
        }
        obj[cols] -= t.rhs(r);
    }
    t.optimize(&mut obj, |_| true, max_iter)?;
    let residual = -obj[cols];
    if residual > feas_tol {
        return Ok(LpStatus::Infeasible { residual });
    }
    // Drive artificials out of the basis where possible.
    for r in 0..m {
        if t.basis[r] >= nv {
            if let Some(c) = (0..nv).find(|&c| t.at(r, c).abs() > 1e-9) {
                t.pivot(r, c, &mut obj);
            }
        }
    }

    // Phase two on the original objective.
    let mut obj = vec![0.0; w];
    obj[..nv].copy_from_slice(&lp.c);
    for r in 0..m {
        let bv = t.basis[r];
        if bv < nv && lp.c[bv] != 0.0 {
            let f = lp.c[bv];
            for c in 0..w {
                obj[c] -= f * t.at(r, c);
            }
        }
    }
    if !t.optimize(&mut obj, |c| c < nv, max_iter)? {
        return Ok(LpStatus::Unbounded);
    }
    let mut x = vec![0.0; nv];
    for r in 0..m {
        if t.basis[r] < nv {
            x[t.basis[r]] = t.rhs(r);
        }
    }
    let value = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    Ok(LpStatus::Optimal { x, value })
}

/// Iteration cap used by the geometric probes.
pub const DEFAULT_MAX_PIVOTS: usize = 10_000;

/// Is there a free `y` with `rows[k].y + offsets[k] >= -tol` for every `k`?
///
/// Free variables are split as `y = u - v`; each inequality gets a surplus
/// column.  The phase-one artificial sum must not exceed `tol`.
pub fn inequalities_feasible(rows: &[Vec<f64>], offsets: &[f64], tol: f64) -> Result<bool> {
    if rows.is_empty() {
        return Ok(true);
    }
    let p = rows[0].len();
    if p == 0 {
        return Ok(offsets.iter().all(|&e| e >= -tol));
    }
    let m = rows.len();
    let mut lp = StandardLp::new(2 * p + m);
    for (k, (row, &e)) in rows.iter().zip(offsets).enumerate() {
        let mut coeffs = vec![0.0; 2 * p + m];
        for i in 0..p {
            coeffs[i] = row[i];
            coeffs[p + i] = -row[i];
        }
        coeffs[2 * p + k] = -1.0;
        // row.y - s = -e - tol
        lp.push_row(&coeffs, -e - tol);
    }
    match solve(&lp, tol, DEFAULT_MAX_PIVOTS)? {
        LpStatus::Infeasible { .. } => Ok(false),
        _ => Ok(true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_optimum() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6  ->  (1.6, 1.2), 2.8
        let mut lp = StandardLp::new(4);
        lp.c = vec![-1.0, -1.0, 0.0, 0.0];
        lp.push_row(&[1.0, 2.0, 1.0, 0.0], 4.0);
        lp.push_row(&[3.0, 1.0, 0.0, 1.0], 6.0);
        match solve(&lp, 1e-9, 100).unwrap() {
            LpStatus::Optimal { x, value } => {
                assert!((x[0] - 1.6).abs() < 1e-12);
                assert!((x[1] - 1.2).abs() < 1e-12);
                assert!((value + 2.8).abs() < 1e-12);
            }
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        // x = -1, x >= 0
        let mut lp = StandardLp::new(1);
        lp.push_row(&[1.0], -1.0);
        assert!(matches!(
            solve(&lp, 1e-9, 100).unwrap(),
            LpStatus::Infeasible { .. }
        ));

        // min -x s.t. x - s = 1
        let mut lp = StandardLp::new(2);
        lp.c = vec![-1.0, 0.0];
        lp.push_row(&[1.0, -1.0], 1.0);
        assert_eq!(solve(&lp, 1e-9, 100).unwrap(), LpStatus::Unbounded);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's classic cycling example; Bland's rule must terminate.
        let mut lp = StandardLp::new(7);
        lp.c = vec![-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0];
        lp.push_row(&[0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0], 0.0);
        lp.push_row(&[0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0], 0.0);
        lp.push_row(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 1.0);
        match solve(&lp, 1e-9, 1000).unwrap() {
            LpStatus::Optimal { value, .. } => assert!((value + 0.05).abs() < 1e-10),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn inequality_feasibility() {
        // y >= 1 and y <= 2
        assert!(inequalities_feasible(&[vec![1.0], vec![-1.0]], &[-1.0, 2.0], 1e-9).unwrap());
        // y >= 2 and y <= 1
        assert!(!inequalities_feasible(&[vec![1.0], vec![-1.0]], &[-2.0, 1.0], 1e-9).unwrap());
        // touching: y >= 1 and y <= 1
        assert!(inequalities_feasible(&[vec![1.0], vec![-1.0]], &[-1.0, 1.0], 1e-9).unwrap());
    }
}
