//! Dense two-phase tableau simplex for small linear programs.
//!
//! Solves `min cᵀy  s.t.  A_ub y ≤ b_ub,  A_eq y = b_eq,  y ≥ 0`.
//! Pivoting uses Dantzig's rule and falls back to Bland's rule after a run
//! of degenerate pivots, which rules out cycling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize, // variable columns, rhs stored separately
    a: Vec<f64>,
    rhs: Vec<f64>,
    obj: Vec<f64>,
    obj_rhs: f64,
    basis: Vec<usize>,
    banned: Vec<bool>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let cols = self.cols;
        let piv = self.a[r * cols + c];
        let inv = 1.0 / piv;
        for v in &mut self.a[r * cols..(r + 1) * cols] {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        self.a[r * cols + c] = 1.0;
        let prow: Vec<f64> = self.a[r * cols..(r + 1) * cols].to_vec();
        let prhs = self.rhs[r];
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * cols + c];
            if f != 0.0 {
                let row = &mut self.a[i * cols..(i + 1) * cols];
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                row[c] = 0.0;
                self.rhs[i] -= f * prhs;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, p) in self.obj.iter_mut().zip(&prow) {
                *v -= f * p;
            }
            self.obj[c] = 0.0;
            self.obj_rhs -= f * prhs;
        }
        self.basis[r] = c;
    }

    /// Reset the objective row to reduced costs of `cost`.
    fn set_objective(&mut self, cost: &[f64]) {
        self.obj = cost.to_vec();
        self.obj_rhs = 0.0;
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.cols {
                    self.obj[j] -= cb * self.a[i * self.cols + j];
                }
                self.obj_rhs -= cb * self.rhs[i];
            }
        }
    }

    /// Run primal simplex iterations; returns false when unbounded.
    fn optimize(&mut self, max_iters: usize) -> Result<bool> {
        let mut degenerate = 0usize;
        let mut bland = false;
        for _ in 0..max_iters {
            let entering = if bland {
                (0..self.cols).find(|&j| !self.banned[j] && self.obj[j] < -COST_TOL)
            } else {
                let mut best = None;
                let mut best_val = -COST_TOL;
                for j in 0..self.cols {
                    if !self.banned[j] && self.obj[j] < best_val {
                        best_val = self.obj[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let aij = self.at(i, c);
                if aij > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / aij;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 * (1.0 + lr)
                                || (ratio <= lr + 1e-12 * (1.0 + lr) && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if ratio <= 1e-14 {
                degenerate += 1;
                if degenerate > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
        Err(Error::LpFailure("simplex iteration cap reached".into()))
    }

    fn remove_row(&mut self, r: usize) {
        let cols = self.cols;
        self.a.drain(r * cols..(r + 1) * cols);
        self.rhs.remove(r);
        self.basis.remove(r);
        self.rows -= 1;
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let nv = lp.c.len();
    let m_ub = lp.a_ub.nrows();
    let m_eq = lp.a_eq.nrows();
    if (m_ub > 0 && lp.a_ub.ncols() != nv) || (m_eq > 0 && lp.a_eq.ncols() != nv) {
        return Err(Error::LpFailure("constraint width does not match cost".into()));
    }
    if lp.b_ub.len() != m_ub || lp.b_eq.len() != m_eq {
        return Err(Error::LpFailure("rhs length mismatch".into()));
    }
    let rows = m_ub + m_eq;

    // column layout: [original | slacks (m_ub) | artificials (n_art)]
    let mut needs_art = Vec::with_capacity(rows);
    for i in 0..m_ub {
        needs_art.push(lp.b_ub[i] < 0.0);
    }
    needs_art.extend(std::iter::repeat_n(true, m_eq));
    let n_art = needs_art.iter().filter(|x| **x).count();
    let cols = nv + m_ub + n_art;

    let mut a = vec![0.0; rows * cols];
    let mut rhs = vec![0.0; rows];
    let mut basis = vec![0usize; rows];
    let mut art = 0usize;
    for i in 0..rows {
        let (sign, b) = if i < m_ub {
            let s = if lp.b_ub[i] < 0.0 { -1.0 } else { 1.0 };
            (s, lp.b_ub[i])
        } else {
            let b = lp.b_eq[i - m_ub];
            (if b < 0.0 { -1.0 } else { 1.0 }, b)
        };
        for j in 0..nv {
            let v = if i < m_ub { lp.a_ub[(i, j)] } else { lp.a_eq[(i - m_ub, j)] };
            a[i * cols + j] = sign * v;
        }
        if i < m_ub {
            a[i * cols + nv + i] = sign;
        }
        rhs[i] = sign * b;
        if needs_art[i] {
            let col = nv + m_ub + art;
            a[i * cols + col] = 1.0;
            basis[i] = col;
            art += 1;
        } else {
            basis[i] = nv + i;
        }
    }

    let mut t = Tableau {
        rows,
        cols,
        a,
        rhs,
        obj: vec![0.0; cols],
        obj_rhs: 0.0,
        basis,
        banned: vec![false; cols],
    };
    let max_iters = 50 * (rows + cols) + 1000;
    let art_start = nv + m_ub;

    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        for v in &mut cost[art_start..] {
            *v = 1.0;
        }
        t.set_objective(&cost);
        t.optimize(max_iters)?;
        let infeas = -t.obj_rhs;
        let scale = 1.0
            + lp.b_ub.iter().chain(lp.b_eq.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        if infeas > 1e-9 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // drive remaining artificials out of the basis
        let mut i = 0;
        while i < t.rows {
            if t.basis[i] >= art_start {
                let col = (0..art_start)
                    .filter(|&j| t.at(i, j).abs() > 1e-9)
                    .max_by(|&x, &y| t.at(i, x).abs().total_cmp(&t.at(i, y).abs()));
                match col {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => t.remove_row(i),
                }
            } else {
                i += 1;
            }
        }
        for b in &mut t.banned[art_start..] {
            *b = true;
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..nv].copy_from_slice(lp.c.as_slice());
    t.set_objective(&cost);
    if !t.optimize(max_iters)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = DVector::zeros(nv);
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < nv {
            x[bv] = t.rhs[i].max(0.0);
        }
    }
    let objective = lp.c.dot(&x);
    Ok(LpOutcome::Optimal { x, objective })
}
