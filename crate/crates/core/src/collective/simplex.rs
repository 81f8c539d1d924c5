//! Dense two-phase tableau simplex with Bland's pivoting rule.
//!
//! Solves `maximize c.x` subject to rows `a_i.x (<=|=|>=) b_i` and `x >= 0`.
//! Bland's rule (lowest-index entering column, lowest-index basic variable
//! among ratio ties) rules out cycling on the heavily degenerate relaxations
//! the assignment LP produces.

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Add a constraint given as sparse `(column, coefficient)` terms.
    pub fn constrain(&mut self, terms: &[(usize, f64)], rel: Relation, rhs: f64) {
        let mut row = vec![0.0; self.objective.len()];
        for &(j, a) in terms {
            row[j] += a;
        }
        self.rows.push((row, rel, rhs));
    }

    pub fn solve(&self, max_iterations: usize) -> Result<LpSolution> {
        Tableau::build(self).solve(&self.objective, max_iterations)
    }
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is RHS.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_orig: usize,
    /// Columns at or past this index are artificial.
    art_start: usize,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let m = lp.rows.len();
        // Normalize to b >= 0.
        let rows: Vec<(Vec<f64>, Relation, f64)> = lp
            .rows
            .iter()
            .map(|(a, rel, b)| {
                if *b < 0.0 {
                    let flipped = match rel {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (a.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (a.clone(), *rel, *b)
                }
            })
            .collect();
        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
        let art_start = n + n_slack;
        let width = art_start + n_art + 1;

        let mut t = vec![vec![0.0; width]; m + 1];
        let mut basis = vec![0; m];
        let (mut slack, mut art) = (n, art_start);
        for (i, (a, rel, b)) in rows.iter().enumerate() {
            t[i][..n].copy_from_slice(a);
            t[i][width - 1] = *b;
            match rel {
                Relation::Le => {
                    t[i][slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    t[i][slack] = -1.0;
                    slack += 1;
                    t[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    t[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Tableau {
            t,
            basis,
            n_orig: n,
            art_start,
            iterations: 0,
        }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn rhs(&self) -> usize {
        self.t[0].len() - 1
    }

    /// Load the objective row for maximizing `c` (indexed by column). The
    /// RHS entry ends up holding the current objective value.
    fn set_objective(&mut self, c: &[f64]) {
        let (m, w) = (self.m(), self.t[0].len());
        for j in 0..w {
            let cj = if j < c.len() { c[j] } else { 0.0 };
            let mut r = -cj;
            for i in 0..m {
                let cb = c.get(self.basis[i]).copied().unwrap_or(0.0);
                if cb != 0.0 {
                    r += cb * self.t[i][j];
                }
            }
            self.t[m][j] = r;
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
        self.iterations += 1;
    }

    /// Primal simplex over columns `< allowed`. Errors on unboundedness or
    /// the iteration cap.
    fn run(&mut self, allowed: usize, max_iterations: usize) -> Result<()> {
        let m = self.m();
        let rhs = self.rhs();
        loop {
            let Some(col) = (0..allowed).find(|&j| self.t[m][j] < -EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][col];
                if a > EPS {
                    let ratio = self.t[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - EPS
                                || (ratio <= br + EPS && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::invalid("linear program is unbounded"));
            };
            if self.iterations >= max_iterations {
                return Err(Error::NonConvergence {
                    what: "simplex",
                    iterations: self.iterations,
                });
            }
            self.pivot(row, col);
        }
    }

    fn solve(mut self, c: &[f64], max_iterations: usize) -> Result<LpSolution> {
        let m = self.m();
        let width = self.t[0].len();
        let rhs = width - 1;

        if self.art_start < rhs {
            // Phase 1: maximize -(sum of artificials).
            let mut phase1 = vec![0.0; rhs];
            for v in phase1.iter_mut().skip(self.art_start) {
                *v = -1.0;
            }
            self.set_objective(&phase1);
            self.run(rhs, max_iterations)?;
            if self.t[m][rhs] < -1e-7 {
                return Err(Error::invalid("linear program is infeasible"));
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..m {
                if self.basis[i] >= self.art_start {
                    if let Some(j) = (0..self.art_start).find(|&j| self.t[i][j].abs() > EPS) {
                        self.pivot(i, j);
                    }
                }
            }
        }

        self.set_objective(c);
        self.run(self.art_start, max_iterations)?;

        let mut x = vec![0.0; self.n_orig];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_orig {
                x[b] = self.t[i][rhs].max(0.0);
            }
        }
        let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            value,
            iterations: self.iterations,
        })
    }
}
