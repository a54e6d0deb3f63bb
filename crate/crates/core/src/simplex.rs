//! Dense two-phase simplex for small linear programs.
//!
//! Minimises `c . x` over `x >= 0` subject to rows `a . x (<=|>=|=) b`.
//! Pivoting follows Bland's rule, which cannot cycle; the programs solved
//! here have at most a few hundred columns.

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LinearProgram {
    /// A program minimising `objective . x` with `x >= 0`.
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coefficients.len(), self.n_vars(), "constraint width");
        self.rows.push((coefficients, relation, rhs));
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Tableau::build(self).solve(&self.objective)
    }
}

struct Tableau {
    /// `rows x (cols + 1)`; the last column is the right-hand side.
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_vars: usize,
    /// Columns `>= first_artificial` are artificial.
    first_artificial: usize,
    cols: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let n_slack = lp.rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let first_artificial = n + n_slack;
        let n_art = lp
            .rows
            .iter()
            .filter(|(_, rel, b)| {
                let flipped = *b < 0.0;
                matches!(
                    (rel, flipped),
                    (Relation::Eq, _) | (Relation::Ge, false) | (Relation::Le, true)
                )
            })
            .count();
        let cols = first_artificial + n_art;
        let mut a = Vec::with_capacity(lp.rows.len());
        let mut basis = Vec::with_capacity(lp.rows.len());
        let (mut slack, mut art) = (n, first_artificial);
        for (coef, rel, rhs) in &lp.rows {
            let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; cols + 1];
            for (r, c) in row.iter_mut().zip(coef) {
                *r = sign * c;
            }
            row[cols] = sign * rhs;
            let rel = match (rel, sign < 0.0) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => *r,
            };
            match rel {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis.push(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis.push(art);
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    basis.push(art);
                    art += 1;
                }
            }
            a.push(row);
        }
        Self {
            a,
            basis,
            n_vars: n,
            first_artificial,
            cols,
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (r, other) in self.a.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = other[col];
            if f != 0.0 {
                for (v, pv) in other.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations on `cost` (one entry per column), allowing
    /// only columns below `allowed`.
    fn optimise(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        loop {
            // reduced costs c_j - c_B B^{-1} A_j
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let z: f64 = self
                    .a
                    .iter()
                    .zip(&self.basis)
                    .map(|(row, &b)| cost[b] * row[j])
                    .sum();
                cost[j] - z < -TOL
            });
            let Some(col) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for (r, row) in self.a.iter().enumerate() {
                if row[col] > TOL {
                    let ratio = row[self.cols] / row[col];
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - TOL
                                || (ratio <= bv + TOL && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = best else {
                return Err(Error::Lp("unbounded"));
            };
            self.pivot(row, col);
        }
    }

    fn solve(mut self, objective: &[f64]) -> Result<LpSolution> {
        if self.first_artificial < self.cols {
            let mut phase1 = vec![0.0; self.cols];
            for c in phase1.iter_mut().skip(self.first_artificial) {
                *c = 1.0;
            }
            self.optimise(&phase1, self.cols)?;
            let infeasibility: f64 = self
                .a
                .iter()
                .zip(&self.basis)
                .filter(|(_, &b)| b >= self.first_artificial)
                .map(|(row, _)| row[self.cols])
                .sum();
            let scale = 1.0 + self.a.iter().map(|r| r[self.cols].abs()).fold(0.0, f64::max);
            if infeasibility > 1e-7 * scale {
                return Err(Error::Lp("infeasible"));
            }
            // drive zero-level artificials out of the basis, dropping
            // redundant rows
            let mut r = 0;
            while r < self.a.len() {
                if self.basis[r] >= self.first_artificial {
                    let col = (0..self.first_artificial).find(|&j| self.a[r][j].abs() > TOL);
                    match col {
                        Some(j) => self.pivot(r, j),
                        None => {
                            self.a.remove(r);
                            self.basis.remove(r);
                            continue;
                        }
                    }
                }
                r += 1;
            }
        }
        let mut cost = vec![0.0; self.cols];
        cost[..self.n_vars].copy_from_slice(objective);
        self.optimise(&cost, self.first_artificial)?;
        let mut x = vec![0.0; self.n_vars];
        for (row, &b) in self.a.iter().zip(&self.basis) {
            if b < self.n_vars {
                x[b] = row[self.cols];
            }
        }
        let objective = x.iter().zip(objective).map(|(x, c)| x * c).sum();
        Ok(LpSolution { x, objective })
    }
}
