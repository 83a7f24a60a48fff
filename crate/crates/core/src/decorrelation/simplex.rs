//! Dense two-phase tableau simplex for `min c'x  s.t.  A x <= b, x >= 0`.
//!
//! Dantzig's most-negative-reduced-cost rule, switching to Bland's rule
//! after a run of degenerate pivots so that cycling cannot occur.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

const COST_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    /// `rows + 1` rows; the last holds reduced costs and `-objective`.
    t: Array2<f64>,
    basis: Vec<usize>,
    rows: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let p = self.t[[r, e]];
        self.t.row_mut(r).mapv_inplace(|v| v / p);
        let pivot_row = self.t.row(r).to_owned();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.t[[i, e]];
            if f != 0.0 {
                self.t.row_mut(i).scaled_add(-f, &pivot_row);
                self.t[[i, e]] = 0.0;
            }
        }
        self.basis[r] = e;
        self.pivots += 1;
    }

    /// Runs simplex iterations over columns `< allowed`.
    fn optimize(&mut self, allowed: usize, max_pivots: usize) -> Result<()> {
        let rhs = self.rhs_col();
        let obj = self.rows;
        let mut degenerate = 0;
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..allowed {
                let rc = self.t[[obj, j]];
                if rc < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(e) = enter else {
                return Ok(());
            };
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.t[[i, e]];
                if a > PIVOT_TOL {
                    let q = self.t[[i, rhs]].max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            let slack = 1e-12 * (1.0 + ratio);
                            q < ratio - slack
                                || ((q - ratio).abs() <= slack && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        ratio = q;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else {
                return Err(Error::NonConvergence {
                    iterations: self.pivots,
                    detail: "linear program is unbounded".into(),
                });
            };
            if ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, e);
            if self.pivots > max_pivots {
                return Err(Error::NonConvergence {
                    iterations: self.pivots,
                    detail: "simplex pivot budget exhausted".into(),
                });
            }
        }
    }

    /// Rewrites the objective row as reduced costs of `cost` under the
    /// current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let obj = self.rows;
        let cols = self.t.ncols();
        for j in 0..cols {
            self.t[[obj, j]] = if j + 1 < cols {
                cost.get(j).copied().unwrap_or(0.0)
            } else {
                0.0
            };
        }
        for i in 0..self.rows {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                let row = self.t.row(i).to_owned();
                self.t.row_mut(obj).scaled_add(-cb, &row);
            }
        }
    }
}

/// Solves `min c'x` subject to `a x <= b`, `x >= 0`.
pub fn minimize(c: ArrayView1<f64>, a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<LpSolution> {
    let (m, n) = a.dim();
    if c.len() != n || b.len() != m {
        return Err(Error::invalid("linear program dimensions disagree"));
    }
    if a.iter()
        .chain(b.iter())
        .chain(c.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::invalid("linear program has non-finite data"));
    }
    let n_art = b.iter().filter(|&&v| v < 0.0).count();
    let cols = n + m + n_art;
    let mut t = Array2::zeros((m + 1, cols + 1));
    let mut basis = vec![0; m];
    let mut k = 0;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[[i, j]] = sign * a[[i, j]];
        }
        t[[i, n + i]] = sign;
        t[[i, cols]] = sign * b[i];
        if sign < 0.0 {
            t[[i, n + m + k]] = 1.0;
            basis[i] = n + m + k;
            k += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut tab = Tableau {
        t,
        basis,
        rows: m,
        pivots: 0,
    };
    let max_pivots = 50 * (m + cols).max(100);

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for v in &mut phase1[n + m..] {
            *v = 1.0;
        }
        tab.set_objective(&phase1);
        tab.optimize(cols, max_pivots)?;
        let infeasibility = -tab.t[[m, cols]];
        let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > 1e-9 * scale {
            return Err(Error::Infeasible);
        }
        // Pivot remaining (zero-valued) artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| tab.t[[i, j]].abs() > 1e-9) {
                    tab.pivot(i, j);
                }
            }
        }
    }

    tab.set_objective(&c.to_vec());
    tab.optimize(n + m, max_pivots)?;

    let mut x = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.t[[i, cols]].max(0.0);
        }
    }
    let objective = x.iter().zip(c.iter()).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution {
        x,
        objective,
        pivots: tab.pivots,
    })
}
