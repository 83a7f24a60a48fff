//! Linearized ADMM for the Dantzig program
//! `min |w|_1  s.t.  |h - H w|_inf <= lambda`, written as
//! `H w + r = h` with `|r|_inf <= lambda`. Stops on a relative duality gap.

use ndarray::{Array1, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::soft_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            gap_tol: 1e-8,
            max_iter: 200_000,
        }
    }
}

fn spectral_norm_sq(h: ArrayView2<f64>) -> f64 {
    let n = h.ncols();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..100 {
        let w = h.t().dot(&h.dot(&v));
        let norm = w.dot(&w).sqrt();
        if !(norm > 0.0) {
            return 0.0;
        }
        let done = (norm - est).abs() <= 1e-10 * norm;
        est = norm;
        v = w / norm;
        if done {
            break;
        }
    }
    est
}

/// Dual objective `-h'y - lambda |y|_1` at `y` rescaled into `|H'y|_inf <= 1`.
fn dual_value(h: ArrayView2<f64>, rhs: ArrayView1<f64>, lambda: f64, y: &Array1<f64>) -> f64 {
    let scale = h.t().dot(y).iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let ys = y / scale;
    -rhs.dot(&ys) - lambda * ys.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn solve(
    h: ArrayView2<f64>,
    rhs: ArrayView1<f64>,
    lambda: f64,
    cfg: &AdmmConfig,
) -> Result<Array1<f64>> {
    let m = h.ncols();
    let lip = spectral_norm_sq(h);
    if !(lip > 0.0) {
        return Err(Error::invalid("Dantzig matrix is zero"));
    }
    let tau = 0.99 / lip;
    let rho = cfg.rho;
    let mut w = Array1::<f64>::zeros(m);
    let mut hw = Array1::<f64>::zeros(h.nrows());
    let mut r = rhs.mapv(|v| v.clamp(-lambda, lambda));
    let mut u = Array1::<f64>::zeros(h.nrows());
    let feas_tol = 1e-7 * lambda.max(1e-8);
    for it in 1..=cfg.max_iter {
        let resid = &hw + &r - rhs + &u;
        let grad = h.t().dot(&resid);
        Zip::from(&mut w).and(&grad).for_each(|wi, &gi| {
            *wi = soft_threshold(*wi - tau * gi, tau / rho);
        });
        hw = h.dot(&w);
        r = (&rhs - &hw - &u).mapv(|v| v.clamp(-lambda, lambda));
        u += &(&hw + &r - rhs);
        if it % 25 == 0 {
            let viol = (&rhs - &hw)
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs() - lambda));
            let primal: f64 = w.iter().map(|v| v.abs()).sum();
            let dual = dual_value(h, rhs, lambda, &(&u * rho));
            if viol <= feas_tol && primal - dual <= cfg.gap_tol * (1.0 + primal) {
                return Ok(w);
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        detail: "ADMM duality gap above tolerance".into(),
    })
}
