//! Dantzig-type estimation of the decorrelation direction.
//!
//! For a tested coordinate `j`, the nuisance block of the Hessian `H_gg`
//! (all rows/columns except `j`) and the cross column `h_gt` define
//! `omega = argmin |w|_1  s.t.  |h_gt - H_gg w|_inf <= lambda'`, and the
//! direction is `v = e_j - omega` laid out in the original coordinates.

pub mod admm;
pub mod simplex;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::RiskContext;

pub use admm::AdmmConfig;

/// Hessian bandwidth used for the Dantzig step unless overridden.
pub const DANTZIG_DELTA: f64 = 1.0;

/// Default `lambda' = 2 (log d / n)^{1/5}`.
pub fn default_lambda_prime(n: usize, d: usize) -> f64 {
    2.0 * ((d.max(2) as f64).ln() / n as f64).powf(0.2)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DantzigSolver {
    /// Exact dense two-phase simplex on the split-variable LP.
    #[default]
    Simplex,
    /// Linearized ADMM with duality-gap stopping.
    Admm(AdmmConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationVector {
    /// Zero-based tested coordinate.
    pub tested_index: usize,
    pub omega_hat: Array1<f64>,
    pub v_hat: Array1<f64>,
    pub lambda_prime: f64,
    pub delta: f64,
    pub feasibility_residual: f64,
    pub psd_projected: bool,
}

fn to_nalgebra(h: ArrayView2<f64>) -> DMatrix<f64> {
    let (r, c) = h.dim();
    DMatrix::from_fn(r, c, |i, j| 0.5 * (h[[i, j]] + h[[j, i]]))
}

fn eigen(h: ArrayView2<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if h.nrows() != h.ncols() {
        return Err(Error::invalid("matrix must be square"));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    SymmetricEigen::try_new(to_nalgebra(h), 1e-14, 10_000)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))
}

/// Smallest eigenvalue of the symmetrized matrix.
pub fn min_eigenvalue(h: ArrayView2<f64>) -> Result<f64> {
    if h.is_empty() {
        return Ok(f64::INFINITY);
    }
    Ok(eigen(h)?
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v)))
}

/// Symmetrizes `h` and clips its eigenvalues below at `floor`.
pub fn project_psd(h: ArrayView2<f64>, floor: f64) -> Result<Array2<f64>> {
    if !(floor > 0.0) {
        return Err(Error::invalid("PSD floor must be positive"));
    }
    let d = h.nrows();
    if d == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let eig = eigen(h)?;
    let q = &eig.eigenvectors;
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(floor)).collect();
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let v: f64 = (0..d).map(|k| q[(i, k)] * lam[k] * q[(j, k)]).sum();
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}

/// `1e-8 (1 + trace / d)`.
pub fn psd_floor(h: ArrayView2<f64>) -> f64 {
    let d = h.nrows().max(1) as f64;
    1e-8 * (1.0 + h.diag().sum() / d)
}

/// `|rhs - H w|_inf`.
pub fn dantzig_residual(h: ArrayView2<f64>, rhs: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
    (&rhs - &h.dot(&w))
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Solves the Dantzig program with the default exact solver.
pub fn solve_dantzig(
    h_gg: ArrayView2<f64>,
    h_gt: ArrayView1<f64>,
    lambda_prime: f64,
) -> Result<Array1<f64>> {
    solve_dantzig_with(h_gg, h_gt, lambda_prime, &DantzigSolver::Simplex)
}

pub fn solve_dantzig_with(
    h_gg: ArrayView2<f64>,
    h_gt: ArrayView1<f64>,
    lambda_prime: f64,
    solver: &DantzigSolver,
) -> Result<Array1<f64>> {
    let m = h_gt.len();
    if h_gg.dim() != (m, m) {
        return Err(Error::invalid("Dantzig block dimensions disagree"));
    }
    if !(lambda_prime >= 0.0) || !lambda_prime.is_finite() {
        return Err(Error::invalid("lambda' must be a nonnegative number"));
    }
    if h_gt.iter().all(|v| v.abs() <= lambda_prime) {
        return Ok(Array1::zeros(m));
    }
    match solver {
        DantzigSolver::Simplex => {
            // w = p - q with p, q >= 0:
            //   H p - H q <= lambda + h,  -H p + H q <= lambda - h.
            let top = concatenate![Axis(1), h_gg, h_gg.mapv(|v| -v)];
            let a = concatenate![Axis(0), top, top.mapv(|v| -v)];
            let b = concatenate![
                Axis(0),
                h_gt.mapv(|v| lambda_prime + v),
                h_gt.mapv(|v| lambda_prime - v)
            ];
            let c = Array1::ones(2 * m);
            let sol = simplex::minimize(c.view(), a.view(), b.view())?;
            Ok(Array1::from_iter((0..m).map(|j| sol.x[j] - sol.x[m + j])))
        }
        DantzigSolver::Admm(cfg) => admm::solve(h_gg, h_gt, lambda_prime, cfg),
    }
}

/// Nuisance block and cross column of `h` for coordinate `j`.
pub fn partition_hessian(h: ArrayView2<f64>, j: usize) -> (Array2<f64>, Array1<f64>) {
    let d = h.nrows();
    let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
    let block = h.select(Axis(0), &others).select(Axis(1), &others);
    let cross = h.slice(s![.., j]).select(Axis(0), &others);
    (block, cross)
}

/// Builds the decorrelation direction for coordinate `tested` (zero-based)
/// from the Hessian of this fold's smoothed risk at `beta_plug`, evaluated
/// at bandwidth `delta_dantzig`.
pub fn decorrelation_vector(
    ctx: &RiskContext,
    beta_plug: ArrayView1<f64>,
    tested: usize,
    lambda_prime: f64,
    delta_dantzig: f64,
    solver: &DantzigSolver,
) -> Result<DecorrelationVector> {
    let d = ctx.d();
    if tested >= d {
        return Err(Error::invalid(format!(
            "tested index {tested} out of range for d = {d}"
        )));
    }
    if !(delta_dantzig > 0.0) {
        return Err(Error::invalid("Dantzig bandwidth must be positive"));
    }
    let hess = ctx.with_delta(delta_dantzig).smoothed_hessian(beta_plug);
    let (mut block, cross) = partition_hessian(hess.view(), tested);
    let floor = psd_floor(block.view());
    let psd_projected = d > 1 && min_eigenvalue(block.view())? < floor;
    if psd_projected {
        block = project_psd(block.view(), floor)?;
    }
    let omega = solve_dantzig_with(block.view(), cross.view(), lambda_prime, solver)?;
    let residual = dantzig_residual(block.view(), cross.view(), omega.view());
    let mut v = Array1::zeros(d);
    v[tested] = 1.0;
    for (k, idx) in (0..d).filter(|&k| k != tested).enumerate() {
        v[idx] = -omega[k];
    }
    Ok(DecorrelationVector {
        tested_index: tested,
        omega_hat: omega,
        v_hat: v,
        lambda_prime,
        delta: delta_dantzig,
        feasibility_residual: residual,
        psd_projected,
    })
}
