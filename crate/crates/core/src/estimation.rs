//! Penalized smoothed surrogate estimation.
//!
//! Minimizes `R_delta(beta) + lambda * |beta|_1` over the Euclidean ball
//! `|beta|_2 <= radius` by approximate path following: a geometric
//! sequence `lambda_0 > lambda_1 > ... > lambda_N = lambda` starting at
//! `lambda_0 = |grad R(0)|_inf`, each stage solved by proximal gradient
//! with backtracking and warm-started from the previous one. Intermediate
//! stages stop at KKT precision `lambda_k / 4`; the last at `eps_tgt`.
//!
//! The smoothed risk is nonconvex, so the returned point is a stationary
//! point reached from the initializer.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_k_folds, Dataset, WeightFn};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::risk::{zero_one_risk, RiskContext};

/// Intermediate stages are solved to KKT precision `STAGE_PRECISION * lambda_k`.
const STAGE_PRECISION: f64 = 0.25;
const POWER_ITERATIONS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathConfig {
    /// Number of continuation stages.
    pub stages: usize,
    /// Sufficient-decrease parameter of the backtracking line search.
    pub nu: f64,
    /// Step shrink factor of the backtracking line search.
    pub eta: f64,
    /// KKT precision of the final stage.
    pub eps_tgt: f64,
    /// Radius of the Euclidean ball constraint.
    pub radius: f64,
    /// Proximal-gradient iteration budget per stage.
    pub max_inner_iters: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            stages: 25,
            nu: 0.25,
            eta: 0.25,
            eps_tgt: 1e-4,
            radius: 1e3,
            max_inner_iters: 5000,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::invalid("path-following needs at least one stage"));
        }
        if !(self.eps_tgt > 0.0) || !(self.radius > 0.0) {
            return Err(Error::invalid("eps_tgt and radius must be positive"));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) || !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::invalid("nu and eta must lie in (0, 1)"));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::invalid("max_inner_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Penalized objective after each accepted step of this stage.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub beta_hat: Array1<f64>,
    pub delta: f64,
    pub lambda: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub stage_trace: Vec<StageRecord>,
}

/// `sign(v) * max(|v| - t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Proximal map of `t |.|_1` plus the indicator of the radius ball.
fn prox(v: &Array1<f64>, t: f64, radius: f64) -> Array1<f64> {
    let mut out = v.mapv(|vi| soft_threshold(vi, t));
    let norm = out.dot(&out).sqrt();
    if norm > radius {
        out *= radius / norm;
    }
    out
}

fn l1(beta: &Array1<f64>) -> f64 {
    beta.iter().map(|v| v.abs()).sum()
}

/// Largest violation of the lasso KKT conditions: `|g_j + lambda sign(b_j)|`
/// on the support and `(|g_j| - lambda)_+` off it.
pub fn kkt_residual(beta: ArrayView1<f64>, grad: ArrayView1<f64>, lambda: f64) -> f64 {
    let mut worst: f64 = 0.0;
    Zip::from(beta).and(grad).for_each(|&b, &g| {
        let r = if b != 0.0 {
            (g + lambda * b.signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(r);
    });
    worst
}

/// Spectral-norm estimate of the Hessian at `beta` by power iteration.
fn lipschitz_estimate(ctx: &RiskContext, beta: &Array1<f64>) -> f64 {
    let coeffs = ctx.hessian_coefficients(&ctx.margins(beta.view()));
    let d = beta.len();
    let mut v = Array1::from_elem(d, 1.0 / (d as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let hv = ctx.hessian_vector(&coeffs, v.view());
        let norm = hv.dot(&hv).sqrt();
        if !(norm > 0.0) {
            break;
        }
        est = norm;
        v = hv / norm;
    }
    est
}

struct StageOutcome {
    beta: Array1<f64>,
    record: StageRecord,
    converged: bool,
}

fn solve_stage(
    ctx: &RiskContext,
    beta0: Array1<f64>,
    lambda: f64,
    tol: f64,
    cfg: &PathConfig,
) -> StageOutcome {
    let mut beta = beta0;
    let (risk, mut grad) = ctx.value_and_gradient(beta.view());
    let mut objective = risk + lambda * l1(&beta);
    let lip = lipschitz_estimate(ctx, &beta);
    let mut step = if lip > 1e-12 { 1.0 / lip } else { 1e12 };
    let mut trace = vec![objective];
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = kkt_residual(beta.view(), grad.view(), lambda);

    while iterations < cfg.max_inner_iters {
        if kkt <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        // Backtracking: at most ~60 shrinks before the step underflows.
        for _ in 0..60 {
            let cand = prox(&(&beta - &(&grad * step)), step * lambda, cfg.radius);
            let diff = &cand - &beta;
            let dist2 = diff.dot(&diff);
            if dist2 == 0.0 {
                // Fixed point of the proximal-gradient map.
                converged = true;
                accepted = true;
                break;
            }
            let margins = ctx.margins(cand.view());
            let cand_risk = ctx.smoothed_risk_from_margins(&margins);
            let cand_obj = cand_risk + lambda * l1(&cand);
            if cand_obj <= objective - cfg.nu / (2.0 * step) * dist2 {
                beta = cand;
                grad = ctx.gradient_from_margins(&margins);
                objective = cand_obj;
                trace.push(objective);
                accepted = true;
                break;
            }
            step *= cfg.eta;
        }
        if converged || !accepted {
            break;
        }
        kkt = kkt_residual(beta.view(), grad.view(), lambda);
    }
    if !converged && kkt <= tol {
        converged = true;
    }
    StageOutcome {
        beta,
        converged,
        record: StageRecord {
            lambda,
            objective,
            iterations,
            kkt_residual: kkt,
            objective_trace: trace,
        },
    }
}

/// Path-following fit. With `beta_init` the path is skipped and the target
/// problem is solved directly from the warm start.
pub fn fit_penalized(
    ctx: &RiskContext,
    lambda: f64,
    cfg: &PathConfig,
    beta_init: Option<ArrayView1<f64>>,
) -> Result<FittedModel> {
    cfg.validate()?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let d = ctx.d();
    let (start, lambdas) = match beta_init {
        Some(b) => {
            if b.len() != d {
                return Err(Error::invalid("beta_init has the wrong length"));
            }
            let mut b = b.to_owned();
            let norm = b.dot(&b).sqrt();
            if norm > cfg.radius {
                b *= cfg.radius / norm;
            }
            (b, vec![lambda])
        }
        None => {
            let start = Array1::zeros(d);
            let lambda0 = ctx
                .smoothed_gradient(start.view())
                .iter()
                .fold(0.0f64, |a, g| a.max(g.abs()));
            let lambdas = if lambda >= lambda0 {
                vec![lambda]
            } else {
                let ratio = lambda / lambda0;
                (1..=cfg.stages)
                    .map(|k| {
                        if k == cfg.stages {
                            lambda
                        } else {
                            lambda0 * ratio.powf(k as f64 / cfg.stages as f64)
                        }
                    })
                    .collect()
            };
            (start, lambdas)
        }
    };

    let mut beta = start;
    let mut trace = Vec::with_capacity(lambdas.len());
    let mut iterations = 0;
    let mut converged = false;
    let last = lambdas.len() - 1;
    for (k, &lam) in lambdas.iter().enumerate() {
        let tol = if k == last {
            cfg.eps_tgt
        } else {
            cfg.eps_tgt.max(STAGE_PRECISION * lam)
        };
        let out = solve_stage(ctx, beta, lam, tol, cfg);
        beta = out.beta;
        iterations += out.record.iterations;
        if k == last {
            converged = out.converged;
        }
        trace.push(out.record);
    }
    let final_stage = trace.last().expect("at least one stage");
    let objective = final_stage.objective;
    let kkt = final_stage.kkt_residual;
    if !objective.is_finite() {
        return Err(Error::NonConvergence {
            iterations,
            detail: "objective became non-finite".into(),
        });
    }
    Ok(FittedModel {
        beta_hat: beta,
        delta: ctx.delta,
        lambda,
        objective,
        iterations,
        converged,
        kkt_residual: kkt,
        stage_trace: trace,
    })
}

/// `c * sqrt(log d / (n delta))`, the rate-matched default penalty level.
pub fn lambda_rate(n: usize, d: usize, delta: f64, c: f64) -> f64 {
    c * ((d.max(2) as f64).ln() / (n as f64 * delta)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub delta: f64,
    pub lambda: f64,
    pub delta_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// Mean held-out weighted 0-1 risk; rows follow `delta_grid`, columns
    /// `lambda_grid`.
    pub table: Array2<f64>,
}

/// K-fold cross-validation of `(delta, lambda)` scored by the held-out
/// weighted 0-1 risk. Ties go to the larger `delta`, then the larger
/// `lambda`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    data: &Dataset,
    weights: WeightFn,
    kernel: &Kernel,
    delta_grid: &[f64],
    lambda_grid: &[f64],
    folds: usize,
    seed: u64,
    cfg: &PathConfig,
) -> Result<CrossValidation> {
    if delta_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::invalid("cross-validation grids must be nonempty"));
    }
    if delta_grid.iter().chain(lambda_grid).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("grid values must be positive"));
    }
    let fold_idx = split_k_folds(data, folds, seed)?;
    let n = data.n();
    let splits: Vec<(Dataset, Dataset)> = fold_idx
        .iter()
        .map(|held| {
            let mut mask = vec![true; n];
            for &i in held {
                mask[i] = false;
            }
            let train: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
            (data.subset(&train), data.subset(held))
        })
        .collect();

    let cells: Vec<(usize, usize)> = (0..delta_grid.len())
        .flat_map(|a| (0..lambda_grid.len()).map(move |b| (a, b)))
        .collect();
    let scores: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(a, b)| {
            let mut total = 0.0;
            for (train, valid) in &splits {
                let ctx = RiskContext::new(train, weights, kernel, delta_grid[a]);
                let fit = fit_penalized(&ctx, lambda_grid[b], cfg, None)?;
                total += zero_one_risk(valid, &weights, fit.beta_hat.view());
            }
            Ok(total / splits.len() as f64)
        })
        .collect();

    let mut table = Array2::zeros((delta_grid.len(), lambda_grid.len()));
    for (&(a, b), s) in cells.iter().zip(scores) {
        table[[a, b]] = s?;
    }
    let mut best = (0usize, 0usize);
    for &(a, b) in &cells {
        let (ba, bb) = best;
        let (v, bv) = (table[[a, b]], table[[ba, bb]]);
        let better = v < bv
            || (v == bv
                && (delta_grid[a] > delta_grid[ba]
                    || (delta_grid[a] == delta_grid[ba] && lambda_grid[b] > lambda_grid[bb])));
        if better {
            best = (a, b);
        }
    }
    Ok(CrossValidation {
        delta: delta_grid[best.0],
        lambda: lambda_grid[best.1],
        delta_grid: delta_grid.to_vec(),
        lambda_grid: lambda_grid.to_vec(),
        table,
    })
}
