//! Data-driven choice of the main bandwidth by minimizing an estimate of
//! the mean squared error of the decorrelated score,
//! `M(delta) = V(delta) / n + ((n - 1) / n) B(delta)^2`.
//!
//! `V` is a cross-fitted second-moment estimate of the per-observation
//! score; `B` estimates the smoothing bias by double smoothing with a pilot
//! kernel `J` at bandwidth `b`. Fold estimates and decorrelation directions
//! are computed once and held fixed across the grid.

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{empirical_weights, Dataset};
use crate::decorrelation::decorrelation_vector;
use crate::error::{Error, Result};
use crate::inference::{cross_fit, CrossFit, Target, TestConfig};
use crate::kernels::{Kernel, KERNEL_SUPPORT};
use crate::quadrature::integrate;
use crate::risk::RiskContext;
use crate::rng::mix_seed;
use crate::simulation::{generate_with_beta, DgpConfig};
use crate::stats::compensated_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandwidthConfig {
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    /// Explicit double-smoothing bandwidth; otherwise
    /// `c_b (log d / n)^{1/(2l + 2r + 1)}`.
    pub b: Option<f64>,
    pub c_b: f64,
    /// Order `r` of the double-smoothing kernel `J`.
    pub j_order: usize,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        Self {
            grid_min: 0.1,
            grid_max: 1.2,
            grid_points: 24,
            b: None,
            c_b: 0.5,
            j_order: 2,
        }
    }
}

impl BandwidthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_min > 0.0) || !(self.grid_max >= self.grid_min) || self.grid_points == 0 {
            return Err(Error::invalid(
                "bandwidth grid needs 0 < min <= max and at least one point",
            ));
        }
        if self.grid_points > 1 && self.grid_max == self.grid_min {
            return Err(Error::invalid("a multi-point grid needs min < max"));
        }
        if let Some(b) = self.b {
            if !(b > 0.0) {
                return Err(Error::invalid(
                    "double-smoothing bandwidth must be positive",
                ));
            }
        }
        if !(self.c_b > 0.0) || self.j_order < 2 || !self.j_order.is_multiple_of(2) {
            return Err(Error::invalid("c_b must be positive and j_order even >= 2"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        log_grid(self.grid_min, self.grid_max, self.grid_points)
    }

    pub fn pilot_b(&self, n: usize, d: usize, kernel_order: usize) -> f64 {
        self.b.unwrap_or_else(|| {
            let expo = 1.0 / (2 * kernel_order + 2 * self.j_order + 1) as f64;
            self.c_b * ((d.max(2) as f64).ln() / n as f64).powf(expo)
        })
    }
}

/// `points` log-spaced values from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                min
            } else if i + 1 == points {
                max
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub delta_hat: f64,
    pub grid: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub v_hat_curve: Vec<f64>,
    pub b_hat_curve: Vec<f64>,
    pub b_pilot: f64,
    pub kernel_j: usize,
}

impl BandwidthSelection {
    /// CSV with columns `delta,V,B,M`.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("delta,V,B,M\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.grid[i], self.v_hat_curve[i], self.b_hat_curve[i], self.m_hat[i]
            ));
        }
        out
    }
}

/// Fold-level `v' Gamma v` where `Gamma` averages the outer products of the
/// per-observation smoothed gradients at `beta`.
pub fn fold_variance_term(ctx: &RiskContext, beta: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let m = ctx.margins(beta);
    let coeffs = ctx.gradient_coefficients(&m);
    let proj = ctx.data.z().dot(&v);
    compensated_sum(coeffs.iter().zip(&proj).map(|(c, p)| (c * p).powi(2))) / ctx.n() as f64
}

/// Cross-fitted `V(delta)`.
pub fn estimate_variance_curve(cf: &CrossFit, kernel: &Kernel, delta: f64) -> f64 {
    (0..2)
        .map(|k| {
            let ctx = RiskContext::new(&cf.folds[k], cf.weights, kernel, delta);
            0.5 * fold_variance_term(&ctx, cf.plug(k).view(), cf.v_hat(k).view())
        })
        .sum()
}

/// `(1/b) int K(u) [J((r - u delta)/b) - J(r/b)] du`.
pub fn double_smoothing_term(r: f64, delta: f64, b: f64, j: &Kernel, k: &Kernel) -> Result<f64> {
    if delta == 0.0 {
        return Ok(0.0);
    }
    let base = j.eval(r / b);
    // J((r - u delta)/b) is negligible once |r - u delta| > support * b.
    let lo = ((r - KERNEL_SUPPORT * b) / delta).max(-KERNEL_SUPPORT);
    let hi = ((r + KERNEL_SUPPORT * b) / delta).min(KERNEL_SUPPORT);
    let inner = if lo < hi {
        integrate(
            |u| k.eval(u) * (j.eval((r - u * delta) / b) - base),
            lo,
            hi,
            1e-11,
            0.0,
        )?
    } else {
        0.0
    };
    // Outside [lo, hi] only the -J(r/b) part survives.
    let outside = if lo < hi {
        -base * (k.complement_cdf(hi) + (1.0 - k.complement_cdf(lo)))
    } else {
        -base
    };
    Ok((inner + outside) / b)
}

/// Fold-level `v' (1/n) sum_i A_i`.
pub fn fold_bias_term(
    ctx: &RiskContext,
    beta: ArrayView1<f64>,
    v: ArrayView1<f64>,
    b: f64,
    j: &Kernel,
) -> Result<f64> {
    let m = ctx.margins(beta);
    let proj = ctx.data.z().dot(&v);
    let mut terms = Vec::with_capacity(ctx.n());
    for i in 0..ctx.n() {
        let yi = ctx.data.y()[i];
        let a = double_smoothing_term(m[i], ctx.delta, b, j, ctx.kernel)?;
        terms.push(ctx.weights.weight(yi) * yi * proj[i] * a);
    }
    Ok(compensated_sum(terms) / ctx.n() as f64)
}

/// Cross-fitted `B(delta)`.
pub fn estimate_bias_curve(
    cf: &CrossFit,
    delta: f64,
    b: f64,
    j: &Kernel,
    kernel: &Kernel,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..2 {
        let ctx = RiskContext::new(&cf.folds[k], cf.weights, kernel, delta);
        total += 0.5 * fold_bias_term(&ctx, cf.plug(k).view(), cf.v_hat(k).view(), b, j)?;
    }
    Ok(total)
}

/// `max(V, 0) / n + ((n - 1) / n) B^2`.
pub fn estimate_mse(v: f64, b: f64, n: usize) -> f64 {
    let n = n as f64;
    v.max(0.0) / n + (n - 1.0) / n * b * b
}

/// Evaluates the curves over the configured grid for an existing cross-fit
/// and returns the minimizer (ties to the smaller bandwidth).
pub fn select_with_cross_fit(cf: &CrossFit, cfg: &TestConfig) -> Result<BandwidthSelection> {
    cfg.bandwidth.validate()?;
    let grid = cfg.bandwidth.grid();
    let kernel = Kernel::gaussian(cfg.kernel_order)?;
    let j = Kernel::gaussian(cfg.bandwidth.j_order)?;
    let b = cfg
        .bandwidth
        .pilot_b(cf.n, cf.folds[0].d(), cfg.kernel_order);
    let rows: Vec<Result<(f64, f64)>> = grid
        .par_iter()
        .map(|&delta| {
            let v = estimate_variance_curve(cf, &kernel, delta);
            let bias = estimate_bias_curve(cf, delta, b, &j, &kernel)?;
            Ok((v, bias))
        })
        .collect();
    let mut v_curve = Vec::with_capacity(grid.len());
    let mut b_curve = Vec::with_capacity(grid.len());
    for row in rows {
        let (v, bias) = row?;
        v_curve.push(v);
        b_curve.push(bias);
    }
    let m_hat: Vec<f64> = v_curve
        .iter()
        .zip(&b_curve)
        .map(|(&v, &bb)| estimate_mse(v, bb, cf.n))
        .collect();
    let best = m_hat
        .iter()
        .enumerate()
        .fold(0, |best, (i, &m)| if m < m_hat[best] { i } else { best });
    Ok(BandwidthSelection {
        delta_hat: grid[best],
        grid,
        m_hat,
        v_hat_curve: v_curve,
        b_hat_curve: b_curve,
        b_pilot: b,
        kernel_j: cfg.bandwidth.j_order,
    })
}

/// Fits the fold estimates and directions for coordinate `tested`
/// (zero-based) at the reference bandwidth and selects the main bandwidth.
pub fn select_bandwidth(
    data: &Dataset,
    tested: usize,
    cfg: &TestConfig,
) -> Result<BandwidthSelection> {
    let mut cfg = cfg.clone();
    cfg.delta = crate::inference::DeltaRule::DataDriven;
    let cf = cross_fit(data, &Target::Coordinate(tested), &cfg)?;
    select_with_cross_fit(&cf, &cfg)
}

/// `v' grad R_delta(beta)` for each bandwidth on the grid.
pub fn score_curve(
    data: &Dataset,
    weights: crate::dataset::WeightFn,
    kernel: &Kernel,
    beta: ArrayView1<f64>,
    v: ArrayView1<f64>,
    grid: &[f64],
) -> Array1<f64> {
    Array1::from_iter(grid.iter().map(|&delta| {
        RiskContext::new(data, weights, kernel, delta)
            .smoothed_gradient(beta)
            .dot(&v)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseOracle {
    pub grid: Vec<f64>,
    /// Monte Carlo mean of `(v' grad R_delta(beta))^2` per grid point.
    pub mean: Vec<f64>,
    /// Replicate standard deviation of the squared score per grid point.
    pub sd: Vec<f64>,
    pub v_star: Array1<f64>,
    pub reps: usize,
}

/// Stand-in for the population decorrelation direction: the average of
/// Dantzig directions at `beta_star` over `reps` samples of size `10 n`.
pub fn oracle_direction(
    dgp: &DgpConfig,
    beta_star: &Array1<f64>,
    tested: usize,
    cfg: &TestConfig,
    reps: usize,
    seed: u64,
) -> Result<Array1<f64>> {
    if reps == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    let big = DgpConfig {
        n: 10 * dgp.n,
        ..dgp.clone()
    };
    let kernel = Kernel::gaussian(cfg.kernel_order)?;
    let lambda_prime = cfg.dantzig_lambda(big.n, big.d);
    let dirs: Vec<Result<Array1<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = generate_with_beta(&big, beta_star, mix_seed(seed, r as u64))?;
            let weights = empirical_weights(&data, cfg.weight_mode)?;
            let ctx = RiskContext::new(&data, weights, &kernel, cfg.delta_dantzig);
            let dv = decorrelation_vector(
                &ctx,
                beta_star.view(),
                tested,
                lambda_prime,
                cfg.delta_dantzig,
                &cfg.solver,
            )?;
            Ok(dv.v_hat)
        })
        .collect();
    let mut total = Array1::zeros(dgp.d);
    for v in dirs {
        total += &v?;
    }
    Ok(total / reps as f64)
}

/// Monte Carlo approximation of `M(delta) = E[(v' grad R^n_delta(beta))^2]`
/// from fresh samples of size `n`.
pub fn mc_mse_oracle(
    dgp: &DgpConfig,
    beta_star: &Array1<f64>,
    v_star: &Array1<f64>,
    grid: &[f64],
    reps: usize,
    seed: u64,
    cfg: &TestConfig,
) -> Result<MseOracle> {
    if reps == 0 || grid.is_empty() {
        return Err(Error::invalid(
            "need at least one replicate and one grid point",
        ));
    }
    let kernel = Kernel::gaussian(cfg.kernel_order)?;
    let rows: Vec<Result<Array1<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = generate_with_beta(dgp, beta_star, mix_seed(seed, r as u64))?;
            let weights = empirical_weights(&data, cfg.weight_mode)?;
            Ok(score_curve(
                &data,
                weights,
                &kernel,
                beta_star.view(),
                v_star.view(),
                grid,
            )
            .mapv(|s| s * s))
        })
        .collect();
    let mut squares = Vec::with_capacity(reps);
    for row in rows {
        squares.push(row?);
    }
    let mut mean = Vec::with_capacity(grid.len());
    let mut sd = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let col: Vec<f64> = squares.iter().map(|s| s[g]).collect();
        mean.push(crate::stats::mean(&col));
        sd.push(if reps > 1 {
            crate::stats::sample_variance(&col).sqrt()
        } else {
            0.0
        });
    }
    Ok(MseOracle {
        grid: grid.to_vec(),
        mean,
        sd,
        v_star: v_star.clone(),
        reps,
    })
}
