//! Cross-fitted, bias-corrected smoothed decorrelated score test.
//!
//! The sample is split in two folds. Each fold fits its own penalized
//! estimate; every quantity evaluated on fold `k` (Hessian for the Dantzig
//! step, score, bias and variance estimates) plugs in the estimate from
//! the other fold. The statistic is
//! `U = sqrt(n delta) (S - delta^l mu) / sigma` with `S`, `mu`, `sigma^2`
//! the averages of the two fold-level terms.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{select_with_cross_fit, BandwidthConfig, BandwidthSelection};
use crate::dataset::{empirical_weights, split_two_folds, Dataset, FoldPair, WeightFn, WeightMode};
use crate::decorrelation::{
    decorrelation_vector, default_lambda_prime, DantzigSolver, DecorrelationVector, DANTZIG_DELTA,
};
use crate::error::{Error, Result};
use crate::estimation::{fit_penalized, lambda_rate, FittedModel, PathConfig};
use crate::kernels::Kernel;
use crate::risk::RiskContext;
use crate::stats::{sample_variance, two_sided_p_value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum DeltaRule {
    Fixed {
        value: f64,
    },
    /// `c n^{-1/(2l+1)}`.
    Rate {
        c: f64,
    },
    /// Minimizer of the estimated MSE over the bandwidth grid.
    DataDriven,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum LambdaRule {
    Fixed {
        value: f64,
    },
    /// `c sqrt(log d / (n_fold delta))`.
    Rate {
        c: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// `Pilot` at a fixed bandwidth, `Moment` under the data-driven rule.
    #[default]
    Auto,
    /// Pilot-kernel plug-in `mu_tilde v' H v`.
    Pilot,
    /// Sample variance of the per-observation bias-corrected summands.
    Moment,
}

pub const DEFAULT_LAMBDA_C: f64 = 0.2;

/// Fold estimates are fit at `DEFAULT_FIT_C n^{-1/(2l+1)}` unless set.
pub const DEFAULT_FIT_C: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub delta: DeltaRule,
    pub kernel_order: usize,
    /// Explicit pilot bias bandwidth; otherwise `c_h (log d / n)^{1/(2l+3)}`.
    pub h: Option<f64>,
    /// Explicit pilot variance bandwidth; otherwise `c_g (log d / n)^{1/(2l+1)}`.
    pub g: Option<f64>,
    pub c_h: f64,
    pub c_g: f64,
    pub variance_mode: VarianceMode,
    pub lambda: LambdaRule,
    /// Explicit bandwidth for the fold estimates; otherwise
    /// `c_fit n^{-1/(2l+1)}`, independent of the test bandwidth.
    pub fit_bandwidth: Option<f64>,
    pub c_fit: f64,
    /// Explicit Dantzig tuning; otherwise `2 (log d / n)^{1/5}`.
    pub lambda_prime: Option<f64>,
    pub delta_dantzig: f64,
    pub weight_mode: WeightMode,
    pub seed: u64,
    pub path: PathConfig,
    pub solver: DantzigSolver,
    pub bandwidth: BandwidthConfig,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            delta: DeltaRule::Rate { c: 1.0 },
            kernel_order: 2,
            h: None,
            g: None,
            c_h: 2.0,
            c_g: 2.0,
            variance_mode: VarianceMode::Auto,
            lambda: LambdaRule::Rate {
                c: DEFAULT_LAMBDA_C,
            },
            fit_bandwidth: None,
            c_fit: DEFAULT_FIT_C,
            lambda_prime: None,
            delta_dantzig: DANTZIG_DELTA,
            weight_mode: WeightMode::InverseProportion,
            seed: 0,
            path: PathConfig::default(),
            solver: DantzigSolver::Simplex,
            bandwidth: BandwidthConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_order < 2 || !self.kernel_order.is_multiple_of(2) {
            return Err(Error::invalid("kernel order must be even and at least 2"));
        }
        match self.delta {
            DeltaRule::Fixed { value } => positive("delta", value)?,
            DeltaRule::Rate { c } => positive("delta constant", c)?,
            DeltaRule::DataDriven => self.bandwidth.validate()?,
        }
        match self.lambda {
            LambdaRule::Fixed { value } => positive("lambda", value)?,
            LambdaRule::Rate { c } => positive("lambda constant", c)?,
        }
        if let Some(h) = self.h {
            positive("h", h)?;
        }
        if let Some(g) = self.g {
            positive("g", g)?;
        }
        if let Some(lp) = self.lambda_prime {
            if !(lp >= 0.0) || !lp.is_finite() {
                return Err(Error::invalid("lambda' must be nonnegative"));
            }
        }
        if let Some(b) = self.fit_bandwidth {
            positive("fit bandwidth", b)?;
        }
        positive("c_fit", self.c_fit)?;
        positive("c_h", self.c_h)?;
        positive("c_g", self.c_g)?;
        positive("delta_dantzig", self.delta_dantzig)?;
        self.path.validate()
    }

    fn log_ratio(n: usize, d: usize) -> f64 {
        (d.max(2) as f64).ln() / n as f64
    }

    /// `n^{-1/(2l+1)}`, the bandwidth rate without constant.
    pub fn reference_delta(&self, n: usize) -> f64 {
        (n as f64).powf(-1.0 / (2 * self.kernel_order + 1) as f64)
    }

    pub fn pilot_h(&self, n: usize, d: usize) -> f64 {
        self.h.unwrap_or_else(|| {
            self.c_h * Self::log_ratio(n, d).powf(1.0 / (2 * self.kernel_order + 3) as f64)
        })
    }

    pub fn pilot_g(&self, n: usize, d: usize) -> f64 {
        self.g.unwrap_or_else(|| {
            self.c_g * Self::log_ratio(n, d).powf(1.0 / (2 * self.kernel_order + 1) as f64)
        })
    }

    pub fn dantzig_lambda(&self, n: usize, d: usize) -> f64 {
        self.lambda_prime
            .unwrap_or_else(|| default_lambda_prime(n, d))
    }

    /// The variance mode actually used, with `Auto` resolved.
    pub fn resolved_variance_mode(&self) -> VarianceMode {
        match (self.variance_mode, self.delta) {
            (VarianceMode::Auto, DeltaRule::DataDriven) => VarianceMode::Moment,
            (VarianceMode::Auto, _) => VarianceMode::Pilot,
            (mode, _) => mode,
        }
    }

    /// Bandwidth at which the two fold estimates are fit.
    pub fn fit_delta(&self, n: usize) -> f64 {
        self.fit_bandwidth
            .unwrap_or_else(|| self.c_fit * self.reference_delta(n))
    }

    /// Test bandwidth for the fixed rules; the data-driven rule falls back to
    /// the reference rate, which is also where its plug-ins are computed.
    pub fn main_delta(&self, n: usize) -> f64 {
        match self.delta {
            DeltaRule::Fixed { value } => value,
            DeltaRule::Rate { c } => c * self.reference_delta(n),
            DeltaRule::DataDriven => self.reference_delta(n),
        }
    }

    pub fn fit_lambda(&self, n_fold: usize, d: usize, delta: f64) -> f64 {
        match self.lambda {
            LambdaRule::Fixed { value } => value,
            LambdaRule::Rate { c } => lambda_rate(n_fold, d, delta, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub delta_used: f64,
    pub score_value: f64,
    pub fold_scores: [f64; 2],
    pub fold_bias: [f64; 2],
    pub fold_variance: [f64; 2],
    pub variance_mode: VarianceMode,
    /// Statistic under the other variance mode, when it is well defined.
    pub alternate_statistic: Option<f64>,
    /// Zero-based tested coordinate in the working parametrization.
    pub tested_index: usize,
    pub contrast: Option<Array1<f64>>,
    pub h: f64,
    pub g: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub beta_hats: [Array1<f64>; 2],
    pub fits_converged: [bool; 2],
    pub kkt_residuals: [f64; 2],
    pub decor: [DecorrelationVector; 2],
    pub bandwidth: Option<BandwidthSelection>,
}

/// `v' grad R(beta_restricted)` on one fold.
pub fn decorrelated_score(
    ctx: &RiskContext,
    beta_restricted: ArrayView1<f64>,
    v_hat: ArrayView1<f64>,
) -> f64 {
    ctx.smoothed_gradient(beta_restricted).dot(&v_hat)
}

/// `T = (1/n) sum_i w(y_i) y_i z_i U^(l)((beta'z_i - x_i)/h) / h^{1+l}`
/// with `l` the order of `u`.
pub fn bias_direction(
    ctx: &RiskContext,
    beta_plug: ArrayView1<f64>,
    h: f64,
    u: &Kernel,
) -> Array1<f64> {
    let l = u.order();
    let scale = h.powi(l as i32 + 1);
    let m = ctx.margins(beta_plug);
    let coeffs = Array1::from_iter(m.iter().zip(ctx.data.y()).map(|(&mi, &yi)| {
        ctx.weights.weight(yi) * yi * u.derivative_unchecked(l, -mi / h) / scale
    }));
    ctx.data.z().t().dot(&coeffs) / ctx.n() as f64
}

/// Fold-level bias term `gamma v' T`.
pub fn estimate_bias(
    ctx: &RiskContext,
    beta_plug: ArrayView1<f64>,
    v_hat: ArrayView1<f64>,
    h: f64,
    u: &Kernel,
    gamma: f64,
) -> f64 {
    gamma * bias_direction(ctx, beta_plug, h, u).dot(&v_hat)
}

/// Fold-level variance term `mu_tilde v' H v` with
/// `H = (1/n) sum_i w(y_i)^2 z_i z_i' L((x_i - beta'z_i)/g) / g`.
pub fn estimate_variance_pilot(
    ctx: &RiskContext,
    beta_plug: ArrayView1<f64>,
    v_hat: ArrayView1<f64>,
    g: f64,
    l: &Kernel,
    mu_tilde: f64,
) -> f64 {
    let m = ctx.margins(beta_plug);
    let proj = ctx.data.z().dot(&v_hat);
    let terms = m
        .iter()
        .zip(ctx.data.y())
        .zip(&proj)
        .map(|((&mi, &yi), &pi)| {
            let w = ctx.weights.weight(yi);
            w * w * pi * pi * l.eval(mi / g) / g
        });
    mu_tilde * crate::stats::compensated_sum(terms) / ctx.n() as f64
}

/// Per-observation summands whose mean is the fold's bias-corrected score
/// `S - delta^l gamma v'T`.
pub fn moment_summands(
    ctx: &RiskContext,
    beta_restricted: ArrayView1<f64>,
    beta_plug: ArrayView1<f64>,
    v_hat: ArrayView1<f64>,
    h: f64,
    u: &Kernel,
    gamma: f64,
) -> Array1<f64> {
    let delta = ctx.delta;
    let l = u.order();
    let factor = gamma * (delta / h).powi(l as i32 + 1);
    let m0 = ctx.margins(beta_restricted);
    let m = ctx.margins(beta_plug);
    let proj = ctx.data.z().dot(&v_hat);
    Array1::from_iter((0..ctx.n()).map(|i| {
        let yi = ctx.data.y()[i];
        let w = ctx.weights.weight(yi);
        let k = ctx.kernel.eval(m0[i] / delta);
        let b = u.derivative_unchecked(l, -m[i] / h);
        w * yi * proj[i] / delta * (k - factor * b)
    }))
}

/// Sample variance of the moment summands.
#[allow(clippy::too_many_arguments)]
pub fn estimate_variance_moment(
    ctx: &RiskContext,
    beta_restricted: ArrayView1<f64>,
    beta_plug: ArrayView1<f64>,
    v_hat: ArrayView1<f64>,
    h: f64,
    u: &Kernel,
    gamma: f64,
) -> Result<f64> {
    let d = moment_summands(ctx, beta_restricted, beta_plug, v_hat, h, u, gamma);
    let var = sample_variance(d.as_slice().expect("contiguous"));
    if var > 0.0 {
        Ok(var)
    } else {
        Err(Error::DegenerateVariance { value: var })
    }
}

/// Reparametrizes covariates for the contrast `c` (unit norm, first nonzero
/// entry at `k`) so that coordinate `k` carries `c'beta` and the others keep
/// their coefficients.
pub fn contrast_covariates(data: &Dataset, c: ArrayView1<f64>, k: usize) -> Result<Dataset> {
    let mut z = data.z().clone();
    let zk = data.z().column(k).to_owned();
    let ck = c[k];
    for j in 0..data.d() {
        if j == k {
            z.column_mut(j).assign(&(&zk / ck));
        } else if c[j] != 0.0 {
            z.column_mut(j).scaled_add(-c[j] / ck, &zk);
        }
    }
    data.with_covariates(z)
}

fn contrast_coefficients(beta: &Array1<f64>, c: ArrayView1<f64>, k: usize) -> Array1<f64> {
    let mut out = beta.clone();
    out[k] = c.dot(beta);
    out
}

/// The reusable half of the pipeline: folds, fold estimates and
/// decorrelation directions, in the working parametrization.
#[derive(Debug, Clone)]
pub struct CrossFit {
    pub fold_pair: FoldPair,
    pub weights: WeightFn,
    pub folds: [Dataset; 2],
    /// Fold estimates in the working coordinates.
    pub beta_hats: [Array1<f64>; 2],
    pub fits: [FittedModel; 2],
    pub decor: [DecorrelationVector; 2],
    pub tested: usize,
    pub n: usize,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub fit_delta: f64,
}

impl CrossFit {
    /// Other fold's estimate with the tested slot zeroed, for fold `k`.
    pub fn restricted(&self, k: usize) -> Array1<f64> {
        let mut b = self.beta_hats[1 - k].clone();
        b[self.tested] = 0.0;
        b
    }

    pub fn plug(&self, k: usize) -> &Array1<f64> {
        &self.beta_hats[1 - k]
    }

    pub fn v_hat(&self, k: usize) -> &Array1<f64> {
        &self.decor[k].v_hat
    }

    pub fn swapped(&self) -> CrossFit {
        let [f1, f2] = self.folds.clone();
        let [b1, b2] = self.beta_hats.clone();
        let [m1, m2] = self.fits.clone();
        let [d1, d2] = self.decor.clone();
        CrossFit {
            fold_pair: self.fold_pair.swapped(),
            folds: [f2, f1],
            beta_hats: [b2, b1],
            fits: [m2, m1],
            decor: [d2, d1],
            ..self.clone()
        }
    }
}

/// Tested target: a coordinate (zero-based) or a contrast vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Coordinate(usize),
    Contrast(Array1<f64>),
}

pub fn cross_fit(data: &Dataset, target: &Target, cfg: &TestConfig) -> Result<CrossFit> {
    cfg.validate()?;
    let d = data.d();
    let n = data.n();
    let (tested, contrast) = match target {
        Target::Coordinate(j) => {
            if *j >= d {
                return Err(Error::invalid(format!(
                    "coordinate {} out of range 1..={d}",
                    j + 1
                )));
            }
            (*j, None)
        }
        Target::Contrast(c) => {
            if c.len() != d {
                return Err(Error::invalid("contrast length must equal d"));
            }
            let norm = c.dot(c).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::invalid("contrast must be a nonzero finite vector"));
            }
            let unit = c / norm;
            let k = unit
                .iter()
                .position(|&v| v != 0.0)
                .expect("nonzero contrast");
            (k, Some(unit))
        }
    };
    let weights = empirical_weights(data, cfg.weight_mode)?;
    let pair = split_two_folds(data, cfg.seed)?;
    let raw = [data.subset(&pair.fold1), data.subset(&pair.fold2)];
    let kernel = Kernel::gaussian(cfg.kernel_order)?;
    let fit_delta = cfg.fit_delta(n);
    let lambda = cfg.fit_lambda(raw[0].n(), d, fit_delta);
    let fit_fold = |fold: &Dataset| -> Result<FittedModel> {
        let ctx = RiskContext::new(fold, weights, &kernel, fit_delta);
        fit_penalized(&ctx, lambda, &cfg.path, None)
    };
    let (f1, f2) = rayon::join(|| fit_fold(&raw[0]), || fit_fold(&raw[1]));
    let fits = [f1?, f2?];

    let (folds, beta_hats) = match &contrast {
        None => (raw, [fits[0].beta_hat.clone(), fits[1].beta_hat.clone()]),
        Some(c) => (
            [
                contrast_covariates(&raw[0], c.view(), tested)?,
                contrast_covariates(&raw[1], c.view(), tested)?,
            ],
            [
                contrast_coefficients(&fits[0].beta_hat, c.view(), tested),
                contrast_coefficients(&fits[1].beta_hat, c.view(), tested),
            ],
        ),
    };
    let lambda_prime = cfg.dantzig_lambda(n, d);
    let decor_fold = |k: usize| -> Result<DecorrelationVector> {
        let ctx = RiskContext::new(&folds[k], weights, &kernel, cfg.delta_dantzig);
        decorrelation_vector(
            &ctx,
            beta_hats[1 - k].view(),
            tested,
            lambda_prime,
            cfg.delta_dantzig,
            &cfg.solver,
        )
    };
    let (d1, d2) = rayon::join(|| decor_fold(0), || decor_fold(1));
    Ok(CrossFit {
        fold_pair: pair,
        weights,
        decor: [d1?, d2?],
        folds,
        beta_hats,
        fits,
        tested,
        n,
        lambda,
        lambda_prime,
        fit_delta,
    })
}

struct FoldTerms {
    score: f64,
    bias: f64,
    pilot_var: f64,
    moment_mean: f64,
    moment_var: f64,
    size: usize,
}

/// Evaluates the statistic for a finished cross-fit at main bandwidth `delta`.
pub fn statistic_from_cross_fit(cf: &CrossFit, cfg: &TestConfig, delta: f64) -> Result<TestResult> {
    positive("delta", delta)?;
    let kernel = Kernel::gaussian(cfg.kernel_order)?;
    let moments = kernel.moments()?;
    let d = cf.folds[0].d();
    let h = cfg.pilot_h(cf.n, d);
    let g = cfg.pilot_g(cf.n, d);
    let ell = cfg.kernel_order as i32;
    let mode = cfg.resolved_variance_mode();

    let terms: Vec<FoldTerms> = (0..2)
        .map(|k| {
            let ctx = RiskContext::new(&cf.folds[k], cf.weights, &kernel, delta);
            let restricted = cf.restricted(k);
            let plug = cf.plug(k);
            let v = cf.v_hat(k);
            let summands = moment_summands(
                &ctx,
                restricted.view(),
                plug.view(),
                v.view(),
                h,
                &kernel,
                moments.gamma,
            );
            let sl = summands.as_slice().expect("contiguous");
            FoldTerms {
                score: decorrelated_score(&ctx, restricted.view(), v.view()),
                bias: estimate_bias(&ctx, plug.view(), v.view(), h, &kernel, moments.gamma),
                pilot_var: estimate_variance_pilot(
                    &ctx,
                    plug.view(),
                    v.view(),
                    g,
                    &kernel,
                    moments.mu_tilde,
                ),
                moment_mean: crate::stats::mean(sl),
                moment_var: sample_variance(sl),
                size: ctx.n(),
            }
        })
        .collect();

    let score = 0.5 * (terms[0].score + terms[1].score);
    let mu = 0.5 * (terms[0].bias + terms[1].bias);
    let sigma2 = 0.5 * (terms[0].pilot_var + terms[1].pilot_var);
    let numerator = score - delta.powi(ell) * mu;
    let pilot_stat =
        (sigma2 > 0.0).then(|| (cf.n as f64 * delta).sqrt() * numerator / sigma2.sqrt());

    let moment_se2 = 0.25
        * (terms[0].moment_var / terms[0].size as f64 + terms[1].moment_var / terms[1].size as f64);
    let moment_num = 0.5 * (terms[0].moment_mean + terms[1].moment_mean);
    let moment_stat = (moment_se2 > 0.0).then(|| moment_num / moment_se2.sqrt());

    let (statistic, alternate, sigma_hat) = match mode {
        VarianceMode::Pilot | VarianceMode::Auto => {
            let s = pilot_stat.ok_or(Error::DegenerateVariance { value: sigma2 })?;
            (s, moment_stat, sigma2.sqrt())
        }
        VarianceMode::Moment => {
            let s = moment_stat.ok_or(Error::DegenerateVariance { value: moment_se2 })?;
            // Scale on the pilot statistic's footing: sqrt(n delta) * se.
            (s, pilot_stat, (cf.n as f64 * delta * moment_se2).sqrt())
        }
    };
    if !statistic.is_finite() {
        return Err(Error::NonConvergence {
            iterations: 0,
            detail: "statistic is not finite".into(),
        });
    }
    let fold_variance = match mode {
        VarianceMode::Pilot | VarianceMode::Auto => [terms[0].pilot_var, terms[1].pilot_var],
        VarianceMode::Moment => [terms[0].moment_var, terms[1].moment_var],
    };
    Ok(TestResult {
        statistic,
        p_value: two_sided_p_value(statistic),
        mu_hat: mu,
        sigma_hat,
        delta_used: delta,
        score_value: score,
        fold_scores: [terms[0].score, terms[1].score],
        fold_bias: [terms[0].bias, terms[1].bias],
        fold_variance,
        variance_mode: mode,
        alternate_statistic: alternate,
        tested_index: cf.tested,
        contrast: None,
        h,
        g,
        lambda: cf.lambda,
        lambda_prime: cf.lambda_prime,
        beta_hats: cf.beta_hats.clone(),
        fits_converged: [cf.fits[0].converged, cf.fits[1].converged],
        kkt_residuals: [cf.fits[0].kkt_residual, cf.fits[1].kkt_residual],
        decor: cf.decor.clone(),
        bandwidth: None,
    })
}

fn run(data: &Dataset, target: &Target, cfg: &TestConfig) -> Result<TestResult> {
    let cf = cross_fit(data, target, cfg)?;
    let (delta, selection) = match cfg.delta {
        DeltaRule::DataDriven => {
            let sel = select_with_cross_fit(&cf, cfg)?;
            (sel.delta_hat, Some(sel))
        }
        _ => (cfg.main_delta(cf.n), None),
    };
    let mut result = statistic_from_cross_fit(&cf, cfg, delta)?;
    result.bandwidth = selection;
    if let Target::Contrast(c) = target {
        result.contrast = Some(c / c.dot(c).sqrt());
    }
    Ok(result)
}

/// Tests `H0: beta_j = 0` for the zero-based coordinate `tested`.
pub fn score_test(data: &Dataset, tested: usize, cfg: &TestConfig) -> Result<TestResult> {
    run(data, &Target::Coordinate(tested), cfg)
}

/// Tests `H0: c0'beta = 0`. The contrast is normalized to unit length, so
/// the statistic is invariant to rescaling `c0`.
pub fn linear_combination_test(
    data: &Dataset,
    c0: ArrayView1<f64>,
    cfg: &TestConfig,
) -> Result<TestResult> {
    run(data, &Target::Contrast(c0.to_owned()), cfg)
}
