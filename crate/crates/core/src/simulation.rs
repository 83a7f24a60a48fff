//! Simulation designs and the Monte Carlo harness.
//!
//! Data follow `Y = sign(X - beta'Z + eps)` with `X ~ N(0, 1)`, `Z` a
//! Gaussian AR(1) vector with parameter `rho`, and heteroskedastic noise
//! whose scale grows with the margin `X - beta'Z`:
//!
//! * `HeteroGaussian`: `eps ~ N(0, 0.04 (1 + 2 m^2))`
//! * `HeteroUniform`: `eps = 0.2 U(-G, G)`, `G = sqrt(1 + 2 m^2)`
//!
//! Replicate `r` of a run with master seed `s` draws everything from child
//! streams of `mix_seed(s, r)`: stream 0 for data, 1 for `beta`, 2 for the
//! fold split.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::inference::{score_test, TestConfig};
use crate::rng::{mix_seed, rng_from_seed, StdNormal};
use crate::stats::{binomial_se, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    HeteroGaussian,
    HeteroUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaDesign {
    /// `beta1` at slot 1, `Unif[1, 2]` draws at slots `2..s`, then unit norm.
    #[default]
    UniformDraw,
    /// `1/sqrt(s)` on the first `s` slots.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub rho: f64,
    pub beta1: f64,
    pub seed: u64,
    pub beta_draw_seed: u64,
    #[serde(default)]
    pub design: BetaDesign,
    /// Reuse `beta_draw_seed` for every replicate instead of redrawing.
    #[serde(default)]
    pub freeze_beta: bool,
}

impl DgpConfig {
    pub fn new(scenario: Scenario, n: usize, d: usize, s: usize, rho: f64, beta1: f64) -> Self {
        Self {
            scenario,
            n,
            d,
            s,
            rho,
            beta1,
            seed: 0,
            beta_draw_seed: 0,
            design: BetaDesign::UniformDraw,
            freeze_beta: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [0, 1)"));
        }
        if self.s < 2 || self.s > self.d {
            return Err(Error::invalid("sparsity must satisfy 2 <= s <= d"));
        }
        if self.n < 4 {
            return Err(Error::invalid("n must be at least 4"));
        }
        if !self.beta1.is_finite() {
            return Err(Error::invalid("beta1 must be finite"));
        }
        Ok(())
    }
}

/// Coefficient vector for the design, drawn from `rng` when random.
pub fn draw_beta<R: Rng>(cfg: &DgpConfig, rng: &mut R) -> Array1<f64> {
    let mut beta = Array1::zeros(cfg.d);
    match cfg.design {
        BetaDesign::UniformDraw => {
            beta[0] = cfg.beta1;
            for j in 1..cfg.s {
                beta[j] = rng.random_range(1.0..2.0);
            }
        }
        BetaDesign::Equal => {
            for j in 0..cfg.s {
                beta[j] = 1.0;
            }
        }
    }
    let norm = beta.dot(&beta).sqrt();
    beta / norm
}

/// Draws `n` observations under `beta_star` from the stream `seed`.
pub fn generate_with_beta(cfg: &DgpConfig, beta_star: &Array1<f64>, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from_seed(seed);
    let mut g = StdNormal::new();
    let (n, d) = (cfg.n, cfg.d);
    let scale = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut z = Array2::zeros((n, d));
    let mut x = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        x[i] = g.sample(&mut rng);
        let mut prev = g.sample(&mut rng);
        z[[i, 0]] = prev;
        for j in 1..d {
            prev = cfg.rho * prev + scale * g.sample(&mut rng);
            z[[i, j]] = prev;
        }
        let margin = x[i] - z.row(i).dot(beta_star);
        let spread = (1.0 + 2.0 * margin * margin).sqrt();
        let eps = match cfg.scenario {
            Scenario::HeteroGaussian => 0.2 * spread * g.sample(&mut rng),
            Scenario::HeteroUniform => 0.2 * rng.random_range(-spread..spread),
        };
        y[i] = if margin + eps >= 0.0 { 1.0 } else { -1.0 };
    }
    Dataset::new(x, y, z)
}

/// Data and coefficient vector for `cfg` (seeds taken from the config).
pub fn generate_dgp(cfg: &DgpConfig) -> Result<(Dataset, Array1<f64>)> {
    cfg.validate()?;
    let beta = draw_beta(cfg, &mut rng_from_seed(cfg.beta_draw_seed));
    let data = generate_with_beta(cfg, &beta, cfg.seed)?;
    Ok((data, beta))
}

/// The config for replicate `r` under `master_seed`.
pub fn replicate_config(cfg: &DgpConfig, master_seed: u64, r: usize) -> (DgpConfig, u64) {
    let rep = mix_seed(master_seed, r as u64);
    let mut out = cfg.clone();
    out.seed = mix_seed(rep, 0);
    if !cfg.freeze_beta {
        out.beta_draw_seed = mix_seed(rep, 1);
    }
    (out, mix_seed(rep, 2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub statistic: Option<f64>,
    pub alternate_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub rejected: Option<bool>,
    pub delta_used: Option<f64>,
    pub converged: Option<[bool; 2]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub dgp: DgpConfig,
    pub test: TestConfig,
    pub alpha: f64,
    pub master_seed: u64,
    pub replicates: usize,
    pub excluded: usize,
    pub rejection_rate: f64,
    pub rejection_se: f64,
    /// Statistics of the completed replicates, in replicate order.
    pub statistics: Vec<f64>,
    pub records: Vec<ReplicateRecord>,
    /// Not serialized, so that seeded reports compare equal byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonteCarloOptions {
    /// Run replicates one after another on the calling thread.
    pub serial: bool,
    /// Zero-based coordinate to test.
    pub tested: usize,
}

fn run_replicate(
    dgp: &DgpConfig,
    test_cfg: &TestConfig,
    alpha: f64,
    master_seed: u64,
    r: usize,
    tested: usize,
) -> ReplicateRecord {
    let (cfg, split_seed) = replicate_config(dgp, master_seed, r);
    let mut tc = test_cfg.clone();
    tc.seed = split_seed;
    let outcome = generate_dgp(&cfg).and_then(|(data, _)| score_test(&data, tested, &tc));
    match outcome {
        Ok(res) => ReplicateRecord {
            index: r,
            statistic: Some(res.statistic),
            alternate_statistic: res.alternate_statistic,
            p_value: Some(res.p_value),
            rejected: Some(res.p_value < alpha),
            delta_used: Some(res.delta_used),
            converged: Some(res.fits_converged),
            error: None,
        },
        Err(e) => ReplicateRecord {
            index: r,
            statistic: None,
            alternate_statistic: None,
            p_value: None,
            rejected: None,
            delta_used: None,
            converged: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs `replicates` independent tests. Failed replicates are excluded and
/// counted; more than 5% exclusions fails the run.
pub fn run_monte_carlo(
    dgp: &DgpConfig,
    test_cfg: &TestConfig,
    replicates: usize,
    alpha: f64,
    master_seed: u64,
    opts: MonteCarloOptions,
) -> Result<SimulationReport> {
    dgp.validate()?;
    test_cfg.validate()?;
    if replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    if opts.tested >= dgp.d {
        return Err(Error::invalid("tested coordinate out of range"));
    }
    let start = Instant::now();
    let one = |r| run_replicate(dgp, test_cfg, alpha, master_seed, r, opts.tested);
    let records: Vec<ReplicateRecord> = if opts.serial {
        (0..replicates).map(one).collect()
    } else {
        (0..replicates).into_par_iter().map(one).collect()
    };
    let excluded = records.iter().filter(|r| r.error.is_some()).count();
    if excluded * 20 > replicates {
        return Err(Error::TooManyExclusions {
            excluded,
            total: replicates,
        });
    }
    let statistics: Vec<f64> = records.iter().filter_map(|r| r.statistic).collect();
    let completed = statistics.len();
    let rejections = records.iter().filter(|r| r.rejected == Some(true)).count();
    let rate = if completed > 0 {
        rejections as f64 / completed as f64
    } else {
        0.0
    };
    Ok(SimulationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dgp: dgp.clone(),
        test: test_cfg.clone(),
        alpha,
        master_seed,
        replicates,
        excluded,
        rejection_rate: rate,
        rejection_se: binomial_se(rate, completed.max(1)),
        statistics,
        records,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

impl SimulationReport {
    /// CSV with one row per replicate.
    pub fn statistics_csv(&self) -> String {
        let mut out =
            String::from("replicate,statistic,alternate_statistic,p_value,rejected,delta_used\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.index,
                opt(r.statistic),
                opt(r.alternate_statistic),
                opt(r.p_value),
                r.rejected.map(|b| b.to_string()).unwrap_or_default(),
                opt(r.delta_used)
            ));
        }
        out
    }
}

/// Sorted statistics paired with `Phi^{-1}((i - 0.5) / m)`.
pub fn export_qq_data(statistics: &[f64]) -> Result<Vec<(f64, f64)>> {
    if statistics.is_empty() {
        return Err(Error::invalid("no statistics to plot"));
    }
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, s)| (normal_quantile((i as f64 + 0.5) / m), s))
        .collect())
}

/// Least-squares slope of sample quantiles on theoretical quantiles.
pub fn qq_slope(pairs: &[(f64, f64)]) -> f64 {
    let m = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn qq_csv(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from("theoretical,sample\n");
    for (t, s) in pairs {
        out.push_str(&format!("{t},{s}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub beta1: f64,
    pub rejection_rate: f64,
    pub rejection_se: f64,
    pub excluded: usize,
}

/// Rejection rate at each `beta1` on the grid; grid point `k` uses master
/// seed `mix_seed(master_seed, k)`.
pub fn run_power_curve(
    dgp: &DgpConfig,
    beta1_grid: &[f64],
    test_cfg: &TestConfig,
    replicates: usize,
    alpha: f64,
    master_seed: u64,
    opts: MonteCarloOptions,
) -> Result<Vec<PowerPoint>> {
    beta1_grid
        .iter()
        .enumerate()
        .map(|(k, &b1)| {
            let cfg = DgpConfig {
                beta1: b1,
                ..dgp.clone()
            };
            let rep = run_monte_carlo(
                &cfg,
                test_cfg,
                replicates,
                alpha,
                mix_seed(master_seed, k as u64),
                opts,
            )?;
            Ok(PowerPoint {
                beta1: b1,
                rejection_rate: rep.rejection_rate,
                rejection_se: rep.rejection_se,
                excluded: rep.excluded,
            })
        })
        .collect()
}

pub fn power_csv(points: &[PowerPoint]) -> String {
    let mut out = String::from("beta1,rejection_rate,rejection_se,excluded\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.beta1, p.rejection_rate, p.rejection_se, p.excluded
        ));
    }
    out
}

pub const GAUSSIAN_POWER_GRID: [f64; 8] = [0.02, 0.05, 0.075, 0.10, 0.15, 0.20, 0.25, 0.30];
pub const UNIFORM_POWER_GRID: [f64; 7] = [0.025, 0.05, 0.075, 0.10, 0.125, 0.15, 0.175];

/// A named simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub dgp: DgpConfig,
    pub beta1_grid: Option<Vec<f64>>,
    pub data_driven: bool,
}

impl Preset {
    /// Default test configuration for this preset.
    pub fn test_config(&self) -> TestConfig {
        let mut cfg = TestConfig::default();
        if self.data_driven {
            cfg.delta = crate::inference::DeltaRule::DataDriven;
        }
        cfg
    }
}

pub const PRESET_NAMES: [&str; 7] = [
    "table1-gaussian",
    "table2-uniform",
    "table4-data-driven",
    "power-gaussian-s10",
    "power-uniform-s10",
    "power-gaussian-s3",
    "figure4",
];

pub fn preset(name: &str) -> Result<Preset> {
    use Scenario::*;
    let base = |sc, s| DgpConfig::new(sc, 800, 100, s, 0.2, 0.0);
    let p = |name: &str, dgp, grid: Option<&[f64]>, dd| Preset {
        name: name.to_string(),
        dgp,
        beta1_grid: grid.map(|g| g.to_vec()),
        data_driven: dd,
    };
    Ok(match name {
        "table1-gaussian" => p("table1-gaussian", base(HeteroGaussian, 3), None, false),
        "table2-uniform" => p("table2-uniform", base(HeteroUniform, 3), None, false),
        "table4-data-driven" => p("table4-data-driven", base(HeteroGaussian, 3), None, true),
        "power-gaussian-s10" => p(
            "power-gaussian-s10",
            base(HeteroGaussian, 10),
            Some(&GAUSSIAN_POWER_GRID),
            false,
        ),
        "power-uniform-s10" => p(
            "power-uniform-s10",
            base(HeteroUniform, 10),
            Some(&UNIFORM_POWER_GRID),
            false,
        ),
        "power-gaussian-s3" => p(
            "power-gaussian-s3",
            base(HeteroGaussian, 3),
            Some(&GAUSSIAN_POWER_GRID),
            false,
        ),
        "figure4" => {
            let mut dgp = DgpConfig::new(HeteroGaussian, 800, 50, 10, 0.2, 0.0);
            dgp.design = BetaDesign::Equal;
            dgp.freeze_beta = true;
            p("figure4", dgp, None, true)
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown preset '{other}'; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests;
