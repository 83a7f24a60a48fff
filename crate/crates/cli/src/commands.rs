use std::path::Path;

use ndarray::Array1;
use serde::Serialize;
use serde_json::{json, Value};

use imcid::bandwidth::select_bandwidth;
use imcid::dataset::empirical_weights;
use imcid::estimation::{cross_validate, fit_penalized, lambda_rate};
use imcid::inference::{linear_combination_test, score_test, LambdaRule, DEFAULT_LAMBDA_C};
use imcid::simulation::{
    export_qq_data, power_csv, preset, qq_csv, run_monte_carlo, run_power_curve, MonteCarloOptions,
    REPORT_SCHEMA_VERSION,
};
use imcid::{Dataset, DeltaRule, DgpConfig, Kernel, PathConfig, RiskContext, Scenario, TestConfig};

use crate::{
    parse, BandwidthArgs, CliError, CliResult, EstimateArgs, ScenarioArg, SimulateArgs, TestArgs,
    Tuning,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Multipliers of the rate bandwidth and penalty searched by
/// `estimate --delta auto`.
const CV_DELTA_CONSTANTS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];
const CV_LAMBDA_CONSTANTS: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Pretty JSON with a top-level `schema_version` field.
fn versioned_json<T: Serialize>(body: &T) -> CliResult<String> {
    let body =
        serde_json::to_value(body).map_err(|e| usage(format!("cannot encode result: {e}")))?;
    let mut obj = serde_json::Map::new();
    obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
    match body {
        Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("result".into(), other);
        }
    }
    let mut s =
        serde_json::to_string_pretty(&Value::Object(obj)).expect("a JSON value always encodes");
    s.push('\n');
    Ok(s)
}

fn zero_based(coord: usize, d: usize) -> CliResult<usize> {
    if coord == 0 || coord > d {
        return Err(usage(format!("coordinate {coord} is outside 1..={d}")));
    }
    Ok(coord - 1)
}

impl Tuning {
    fn apply(&self, mut cfg: TestConfig) -> CliResult<TestConfig> {
        if let Some(c) = self.delta_c {
            cfg.delta = DeltaRule::Rate { c };
        }
        if let Some(d) = &self.delta {
            cfg.delta = parse::delta_rule(d)?;
        }
        if let Some(l) = self.kernel_order {
            cfg.kernel_order = l;
        }
        if let Some(v) = self.variance_mode {
            cfg.variance_mode = v.into();
        }
        if let Some(c) = self.lambda_c {
            cfg.lambda = LambdaRule::Rate { c };
        }
        if let Some(value) = self.lambda {
            cfg.lambda = LambdaRule::Fixed { value };
        }
        cfg.fit_bandwidth = self.fit_delta.or(cfg.fit_bandwidth);
        cfg.c_fit = self.c_fit.unwrap_or(cfg.c_fit);
        cfg.h = self.h.or(cfg.h);
        cfg.g = self.g.or(cfg.g);
        cfg.c_h = self.c_h.unwrap_or(cfg.c_h);
        cfg.c_g = self.c_g.unwrap_or(cfg.c_g);
        cfg.lambda_prime = self.lambda_prime.or(cfg.lambda_prime);
        if let Some(g) = &self.grid {
            let (lo, hi, k) = parse::grid(g)?;
            cfg.bandwidth.grid_min = lo;
            cfg.bandwidth.grid_max = hi;
            cfg.bandwidth.grid_points = k;
        }
        cfg.bandwidth.b = self.b.or(cfg.bandwidth.b);
        cfg.bandwidth.c_b = self.c_b.unwrap_or(cfg.bandwidth.c_b);
        if let Some(w) = self.weight_mode {
            cfg.weight_mode = w.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct CvSummary<'a> {
    delta_grid: &'a [f64],
    lambda_grid: &'a [f64],
    held_out_risk: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    n: usize,
    d: usize,
    beta_hat: Vec<f64>,
    /// One-based indices of the nonzero coefficients.
    support: Vec<usize>,
    delta: f64,
    lambda: f64,
    objective: f64,
    converged: bool,
    kkt_residual: f64,
    iterations: usize,
    kernel_order: usize,
    weights: imcid::WeightFn,
    cross_validation: Option<CvSummary<'a>>,
}

pub fn estimate(a: &EstimateArgs) -> CliResult<()> {
    let data = Dataset::load_csv(&a.data)?;
    let weights = empirical_weights(&data, a.weight_mode.into())?;
    let kernel = Kernel::gaussian(a.kernel_order)?;
    let path_cfg = PathConfig::default();
    let (n, d) = (data.n(), data.d());
    let auto = a.delta.trim().eq_ignore_ascii_case("auto");

    let (delta, lambda, cv) = if auto {
        if a.lambda.is_some() {
            return Err(usage(
                "--lambda is chosen by cross-validation under --delta auto",
            ));
        }
        let rate = (n as f64).powf(-1.0 / (2 * a.kernel_order + 1) as f64);
        let delta_grid: Vec<f64> = CV_DELTA_CONSTANTS.iter().map(|c| c * rate).collect();
        let lambda_grid: Vec<f64> = CV_LAMBDA_CONSTANTS
            .iter()
            .map(|&c| lambda_rate(n, d, rate, c))
            .collect();
        let cv = cross_validate(
            &data,
            weights,
            &kernel,
            &delta_grid,
            &lambda_grid,
            a.folds,
            a.seed,
            &path_cfg,
        )?;
        (cv.delta, cv.lambda, Some(cv))
    } else {
        let delta: f64 = a.delta.trim().parse().map_err(|_| {
            usage(format!(
                "--delta must be a number or `auto`, got {:?}",
                a.delta
            ))
        })?;
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(usage("--delta must be positive"));
        }
        let lambda = a
            .lambda
            .unwrap_or_else(|| lambda_rate(n, d, delta, DEFAULT_LAMBDA_C));
        (delta, lambda, None)
    };

    let ctx = RiskContext::new(&data, weights, &kernel, delta);
    let fit = fit_penalized(&ctx, lambda, &path_cfg, None)?;
    let out = EstimateOutput {
        n,
        d,
        beta_hat: fit.beta_hat.to_vec(),
        support: fit
            .beta_hat
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j + 1)
            .collect(),
        delta,
        lambda,
        objective: fit.objective,
        converged: fit.converged,
        kkt_residual: fit.kkt_residual,
        iterations: fit.iterations,
        kernel_order: a.kernel_order,
        weights,
        cross_validation: cv.as_ref().map(|cv| CvSummary {
            delta_grid: &cv.delta_grid,
            lambda_grid: &cv.lambda_grid,
            held_out_risk: cv.table.outer_iter().map(|r| r.to_vec()).collect(),
        }),
    };
    emit(a.out.as_deref(), &versioned_json(&out)?)
}

pub fn test(a: &TestArgs) -> CliResult<()> {
    let data = Dataset::load_csv(&a.data)?;
    let mut cfg = a.tuning.apply(TestConfig::default())?;
    cfg.seed = a.seed;
    let d = data.d();

    if a.all_coords {
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return Err(usage("--alpha must lie in (0, 1)"));
        }
        let mut table = String::from(
            "coord,statistic,p_value,p_bonferroni,delta_used,significant_bonferroni\n",
        );
        for j in 0..d {
            let r = score_test(&data, j, &cfg)?;
            let adjusted = (r.p_value * d as f64).min(1.0);
            table.push_str(&format!(
                "{},{},{},{},{},{}\n",
                j + 1,
                r.statistic,
                r.p_value,
                adjusted,
                r.delta_used,
                r.p_value < a.alpha / d as f64
            ));
        }
        return emit(a.out.as_deref(), &table);
    }

    let (result, coord) = match (a.coord, &a.contrast) {
        (Some(c), None) => (score_test(&data, zero_based(c, d)?, &cfg)?, Some(c)),
        (None, Some(path)) => {
            let c = parse::contrast_file(path)?;
            if c.len() != d {
                return Err(usage(format!(
                    "contrast has {} entries, data has d = {d}",
                    c.len()
                )));
            }
            (
                linear_combination_test(&data, Array1::from(c).view(), &cfg)?,
                None,
            )
        }
        _ => {
            return Err(usage(
                "give exactly one of --coord, --contrast or --all-coords",
            ))
        }
    };
    let mut body =
        serde_json::to_value(&result).map_err(|e| usage(format!("cannot encode result: {e}")))?;
    if let Value::Object(m) = &mut body {
        m.insert("coord".into(), json!(coord));
        m.insert("rejected".into(), json!(result.p_value < a.alpha));
    }
    emit(a.out.as_deref(), &versioned_json(&body)?)
}

pub fn bandwidth(a: &BandwidthArgs) -> CliResult<()> {
    let data = Dataset::load_csv(&a.data)?;
    let mut cfg = a.tuning.apply(TestConfig::default())?;
    cfg.delta = DeltaRule::DataDriven;
    cfg.seed = a.seed;
    let tested = zero_based(a.coord, data.d())?;
    let sel = select_bandwidth(&data, tested, &cfg)?;
    if let Some(p) = &a.emit_curves {
        write_text(p, &sel.curves_csv())?;
    }
    let mut body =
        serde_json::to_value(&sel).map_err(|e| usage(format!("cannot encode result: {e}")))?;
    if let Value::Object(m) = &mut body {
        m.insert("coord".into(), json!(a.coord));
    }
    emit(a.out.as_deref(), &versioned_json(&body)?)
}

fn scenario(s: ScenarioArg) -> Scenario {
    match s {
        ScenarioArg::Gaussian => Scenario::HeteroGaussian,
        ScenarioArg::Uniform => Scenario::HeteroUniform,
    }
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let (mut dgp, base_cfg, grid) = match &a.preset {
        Some(name) => {
            let p = preset(name).map_err(|e| usage(e.to_string()))?;
            let cfg = p.test_config();
            (p.dgp, cfg, p.beta1_grid)
        }
        None => {
            let sc = a
                .scenario
                .ok_or_else(|| usage("give --preset or --scenario"))?;
            (
                DgpConfig::new(scenario(sc), 800, 100, 3, 0.2, 0.0),
                TestConfig::default(),
                None,
            )
        }
    };
    if let Some(sc) = a.scenario {
        dgp.scenario = scenario(sc);
    }
    if let Some(cell) = &a.cell {
        parse::apply_cell(&mut dgp, cell)?;
    }
    if let Some(n) = a.n {
        dgp.n = n;
    }
    if let Some(b) = a.beta1 {
        dgp.beta1 = b;
    }
    dgp.freeze_beta |= a.freeze_beta;
    let cfg = a.tuning.apply(base_cfg)?;
    let opts = MonteCarloOptions {
        serial: a.serial,
        tested: zero_based(a.coord, dgp.d)?,
    };

    if a.power {
        let grid = grid.ok_or_else(|| usage("--power needs a preset with a beta1 grid"))?;
        let points = run_power_curve(&dgp, &grid, &cfg, a.reps, a.alpha, a.seed, opts)?;
        if let Some(p) = &a.emit_statistics {
            write_text(p, &power_csv(&points))?;
        }
        let body = json!({
            "dgp": dgp,
            "test": cfg,
            "alpha": a.alpha,
            "master_seed": a.seed,
            "replicates": a.reps,
            "points": points,
        });
        return emit(a.out.as_deref(), &versioned_json(&body)?);
    }

    let report = run_monte_carlo(&dgp, &cfg, a.reps, a.alpha, a.seed, opts)?;
    debug_assert_eq!(report.schema_version, REPORT_SCHEMA_VERSION);
    if let Some(p) = &a.emit_statistics {
        write_text(p, &report.statistics_csv())?;
    }
    if let Some(p) = &a.emit_qq {
        write_text(p, &qq_csv(&export_qq_data(&report.statistics)?))?;
    }
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| usage(format!("cannot encode report: {e}")))?;
    text.push('\n');
    emit(a.out.as_deref(), &text)
}
