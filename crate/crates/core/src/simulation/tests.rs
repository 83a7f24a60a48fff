use super::*;
use crate::rng::{rng_from_seed, StdNormal};
use crate::stats::{mean, pearson};
use proptest::prelude::*;

fn small_dgp() -> DgpConfig {
    DgpConfig {
        seed: 5,
        beta_draw_seed: 6,
        ..DgpConfig::new(Scenario::HeteroGaussian, 160, 8, 3, 0.2, 0.0)
    }
}

#[test]
fn independent_columns_when_rho_is_zero() {
    let cfg = DgpConfig {
        seed: 1,
        ..DgpConfig::new(Scenario::HeteroGaussian, 10_000, 5, 2, 0.0, 0.0)
    };
    let (data, _) = generate_dgp(&cfg).unwrap();
    let bound = 4.0 / 100.0;
    for a in 0..5 {
        for b in (a + 1)..5 {
            let ca = data.z().column(a).to_vec();
            let cb = data.z().column(b).to_vec();
            assert!(pearson(&ca, &cb).abs() < bound);
        }
    }
}

#[test]
fn ar_correlation_matches_rho_powers() {
    let cfg = DgpConfig {
        seed: 2,
        ..DgpConfig::new(Scenario::HeteroUniform, 20_000, 4, 2, 0.5, 0.0)
    };
    let (data, _) = generate_dgp(&cfg).unwrap();
    let c0 = data.z().column(0).to_vec();
    for (lag, expect) in [(1, 0.5), (2, 0.25), (3, 0.125)] {
        let c = data.z().column(lag).to_vec();
        assert!((pearson(&c0, &c) - expect).abs() < 4.0 / (20_000f64).sqrt());
    }
}

#[test]
fn labels_have_median_zero_noise_at_the_boundary() {
    for scenario in [Scenario::HeteroGaussian, Scenario::HeteroUniform] {
        let cfg = DgpConfig {
            seed: 3,
            ..DgpConfig::new(scenario, 200_000, 4, 3, 0.2, 0.3)
        };
        let (data, beta) = generate_dgp(&cfg).unwrap();
        let m = data.z().dot(&beta);
        let near: Vec<f64> = (0..data.n())
            .filter(|&i| (data.x()[i] - m[i]).abs() < 0.01)
            .map(|i| if data.y()[i] > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let frac = mean(&near);
        assert!(
            (frac - 0.5).abs() < 4.0 / (near.len() as f64).sqrt(),
            "{scenario:?}: {frac}"
        );
    }
}

#[test]
fn beta_layout_and_normalization() {
    let cfg = DgpConfig {
        beta1: 0.3,
        ..DgpConfig::new(Scenario::HeteroGaussian, 50, 12, 10, 0.2, 0.3)
    };
    let mut rng = rng_from_seed(4);
    let beta = draw_beta(&cfg, &mut rng);
    assert!((beta.dot(&beta) - 1.0).abs() < 1e-12);
    assert!(beta.iter().skip(10).all(|&b| b == 0.0));
    let raw_norm = 0.3 / beta[0];
    for j in 1..10 {
        let raw = beta[j] * raw_norm;
        assert!((1.0..2.0).contains(&raw), "{raw}");
    }
    let equal = DgpConfig {
        design: BetaDesign::Equal,
        ..cfg
    };
    let b = draw_beta(&equal, &mut rng);
    for j in 0..10 {
        assert!((b[j] - 1.0 / 10f64.sqrt()).abs() < 1e-15);
    }
}

#[test]
fn config_validation() {
    let ok = small_dgp();
    assert!(ok.validate().is_ok());
    assert!(DgpConfig {
        rho: 1.0,
        ..ok.clone()
    }
    .validate()
    .is_err());
    assert!(DgpConfig { s: 1, ..ok.clone() }.validate().is_err());
    assert!(DgpConfig { s: 9, ..ok.clone() }.validate().is_err());
    assert!(DgpConfig { n: 3, ..ok.clone() }.validate().is_err());
}

#[test]
fn replicate_seeds_follow_the_stream_layout() {
    let base = small_dgp();
    let (c, split) = replicate_config(&base, 77, 4);
    let rep = mix_seed(77, 4);
    assert_eq!(c.seed, mix_seed(rep, 0));
    assert_eq!(c.beta_draw_seed, mix_seed(rep, 1));
    assert_eq!(split, mix_seed(rep, 2));
    let frozen = DgpConfig {
        freeze_beta: true,
        ..base.clone()
    };
    let (f, _) = replicate_config(&frozen, 77, 4);
    assert_eq!(f.beta_draw_seed, base.beta_draw_seed);
}

#[test]
fn single_replicate_report() {
    let rep = run_monte_carlo(
        &small_dgp(),
        &TestConfig::default(),
        1,
        0.05,
        9,
        MonteCarloOptions::default(),
    )
    .unwrap();
    assert_eq!(rep.statistics.len(), 1);
    assert_eq!(rep.records.len(), 1);
    assert_eq!(rep.schema_version, REPORT_SCHEMA_VERSION);
    assert!((0.0..=1.0).contains(&rep.rejection_rate));
}

#[test]
fn serial_and_parallel_reports_agree() {
    let dgp = small_dgp();
    let cfg = TestConfig::default();
    let a = run_monte_carlo(
        &dgp,
        &cfg,
        6,
        0.05,
        21,
        MonteCarloOptions {
            serial: true,
            tested: 0,
        },
    )
    .unwrap();
    let b = run_monte_carlo(
        &dgp,
        &cfg,
        6,
        0.05,
        21,
        MonteCarloOptions {
            serial: false,
            tested: 0,
        },
    )
    .unwrap();
    let c = run_monte_carlo(
        &dgp,
        &cfg,
        6,
        0.05,
        21,
        MonteCarloOptions {
            serial: true,
            tested: 0,
        },
    )
    .unwrap();
    assert_eq!(a.statistics, b.statistics);
    assert_eq!(a.statistics, c.statistics);
    assert_eq!(a.rejection_rate, b.rejection_rate);
    let csv = a.statistics_csv();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn bad_run_arguments() {
    let dgp = small_dgp();
    let cfg = TestConfig::default();
    let opts = MonteCarloOptions::default();
    assert!(run_monte_carlo(&dgp, &cfg, 0, 0.05, 1, opts).is_err());
    assert!(run_monte_carlo(&dgp, &cfg, 2, 1.0, 1, opts).is_err());
    assert!(run_monte_carlo(
        &dgp,
        &cfg,
        2,
        0.05,
        1,
        MonteCarloOptions {
            serial: true,
            tested: 8
        }
    )
    .is_err());
}

#[test]
fn qq_pairs_small_cases() {
    let one = export_qq_data(&[1.7]).unwrap();
    assert_eq!(one.len(), 1);
    assert!(one[0].0.abs() < 1e-12);
    assert_eq!(one[0].1, 1.7);
    let three = export_qq_data(&[2.0, -1.0, 0.5]).unwrap();
    let expect = [-0.967_421_566_101_701, 0.0, 0.967_421_566_101_701];
    for (p, e) in three.iter().zip(expect) {
        assert!((p.0 - e).abs() < 1e-9);
    }
    assert_eq!(
        three.iter().map(|p| p.1).collect::<Vec<_>>(),
        vec![-1.0, 0.5, 2.0]
    );
    assert!(export_qq_data(&[]).is_err());
    assert!(qq_csv(&three).starts_with("theoretical,sample\n"));
}

#[test]
fn qq_slope_of_normal_draws_is_near_one() {
    let mut rng = rng_from_seed(8);
    let mut g = StdNormal::new();
    let draws: Vec<f64> = (0..1000).map(|_| g.sample(&mut rng)).collect();
    let slope = qq_slope(&export_qq_data(&draws).unwrap());
    assert!((0.9..=1.1).contains(&slope), "{slope}");
}

#[test]
fn presets_resolve() {
    for name in PRESET_NAMES {
        let p = preset(name).unwrap();
        assert_eq!(p.name, name);
        assert!(p.dgp.validate().is_ok());
    }
    assert!(preset("nope").is_err());
    let f = preset("figure4").unwrap();
    assert!(f.dgp.freeze_beta);
    assert_eq!(f.dgp.design, BetaDesign::Equal);
    assert_eq!(
        preset("power-gaussian-s10").unwrap().beta1_grid.unwrap(),
        GAUSSIAN_POWER_GRID.to_vec()
    );
}

#[test]
fn power_csv_layout() {
    let pts = [
        PowerPoint {
            beta1: 0.1,
            rejection_rate: 0.2,
            rejection_se: 0.04,
            excluded: 0,
        },
        PowerPoint {
            beta1: 0.3,
            rejection_rate: 0.5,
            rejection_se: 0.05,
            excluded: 1,
        },
    ];
    let csv = power_csv(&pts);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("0.3,0.5"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn beta_is_unit_norm(beta1 in 0.0f64..1.0, s in 2usize..12, seed in any::<u64>()) {
        let cfg = DgpConfig { beta1, ..DgpConfig::new(Scenario::HeteroGaussian, 10, 12, s, 0.3, beta1) };
        let beta = draw_beta(&cfg, &mut rng_from_seed(seed));
        prop_assert!((beta.dot(&beta) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qq_theoretical_quantiles_are_antisymmetric(values in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
        let pairs = export_qq_data(&values).unwrap();
        let m = pairs.len();
        for i in 0..m {
            prop_assert!((pairs[i].0 + pairs[m - 1 - i].0).abs() < 1e-9);
        }
    }
}
