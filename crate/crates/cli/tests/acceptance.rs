//! Acceptance checks, one test per criterion, each with its stated
//! tolerance and runtime budget.

use std::process::Command;
use std::time::{Duration, Instant};

use dal::criteria::{cor3_integral, thm1b_sum, CriterionId, ImpliedBound, RefutedClaim};
use dal::dist::CdfModel;
use dal::experiment::{
    aggregate, run_experiment, run_trial, CriterionSpec, ExperimentConfig, ReconStatus,
};
use dal::grammar::SeqExpr;
use dal::law::{sample_trial, CoefficientLaw, CoefficientMode, Dependence, ExponentLaw, ExponentRule};
use dal::series::{ClassifyPolicy, SeriesClass};
use dal::tail::{alpha0, h_coeff, tail_inf_estimate, tail_sup_estimate, tau, WindowSchedule};
use dal::XReal;

fn timed<T>(limit: Duration, run: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let value = run();
    let elapsed = start.elapsed();
    assert!(elapsed < limit, "ran {elapsed:?}, over the {limit:?} budget");
    value
}

fn deterministic_config(neg_log: &str, seq: &str, k_max: usize) -> ExperimentConfig {
    let exponent = ExponentLaw::new(
        ExponentRule::Deterministic {
            seq: SeqExpr::parse(seq).unwrap(),
        },
        Dependence::Independent,
    )
    .unwrap();
    let coefficient = CoefficientLaw::new(CoefficientMode::Deterministic {
        neg_log: SeqExpr::parse(neg_log).unwrap(),
    })
    .unwrap();
    let mut config = ExperimentConfig::new(exponent, coefficient);
    config.k_max = k_max;
    config
}

fn canonical_config(k_max: usize, trials: usize) -> ExperimentConfig {
    let exponent = ExponentLaw::new(
        ExponentRule::ScaledIid {
            scale: SeqExpr::parse("k").unwrap(),
            base: CdfModel::Uniform { a: 0.0, b: 2.0 },
        },
        Dependence::Pairwise,
    )
    .unwrap();
    let coefficient = CoefficientLaw::new(CoefficientMode::Deterministic {
        neg_log: SeqExpr::parse("k").unwrap(),
    })
    .unwrap();
    let mut config = ExperimentConfig::new(exponent, coefficient);
    config.k_max = k_max;
    config.trials = trials;
    config
}

#[test]
fn acceptance_1_deterministic_chain() {
    let config = deterministic_config("k", "k", 10_000);
    let record = timed(Duration::from_secs(1), || run_trial(&config, 0));
    assert!(record.errors.is_empty(), "{:?}", record.errors);
    for (name, value) in [
        ("sigma_abs", record.sigma_abs.unwrap()),
        ("sigma_conv", record.sigma_conv.unwrap()),
        ("alpha0", record.alpha0.unwrap()),
    ] {
        assert!(
            (0.98..=1.02).contains(&value.get()),
            "{name} = {value} outside [0.98, 1.02]"
        );
    }
    let tau_hat = record.tau.unwrap().get();
    assert!((0.0..=0.01).contains(&tau_hat), "tau = {tau_hat}");
}

#[test]
fn acceptance_2_tight_chain_instance() {
    let config = deterministic_config("2*ln(k+2)", "ln(k+2)", 100_000);
    let record = timed(Duration::from_secs(5), || run_trial(&config, 0));
    assert!(record.errors.is_empty(), "{:?}", record.errors);
    let sigma_a = record.sigma_abs.unwrap().get();
    let a0 = record.alpha0.unwrap().get();
    let tau_hat = record.tau.unwrap().get();
    let h_hat = record.h.unwrap().get();
    assert!((0.95..=1.05).contains(&sigma_a), "sigma_abs = {sigma_a}");
    assert!((1.95..=2.05).contains(&a0), "alpha0 = {a0}");
    assert!((0.98..=1.02).contains(&tau_hat), "tau = {tau_hat}");
    assert!((0.48..=0.52).contains(&h_hat), "h = {h_hat}");
    assert!(
        (1.0 - h_hat) * a0 <= sigma_a + 0.05,
        "(1-h) alpha0 = {} above sigma_abs {sigma_a} + 0.05",
        (1.0 - h_hat) * a0
    );
}

#[test]
fn acceptance_3_monte_carlo_canonical_family() {
    let config = canonical_config(100_000, 50);
    let report = timed(Duration::from_secs(60), || run_experiment(&config).unwrap());
    let sigmas: Vec<f64> = report
        .trials
        .iter()
        .map(|t| t.sigma_abs.unwrap().get())
        .collect();
    assert_eq!(sigmas.len(), 50);
    let median = report.aggregates.sigma_abs.as_ref().unwrap().median.get();
    assert!((0.50..=0.56).contains(&median), "median = {median}");
    let inside = sigmas
        .iter()
        .filter(|s| (0.48..=0.60).contains(*s))
        .count();
    assert!(
        inside as f64 >= 0.9 * sigmas.len() as f64,
        "only {inside}/50 trials inside [0.48, 0.60]"
    );
}

#[test]
fn acceptance_4_criterion_bracketing() {
    let mut config = canonical_config(20_000, 8);
    config.criteria = vec![
        CriterionSpec::new(CriterionId::Thm4i).with_rho(0.5),
        CriterionSpec::new(CriterionId::Thm3i).with_rho(1.0).with_eps(0.25),
    ];
    let report = timed(Duration::from_secs(2), || run_experiment(&config).unwrap());

    let thm4 = &report.criteria[0];
    assert_eq!(thm4.verdict.class, SeriesClass::Convergent);
    assert_eq!(
        thm4.implied_bound,
        ImpliedBound::SigmaGeq {
            level: XReal::finite(0.5)
        }
    );
    assert_eq!(report.reconciliation[0].status, ReconStatus::Consistent);

    let thm3 = &report.criteria[1];
    assert_eq!(thm3.verdict.class, SeriesClass::Divergent);
    assert_eq!(
        thm3.implied_bound,
        ImpliedBound::NecessaryFails {
            refuted: RefutedClaim::SigmaAbove {
                level: XReal::finite(0.75)
            }
        }
    );
    let mean_term = thm3.partial_sum_at_k / config.k_max as f64;
    assert!(
        (mean_term - 1.0 / 3.0).abs() < 1e-3,
        "mean term {mean_term} away from 1/3"
    );
    assert_eq!(report.reconciliation[1].status, ReconStatus::Consistent);
}

#[test]
fn acceptance_5_cor3_route_agreement() {
    let coefficient = CoefficientLaw::new(CoefficientMode::Deterministic {
        neg_log: SeqExpr::parse("0.1*(k+1)^1").unwrap(),
    })
    .unwrap();
    let f_b = CdfModel::Uniform { a: 0.0, b: 1.0 };
    let policy = ClassifyPolicy::default();
    timed(Duration::from_secs(1), || {
        let at_one = cor3_integral(&f_b, &coefficient, 1.0, 1_024, &policy).unwrap();
        assert!((at_one.sum_route - 4.5).abs() < 1e-6, "{}", at_one.sum_route);
        assert!(
            (at_one.quadrature_route - 4.5).abs() < 1e-6,
            "{}",
            at_one.quadrature_route
        );
        let at_two = cor3_integral(&f_b, &coefficient, 2.0, 1_024, &policy).unwrap();
        assert!((at_two.sum_route - 9.5).abs() < 1e-6, "{}", at_two.sum_route);
        assert!(
            (at_two.quadrature_route - 9.5).abs() < 1e-6,
            "{}",
            at_two.quadrature_route
        );
    });
}

#[test]
fn acceptance_6_property_suite() {
    let families = [
        CdfModel::Exponential { rate: 1.5 },
        CdfModel::Uniform { a: -1.0, b: 3.0 },
        CdfModel::Pareto {
            scale: 1.0,
            shape: 2.0,
        },
        CdfModel::LogNormal {
            mu: 0.0,
            sigma: 1.0,
        },
        CdfModel::Degenerate { point: 2.0 },
        CdfModel::ScaledOf {
            base: Box::new(CdfModel::Exponential { rate: 0.5 }),
            factor: 3.0,
        },
        CdfModel::ShiftedOf {
            base: Box::new(CdfModel::Uniform { a: 0.0, b: 1.0 }),
            offset: -2.0,
        },
    ];
    for model in &families {
        let lo = model.quantile(0.001) - 1.0;
        let hi = model.quantile(0.999) + 1.0;
        let mut last = 0.0f64;
        for i in 0..1000 {
            let x = lo + (hi - lo) * i as f64 / 999.0;
            let f = model.cdf(x);
            assert!((0.0..=1.0).contains(&f), "{model:?}: F({x}) = {f}");
            assert!(f >= last, "{model:?}: F decreased at {x}");
            last = f;
        }
        if matches!(model, CdfModel::Degenerate { .. }) {
            continue;
        }
        let coarse = matches!(model, CdfModel::LogNormal { .. });
        let (u_lo, u_hi) = if coarse { (0.001, 0.999) } else { (1e-6, 1.0 - 1e-6) };
        for i in 0..500 {
            let u = u_lo + (u_hi - u_lo) * i as f64 / 499.0;
            let x = model.quantile(u);
            assert!(
                (model.cdf(x) - u).abs() <= 1e-9,
                "{model:?}: F(Q({u})) = {}",
                model.cdf(x)
            );
        }
    }

    let windows = WindowSchedule::default();
    let canonical = canonical_config(4_096, 1);
    for trial in 0..4 {
        let draw = sample_trial(&canonical.exponent, &canonical.coefficient, 0, trial, 4_096);
        let inf = alpha0(&canonical.coefficient, &draw, &windows).unwrap();
        for pair in inf.window_trace.windows(2) {
            assert!(pair[1].value >= pair[0].value, "inf trace decreased");
        }
        for sup in [
            tau(&draw, &windows).unwrap(),
            h_coeff(&canonical.coefficient, &draw, &windows).unwrap(),
        ] {
            for pair in sup.window_trace.windows(2) {
                assert!(pair[1].value <= pair[0].value, "sup trace increased");
            }
        }
        let ratios: Vec<Option<f64>> = (0..draw.k_max)
            .map(|k| (draw.lambdas[k] > 0.0).then(|| k as f64 / draw.lambdas[k]))
            .collect();
        let inf = tail_inf_estimate(&ratios, &windows).unwrap();
        let sup = tail_sup_estimate(&ratios, &windows).unwrap();
        assert!(inf.value <= sup.value);
    }

    let det = deterministic_config("k", "k", 2_048);
    let draw = sample_trial(&det.exponent, &det.coefficient, 0, 0, 2_048);
    let mut doubled = draw.clone();
    for lambda in &mut doubled.lambdas {
        *lambda *= 2.0;
    }
    let a_base = alpha0(&det.coefficient, &draw, &windows).unwrap().value;
    let a_doubled = alpha0(&det.coefficient, &doubled, &windows).unwrap().value;
    assert_eq!(a_doubled, XReal::finite(a_base.get() / 2.0));
    let t_base = tau(&draw, &windows).unwrap().value;
    let t_doubled = tau(&doubled, &windows).unwrap().value;
    assert_eq!(t_doubled, XReal::finite(t_base.get() / 2.0));

    let mut seeded = canonical_config(1_024, 4);
    seeded.criteria = vec![CriterionSpec::new(CriterionId::Thm4i).with_rho(0.5)];
    let first = serde_json::to_string_pretty(&run_experiment(&seeded).unwrap()).unwrap();
    let second = serde_json::to_string_pretty(&run_experiment(&seeded).unwrap()).unwrap();
    assert_eq!(first, second, "two full runs differ");

    let merged = run_experiment(&canonical_config(1_024, 6)).unwrap();
    let mut solo: Vec<_> = [5, 2, 0, 4, 1, 3]
        .into_iter()
        .map(|index| run_trial(&canonical_config(1_024, 6), index))
        .collect();
    solo.sort_by_key(|record| record.trial);
    assert_eq!(merged.trials, solo);
    assert_eq!(merged.aggregates, aggregate(&solo));
}

fn cor1_config_json(neg_log: &str) -> String {
    format!(
        r#"{{
  "exponent": {{"rule": "constant", "base": {{"family": "exponential", "rate": 1.0}}, "dependence": "independent"}},
  "coefficient": {{"mode": "deterministic", "neg_log": "{neg_log}"}},
  "K": 10000,
  "trials": 4,
  "master_seed": 3,
  "criteria": [{{"id": "cor1"}}]
}}
"#
    )
}

#[test]
fn acceptance_7_cor1_discrepancy_surfaces_as_tension() {
    let dir = tempfile::tempdir().unwrap();
    for (name, neg_log, expect_pos_inf) in [
        ("fast", "k", true),
        ("slow", "ln(k+e)^0.5", false),
    ] {
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, cor1_config_json(neg_log)).unwrap();
        let output = Command::new(env!("CARGO_BIN_EXE_dal"))
            .args(["experiment", "--config"])
            .arg(&path)
            .output()
            .unwrap();
        let stdout = String::from_utf8(output.stdout).unwrap();
        let stderr = String::from_utf8(output.stderr).unwrap();
        assert!(stderr.is_empty(), "{name}: unexpected stderr: {stderr}");
        assert_eq!(
            output.status.code(),
            Some(3),
            "{name}: expected tension exit"
        );
        assert!(stdout.contains("tension"), "{name}: no tension row\n{stdout}");
        assert!(
            stdout.contains("sigma=0.00000000e0"),
            "{name}: cor1 claim missing\n{stdout}"
        );
        let sentinel = if expect_pos_inf { "inf" } else { "-inf" };
        assert!(
            stdout.contains(sentinel),
            "{name}: estimates should hit {sentinel}\n{stdout}"
        );
    }
}

#[test]
fn acceptance_8_random_modulus_thm1b() {
    let exponent = ExponentLaw::new(
        ExponentRule::Deterministic {
            seq: SeqExpr::parse("k").unwrap(),
        },
        Dependence::Independent,
    )
    .unwrap();
    let coefficient = CoefficientLaw::new(CoefficientMode::RandomModulus {
        base: CdfModel::Uniform { a: 0.0, b: 1.0 },
        scale: None,
    })
    .unwrap();
    let policy = ClassifyPolicy::default();
    let k_max = 10_000;
    let report = timed(Duration::from_secs(1), || {
        thm1b_sum(&exponent, &coefficient, 0.9, k_max, &policy).unwrap()
    });
    assert_eq!(report.verdict.class, SeriesClass::Divergent);
    let closed_form = k_max as f64 - (1.0 - 0.9f64.powi(k_max as i32)) / 0.1;
    assert!(
        (report.partial_sum_at_k - closed_form).abs() < 1e-6,
        "partial sum {} away from {closed_form}",
        report.partial_sum_at_k
    );
    assert_eq!(
        report.implied_bound,
        ImpliedBound::SigmaLeq {
            level: XReal::finite(-(0.9f64.ln()))
        }
    );
}
