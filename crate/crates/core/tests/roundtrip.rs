//! Serialization round trips: config echo, report schema, and CSV
//! projections at 9 significant digits.

use dal::criteria::CriterionId;
use dal::dist::CdfModel;
use dal::experiment::{
    run_experiment, trials_csv, CriterionSpec, ExperimentConfig, ExperimentReport,
};
use dal::grammar::SeqExpr;
use dal::law::{CoefficientLaw, CoefficientMode, Dependence, ExponentLaw, ExponentRule};

fn full_config() -> ExperimentConfig {
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
    config.k_max = 1_024;
    config.trials = 3;
    config.master_seed = 42;
    config.rho_grid = vec![0.25, 0.5, 0.75];
    config.criteria = vec![
        CriterionSpec::new(CriterionId::Thm4i).with_rho(0.5),
        CriterionSpec::new(CriterionId::Thm3i).with_rho(1.0).with_eps(0.25),
        CriterionSpec::new(CriterionId::Remark3).with_rho(0.0),
    ];
    config
}

#[test]
fn config_text_echo_is_a_fixed_point() {
    let config = full_config();
    let first = serde_json::to_string_pretty(&config.to_value()).unwrap();
    let reparsed =
        ExperimentConfig::from_value(&serde_json::from_str(&first).unwrap()).unwrap();
    assert_eq!(reparsed, config);
    let second = serde_json::to_string_pretty(&reparsed.to_value()).unwrap();
    assert_eq!(second, first);
}

#[test]
fn report_serialize_parse_serialize_is_byte_identical() {
    let report = run_experiment(&full_config()).unwrap();
    let first = serde_json::to_string_pretty(&report).unwrap();
    let parsed: ExperimentReport = serde_json::from_str(&first).unwrap();
    assert_eq!(parsed, report);
    let second = serde_json::to_string_pretty(&parsed).unwrap();
    assert_eq!(second, first);
}

#[test]
fn trials_csv_numbers_parse_back_to_nine_significant_digits() {
    let report = run_experiment(&full_config()).unwrap();
    let text = trials_csv(&report.trials).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,sigma_abs,sigma_conv,alpha0,tau,h,trend_alpha0,errors"
    );
    for (line, record) in lines.zip(&report.trials) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0].parse::<usize>().unwrap(), record.trial);
        let expected = [
            record.sigma_abs.unwrap().get(),
            record.sigma_conv.unwrap().get(),
            record.alpha0.unwrap().get(),
            record.tau.unwrap().get(),
            record.h.unwrap().get(),
        ];
        for (cell, value) in cells[1..6].iter().zip(expected) {
            let parsed: f64 = cell.parse().unwrap();
            let scale = value.abs().max(f64::MIN_POSITIVE);
            assert!(
                ((parsed - value) / scale).abs() < 1e-8,
                "{cell} drifted from {value}"
            );
        }
    }
}

#[test]
fn unknown_config_fields_never_survive_a_round_trip() {
    let mut value = full_config().to_value();
    value
        .as_object_mut()
        .unwrap()
        .insert("stray".to_string(), serde_json::Value::from(1));
    let err = ExperimentConfig::from_value(&value).unwrap_err();
    assert!(err.to_string().contains("stray"), "{err}");
}
