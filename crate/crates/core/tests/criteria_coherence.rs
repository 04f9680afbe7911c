//! Criterion verdicts on one family must cohere: a sufficient bound
//! established by one criterion may never cross a refutation produced by
//! another at a lower level.

use dal::criteria::{
    thm1a_sum, thm1b_sum, thm2b_sum, thm3_lower_sum, thm3_upper_sum, thm4_sum, EpsSchedule,
    ImpliedBound, RefutedClaim, SumSide,
};
use dal::dist::CdfModel;
use dal::grammar::SeqExpr;
use dal::law::{CoefficientLaw, CoefficientMode, Dependence, ExponentLaw, ExponentRule};
use dal::series::{ClassifyPolicy, Rationale, SeriesClass};

fn canonical_laws() -> (ExponentLaw, CoefficientLaw) {
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
    (exponent, coefficient)
}

fn uniform_modulus_laws() -> (ExponentLaw, CoefficientLaw) {
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
    (exponent, coefficient)
}

fn geq_level(bound: &ImpliedBound) -> Option<f64> {
    match bound {
        ImpliedBound::SigmaGeq { level } => Some(level.get()),
        _ => None,
    }
}

fn refuted_level(bound: &ImpliedBound) -> Option<f64> {
    match bound {
        ImpliedBound::NecessaryFails {
            refuted: RefutedClaim::SigmaAbove { level },
        } => Some(level.get()),
        _ => None,
    }
}

#[test]
fn canonical_refutations_stay_above_the_established_level() {
    let (exponent, coefficient) = canonical_laws();
    let policy = ClassifyPolicy::default();
    let k_max = 4_096;

    let establish = thm4_sum(
        &exponent,
        &coefficient,
        0.5,
        EpsSchedule::InvLog,
        SumSide::Upper,
        k_max,
        &policy,
    )
    .unwrap();
    let established = geq_level(&establish.implied_bound).expect("thm4i establishes sigma >= 0.5");
    assert_eq!(established, 0.5);

    for rho in [0.75, 1.0, 1.25, 1.5] {
        let eps = (rho - 0.5) / 2.0;
        let refute = thm3_upper_sum(&exponent, &coefficient, rho, eps, k_max, &policy).unwrap();
        assert_eq!(refute.verdict.class, SeriesClass::Divergent, "rho {rho}");
        let level = refuted_level(&refute.implied_bound).expect("divergence refutes a level");
        assert!((level - (rho + 0.5) / 2.0).abs() < 1e-12);
        assert!(
            level > established,
            "refuted level {level} crosses established {established}"
        );
    }
}

#[test]
fn negative_levels_are_established_and_never_refuted_on_the_canonical_family() {
    let (exponent, coefficient) = canonical_laws();
    let policy = ClassifyPolicy::default();
    let k_max = 4_096;

    let establish = thm4_sum(
        &exponent,
        &coefficient,
        -0.25,
        EpsSchedule::InvLog,
        SumSide::Lower,
        k_max,
        &policy,
    )
    .unwrap();
    assert_eq!(geq_level(&establish.implied_bound), Some(-0.25));

    let refute = thm3_lower_sum(&exponent, &coefficient, -0.5, 0.25, k_max, &policy).unwrap();
    assert_eq!(refute.verdict.class, SeriesClass::Convergent);
    assert_eq!(refute.implied_bound, ImpliedBound::NecessaryHolds);
}

#[test]
fn random_modulus_upper_bound_and_refutation_do_not_cross() {
    let (exponent, coefficient) = uniform_modulus_laws();
    let policy = ClassifyPolicy::default();
    let k_max = 10_000;

    let upper = thm1b_sum(&exponent, &coefficient, 0.9, k_max, &policy).unwrap();
    let upper_level = match upper.implied_bound {
        ImpliedBound::SigmaLeq { level } => level.get(),
        other => panic!("thm1b should bound from above, got {other:?}"),
    };
    assert!((upper_level - (-0.9f64.ln())).abs() < 1e-12);

    let refute = thm1a_sum(&exponent, &coefficient, 0.5, 0.1, k_max, &policy).unwrap();
    let refuted = refuted_level(&refute.implied_bound).expect("thm1a diverges here");
    assert!(
        refuted >= upper_level,
        "refuted level {refuted} below the established upper bound {upper_level}"
    );
}

#[test]
fn tiny_margin_geometric_sum_stabilizes_rather_than_diverges() {
    let exponent = ExponentLaw::new(
        ExponentRule::Deterministic {
            seq: SeqExpr::parse("k").unwrap(),
        },
        Dependence::Independent,
    )
    .unwrap();
    let coefficient = CoefficientLaw::new(CoefficientMode::RandomModulus {
        base: CdfModel::Pareto {
            scale: 1.0,
            shape: 1.0,
        },
        scale: None,
    })
    .unwrap();
    let policy = ClassifyPolicy::default();

    let report = thm2b_sum(&exponent, &coefficient, 1.0001, 300_000, &policy).unwrap();
    assert_eq!(report.verdict.class, SeriesClass::Convergent);
    assert_eq!(report.verdict.rationale, Rationale::PartialSumsStabilized);
    assert_eq!(
        report.implied_bound,
        ImpliedBound::NecessaryFails {
            refuted: RefutedClaim::SigmaEqNegInf
        }
    );
}
