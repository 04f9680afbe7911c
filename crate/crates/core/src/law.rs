use crate::dist::CdfModel;
use crate::error::{Error, Result};
use crate::grammar::SeqExpr;
use crate::rng::{keyed_unit, pairwise_unit, STREAM_COEFF, STREAM_EXPONENT};
use serde::de;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

/// Joint dependence structure of the exponent family across indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dependence {
    /// Each index gets its own keyed variate.
    Independent,
    /// All indices share two base draws through the torus construction,
    /// giving exact pairwise (but not mutual) independence. Only valid
    /// for Uniform base laws, where the wrapped marginal stays uniform.
    Pairwise,
}

/// How the exponent at index k is distributed.
#[derive(Debug, Clone, PartialEq)]
pub enum ExponentRule {
    /// Every index draws from the same law.
    Constant { base: CdfModel },
    /// No randomness: lambda_k = seq(k).
    Deterministic { seq: SeqExpr },
    /// lambda_k = scale(k) * X_k with X_k drawn from the base law.
    ScaledIid { scale: SeqExpr, base: CdfModel },
}

/// The law of the exponent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentLaw {
    pub rule: ExponentRule,
    pub dependence: Dependence,
}

impl ExponentLaw {
    pub fn new(rule: ExponentRule, dependence: Dependence) -> Result<ExponentLaw> {
        let law = ExponentLaw { rule, dependence };
        law.validate()?;
        Ok(law)
    }

    /// Checks support nonnegativity and the pairwise-base restriction.
    pub fn validate(&self) -> Result<()> {
        match &self.rule {
            ExponentRule::Constant { base } | ExponentRule::ScaledIid { base, .. } => {
                base.validate()?;
                if base.support_min() < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "exponent base law must have nonnegative support, minimum is {}",
                        base.support_min()
                    )));
                }
                if self.dependence == Dependence::Pairwise
                    && !matches!(base, CdfModel::Uniform { .. })
                {
                    return Err(Error::InvalidParameter(
                        "pairwise dependence requires a uniform base law".into(),
                    ));
                }
            }
            ExponentRule::Deterministic { .. } => {
                if self.dependence == Dependence::Pairwise {
                    return Err(Error::InvalidParameter(
                        "pairwise dependence needs a random exponent rule".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The marginal law of lambda_k.
    pub fn model_at(&self, k: usize) -> CdfModel {
        match &self.rule {
            ExponentRule::Constant { base } => base.clone(),
            ExponentRule::Deterministic { seq } => CdfModel::Degenerate { point: seq.eval(k) },
            ExponentRule::ScaledIid { scale, base } => {
                let s = scale.eval(k);
                if s == 0.0 {
                    CdfModel::Degenerate { point: 0.0 }
                } else {
                    CdfModel::ScaledOf { base: Box::new(base.clone()), factor: s }
                }
            }
        }
    }

    /// `F_k(x)`, the marginal CDF of lambda_k, without building a model.
    pub fn cdf_at(&self, k: usize, x: f64) -> f64 {
        match &self.rule {
            ExponentRule::Constant { base } => base.cdf(x),
            ExponentRule::Deterministic { seq } => {
                if x > seq.eval(k) {
                    1.0
                } else {
                    0.0
                }
            }
            ExponentRule::ScaledIid { scale, base } => {
                let s = scale.eval(k);
                if s == 0.0 {
                    if x > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    base.cdf(x / s)
                }
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.rule, ExponentRule::Deterministic { .. })
    }

    /// lambda_k for a deterministic rule.
    pub fn deterministic_at(&self, k: usize) -> Result<f64> {
        match &self.rule {
            ExponentRule::Deterministic { seq } => Ok(seq.eval(k)),
            _ => Err(Error::Domain("exponent law is not deterministic".into())),
        }
    }

    /// Parses the `"exponent"` half of a laws object, rejecting unknown fields.
    pub fn from_value(value: &Value) -> Result<ExponentLaw> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config(format!("exponent law must be an object, got {value}")))?;
        let rule_name = obj
            .get("rule")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config("exponent law needs a string \"rule\" field".into()))?;
        let allowed: &[&str] = match rule_name {
            "constant" => &["rule", "base", "dependence"],
            "deterministic" => &["rule", "seq", "dependence"],
            "scaled_iid" => &["rule", "scale", "base", "dependence"],
            other => return Err(Error::Config(format!("unknown exponent rule {other:?}"))),
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown field {key:?} in exponent law")));
            }
        }
        let dependence = match obj.get("dependence") {
            None => Dependence::Independent,
            Some(Value::String(s)) if s == "independent" => Dependence::Independent,
            Some(Value::String(s)) if s == "pairwise" => Dependence::Pairwise,
            Some(other) => {
                return Err(Error::Config(format!("unknown dependence {other}")));
            }
        };
        let base = |field: &str| -> Result<CdfModel> {
            let raw = obj
                .get(field)
                .ok_or_else(|| Error::Config(format!("{rule_name} rule needs {field:?}")))?;
            CdfModel::from_value(raw)
        };
        let seq = |field: &str| -> Result<SeqExpr> {
            let raw = obj
                .get(field)
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Config(format!("{rule_name} rule needs string {field:?}")))?;
            SeqExpr::parse(raw)
        };
        let rule = match rule_name {
            "constant" => ExponentRule::Constant { base: base("base")? },
            "deterministic" => ExponentRule::Deterministic { seq: seq("seq")? },
            "scaled_iid" => ExponentRule::ScaledIid { scale: seq("scale")?, base: base("base")? },
            _ => unreachable!(),
        };
        ExponentLaw::new(rule, dependence)
    }

    /// The canonical JSON form. The scaled-identity shorthand
    /// `"scale": "k"` round-trips through the grammar text.
    pub fn to_value(&self) -> Value {
        let mut value = match &self.rule {
            ExponentRule::Constant { base } => {
                json!({"rule": "constant", "base": base.to_value()})
            }
            ExponentRule::Deterministic { seq } => {
                json!({"rule": "deterministic", "seq": seq.text()})
            }
            ExponentRule::ScaledIid { scale, base } => {
                json!({"rule": "scaled_iid", "scale": scale.text(), "base": base.to_value()})
            }
        };
        if self.dependence == Dependence::Pairwise {
            value["dependence"] = json!("pairwise");
        }
        value
    }
}

impl Serialize for ExponentLaw {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExponentLaw {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<ExponentLaw, D::Error> {
        let value = Value::deserialize(deserializer)?;
        ExponentLaw::from_value(&value).map_err(de::Error::custom)
    }
}

/// How coefficient moduli |f_k| are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientMode {
    /// |f_k| = exp(-neg_log(k)), so neg_log(k) = -ln|f_k|.
    Deterministic { neg_log: SeqExpr },
    /// |f_k| = scale(k) * Z_k with Z_k drawn independently from the base
    /// law. A missing scale means scale(k) = 1.
    RandomModulus { base: CdfModel, scale: Option<SeqExpr> },
}

/// The law of the coefficient sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientLaw {
    pub mode: CoefficientMode,
}

impl CoefficientLaw {
    pub fn new(mode: CoefficientMode) -> Result<CoefficientLaw> {
        let law = CoefficientLaw { mode };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.mode {
            CoefficientMode::Deterministic { .. } => Ok(()),
            CoefficientMode::RandomModulus { base, scale } => {
                base.validate()?;
                if base.support_min() < 0.0 {
                    return Err(Error::InvalidParameter(
                        "random modulus base law must have nonnegative support".into(),
                    ));
                }
                if matches!(base, CdfModel::Degenerate { point } if *point <= 0.0) {
                    return Err(Error::InvalidParameter(
                        "random modulus base law must put its mass above zero".into(),
                    ));
                }
                if let Some(scale) = scale {
                    if scale.eval(0) <= 0.0 {
                        return Err(Error::InvalidParameter(
                            "modulus scale must be positive at every index".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.mode, CoefficientMode::Deterministic { .. })
    }

    /// `-ln|f_k|` for a deterministic law.
    pub fn neg_log_at(&self, k: usize) -> Result<f64> {
        match &self.mode {
            CoefficientMode::Deterministic { neg_log } => Ok(neg_log.eval(k)),
            CoefficientMode::RandomModulus { .. } => {
                Err(Error::Domain("coefficient law is not deterministic".into()))
            }
        }
    }

    /// The marginal law of |f_k| for a random-modulus law.
    pub fn modulus_model_at(&self, k: usize) -> Result<CdfModel> {
        match &self.mode {
            CoefficientMode::RandomModulus { base, scale } => match scale {
                None => Ok(base.clone()),
                Some(scale) => {
                    let s = scale.eval(k);
                    if s <= 0.0 {
                        return Err(Error::Domain(format!("modulus scale {s} at k={k}")));
                    }
                    Ok(CdfModel::ScaledOf { base: Box::new(base.clone()), factor: s })
                }
            },
            CoefficientMode::Deterministic { .. } => {
                Err(Error::Domain("coefficient law is deterministic".into()))
            }
        }
    }

    /// `F*_k(x)`, the marginal CDF of |f_k| for a random-modulus law.
    pub fn modulus_cdf_at(&self, k: usize, x: f64) -> Result<f64> {
        match &self.mode {
            CoefficientMode::RandomModulus { base, scale } => match scale {
                None => Ok(base.cdf(x)),
                Some(scale) => {
                    let s = scale.eval(k);
                    if s <= 0.0 {
                        return Err(Error::Domain(format!("modulus scale {s} at k={k}")));
                    }
                    Ok(base.cdf(x / s))
                }
            },
            CoefficientMode::Deterministic { .. } => {
                Err(Error::Domain("coefficient law is deterministic".into()))
            }
        }
    }

    /// Whether |f_k| -> 0, when that can be read off the law itself.
    /// Random-modulus laws return None.
    pub fn f_tends_to_zero(&self) -> Option<bool> {
        match &self.mode {
            CoefficientMode::Deterministic { neg_log } => Some(neg_log.grows_to_infinity()),
            CoefficientMode::RandomModulus { .. } => None,
        }
    }

    /// Parses the `"coefficient"` half of a laws object.
    pub fn from_value(value: &Value) -> Result<CoefficientLaw> {
        let obj = value.as_object().ok_or_else(|| {
            Error::Config(format!("coefficient law must be an object, got {value}"))
        })?;
        let mode_name = obj
            .get("mode")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config("coefficient law needs a string \"mode\" field".into()))?;
        let allowed: &[&str] = match mode_name {
            "deterministic" => &["mode", "neg_log"],
            "random_modulus" => &["mode", "base", "scale"],
            other => return Err(Error::Config(format!("unknown coefficient mode {other:?}"))),
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown field {key:?} in coefficient law")));
            }
        }
        let mode = match mode_name {
            "deterministic" => {
                let raw = obj
                    .get("neg_log")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Config("deterministic mode needs string neg_log".into()))?;
                CoefficientMode::Deterministic { neg_log: SeqExpr::parse(raw)? }
            }
            "random_modulus" => {
                let raw = obj
                    .get("base")
                    .ok_or_else(|| Error::Config("random_modulus mode needs a base".into()))?;
                let base = CdfModel::from_value(raw)?;
                let scale = match obj.get("scale") {
                    None => None,
                    Some(Value::String(s)) => Some(SeqExpr::parse(s)?),
                    Some(other) => {
                        return Err(Error::Config(format!("modulus scale must be a string, got {other}")));
                    }
                };
                CoefficientMode::RandomModulus { base, scale }
            }
            _ => unreachable!(),
        };
        CoefficientLaw::new(mode)
    }

    pub fn to_value(&self) -> Value {
        match &self.mode {
            CoefficientMode::Deterministic { neg_log } => {
                json!({"mode": "deterministic", "neg_log": neg_log.text()})
            }
            CoefficientMode::RandomModulus { base, scale } => match scale {
                None => json!({"mode": "random_modulus", "base": base.to_value()}),
                Some(scale) => json!({
                    "mode": "random_modulus",
                    "base": base.to_value(),
                    "scale": scale.text(),
                }),
            },
        }
    }
}

impl Serialize for CoefficientLaw {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoefficientLaw {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<CoefficientLaw, D::Error> {
        let value = Value::deserialize(deserializer)?;
        CoefficientLaw::from_value(&value).map_err(de::Error::custom)
    }
}

/// One sampled realization of the first K exponents and, for random
/// coefficient laws, the first K moduli.
#[derive(Debug, Clone)]
pub struct TrialDraw {
    pub master_seed: u64,
    pub trial_index: u64,
    pub k_max: usize,
    pub lambdas: Vec<f64>,
    pub coeff_moduli: Option<Vec<f64>>,
}

impl TrialDraw {
    /// The whole sequence `-ln|f_k|`, k < k_max.
    pub fn neg_log_seq(&self, coeff: &CoefficientLaw) -> Result<Vec<f64>> {
        (0..self.k_max).map(|k| self.neg_log_coeff(coeff, k)).collect()
    }

    /// `-ln|f_k|` for this draw, using the law for deterministic
    /// coefficients and the drawn moduli otherwise.
    pub fn neg_log_coeff(&self, coeff: &CoefficientLaw, k: usize) -> Result<f64> {
        match &coeff.mode {
            CoefficientMode::Deterministic { neg_log } => Ok(neg_log.eval(k)),
            CoefficientMode::RandomModulus { .. } => {
                let moduli = self
                    .coeff_moduli
                    .as_ref()
                    .ok_or_else(|| Error::Domain("draw is missing coefficient moduli".into()))?;
                let m = moduli[k];
                if m <= 0.0 {
                    return Err(Error::Domain(format!("nonpositive modulus {m} at k={k}")));
                }
                Ok(-m.ln())
            }
        }
    }
}

/// Samples one trial's exponents (and moduli, if random) at truncation K.
pub fn sample_trial(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    master_seed: u64,
    trial_index: u64,
    k_max: usize,
) -> TrialDraw {
    let unit = |k: usize| match exponent.dependence {
        Dependence::Independent => keyed_unit(master_seed, trial_index, k as u64, STREAM_EXPONENT),
        Dependence::Pairwise => pairwise_unit(master_seed, trial_index, k as u64),
    };
    let lambdas: Vec<f64> = (0..k_max)
        .map(|k| match &exponent.rule {
            ExponentRule::Constant { base } => base.sample(unit(k)),
            ExponentRule::Deterministic { seq } => seq.eval(k),
            ExponentRule::ScaledIid { scale, base } => {
                let s = scale.eval(k);
                if s == 0.0 {
                    0.0
                } else {
                    s * base.sample(unit(k))
                }
            }
        })
        .collect();
    let coeff_moduli = match &coefficient.mode {
        CoefficientMode::Deterministic { .. } => None,
        CoefficientMode::RandomModulus { base, scale } => Some(
            (0..k_max)
                .map(|k| {
                    let z = base.sample(keyed_unit(master_seed, trial_index, k as u64, STREAM_COEFF));
                    match scale {
                        None => z,
                        Some(scale) => scale.eval(k) * z,
                    }
                })
                .collect(),
        ),
    };
    TrialDraw { master_seed, trial_index, k_max, lambdas, coeff_moduli }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical_exponent() -> ExponentLaw {
        ExponentLaw::new(
            ExponentRule::ScaledIid {
                scale: SeqExpr::parse("k").unwrap(),
                base: CdfModel::Uniform { a: 0.0, b: 2.0 },
            },
            Dependence::Independent,
        )
        .unwrap()
    }

    #[test]
    fn laws_fragment_parses_to_the_canonical_pair() {
        let text = r#"{"exponent": {"rule": "scaled_iid", "scale": "k", "base": {"family": "uniform", "a": 0, "b": 2}}, "coefficient": {"mode": "deterministic", "neg_log": "k"}}"#;
        let value: Value = serde_json::from_str(text).unwrap();
        let exponent = ExponentLaw::from_value(&value["exponent"]).unwrap();
        let coefficient = CoefficientLaw::from_value(&value["coefficient"]).unwrap();
        assert_eq!(exponent, canonical_exponent());
        assert!(coefficient.is_deterministic());
        assert_eq!(coefficient.neg_log_at(3).unwrap(), 3.0);
    }

    #[test]
    fn exponent_law_round_trips_through_json() {
        let laws = [
            canonical_exponent(),
            ExponentLaw::new(
                ExponentRule::Constant { base: CdfModel::Exponential { rate: 1.0 } },
                Dependence::Independent,
            )
            .unwrap(),
            ExponentLaw::new(
                ExponentRule::Deterministic { seq: SeqExpr::parse("0.5*k").unwrap() },
                Dependence::Independent,
            )
            .unwrap(),
            ExponentLaw::new(
                ExponentRule::ScaledIid {
                    scale: SeqExpr::parse("k").unwrap(),
                    base: CdfModel::Uniform { a: 0.0, b: 2.0 },
                },
                Dependence::Pairwise,
            )
            .unwrap(),
        ];
        for law in laws {
            let value = law.to_value();
            let back = ExponentLaw::from_value(&value).unwrap();
            assert_eq!(back, law);
        }
    }

    #[test]
    fn rejects_invalid_laws() {
        assert!(ExponentLaw::new(
            ExponentRule::Constant { base: CdfModel::Uniform { a: -1.0, b: 1.0 } },
            Dependence::Independent,
        )
        .is_err());
        assert!(ExponentLaw::new(
            ExponentRule::Constant { base: CdfModel::Exponential { rate: 1.0 } },
            Dependence::Pairwise,
        )
        .is_err());
        assert!(ExponentLaw::new(
            ExponentRule::Deterministic { seq: SeqExpr::parse("k").unwrap() },
            Dependence::Pairwise,
        )
        .is_err());
        assert!(CoefficientLaw::new(CoefficientMode::RandomModulus {
            base: CdfModel::Uniform { a: -0.5, b: 0.5 },
            scale: None,
        })
        .is_err());
        assert!(CoefficientLaw::new(CoefficientMode::RandomModulus {
            base: CdfModel::Degenerate { point: 0.0 },
            scale: None,
        })
        .is_err());
    }

    #[test]
    fn marginal_cdf_matches_the_model() {
        let law = canonical_exponent();
        for k in [0usize, 1, 5, 100] {
            let model = law.model_at(k);
            for x in [-1.0, 0.0, 0.5, 1.0, 10.0, 500.0] {
                assert_eq!(law.cdf_at(k, x), model.cdf(x), "k={k}, x={x}");
            }
        }
        assert_eq!(law.cdf_at(0, 0.5), 1.0);
        assert_eq!(law.cdf_at(0, 0.0), 0.0);
        assert_eq!(law.cdf_at(10, 10.0), 0.5);
    }

    #[test]
    fn deterministic_marginals_are_degenerate() {
        let law = ExponentLaw::new(
            ExponentRule::Deterministic { seq: SeqExpr::parse("0.5*k").unwrap() },
            Dependence::Independent,
        )
        .unwrap();
        assert_eq!(law.cdf_at(4, 2.0), 0.0);
        assert_eq!(law.cdf_at(4, 2.0 + 1e-9), 1.0);
        assert_eq!(law.model_at(4), CdfModel::Degenerate { point: 2.0 });
    }

    #[test]
    fn sampling_is_deterministic_in_the_key() {
        let exponent = canonical_exponent();
        let coefficient =
            CoefficientLaw::new(CoefficientMode::Deterministic { neg_log: SeqExpr::parse("k").unwrap() })
                .unwrap();
        let a = sample_trial(&exponent, &coefficient, 11, 2, 64);
        let b = sample_trial(&exponent, &coefficient, 11, 2, 64);
        assert_eq!(a.lambdas, b.lambdas);
        let c = sample_trial(&exponent, &coefficient, 11, 3, 64);
        assert_ne!(a.lambdas, c.lambdas);
    }

    #[test]
    fn scaled_draws_respect_the_scale_envelope() {
        let exponent = canonical_exponent();
        let coefficient =
            CoefficientLaw::new(CoefficientMode::Deterministic { neg_log: SeqExpr::parse("k").unwrap() })
                .unwrap();
        let draw = sample_trial(&exponent, &coefficient, 3, 0, 2000);
        assert_eq!(draw.lambdas[0], 0.0);
        for (k, lambda) in draw.lambdas.iter().enumerate().skip(1) {
            let bound = 2.0 * k as f64;
            assert!(*lambda > 0.0 && *lambda < bound, "lambda_{k} = {lambda}");
        }
    }

    #[test]
    fn random_moduli_are_positive_and_keyed_off_their_own_stream() {
        let exponent = canonical_exponent();
        let coefficient = CoefficientLaw::new(CoefficientMode::RandomModulus {
            base: CdfModel::Uniform { a: 0.0, b: 1.0 },
            scale: Some(SeqExpr::parse("ln(k+2)").unwrap()),
        })
        .unwrap();
        let draw = sample_trial(&exponent, &coefficient, 5, 1, 512);
        let moduli = draw.coeff_moduli.as_ref().unwrap();
        for (k, m) in moduli.iter().enumerate() {
            assert!(*m > 0.0 && *m < (k as f64 + 2.0).ln(), "modulus {m} at k={k}");
        }
        let mu = draw.neg_log_coeff(&coefficient, 3).unwrap();
        assert_eq!(mu, -moduli[3].ln());
    }

    #[test]
    fn iid_exponential_draws_have_the_law_mean_at_desk_scale() {
        let exponent = ExponentLaw::new(
            ExponentRule::Constant { base: CdfModel::Exponential { rate: 1.0 } },
            Dependence::Independent,
        )
        .unwrap();
        let coefficient =
            CoefficientLaw::new(CoefficientMode::Deterministic { neg_log: SeqExpr::parse("k").unwrap() })
                .unwrap();
        let k = 5usize;
        let trials = 10_000u64;
        let mut sum = 0.0;
        for trial in 0..trials {
            sum += sample_trial(&exponent, &coefficient, 11, trial, k + 1).lambdas[k];
        }
        let mean = sum / trials as f64;
        assert!((mean - 1.0).abs() <= 0.05, "empirical mean {mean}");
    }
}
