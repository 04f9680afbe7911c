use crate::error::{Error, Result};
use serde::de;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// Base of the logarithmic factor's argument: `ln(k+e)` or `ln(k+N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LnBase {
    E,
    Int(u64),
}

impl LnBase {
    fn value(self) -> f64 {
        match self {
            LnBase::E => std::f64::consts::E,
            LnBase::Int(n) => n as f64,
        }
    }
}

/// A deterministic index sequence `s(k) = c * (k+S)^p * ln(k+B)^q`.
///
/// Expressions are products of at most one constant factor, one power
/// factor (`k`, `k^p`, `(k+S)^p` with integer shift S >= 0) and one log
/// factor (`ln(k+e)^q` or `ln(k+N)^q` with integer N >= 1). Values must
/// be finite and nonnegative at every k >= 0, which pins down the
/// admissible exponent signs: p < 0 needs S >= 1 and q < 0 needs a log
/// base larger than 1. A zero constant makes the sequence identically
/// zero. `0^0` evaluates to 1, so `k^0` is the constant 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqExpr {
    text: String,
    constant: f64,
    shift: u64,
    power: f64,
    ln_base: LnBase,
    ln_power: f64,
}

impl SeqExpr {
    /// Parses and validates an expression.
    pub fn parse(input: &str) -> Result<SeqExpr> {
        let text = input.trim();
        if text.is_empty() {
            return Err(Error::Grammar("empty expression".into()));
        }

        let mut constant: Option<f64> = None;
        let mut power: Option<(u64, f64)> = None;
        let mut log: Option<(LnBase, f64)> = None;

        for factor in text.split('*') {
            if factor.is_empty() {
                return Err(Error::Grammar(format!("empty factor in {text:?}")));
            }
            if factor.starts_with("ln(") {
                if log.is_some() {
                    return Err(Error::Grammar(format!("duplicate log factor in {text:?}")));
                }
                log = Some(parse_log_factor(factor)?);
            } else if factor == "k" || factor.starts_with("k^") || factor.starts_with("(k+") {
                if power.is_some() {
                    return Err(Error::Grammar(format!("duplicate power factor in {text:?}")));
                }
                power = Some(parse_power_factor(factor)?);
            } else {
                if constant.is_some() {
                    return Err(Error::Grammar(format!("duplicate constant factor in {text:?}")));
                }
                let c: f64 = factor.parse().map_err(|_| {
                    Error::Grammar(format!("unrecognized factor {factor:?} in {text:?}"))
                })?;
                if !c.is_finite() || c < 0.0 {
                    return Err(Error::Grammar(format!(
                        "constant factor must be finite and nonnegative, got {c}"
                    )));
                }
                constant = Some(c);
            }
        }

        let (shift, p) = power.unwrap_or((0, 0.0));
        let (ln_base, q) = log.unwrap_or((LnBase::E, 0.0));
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::Grammar(format!("non-finite exponent in {text:?}")));
        }
        if p < 0.0 && shift == 0 {
            return Err(Error::Grammar(format!(
                "negative power needs a positive shift so s(0) is finite, got {text:?}"
            )));
        }
        if q < 0.0 && ln_base.value() <= 1.0 {
            return Err(Error::Grammar(format!(
                "negative log power needs a log base above 1 so s(0) is finite, got {text:?}"
            )));
        }
        if let LnBase::Int(0) = ln_base {
            return Err(Error::Grammar(format!("log base must be at least 1 in {text:?}")));
        }

        Ok(SeqExpr {
            text: text.to_string(),
            constant: constant.unwrap_or(1.0),
            shift,
            power: p,
            ln_base,
            ln_power: q,
        })
    }

    /// Evaluates s(k). Always finite and nonnegative for valid expressions.
    pub fn eval(&self, k: usize) -> f64 {
        let base = k as f64 + self.shift as f64;
        let pow_part = if self.power == 0.0 { 1.0 } else { base.powf(self.power) };
        let log_part = if self.ln_power == 0.0 {
            1.0
        } else {
            (k as f64 + self.ln_base.value()).ln().powf(self.ln_power)
        };
        self.constant * pow_part * log_part
    }

    /// Whether s(k) -> infinity as k grows.
    pub fn grows_to_infinity(&self) -> bool {
        self.constant > 0.0 && (self.power > 0.0 || (self.power == 0.0 && self.ln_power > 0.0))
    }

    /// The source text the expression was parsed from.
    pub fn text(&self) -> &str {
        &self.text
    }
}

fn parse_exponent(raw: &str, whole: &str) -> Result<f64> {
    let value: f64 = raw
        .parse()
        .map_err(|_| Error::Grammar(format!("bad exponent {raw:?} in {whole:?}")))?;
    if !value.is_finite() {
        return Err(Error::Grammar(format!("non-finite exponent in {whole:?}")));
    }
    Ok(value)
}

fn parse_power_factor(factor: &str) -> Result<(u64, f64)> {
    let (head, power) = match factor.split_once('^') {
        Some((head, raw)) => (head, parse_exponent(raw, factor)?),
        None => (factor, 1.0),
    };
    if head == "k" {
        return Ok((0, power));
    }
    let inner = head
        .strip_prefix("(k+")
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(|| Error::Grammar(format!("bad power factor {factor:?}")))?;
    let shift: u64 = inner
        .parse()
        .map_err(|_| Error::Grammar(format!("bad shift {inner:?} in {factor:?}")))?;
    Ok((shift, power))
}

fn parse_log_factor(factor: &str) -> Result<(LnBase, f64)> {
    let (head, power) = match factor.split_once('^') {
        Some((head, raw)) => (head, parse_exponent(raw, factor)?),
        None => (factor, 1.0),
    };
    let inner = head
        .strip_prefix("ln(k+")
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(|| Error::Grammar(format!("bad log factor {factor:?}")))?;
    let base = if inner == "e" {
        LnBase::E
    } else {
        let n: u64 = inner
            .parse()
            .map_err(|_| Error::Grammar(format!("bad log base {inner:?} in {factor:?}")))?;
        if n == 0 {
            return Err(Error::Grammar(format!("log base must be at least 1 in {factor:?}")));
        }
        LnBase::Int(n)
    };
    Ok((base, power))
}

impl fmt::Display for SeqExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.text)
    }
}

impl Serialize for SeqExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for SeqExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<SeqExpr, D::Error> {
        let text = String::deserialize(deserializer)?;
        SeqExpr::parse(&text).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_plain_and_scaled_identity() {
        let s = SeqExpr::parse("k").unwrap();
        assert_eq!(s.eval(0), 0.0);
        assert_eq!(s.eval(7), 7.0);

        let s = SeqExpr::parse("0.5*k").unwrap();
        assert_eq!(s.eval(4), 2.0);
    }

    #[test]
    fn evaluates_shifted_powers() {
        let s = SeqExpr::parse("0.1*(k+1)^1").unwrap();
        assert_eq!(s.eval(0), 0.1);
        assert_eq!(s.eval(9), 1.0);

        let s = SeqExpr::parse("(k+1)^-1").unwrap();
        assert_eq!(s.eval(0), 1.0);
        assert_eq!(s.eval(3), 0.25);

        let s = SeqExpr::parse("k^2").unwrap();
        assert_eq!(s.eval(3), 9.0);
    }

    #[test]
    fn evaluates_log_factors() {
        let s = SeqExpr::parse("ln(k+2)").unwrap();
        assert_eq!(s.eval(0), 2.0_f64.ln());

        let s = SeqExpr::parse("2*ln(k+2)").unwrap();
        assert_eq!(s.eval(5), 2.0 * 7.0_f64.ln());

        let s = SeqExpr::parse("ln(k+e)^0.5").unwrap();
        assert_eq!(s.eval(0), 1.0);
        let k = 100usize;
        assert_eq!(s.eval(k), (k as f64 + std::f64::consts::E).ln().sqrt());

        let s = SeqExpr::parse("k^0.5*ln(k+e)").unwrap();
        assert_eq!(s.eval(4), 2.0 * (4.0 + std::f64::consts::E).ln());
    }

    #[test]
    fn zero_power_is_one_even_at_k_zero() {
        let s = SeqExpr::parse("k^0").unwrap();
        assert_eq!(s.eval(0), 1.0);
    }

    #[test]
    fn zero_constant_gives_the_zero_sequence() {
        let s = SeqExpr::parse("0").unwrap();
        assert_eq!(s.eval(0), 0.0);
        assert_eq!(s.eval(1000), 0.0);
        assert!(!s.grows_to_infinity());
    }

    #[test]
    fn growth_detection() {
        assert!(SeqExpr::parse("k").unwrap().grows_to_infinity());
        assert!(SeqExpr::parse("ln(k+2)").unwrap().grows_to_infinity());
        assert!(SeqExpr::parse("0.5*k^2").unwrap().grows_to_infinity());
        assert!(SeqExpr::parse("k^0.5*ln(k+e)^-1").unwrap().grows_to_infinity());
        assert!(!SeqExpr::parse("3").unwrap().grows_to_infinity());
        assert!(!SeqExpr::parse("(k+1)^-1").unwrap().grows_to_infinity());
        assert!(!SeqExpr::parse("ln(k+2)^-1").unwrap().grows_to_infinity());
    }

    #[test]
    fn rejects_malformed_expressions() {
        for bad in [
            "",
            "k*k",
            "ln(k+e)*ln(k+2)",
            "2*3",
            "-1*k",
            "k^-1",
            "ln(k+1)^-1",
            "ln(k+0)",
            "q",
            "k^",
            "(k+-1)",
            "(k+1.5)",
            "ln(k+e)^inf",
            "k*",
        ] {
            assert!(SeqExpr::parse(bad).is_err(), "expected parse failure for {bad:?}");
        }
    }

    #[test]
    fn round_trips_through_serde() {
        let s = SeqExpr::parse("2*ln(k+2)").unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, "\"2*ln(k+2)\"");
        let back: SeqExpr = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
