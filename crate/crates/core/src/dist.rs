use crate::error::{Error, Result};
use serde::de;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

/// A probability law described by its cumulative distribution function.
///
/// CDFs use the left-continuous convention `F(x) = P{X < x}`, which only
/// matters for the `Degenerate` family: its atom at `point` contributes
/// to `F(x)` for `x > point` but not at `x = point` itself.
#[derive(Debug, Clone, PartialEq)]
pub enum CdfModel {
    /// Exponential with the given rate; support (0, inf).
    Exponential { rate: f64 },
    /// Uniform on (a, b).
    Uniform { a: f64, b: f64 },
    /// Pareto with minimum `scale` and tail index `shape`; support (scale, inf).
    Pareto { scale: f64, shape: f64 },
    /// Log-normal: ln X ~ Normal(mu, sigma^2); support (0, inf).
    LogNormal { mu: f64, sigma: f64 },
    /// Point mass at `point`.
    Degenerate { point: f64 },
    /// The law of `factor * X` where X follows `base`; factor > 0.
    ScaledOf { base: Box<CdfModel>, factor: f64 },
    /// The law of `X + offset` where X follows `base`.
    ShiftedOf { base: Box<CdfModel>, offset: f64 },
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

impl CdfModel {
    /// Checks every parameter, recursing through composite families.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            CdfModel::Exponential { rate } => {
                if !rate.is_finite() || *rate <= 0.0 {
                    return fail(format!("exponential rate must be positive, got {rate}"));
                }
            }
            CdfModel::Uniform { a, b } => {
                if !a.is_finite() || !b.is_finite() || a >= b {
                    return fail(format!("uniform needs finite a < b, got a={a}, b={b}"));
                }
            }
            CdfModel::Pareto { scale, shape } => {
                if !scale.is_finite() || *scale <= 0.0 {
                    return fail(format!("pareto scale must be positive, got {scale}"));
                }
                if !shape.is_finite() || *shape <= 0.0 {
                    return fail(format!("pareto shape must be positive, got {shape}"));
                }
            }
            CdfModel::LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return fail(format!("lognormal mu must be finite, got {mu}"));
                }
                if !sigma.is_finite() || *sigma <= 0.0 {
                    return fail(format!("lognormal sigma must be positive, got {sigma}"));
                }
            }
            CdfModel::Degenerate { point } => {
                if !point.is_finite() {
                    return fail(format!("degenerate point must be finite, got {point}"));
                }
            }
            CdfModel::ScaledOf { base, factor } => {
                if !factor.is_finite() || *factor <= 0.0 {
                    return fail(format!("scale factor must be positive, got {factor}"));
                }
                base.validate()?;
            }
            CdfModel::ShiftedOf { base, offset } => {
                if !offset.is_finite() {
                    return fail(format!("shift offset must be finite, got {offset}"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Evaluates `F(x) = P{X < x}`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            CdfModel::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            CdfModel::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            CdfModel::Pareto { scale, shape } => {
                if x <= *scale {
                    0.0
                } else {
                    -(shape * (scale / x).ln()).exp_m1()
                }
            }
            CdfModel::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal().cdf((x.ln() - mu) / sigma)
                }
            }
            CdfModel::Degenerate { point } => {
                if x > *point {
                    1.0
                } else {
                    0.0
                }
            }
            CdfModel::ScaledOf { base, factor } => base.cdf(x / factor),
            CdfModel::ShiftedOf { base, offset } => base.cdf(x - offset),
        }
    }

    /// Evaluates the quantile function at `u`, which must lie in (0, 1).
    ///
    /// For continuous families this inverts the CDF to within about one
    /// ulp; for `Degenerate` it is the constant `point`.
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0, "quantile input {u} outside (0,1)");
        match self {
            CdfModel::Exponential { rate } => -(-u).ln_1p() / rate,
            CdfModel::Uniform { a, b } => a + u * (b - a),
            CdfModel::Pareto { scale, shape } => scale * (-(-u).ln_1p() / shape).exp(),
            CdfModel::LogNormal { mu, sigma } => {
                let normal = std_normal();
                let z0 = normal.inverse_cdf(u);
                let pdf = (-0.5 * z0 * z0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let z = if pdf > 1e-300 { z0 - (normal.cdf(z0) - u) / pdf } else { z0 };
                (mu + sigma * z).exp()
            }
            CdfModel::Degenerate { point } => *point,
            CdfModel::ScaledOf { base, factor } => factor * base.quantile(u),
            CdfModel::ShiftedOf { base, offset } => base.quantile(u) + offset,
        }
    }

    /// Draws a sample by inverse transform from a unit uniform.
    pub fn sample(&self, u: f64) -> f64 {
        self.quantile(u)
    }

    /// The infimum of the support.
    pub fn support_min(&self) -> f64 {
        match self {
            CdfModel::Exponential { .. } => 0.0,
            CdfModel::Uniform { a, .. } => *a,
            CdfModel::Pareto { scale, .. } => *scale,
            CdfModel::LogNormal { .. } => 0.0,
            CdfModel::Degenerate { point } => *point,
            CdfModel::ScaledOf { base, factor } => factor * base.support_min(),
            CdfModel::ShiftedOf { base, offset } => base.support_min() + offset,
        }
    }

    /// Parses a model from a JSON object, rejecting unknown fields.
    pub fn from_value(value: &Value) -> Result<CdfModel> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config(format!("cdf model must be an object, got {value}")))?;
        let family = obj
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config("cdf model needs a string \"family\" field".into()))?;
        let allowed: &[&str] = match family {
            "exponential" => &["family", "rate"],
            "uniform" => &["family", "a", "b"],
            "pareto" => &["family", "scale", "shape"],
            "lognormal" => &["family", "mu", "sigma"],
            "degenerate" => &["family", "point"],
            "scaled_of" => &["family", "base", "factor"],
            "shifted_of" => &["family", "base", "offset"],
            other => return Err(Error::Config(format!("unknown cdf family {other:?}"))),
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown field {key:?} in {family} model")));
            }
        }
        let num = |key: &str| -> Result<f64> {
            obj.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Config(format!("{family} model needs numeric {key:?}")))
        };
        let model = match family {
            "exponential" => CdfModel::Exponential { rate: num("rate")? },
            "uniform" => CdfModel::Uniform { a: num("a")?, b: num("b")? },
            "pareto" => CdfModel::Pareto { scale: num("scale")?, shape: num("shape")? },
            "lognormal" => CdfModel::LogNormal { mu: num("mu")?, sigma: num("sigma")? },
            "degenerate" => CdfModel::Degenerate { point: num("point")? },
            "scaled_of" => {
                let base = obj
                    .get("base")
                    .ok_or_else(|| Error::Config("scaled_of model needs a base".into()))?;
                CdfModel::ScaledOf {
                    base: Box::new(CdfModel::from_value(base)?),
                    factor: num("factor")?,
                }
            }
            "shifted_of" => {
                let base = obj
                    .get("base")
                    .ok_or_else(|| Error::Config("shifted_of model needs a base".into()))?;
                CdfModel::ShiftedOf {
                    base: Box::new(CdfModel::from_value(base)?),
                    offset: num("offset")?,
                }
            }
            _ => unreachable!(),
        };
        model.validate()?;
        Ok(model)
    }

    /// The canonical JSON form, with alphabetically ordered keys.
    pub fn to_value(&self) -> Value {
        match self {
            CdfModel::Exponential { rate } => json!({"family": "exponential", "rate": rate}),
            CdfModel::Uniform { a, b } => json!({"family": "uniform", "a": a, "b": b}),
            CdfModel::Pareto { scale, shape } => {
                json!({"family": "pareto", "scale": scale, "shape": shape})
            }
            CdfModel::LogNormal { mu, sigma } => {
                json!({"family": "lognormal", "mu": mu, "sigma": sigma})
            }
            CdfModel::Degenerate { point } => json!({"family": "degenerate", "point": point}),
            CdfModel::ScaledOf { base, factor } => {
                json!({"family": "scaled_of", "base": base.to_value(), "factor": factor})
            }
            CdfModel::ShiftedOf { base, offset } => {
                json!({"family": "shifted_of", "base": base.to_value(), "offset": offset})
            }
        }
    }
}

impl Serialize for CdfModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CdfModel {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<CdfModel, D::Error> {
        let value = Value::deserialize(deserializer)?;
        CdfModel::from_value(&value).map_err(de::Error::custom)
    }
}

/// Default probe grid for `F(+0)`: 1e-3 down to 1e-12.
pub const F_PLUS_ZERO_GRID: [f64; 10] = [
    1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12,
];

/// Estimates `F(+0) = lim_{x -> 0+} F(x)` over a shrinking delta grid.
///
/// Accepts the limit when the last three grid values agree within 1e-6,
/// returning `None` otherwise. The grid must hold at least three points.
pub fn f_plus_zero_on(model: &CdfModel, grid: &[f64]) -> Option<f64> {
    if grid.len() < 3 {
        return None;
    }
    let values: Vec<f64> = grid.iter().map(|&d| model.cdf(d)).collect();
    let n = values.len();
    let stabilized = (values[n - 1] - values[n - 2]).abs() <= 1e-6
        && (values[n - 2] - values[n - 3]).abs() <= 1e-6;
    if stabilized {
        Some(values[n - 1])
    } else {
        None
    }
}

/// [`f_plus_zero_on`] over the default grid [`F_PLUS_ZERO_GRID`].
pub fn f_plus_zero(model: &CdfModel) -> Option<f64> {
    f_plus_zero_on(model, &F_PLUS_ZERO_GRID)
}
