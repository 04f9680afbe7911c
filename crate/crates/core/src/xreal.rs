use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// An extended real number: a finite f64 or one of the two infinities.
///
/// NaN is rejected at construction, so the type carries a total order.
/// Estimators use the infinities as sentinels for quantities that sit
/// outside the search range or arise from capped tail statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XReal(f64);

impl XReal {
    pub const POS_INF: XReal = XReal(f64::INFINITY);
    pub const NEG_INF: XReal = XReal(f64::NEG_INFINITY);

    /// Wraps a value, panicking on NaN.
    pub fn new(value: f64) -> XReal {
        assert!(!value.is_nan(), "XReal cannot hold NaN");
        XReal(value)
    }

    /// Wraps a value known to be finite.
    pub fn finite(value: f64) -> XReal {
        assert!(value.is_finite(), "XReal::finite got {value}");
        XReal(value)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_pos_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_neg_inf(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl Eq for XReal {}

impl PartialOrd for XReal {
    fn partial_cmp(&self, other: &XReal) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for XReal {
    fn cmp(&self, other: &XReal) -> std::cmp::Ordering {
        self.0.partial_cmp(&other.0).expect("XReal is never NaN")
    }
}

impl fmt::Display for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            write!(f, "inf")
        } else if self.0 == f64::NEG_INFINITY {
            write!(f, "-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for XReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            serializer.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            serializer.serialize_str("-inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

struct XRealVisitor;

impl Visitor<'_> for XRealVisitor {
    type Value = XReal;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a finite number or the string \"inf\"/\"-inf\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<XReal, E> {
        if v.is_nan() {
            Err(E::custom("NaN is not an extended real"))
        } else {
            Ok(XReal(v))
        }
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<XReal, E> {
        Ok(XReal(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<XReal, E> {
        Ok(XReal(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<XReal, E> {
        match v {
            "inf" => Ok(XReal::POS_INF),
            "-inf" => Ok(XReal::NEG_INF),
            other => Err(E::custom(format!("unknown extended real string {other:?}"))),
        }
    }
}

impl<'de> Deserialize<'de> for XReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<XReal, D::Error> {
        deserializer.deserialize_any(XRealVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_puts_sentinels_at_the_ends() {
        let mut values = [
            XReal::POS_INF,
            XReal::finite(0.0),
            XReal::NEG_INF,
            XReal::finite(-3.5),
            XReal::finite(2.0),
        ];
        values.sort();
        assert_eq!(values[0], XReal::NEG_INF);
        assert_eq!(values[1], XReal::finite(-3.5));
        assert_eq!(values[4], XReal::POS_INF);
    }

    #[test]
    fn serializes_finite_as_number_and_sentinels_as_strings() {
        assert_eq!(serde_json::to_string(&XReal::finite(1.5)).unwrap(), "1.5");
        assert_eq!(serde_json::to_string(&XReal::POS_INF).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&XReal::NEG_INF).unwrap(), "\"-inf\"");
    }

    #[test]
    fn round_trips_through_json() {
        for x in [XReal::finite(-2.25), XReal::POS_INF, XReal::NEG_INF] {
            let text = serde_json::to_string(&x).unwrap();
            let back: XReal = serde_json::from_str(&text).unwrap();
            assert_eq!(back, x);
        }
        let from_int: XReal = serde_json::from_str("3").unwrap();
        assert_eq!(from_int, XReal::finite(3.0));
    }

    #[test]
    #[should_panic]
    fn rejects_nan() {
        XReal::new(f64::NAN);
    }
}
