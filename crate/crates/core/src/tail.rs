use crate::error::{Error, Result};
use crate::law::{CoefficientLaw, TrialDraw};
use crate::xreal::XReal;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Window estimates beyond this magnitude collapse to the infinity
/// sentinels.
pub const TAIL_VALUE_CAP: f64 = 1e9;

/// Relative agreement needed between the last window estimates for a
/// Stable trend.
pub const TREND_TOL: f64 = 0.01;

/// How the window estimates move as the window shrinks toward the tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    /// The last three windows agree to within `TREND_TOL` relative.
    Stable,
    /// The last three windows move monotonically.
    Drifting,
    /// Anything else.
    Oscillating,
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Trend::Stable => "stable",
            Trend::Drifting => "drifting",
            Trend::Oscillating => "oscillating",
        };
        write!(f, "{name}")
    }
}

/// One window's estimate: the extremum over indices in `[start, k_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    pub start: usize,
    pub value: XReal,
}

/// A windowed tail statistic: the headline value comes from the last
/// (smallest) window, and the trace across windows carries the trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub value: XReal,
    pub window_trace: Vec<WindowPoint>,
    pub k_max: usize,
    pub trend: Trend,
    /// Indices in `[0, k_max)` with no usable ratio (undefined or
    /// excluded by the statistic's domain).
    pub skipped: usize,
}

/// Tail windows `[k_max/d, k_max)`, one per divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSchedule {
    pub divisors: Vec<usize>,
}

impl Default for WindowSchedule {
    fn default() -> WindowSchedule {
        WindowSchedule { divisors: vec![16, 8, 4, 2] }
    }
}

impl WindowSchedule {
    /// The window start indices for truncation `k_max`, sorted ascending
    /// and deduplicated.
    pub fn starts(&self, k_max: usize) -> Result<Vec<usize>> {
        if self.divisors.is_empty() {
            return Err(Error::InvalidParameter("window schedule has no divisors".into()));
        }
        let mut starts = Vec::with_capacity(self.divisors.len());
        for &d in &self.divisors {
            if d < 2 {
                return Err(Error::InvalidParameter(format!("window divisor must be >= 2, got {d}")));
            }
            let start = k_max / d;
            if start == 0 {
                return Err(Error::InvalidParameter(format!(
                    "k_max = {k_max} is too small for window divisor {d}"
                )));
            }
            starts.push(start);
        }
        starts.sort_unstable();
        starts.dedup();
        Ok(starts)
    }
}

/// Which extremum a tail statistic takes over each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    /// Estimates a liminf.
    Inf,
    /// Estimates a limsup.
    Sup,
}

fn trend_of(trace: &[WindowPoint]) -> Trend {
    if trace.len() < 3 {
        return Trend::Stable;
    }
    let v1 = trace[trace.len() - 3].value;
    let v2 = trace[trace.len() - 2].value;
    let v3 = trace[trace.len() - 1].value;
    if v1 == v2 && v2 == v3 {
        return Trend::Stable;
    }
    if v1.is_finite() && v2.is_finite() && v3.is_finite() {
        let tol = TREND_TOL * v3.get().abs().max(1.0);
        if (v3.get() - v2.get()).abs() <= tol && (v2.get() - v1.get()).abs() <= tol {
            return Trend::Stable;
        }
    }
    if (v1 <= v2 && v2 <= v3) || (v1 >= v2 && v2 >= v3) {
        Trend::Drifting
    } else {
        Trend::Oscillating
    }
}

fn cap_to_xreal(raw: f64) -> XReal {
    if raw > TAIL_VALUE_CAP {
        XReal::POS_INF
    } else if raw < -TAIL_VALUE_CAP {
        XReal::NEG_INF
    } else {
        XReal::finite(raw)
    }
}

/// The core windowed extremum over per-index values. `None` entries are
/// skipped; a window containing no usable index is a domain error.
pub fn tail_extremum(
    values: &[Option<f64>],
    extremum: Extremum,
    windows: &WindowSchedule,
) -> Result<TailEstimate> {
    let k_max = values.len();
    let starts = windows.starts(k_max)?;
    let mut trace = Vec::with_capacity(starts.len());
    for &start in &starts {
        let mut best: Option<f64> = None;
        for value in values[start..].iter().flatten() {
            debug_assert!(!value.is_nan());
            best = Some(match best {
                None => *value,
                Some(b) => match extremum {
                    Extremum::Inf => b.min(*value),
                    Extremum::Sup => b.max(*value),
                },
            });
        }
        let raw = best.ok_or_else(|| {
            Error::Domain(format!("tail window [{start}, {k_max}) has no usable indices"))
        })?;
        trace.push(WindowPoint { start, value: cap_to_xreal(raw) });
    }
    let skipped = values.iter().filter(|v| v.is_none()).count();
    Ok(TailEstimate {
        value: trace.last().expect("at least one window").value,
        trend: trend_of(&trace),
        window_trace: trace,
        k_max,
        skipped,
    })
}

/// Windowed liminf estimate.
pub fn tail_inf_estimate(values: &[Option<f64>], windows: &WindowSchedule) -> Result<TailEstimate> {
    tail_extremum(values, Extremum::Inf, windows)
}

/// Windowed limsup estimate.
pub fn tail_sup_estimate(values: &[Option<f64>], windows: &WindowSchedule) -> Result<TailEstimate> {
    tail_extremum(values, Extremum::Sup, windows)
}

/// Estimates `alpha0 = liminf_k (-ln|f_k|) / lambda_k`.
///
/// Indices with `lambda_k = 0` are skipped: the ratio is undefined there
/// and the liminf only sees the tail, where admissible exponent
/// sequences are eventually positive.
pub fn alpha0(
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    windows: &WindowSchedule,
) -> Result<TailEstimate> {
    let mu = draw.neg_log_seq(coefficient)?;
    let values: Vec<Option<f64>> = draw
        .lambdas
        .iter()
        .zip(&mu)
        .map(|(&lambda, &m)| if lambda > 0.0 { Some(m / lambda) } else { None })
        .collect();
    tail_inf_estimate(&values, windows)
}

/// Estimates `tau = limsup_k (ln k) / lambda_k`, the exponent density.
pub fn tau(draw: &TrialDraw, windows: &WindowSchedule) -> Result<TailEstimate> {
    let values: Vec<Option<f64>> = draw
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            if k >= 1 && lambda > 0.0 {
                Some((k as f64).ln() / lambda)
            } else {
                None
            }
        })
        .collect();
    tail_sup_estimate(&values, windows)
}

/// Estimates `h = limsup_k (ln k) / (-ln|f_k|)`.
pub fn h_coeff(
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    windows: &WindowSchedule,
) -> Result<TailEstimate> {
    let mu = draw.neg_log_seq(coefficient)?;
    let values: Vec<Option<f64>> = mu
        .iter()
        .enumerate()
        .map(|(k, &m)| if k >= 1 && m != 0.0 { Some((k as f64).ln() / m) } else { None })
        .collect();
    tail_sup_estimate(&values, windows)
}

/// The summability margin for the weighted coefficient series
/// `sum_k |f_k|^(1-gamma) exp(-delta lambda_k)` at parameters
/// `(gamma, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaDeltaMargin {
    /// `liminf_k (delta lambda_k - (gamma-1)(-ln|f_k|)) / ln k`.
    pub estimate: TailEstimate,
    /// Whether the margin exceeds 1, which makes the weighted series
    /// summable by comparison with `sum_k k^(-margin)`.
    pub holds: bool,
}

/// Estimates the summability margin `h(gamma, delta)`.
pub fn h_gamma_delta(
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    gamma: f64,
    delta: f64,
    windows: &WindowSchedule,
) -> Result<GammaDeltaMargin> {
    if !gamma.is_finite() || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma={gamma}, delta={delta}")));
    }
    let mu = draw.neg_log_seq(coefficient)?;
    let values: Vec<Option<f64>> = draw
        .lambdas
        .iter()
        .zip(&mu)
        .enumerate()
        .map(|(k, (&lambda, &m))| {
            if k >= 2 {
                Some((delta * lambda - (gamma - 1.0) * m) / (k as f64).ln())
            } else {
                None
            }
        })
        .collect();
    let estimate = tail_inf_estimate(&values, windows)?;
    let holds = estimate.value > XReal::finite(1.0);
    Ok(GammaDeltaMargin { estimate, holds })
}

/// The slow-coefficient condition `ln k = o(-ln|f_k|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefCondition {
    /// Tail sup of `ln k / (-ln|f_k|)`; indices with `-ln|f_k| <= 0`
    /// contribute the positive sentinel, since the condition needs the
    /// denominators to grow.
    pub estimate: TailEstimate,
    pub holds: bool,
}

/// Checks `ln k = o(-ln|f_k|)`: either the tail sup is already below
/// 0.01 and stable, or the window trace is strictly decreasing with the
/// last ratios at most 0.9, showing decay toward zero.
pub fn coef_condition(
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    windows: &WindowSchedule,
) -> Result<CoefCondition> {
    let mu = draw.neg_log_seq(coefficient)?;
    let values: Vec<Option<f64>> = mu
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            if k < 2 {
                None
            } else if m > 0.0 {
                Some((k as f64).ln() / m)
            } else {
                Some(f64::INFINITY)
            }
        })
        .collect();
    let estimate = tail_sup_estimate(&values, windows)?;

    let small_and_stable =
        estimate.value <= XReal::finite(0.01) && estimate.trend == Trend::Stable;

    let trace = &estimate.window_trace;
    let all_finite = trace.iter().all(|p| p.value.is_finite());
    let decreasing = all_finite
        && trace.windows(2).all(|pair| pair[1].value < pair[0].value)
        && trace.len() >= 2;
    let decaying = decreasing && {
        let ratios: Vec<f64> = trace
            .windows(2)
            .map(|pair| pair[1].value.get() / pair[0].value.get())
            .collect();
        ratios.iter().rev().take(3).all(|r| *r <= 0.9)
    };

    Ok(CoefCondition { estimate, holds: small_and_stable || decaying })
}

/// The lower bound `gamma * alpha0 - delta` on the abscissa of absolute
/// convergence, valid whenever the summability margin at
/// `(gamma, delta)` holds; infinities pass through (gamma > 0).
pub fn weighted_lower_bound(gamma: f64, delta: f64, alpha0: XReal) -> Result<XReal> {
    if !gamma.is_finite() || gamma <= 0.0 || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma={gamma}, delta={delta}")));
    }
    if !alpha0.is_finite() {
        return Ok(alpha0);
    }
    Ok(XReal::finite(gamma * alpha0.get() - delta))
}

/// The exponent counting function `n(t) = #{k < k_max : mu_k <= t}` for
/// a deterministic coefficient sequence `mu_k = -ln|f_k|`.
#[derive(Debug, Clone)]
pub struct CountingFn {
    sorted: Vec<f64>,
}

impl CountingFn {
    pub fn eval(&self, t: f64) -> usize {
        self.sorted.partition_point(|&m| m <= t)
    }

    pub fn total(&self) -> usize {
        self.sorted.len()
    }
}

/// Builds the counting function of `-ln|f_k|` over `k < k_max`.
pub fn counting_function(coefficient: &CoefficientLaw, k_max: usize) -> Result<CountingFn> {
    if !coefficient.is_deterministic() {
        return Err(Error::Domain("counting function needs deterministic coefficients".into()));
    }
    let mut sorted: Vec<f64> =
        (0..k_max).map(|k| coefficient.neg_log_at(k)).collect::<Result<_>>()?;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("neg_log values are never NaN"));
    Ok(CountingFn { sorted })
}
