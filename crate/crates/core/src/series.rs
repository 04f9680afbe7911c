use crate::error::{Error, Result};
use crate::law::{CoefficientLaw, TrialDraw};
use crate::xreal::XReal;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Tuning knobs for the finite-truncation series classifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyPolicy {
    /// Partial sums above this are declared divergent.
    pub sum_cap: f64,
    /// Divergent when the last-quarter term maximum stays above this
    /// fraction of the global maximum.
    pub no_zero_rel: f64,
    /// Convergent when the tail root envelope stays below 1 minus this.
    pub geo_margin: f64,
    /// Convergent when the last-quarter sum increment is below
    /// `cauchy_eps * (1 + S_K)`.
    pub cauchy_eps: f64,
    /// Slope verdicts need the fitted decay exponent at least this far
    /// from 1.
    pub slope_margin: f64,
    /// Relative agreement required between slope fits on successive
    /// windows before a slope verdict may fire.
    pub slope_stability_tol: f64,
    /// Divergent when the last-half sum increment exceeds this fraction
    /// of the total.
    pub growth_rel: f64,
    /// Minimum positive terms per window for a slope fit.
    pub min_slope_points: usize,
}

impl Default for ClassifyPolicy {
    fn default() -> ClassifyPolicy {
        ClassifyPolicy {
            sum_cap: 1e12,
            no_zero_rel: 1e-3,
            geo_margin: 0.02,
            cauchy_eps: 1e-8,
            slope_margin: 0.05,
            slope_stability_tol: 1e-3,
            growth_rel: 0.02,
            min_slope_points: 8,
        }
    }
}

/// The classifier's three-way answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesClass {
    Convergent,
    Divergent,
    Inconclusive,
}

impl fmt::Display for SeriesClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SeriesClass::Convergent => "convergent",
            SeriesClass::Divergent => "divergent",
            SeriesClass::Inconclusive => "inconclusive",
        };
        write!(f, "{name}")
    }
}

/// Which rule produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    /// Terms are exactly zero throughout the last quarter.
    TermsEventuallyZero,
    /// The tail k-th root envelope is bounded below 1.
    GeometricEnvelope,
    /// Partial sums stopped moving at the Cauchy tolerance.
    PartialSumsStabilized,
    /// Stable fitted decay exponent above 1.
    SlopeConvergent,
    /// Partial sums exceeded the cap, or a term overflowed.
    SumCapExceeded,
    /// Last-quarter terms stay comparable to the global maximum.
    TermsNotVanishing,
    /// Stable fitted decay exponent below 1.
    SlopeDivergent,
    /// Partial sums still grow by a visible fraction in the last half.
    GrowingPartialSums,
    /// No rule fired.
    NoRuleFired,
    /// A hypothesis gate failed before any series was classified.
    HypothesesFail,
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Rationale::TermsEventuallyZero => "terms_eventually_zero",
            Rationale::GeometricEnvelope => "geometric_envelope",
            Rationale::PartialSumsStabilized => "partial_sums_stabilized",
            Rationale::SlopeConvergent => "slope_convergent",
            Rationale::SumCapExceeded => "sum_cap_exceeded",
            Rationale::TermsNotVanishing => "terms_not_vanishing",
            Rationale::SlopeDivergent => "slope_divergent",
            Rationale::GrowingPartialSums => "growing_partial_sums",
            Rationale::NoRuleFired => "no_rule_fired",
            Rationale::HypothesesFail => "hypotheses_fail",
        };
        write!(f, "{name}")
    }
}

/// A partial sum recorded along the way, at k = k_max * i / 16.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub k: usize,
    pub partial_sum: XReal,
}

/// The classifier's output for one nonnegative term sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesVerdict {
    pub class: SeriesClass,
    pub rationale: Rationale,
    pub partial_sums: Vec<Checkpoint>,
    /// Fitted decay exponent over the last half, when computable.
    pub tail_slope: Option<f64>,
    pub k_max: usize,
}

impl SeriesVerdict {
    /// The full partial sum S_K.
    pub fn total(&self) -> XReal {
        self.partial_sums.last().map(|c| c.partial_sum).unwrap_or(XReal::finite(0.0))
    }
}

fn checkpoints(terms: &[f64]) -> Vec<Checkpoint> {
    let k_max = terms.len();
    let mut points = Vec::with_capacity(16);
    let mut sum = 0.0f64;
    let mut next = 0usize;
    for i in 1..=16usize {
        let k = k_max * i / 16;
        while next < k {
            sum += terms[next];
            next += 1;
        }
        points.push(Checkpoint {
            k,
            partial_sum: if sum.is_finite() { XReal::finite(sum) } else { XReal::POS_INF },
        });
    }
    points
}

/// Least-squares decay exponent: minus the slope of ln t_k against ln k
/// over `[start, k_max)`, using only positive finite terms. Two passes,
/// centered, so the small windowed variances are not lost to rounding.
fn ls_decay_exponent(terms: &[f64], start: usize, min_points: usize) -> Option<f64> {
    let usable = |k: usize, t: f64| k >= 1 && t > 0.0 && t.is_finite();
    let mut count = 0usize;
    let mut mean_x = 0.0f64;
    let mut mean_y = 0.0f64;
    for (k, &t) in terms.iter().enumerate().skip(start) {
        if usable(k, t) {
            count += 1;
            mean_x += (k as f64).ln();
            mean_y += t.ln();
        }
    }
    if count < min_points {
        return None;
    }
    mean_x /= count as f64;
    mean_y /= count as f64;
    let mut var = 0.0f64;
    let mut cov = 0.0f64;
    for (k, &t) in terms.iter().enumerate().skip(start) {
        if usable(k, t) {
            let dx = (k as f64).ln() - mean_x;
            let dy = t.ln() - mean_y;
            var += dx * dx;
            cov += dx * dy;
        }
    }
    if var <= 0.0 {
        return None;
    }
    Some(-cov / var)
}

/// Classifies a nonnegative term sequence as convergent, divergent, or
/// inconclusive at truncation `terms.len()`.
///
/// Rules fire in a fixed order: exact zero tail, overflow, sum cap,
/// non-vanishing terms, geometric envelope, Cauchy stabilization,
/// stable log-log slope, visible partial-sum growth. NaN or negative
/// terms are domain errors, not verdicts.
pub fn classify(terms: &[f64], policy: &ClassifyPolicy) -> Result<SeriesVerdict> {
    let k_max = terms.len();
    if k_max == 0 {
        return Err(Error::Domain("cannot classify an empty series".into()));
    }
    let mut has_inf = false;
    for (k, &t) in terms.iter().enumerate() {
        if t.is_nan() {
            return Err(Error::NonFiniteTerm { k });
        }
        if t < 0.0 {
            return Err(Error::NegativeTerm { k, value: t });
        }
        has_inf |= t == f64::INFINITY;
    }

    let partial_sums = checkpoints(terms);
    let tail_start = (3 * k_max).div_ceil(4);
    let half_start = k_max / 2;
    let verdict = |class, rationale, tail_slope| SeriesVerdict {
        class,
        rationale,
        partial_sums: partial_sums.clone(),
        tail_slope,
        k_max,
    };

    if tail_start < k_max && terms[tail_start..].iter().all(|&t| t == 0.0) {
        return Ok(verdict(SeriesClass::Convergent, Rationale::TermsEventuallyZero, None));
    }
    if has_inf {
        return Ok(verdict(SeriesClass::Divergent, Rationale::SumCapExceeded, None));
    }

    let total: f64 = terms.iter().sum();
    let sum_to = |end: usize| -> f64 { terms[..end].iter().sum() };
    if total > policy.sum_cap {
        return Ok(verdict(SeriesClass::Divergent, Rationale::SumCapExceeded, None));
    }

    let max_global = terms.iter().cloned().fold(0.0f64, f64::max);
    let max_last = terms[tail_start.min(k_max)..].iter().cloned().fold(0.0f64, f64::max);
    if max_last > 0.0 && max_last >= policy.no_zero_rel * max_global {
        return Ok(verdict(SeriesClass::Divergent, Rationale::TermsNotVanishing, None));
    }

    let mut log_root_max = f64::NEG_INFINITY;
    for (k, &t) in terms.iter().enumerate().skip(half_start.max(1)) {
        if t > 0.0 {
            log_root_max = log_root_max.max(t.ln() / k as f64);
        }
    }
    if log_root_max.is_finite() && log_root_max.exp() <= 1.0 - policy.geo_margin {
        return Ok(verdict(SeriesClass::Convergent, Rationale::GeometricEnvelope, None));
    }

    let tail_increment = total - sum_to(tail_start);
    if tail_increment <= policy.cauchy_eps * (1.0 + total) {
        return Ok(verdict(SeriesClass::Convergent, Rationale::PartialSumsStabilized, None));
    }

    let slope_half = ls_decay_exponent(terms, half_start, policy.min_slope_points);
    let slope_quarter = ls_decay_exponent(terms, k_max / 4, policy.min_slope_points);
    let slope_eighth = ls_decay_exponent(terms, k_max / 8, policy.min_slope_points);
    if let (Some(s2), Some(s1), Some(s0)) = (slope_eighth, slope_quarter, slope_half) {
        let stable = (s1 - s0).abs() <= policy.slope_stability_tol * s0.abs().max(1.0)
            && (s2 - s1).abs() <= policy.slope_stability_tol * s1.abs().max(1.0);
        if stable {
            if s0 >= 1.0 + policy.slope_margin {
                return Ok(verdict(SeriesClass::Convergent, Rationale::SlopeConvergent, slope_half));
            }
            if s0 <= 1.0 - policy.slope_margin {
                return Ok(verdict(SeriesClass::Divergent, Rationale::SlopeDivergent, slope_half));
            }
        }
    }

    let half_increment = total - sum_to(half_start);
    if total > 0.0 && half_increment / total >= policy.growth_rel {
        return Ok(verdict(SeriesClass::Divergent, Rationale::GrowingPartialSums, slope_half));
    }

    Ok(verdict(SeriesClass::Inconclusive, Rationale::NoRuleFired, slope_half))
}

/// What to do with an inconclusive probe during bisection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InconclusivePolicy {
    /// Treat it as divergent, pushing the estimate down.
    ConservativeDown,
    /// Treat it as convergent, pushing the estimate up.
    ConservativeUp,
}

/// Bisection policy for abscissa estimation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BisectPolicy {
    pub x_lo: f64,
    pub x_hi: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub inconclusive: InconclusivePolicy,
    pub classify: ClassifyPolicy,
}

impl Default for BisectPolicy {
    fn default() -> BisectPolicy {
        BisectPolicy {
            x_lo: -50.0,
            x_hi: 50.0,
            tol: 0.01,
            max_iter: 60,
            inconclusive: InconclusivePolicy::ConservativeDown,
            classify: ClassifyPolicy::default(),
        }
    }
}

/// One probe of the bisection: the raw verdict at abscissa x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRecord {
    pub x: f64,
    pub class: SeriesClass,
    pub rationale: Rationale,
}

/// A bisection estimate of an abscissa.
///
/// A finite value is the upper edge of the final bracket: the smallest
/// probed x whose series classified (effectively) divergent. The
/// sentinels mean the whole probe range classified one way.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbscissaEstimate {
    pub value: XReal,
    pub bracket: Option<(f64, f64)>,
    pub probes: Vec<ProbeRecord>,
    pub iterations: usize,
}

/// Bisects for the abscissa separating convergent from divergent
/// behavior, given a classifier for each probe point.
pub fn bisect_abscissa<F>(mut classify_at: F, policy: &BisectPolicy) -> Result<AbscissaEstimate>
where
    F: FnMut(f64) -> Result<SeriesVerdict>,
{
    if policy.x_lo.partial_cmp(&policy.x_hi) != Some(std::cmp::Ordering::Less) || policy.tol < 0.0
    {
        return Err(Error::InvalidParameter(format!(
            "bisection range [{}, {}] with tol {}",
            policy.x_lo, policy.x_hi, policy.tol
        )));
    }
    let mut probes = Vec::new();
    let mut probe = |x: f64, probes: &mut Vec<ProbeRecord>| -> Result<bool> {
        let verdict = classify_at(x)?;
        probes.push(ProbeRecord { x, class: verdict.class, rationale: verdict.rationale });
        Ok(match verdict.class {
            SeriesClass::Convergent => true,
            SeriesClass::Divergent => false,
            SeriesClass::Inconclusive => {
                policy.inconclusive == InconclusivePolicy::ConservativeUp
            }
        })
    };

    if probe(policy.x_hi, &mut probes)? {
        return Ok(AbscissaEstimate {
            value: XReal::POS_INF,
            bracket: None,
            probes,
            iterations: 0,
        });
    }
    if !probe(policy.x_lo, &mut probes)? {
        return Ok(AbscissaEstimate {
            value: XReal::NEG_INF,
            bracket: None,
            probes,
            iterations: 0,
        });
    }

    let mut lo = policy.x_lo;
    let mut hi = policy.x_hi;
    let mut iterations = 0usize;
    while hi - lo > policy.tol && iterations < policy.max_iter {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut probes)? {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(AbscissaEstimate {
        value: XReal::finite(hi),
        bracket: Some((lo, hi)),
        probes,
        iterations,
    })
}

fn terms_at(lambdas: &[f64], neg_logs: &[f64], x: f64) -> Vec<f64> {
    lambdas.iter().zip(neg_logs).map(|(&lambda, &mu)| (x * lambda - mu).exp()).collect()
}

/// The terms `|f_k| exp(x lambda_k)` of the modulus series at abscissa x.
pub fn dirichlet_terms(
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    x: f64,
) -> Result<Vec<f64>> {
    Ok(terms_at(&draw.lambdas, &draw.neg_log_seq(coefficient)?, x))
}

/// Estimates the abscissa of absolute convergence by bisection on the
/// classifier.
pub fn sigma_abs(
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    policy: &BisectPolicy,
) -> Result<AbscissaEstimate> {
    let neg_logs = draw.neg_log_seq(coefficient)?;
    bisect_abscissa(
        |x| classify(&terms_at(&draw.lambdas, &neg_logs, x), &policy.classify),
        policy,
    )
}

/// Estimates the abscissa of convergence.
///
/// Coefficient laws here produce positive moduli, so the series of
/// signed terms at real z coincides with the modulus series and the two
/// abscissas agree term for term; this runs the same pipeline and is
/// asserted bit-identical to [`sigma_abs`] in tests.
pub fn sigma_conv(
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    policy: &BisectPolicy,
) -> Result<AbscissaEstimate> {
    sigma_abs(coefficient, draw, policy)
}

/// Classifies the weighted coefficient series
/// `sum_k |f_k|^(1-gamma) exp(-delta lambda_k)`.
pub fn weighted_series(
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    gamma: f64,
    delta: f64,
    policy: &ClassifyPolicy,
) -> Result<SeriesVerdict> {
    if !gamma.is_finite() || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma={gamma}, delta={delta}")));
    }
    let neg_logs = draw.neg_log_seq(coefficient)?;
    let terms: Vec<f64> = draw
        .lambdas
        .iter()
        .zip(&neg_logs)
        .map(|(&lambda, &mu)| ((gamma - 1.0) * mu - delta * lambda).exp())
        .collect();
    classify(&terms, policy)
}

/// The lower bound `gamma * alpha0 - delta` on the abscissa of absolute
/// convergence, available only when the weighted series at
/// `(gamma, delta)` classifies Convergent; `None` otherwise.
pub fn weighted_series_lower_bound(
    gamma: f64,
    delta: f64,
    alpha0: XReal,
    weighted: &SeriesVerdict,
) -> Result<Option<XReal>> {
    if !gamma.is_finite() || gamma <= 0.0 || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma={gamma}, delta={delta}")));
    }
    if weighted.class != SeriesClass::Convergent {
        return Ok(None);
    }
    crate::tail::weighted_lower_bound(gamma, delta, alpha0).map(Some)
}
