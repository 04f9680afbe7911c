//! Borel-Cantelli criterion sums and the bounds they imply.
//!
//! Each criterion turns an exponent law and a coefficient law into a
//! nonnegative term sequence, classifies the series with
//! [`crate::series::classify`], and maps `(criterion, class)` through a fixed
//! table to an [`ImpliedBound`]. Sufficient conditions yield positive bounds
//! on divergence-free classifications; necessary conditions yield refutations
//! when their sums diverge and never yield a positive bound.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{f_plus_zero_on, CdfModel};
use crate::error::{Error, Result};
use crate::law::{CoefficientLaw, ExponentLaw, TrialDraw};
use crate::series::{classify, Checkpoint, ClassifyPolicy, Rationale, SeriesClass, SeriesVerdict};
use crate::tail::{counting_function, tail_inf_estimate, CountingFn, WindowSchedule};
use crate::xreal::XReal;

/// Names one criterion sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionId {
    Thm3i,
    Thm3ii,
    Thm4i,
    Thm4ii,
    Remark3,
    Cor1,
    Cor2,
    Cor3,
    Cor4,
    Thm1a,
    Thm1b,
    Thm2a,
    Thm2b,
}

impl CriterionId {
    /// Every criterion, in report order.
    pub const ALL: [CriterionId; 13] = [
        CriterionId::Thm3i,
        CriterionId::Thm3ii,
        CriterionId::Thm4i,
        CriterionId::Thm4ii,
        CriterionId::Remark3,
        CriterionId::Cor1,
        CriterionId::Cor2,
        CriterionId::Cor3,
        CriterionId::Cor4,
        CriterionId::Thm1a,
        CriterionId::Thm1b,
        CriterionId::Thm2a,
        CriterionId::Thm2b,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CriterionId::Thm3i => "thm3i",
            CriterionId::Thm3ii => "thm3ii",
            CriterionId::Thm4i => "thm4i",
            CriterionId::Thm4ii => "thm4ii",
            CriterionId::Remark3 => "remark3",
            CriterionId::Cor1 => "cor1",
            CriterionId::Cor2 => "cor2",
            CriterionId::Cor3 => "cor3",
            CriterionId::Cor4 => "cor4",
            CriterionId::Thm1a => "thm1a",
            CriterionId::Thm1b => "thm1b",
            CriterionId::Thm2a => "thm2a",
            CriterionId::Thm2b => "thm2b",
        }
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<CriterionId> {
        CriterionId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown criterion `{s}`")))
    }
}

/// The statement a divergent necessary-condition sum rules out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "claim", rename_all = "snake_case")]
pub enum RefutedClaim {
    /// `sigma > level` almost surely is refuted.
    SigmaAbove { level: XReal },
    /// `sigma = -inf` almost surely is refuted.
    SigmaEqNegInf,
}

/// What a criterion verdict says about the abscissa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImpliedBound {
    SigmaGeq { level: XReal },
    SigmaLeq { level: XReal },
    SigmaEq { level: XReal },
    NecessaryHolds,
    NecessaryFails { refuted: RefutedClaim },
    NotApplicable,
}

fn fmt_level(level: XReal) -> String {
    if level.is_finite() {
        format!("{:.8e}", level.get())
    } else {
        level.to_string()
    }
}

impl ImpliedBound {
    /// Compact label used in criteria.csv.
    pub fn csv_label(&self) -> String {
        match self {
            ImpliedBound::SigmaGeq { level } => format!("sigma>={}", fmt_level(*level)),
            ImpliedBound::SigmaLeq { level } => format!("sigma<={}", fmt_level(*level)),
            ImpliedBound::SigmaEq { level } => format!("sigma={}", fmt_level(*level)),
            ImpliedBound::NecessaryHolds => "necessary-holds".to_string(),
            ImpliedBound::NecessaryFails { refuted } => match refuted {
                RefutedClaim::SigmaAbove { level } => {
                    format!("refutes sigma>{}", fmt_level(*level))
                }
                RefutedClaim::SigmaEqNegInf => "refutes sigma=-inf".to_string(),
            },
            ImpliedBound::NotApplicable => "not-applicable".to_string(),
        }
    }
}

/// Levels feeding the `(criterion, class) -> ImpliedBound` table.
///
/// `rho` is the criterion's nominal level, `refuted` the sharp level a
/// divergent necessary sum rules out, `upper` the level a divergent
/// sufficient-for-upper sum establishes.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoundLevels {
    pub rho: Option<f64>,
    pub refuted: Option<f64>,
    pub upper: Option<f64>,
}

fn need(level: Option<f64>, what: &str, id: CriterionId) -> Result<XReal> {
    let v = level
        .ok_or_else(|| Error::InvalidParameter(format!("criterion {id} needs a {what} level")))?;
    Ok(XReal::finite(v))
}

/// The fixed table mapping a criterion verdict to its implied bound.
///
/// Necessary conditions (thm3i, thm3ii, remark3, thm1a, thm2b) report
/// `NecessaryHolds` on convergence of the sum they require to be finite
/// (divergence of the one they require to be infinite) and a refutation the
/// other way; they never produce a positive bound. Sufficient conditions
/// (thm4i, thm4ii, cor3, thm2a give lower bounds; thm1b an upper bound;
/// cor1, cor2, cor4 the equality `sigma = 0`) produce their bound only on
/// the triggering class and `NotApplicable` otherwise.
pub fn implied_bound(
    id: CriterionId,
    class: SeriesClass,
    levels: BoundLevels,
) -> Result<ImpliedBound> {
    use CriterionId as C;
    use SeriesClass::{Convergent, Divergent};

    let bound = match (id, class) {
        (C::Thm3i | C::Thm3ii, Convergent) => ImpliedBound::NecessaryHolds,
        (C::Thm3i | C::Thm3ii, Divergent) => ImpliedBound::NecessaryFails {
            refuted: RefutedClaim::SigmaAbove {
                level: need(levels.refuted, "refuted", id)?,
            },
        },
        (C::Thm4i | C::Thm4ii | C::Cor3 | C::Thm2a, Convergent) => ImpliedBound::SigmaGeq {
            level: need(levels.rho, "rho", id)?,
        },
        (C::Remark3, Convergent) => ImpliedBound::NecessaryHolds,
        (C::Remark3, Divergent) => ImpliedBound::NecessaryFails {
            refuted: RefutedClaim::SigmaAbove {
                level: need(levels.rho, "rho", id)?,
            },
        },
        (C::Cor1 | C::Cor2 | C::Cor4, Divergent) => ImpliedBound::SigmaEq {
            level: XReal::finite(0.0),
        },
        (C::Thm1a, Convergent) => ImpliedBound::NecessaryHolds,
        (C::Thm1a, Divergent) => ImpliedBound::NecessaryFails {
            refuted: RefutedClaim::SigmaAbove {
                level: need(levels.refuted, "refuted", id)?,
            },
        },
        (C::Thm1b, Divergent) => ImpliedBound::SigmaLeq {
            level: need(levels.upper, "upper", id)?,
        },
        (C::Thm2b, Convergent) => ImpliedBound::NecessaryFails {
            refuted: RefutedClaim::SigmaEqNegInf,
        },
        (C::Thm2b, Divergent) => ImpliedBound::NecessaryHolds,
        _ => ImpliedBound::NotApplicable,
    };
    Ok(bound)
}

/// Vanishing epsilon schedule for the sufficient-condition sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsSchedule {
    /// `eps_k = 1 / ln(k + e)`; equals 1 at k = 0 and decays to 0.
    #[default]
    InvLog,
}

impl EpsSchedule {
    pub fn eval(self, k: usize) -> f64 {
        match self {
            EpsSchedule::InvLog => 1.0 / (k as f64 + std::f64::consts::E).ln(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EpsSchedule::InvLog => "eps_k=1/ln(k+e)",
        }
    }
}

/// Which half of a two-sided theorem a sum evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SumSide {
    /// rho > 0 side, terms `1 - F_k(...)`.
    Upper,
    /// rho <= 0 side, terms `F_k(...)`.
    Lower,
}

/// One evaluated criterion: parameters, term-sum verdict, implied bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: CriterionId,
    pub rho: Option<XReal>,
    pub eps_policy: String,
    pub term_trace: Vec<Checkpoint>,
    pub verdict: SeriesVerdict,
    pub implied_bound: ImpliedBound,
    #[serde(rename = "partial_sum_at_K")]
    pub partial_sum_at_k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn finish(
    criterion: CriterionId,
    rho: Option<f64>,
    eps_policy: String,
    terms: &[f64],
    levels: BoundLevels,
    note: Option<String>,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    let verdict = classify(terms, policy)?;
    let implied_bound = implied_bound(criterion, verdict.class, levels)?;
    Ok(CriterionReport {
        criterion,
        rho: rho.map(XReal::finite),
        eps_policy,
        term_trace: verdict.partial_sums.clone(),
        partial_sum_at_k: verdict.total().get(),
        implied_bound,
        verdict,
        note,
    })
}

/// Report for a criterion whose hypotheses fail: the term trace (when
/// computable) is kept for inspection but the verdict is Inconclusive and
/// no bound is claimed.
fn hypotheses_fail(
    criterion: CriterionId,
    rho: Option<f64>,
    eps_policy: String,
    terms: &[f64],
    note: String,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    let (partial_sums, partial_sum_at_k, k_max) = if terms.is_empty() {
        (Vec::new(), 0.0, 0)
    } else {
        let probe = classify(terms, policy)?;
        let total = probe.total().get();
        (probe.partial_sums, total, probe.k_max)
    };
    Ok(CriterionReport {
        criterion,
        rho: rho.map(XReal::finite),
        eps_policy,
        term_trace: partial_sums.clone(),
        verdict: SeriesVerdict {
            class: SeriesClass::Inconclusive,
            rationale: Rationale::HypothesesFail,
            partial_sums,
            tail_slope: None,
            k_max,
        },
        implied_bound: ImpliedBound::NotApplicable,
        partial_sum_at_k,
        note: Some(note),
    })
}

fn require_deterministic_coefficient(coefficient: &CoefficientLaw, id: CriterionId) -> Result<()> {
    if coefficient.is_deterministic() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "criterion {id} needs a deterministic coefficient law"
        )))
    }
}

fn require_random_coefficient(coefficient: &CoefficientLaw, id: CriterionId) -> Result<()> {
    if coefficient.is_deterministic() {
        Err(Error::InvalidParameter(format!(
            "criterion {id} needs a random-modulus coefficient law"
        )))
    } else {
        Ok(())
    }
}

fn require_deterministic_exponent(exponent: &ExponentLaw, id: CriterionId) -> Result<()> {
    if exponent.is_deterministic() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "criterion {id} needs a deterministic exponent sequence"
        )))
    }
}

fn check_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter(format!("{what} must be finite")))
    }
}

fn delta_grid_label(grid: &[f64]) -> String {
    match (grid.first(), grid.last()) {
        (Some(first), Some(last)) => format!("delta_grid={first:.0e}..{last:.0e}"),
        _ => "delta_grid=empty".to_string(),
    }
}

/// Necessary-condition sum for `sigma >= rho > 0`:
/// terms `1 - F_k(mu_k / (rho - eps))` with `mu_k = -ln|f_k|`.
///
/// Convergence is what the condition demands; divergence refutes
/// `sigma > rho - eps` almost surely.
pub fn thm3_upper_sum(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    rho: f64,
    eps: f64,
    k_max: usize,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    require_deterministic_coefficient(coefficient, CriterionId::Thm3i)?;
    check_finite(rho, "rho")?;
    check_finite(eps, "eps")?;
    if rho <= 0.0 {
        return Err(Error::Domain(format!("thm3i needs rho > 0, got {rho}")));
    }
    if eps <= 0.0 || eps >= rho {
        return Err(Error::Domain(format!(
            "thm3i needs eps in (0, rho), got eps = {eps} with rho = {rho}"
        )));
    }
    let denom = rho - eps;
    let terms: Vec<f64> = (0..k_max)
        .map(|k| {
            let mu = coefficient.neg_log_at(k)?;
            Ok(1.0 - exponent.cdf_at(k, mu / denom))
        })
        .collect::<Result<_>>()?;
    finish(
        CriterionId::Thm3i,
        Some(rho),
        format!("eps={eps:.8e}"),
        &terms,
        BoundLevels {
            rho: Some(rho),
            refuted: Some(denom),
            upper: None,
        },
        None,
        policy,
    )
}

/// Necessary-condition sum for `0 >= sigma >= rho`:
/// terms `F_k(-mu_k / (eps - rho))` for `rho <= 0`, `eps > 0`.
pub fn thm3_lower_sum(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    rho: f64,
    eps: f64,
    k_max: usize,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    require_deterministic_coefficient(coefficient, CriterionId::Thm3ii)?;
    check_finite(rho, "rho")?;
    check_finite(eps, "eps")?;
    if rho > 0.0 {
        return Err(Error::Domain(format!("thm3ii needs rho <= 0, got {rho}")));
    }
    if eps <= 0.0 {
        return Err(Error::Domain(format!("thm3ii needs eps > 0, got {eps}")));
    }
    let denom = eps - rho;
    let terms: Vec<f64> = (0..k_max)
        .map(|k| {
            let mu = coefficient.neg_log_at(k)?;
            Ok(exponent.cdf_at(k, -mu / denom))
        })
        .collect::<Result<_>>()?;
    finish(
        CriterionId::Thm3ii,
        Some(rho),
        format!("eps={eps:.8e}"),
        &terms,
        BoundLevels {
            rho: Some(rho),
            refuted: Some(rho - eps),
            upper: None,
        },
        None,
        policy,
    )
}

/// Sufficient-condition sum with a vanishing epsilon schedule: convergence
/// establishes `sigma >= rho` almost surely.
///
/// `SumSide::Upper` needs `rho > 0` and sums `1 - F_k(-mu_k / (-rho + eps_k))`;
/// `SumSide::Lower` needs `rho <= 0` and sums `F_k(-mu_k / (-rho + eps_k))`.
/// A schedule step with `-rho + eps_k = 0` contributes the worst-case term 1.
pub fn thm4_sum(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    rho: f64,
    schedule: EpsSchedule,
    side: SumSide,
    k_max: usize,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    let id = match side {
        SumSide::Upper => CriterionId::Thm4i,
        SumSide::Lower => CriterionId::Thm4ii,
    };
    require_deterministic_coefficient(coefficient, id)?;
    check_finite(rho, "rho")?;
    match side {
        SumSide::Upper if rho <= 0.0 => {
            return Err(Error::Domain(format!("thm4i needs rho > 0, got {rho}")));
        }
        SumSide::Lower if rho > 0.0 => {
            return Err(Error::Domain(format!("thm4ii needs rho <= 0, got {rho}")));
        }
        _ => {}
    }
    let mut hit_zero_denominator = false;
    let terms: Vec<f64> = (0..k_max)
        .map(|k| {
            let mu = coefficient.neg_log_at(k)?;
            let denom = -rho + schedule.eval(k);
            if denom == 0.0 {
                hit_zero_denominator = true;
                return Ok(1.0);
            }
            let threshold = -mu / denom;
            Ok(match side {
                SumSide::Upper => 1.0 - exponent.cdf_at(k, threshold),
                SumSide::Lower => exponent.cdf_at(k, threshold),
            })
        })
        .collect::<Result<_>>()?;
    let note = hit_zero_denominator
        .then(|| "a schedule step hit -rho + eps_k = 0; that term is taken as 1".to_string());
    finish(
        id,
        Some(rho),
        schedule.label().to_string(),
        &terms,
        BoundLevels {
            rho: Some(rho),
            refuted: None,
            upper: None,
        },
        note,
        policy,
    )
}

/// Necessary-condition sum at the exact level `rho >= 0`.
///
/// For `rho > 0` the terms are `1 - F_k(mu_k / rho)`; at the boundary
/// `rho = 0` the terms are `1 - F_k(+0)` with each limit taken over the
/// delta grid. Divergence refutes `sigma > rho` almost surely.
pub fn remark3_sum(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    rho: f64,
    k_max: usize,
    delta_grid: &[f64],
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    require_deterministic_coefficient(coefficient, CriterionId::Remark3)?;
    check_finite(rho, "rho")?;
    if rho < 0.0 {
        return Err(Error::Domain(format!("remark3 needs rho >= 0, got {rho}")));
    }
    if rho > 0.0 {
        let terms: Vec<f64> = (0..k_max)
            .map(|k| {
                let mu = coefficient.neg_log_at(k)?;
                Ok(1.0 - exponent.cdf_at(k, mu / rho))
            })
            .collect::<Result<_>>()?;
        return finish(
            CriterionId::Remark3,
            Some(rho),
            "none".to_string(),
            &terms,
            BoundLevels {
                rho: Some(rho),
                refuted: None,
                upper: None,
            },
            None,
            policy,
        );
    }
    let mut terms = Vec::with_capacity(k_max);
    for k in 0..k_max {
        match f_plus_zero_on(&exponent.model_at(k), delta_grid) {
            Some(fp0) => terms.push(1.0 - fp0),
            None => {
                return hypotheses_fail(
                    CriterionId::Remark3,
                    Some(rho),
                    delta_grid_label(delta_grid),
                    &terms,
                    format!("F_{k}(+0) did not stabilize within 1e-6 on the delta grid"),
                    policy,
                );
            }
        }
    }
    finish(
        CriterionId::Remark3,
        Some(rho),
        delta_grid_label(delta_grid),
        &terms,
        BoundLevels {
            rho: Some(rho),
            refuted: None,
            upper: None,
        },
        Some("boundary-case: terms are F(+0) limits over the delta grid".to_string()),
        policy,
    )
}

/// Checks the hypotheses `liminf F_k(+0) < 1` and `f_k -> 0` and evaluates
/// the sum of `1 - F_k(+0)`; divergence carries the claim `sigma = 0`.
///
/// The note records the window-trace estimate of `liminf F_k(+0)` so the
/// claim can be confronted with the Monte Carlo abscissa estimates.
pub fn cor1_check(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    k_max: usize,
    delta_grid: &[f64],
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    let f_to_zero = coefficient.f_tends_to_zero().ok_or_else(|| {
        Error::InvalidParameter("cor1 needs a deterministic coefficient law".to_string())
    })?;
    let mut limits = Vec::with_capacity(k_max);
    let mut terms = Vec::with_capacity(k_max);
    for k in 0..k_max {
        match f_plus_zero_on(&exponent.model_at(k), delta_grid) {
            Some(fp0) => {
                limits.push(Some(fp0));
                terms.push(1.0 - fp0);
            }
            None => {
                return hypotheses_fail(
                    CriterionId::Cor1,
                    None,
                    delta_grid_label(delta_grid),
                    &terms,
                    format!("F_{k}(+0) did not stabilize within 1e-6 on the delta grid"),
                    policy,
                );
            }
        }
    }
    if !f_to_zero {
        return hypotheses_fail(
            CriterionId::Cor1,
            None,
            delta_grid_label(delta_grid),
            &terms,
            "hypothesis f_k -> 0 fails for this coefficient sequence".to_string(),
            policy,
        );
    }
    let liminf = tail_inf_estimate(&limits, &WindowSchedule::default())?;
    finish(
        CriterionId::Cor1,
        None,
        delta_grid_label(delta_grid),
        &terms,
        BoundLevels::default(),
        Some(format!(
            "liminf F(+0) estimate {}; f_k -> 0 holds",
            fmt_level(liminf.value)
        )),
        policy,
    )
}

/// Verifies `F_k(x) <= F_a(x)` for all `k < k_max` on a probe grid drawn
/// from the quantiles of the dominating law.
pub fn cor2_domination(
    exponent: &ExponentLaw,
    dominating: &CdfModel,
    k_max: usize,
    grid_points: usize,
) -> Result<bool> {
    dominating.validate()?;
    if grid_points == 0 {
        return Err(Error::InvalidParameter(
            "cor2 domination grid needs at least one point".to_string(),
        ));
    }
    let mut grid: Vec<f64> = (1..=grid_points)
        .map(|i| dominating.quantile(i as f64 / (grid_points as f64 + 1.0)))
        .collect();
    grid.push(dominating.quantile(1.0 - 1e-9));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for k in 0..k_max {
        for &x in &grid {
            if exponent.cdf_at(k, x) > dominating.cdf(x) + 1e-9 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Full Cor2 report: when the domination gate and `f_k -> 0` hold, the
/// constant sum of `1 - F_a(+0)` decides the claim `sigma = 0`.
pub fn cor2_report(
    exponent: &ExponentLaw,
    dominating: &CdfModel,
    coefficient: &CoefficientLaw,
    k_max: usize,
    grid_points: usize,
    delta_grid: &[f64],
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    let f_to_zero = coefficient.f_tends_to_zero().ok_or_else(|| {
        Error::InvalidParameter("cor2 needs a deterministic coefficient law".to_string())
    })?;
    let eps_policy = delta_grid_label(delta_grid);
    let Some(fa0) = f_plus_zero_on(dominating, delta_grid) else {
        return hypotheses_fail(
            CriterionId::Cor2,
            None,
            eps_policy,
            &[],
            "F_a(+0) did not stabilize within 1e-6 on the delta grid".to_string(),
            policy,
        );
    };
    let terms = vec![1.0 - fa0; k_max];
    if !cor2_domination(exponent, dominating, k_max, grid_points)? {
        return hypotheses_fail(
            CriterionId::Cor2,
            None,
            eps_policy,
            &terms,
            "domination F_k <= F_a fails on the probe grid".to_string(),
            policy,
        );
    }
    if !f_to_zero {
        return hypotheses_fail(
            CriterionId::Cor2,
            None,
            eps_policy,
            &terms,
            "hypothesis f_k -> 0 fails for this coefficient sequence".to_string(),
            policy,
        );
    }
    finish(
        CriterionId::Cor2,
        None,
        eps_policy,
        &terms,
        BoundLevels::default(),
        Some(format!(
            "domination holds on the probe grid; F_a(+0) = {fa0:.8e}"
        )),
        policy,
    )
}

/// Both evaluation routes for the Corollary 3 integral plus its report.
#[derive(Debug, Clone, Serialize)]
pub struct Cor3Routes {
    pub sum_route: f64,
    pub quadrature_route: f64,
    pub report: CriterionReport,
}

/// Riemann-Stieltjes value of `integral n_mu(t * rho) dF_b(t)` computed on
/// the quantile scale: cells of `u in [1e-12, 1 - 1e-12]` are split until
/// the step integrand agrees at both ends or the cell is 1e-10 wide.
fn counting_integral(counting: &CountingFn, f_b: &CdfModel, rho: f64) -> f64 {
    let g = |u: f64| counting.eval(f_b.quantile(u) * rho) as f64;
    let (u_lo, u_hi) = (1e-12, 1.0 - 1e-12);
    let mut total = 0.0;
    let mut stack = vec![(u_lo, u_hi, g(u_lo), g(u_hi))];
    while let Some((a, b, ga, gb)) = stack.pop() {
        if ga == gb {
            total += ga * (b - a);
        } else if b - a < 1e-10 {
            total += 0.5 * (ga + gb) * (b - a);
        } else {
            let mid = 0.5 * (a + b);
            let gm = g(mid);
            stack.push((a, mid, ga, gm));
            stack.push((mid, b, gm, gb));
        }
    }
    total
}

/// Evaluates Corollary 3 along two routes that must agree: the truncated
/// sum `Sum_k (1 - F_b(mu_k / rho))` and the quadrature of the counting
/// function of `mu` against the minorant law.
///
/// Convergence of the sum route establishes `sigma >= rho`; the minorant
/// property `F_k >= F_b` is the caller's hypothesis and is not checked here.
pub fn cor3_integral(
    f_b: &CdfModel,
    coefficient: &CoefficientLaw,
    rho: f64,
    k_max: usize,
    policy: &ClassifyPolicy,
) -> Result<Cor3Routes> {
    require_deterministic_coefficient(coefficient, CriterionId::Cor3)?;
    f_b.validate()?;
    check_finite(rho, "rho")?;
    if rho <= 0.0 {
        return Err(Error::Domain(format!("cor3 needs rho > 0, got {rho}")));
    }
    let terms: Vec<f64> = (0..k_max)
        .map(|k| {
            let mu = coefficient.neg_log_at(k)?;
            Ok(1.0 - f_b.cdf(mu / rho))
        })
        .collect::<Result<_>>()?;
    let sum_route: f64 = terms.iter().sum();
    let counting = counting_function(coefficient, k_max)?;
    let quadrature_route = counting_integral(&counting, f_b, rho);
    let report = finish(
        CriterionId::Cor3,
        Some(rho),
        "none".to_string(),
        &terms,
        BoundLevels {
            rho: Some(rho),
            refuted: None,
            upper: None,
        },
        Some(format!(
            "sum route {sum_route:.8e}; quadrature route {quadrature_route:.8e}"
        )),
        policy,
    )?;
    Ok(Cor3Routes {
        sum_route,
        quadrature_route,
        report,
    })
}

/// Gate for Corollary 4: true iff the drawn exponents are nondecreasing.
pub fn cor4_monotone_check(draw: &TrialDraw) -> bool {
    draw.lambdas.windows(2).all(|pair| pair[0] <= pair[1])
}

/// Full Cor4 report: under a nondecreasing draw and `f_k -> 0`, the constant
/// sum of `1 - F_0(+0)` decides the claim `sigma = 0`.
pub fn cor4_report(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    draw: &TrialDraw,
    delta_grid: &[f64],
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    let f_to_zero = coefficient.f_tends_to_zero().ok_or_else(|| {
        Error::InvalidParameter("cor4 needs a deterministic coefficient law".to_string())
    })?;
    let eps_policy = delta_grid_label(delta_grid);
    let Some(fp0) = f_plus_zero_on(&exponent.model_at(0), delta_grid) else {
        return hypotheses_fail(
            CriterionId::Cor4,
            None,
            eps_policy,
            &[],
            "F_0(+0) did not stabilize within 1e-6 on the delta grid".to_string(),
            policy,
        );
    };
    let terms = vec![1.0 - fp0; draw.k_max];
    if !cor4_monotone_check(draw) {
        return hypotheses_fail(
            CriterionId::Cor4,
            None,
            eps_policy,
            &terms,
            "drawn exponent sequence is not nondecreasing".to_string(),
            policy,
        );
    }
    if !f_to_zero {
        return hypotheses_fail(
            CriterionId::Cor4,
            None,
            eps_policy,
            &terms,
            "hypothesis f_k -> 0 fails for this coefficient sequence".to_string(),
            policy,
        );
    }
    finish(
        CriterionId::Cor4,
        None,
        eps_policy,
        &terms,
        BoundLevels::default(),
        Some(format!(
            "draw is nondecreasing; F_0(+0) = {fp0:.8e}; f_k -> 0 holds"
        )),
        policy,
    )
}

/// Necessary-condition sum for deterministic exponents and random moduli:
/// terms `1 - F*_k((e^{-rho} + eps)^{lambda_k})`, `eps > 0`.
///
/// Divergence refutes `sigma > -ln(e^{-rho} + eps)` almost surely.
pub fn thm1a_sum(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    rho: f64,
    eps: f64,
    k_max: usize,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    require_deterministic_exponent(exponent, CriterionId::Thm1a)?;
    require_random_coefficient(coefficient, CriterionId::Thm1a)?;
    check_finite(rho, "rho")?;
    check_finite(eps, "eps")?;
    if eps <= 0.0 {
        return Err(Error::Domain(format!("thm1a needs eps > 0, got {eps}")));
    }
    let base = (-rho).exp() + eps;
    let terms: Vec<f64> = (0..k_max)
        .map(|k| {
            let lambda = exponent.deterministic_at(k)?;
            Ok(1.0 - coefficient.modulus_cdf_at(k, base.powf(lambda))?)
        })
        .collect::<Result<_>>()?;
    finish(
        CriterionId::Thm1a,
        Some(rho),
        format!("eps={eps:.8e}"),
        &terms,
        BoundLevels {
            rho: Some(rho),
            refuted: Some(-base.ln()),
            upper: None,
        },
        None,
        policy,
    )
}

/// Sufficient condition for an upper bound: a divergent sum of
/// `1 - F*_k(delta^{lambda_k})` gives `sigma <= -ln(delta)` almost surely.
pub fn thm1b_sum(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    delta: f64,
    k_max: usize,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    require_deterministic_exponent(exponent, CriterionId::Thm1b)?;
    require_random_coefficient(coefficient, CriterionId::Thm1b)?;
    check_finite(delta, "delta")?;
    if delta <= 0.0 {
        return Err(Error::Domain(format!("thm1b needs delta > 0, got {delta}")));
    }
    let rho = -delta.ln();
    let terms: Vec<f64> = (0..k_max)
        .map(|k| {
            let lambda = exponent.deterministic_at(k)?;
            Ok(1.0 - coefficient.modulus_cdf_at(k, delta.powf(lambda))?)
        })
        .collect::<Result<_>>()?;
    finish(
        CriterionId::Thm1b,
        Some(rho),
        format!("delta={delta:.8e}"),
        &terms,
        BoundLevels {
            rho: Some(rho),
            refuted: None,
            upper: Some(rho),
        },
        None,
        policy,
    )
}

/// Sufficient condition for a lower bound with a vanishing schedule:
/// convergence of `Sum (1 - F*_k((e^{-rho} + eps_k)^{lambda_k}))`
/// establishes `sigma >= rho` almost surely.
pub fn thm2a_sum(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    rho: f64,
    schedule: EpsSchedule,
    k_max: usize,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    require_deterministic_exponent(exponent, CriterionId::Thm2a)?;
    require_random_coefficient(coefficient, CriterionId::Thm2a)?;
    check_finite(rho, "rho")?;
    let floor = (-rho).exp();
    let terms: Vec<f64> = (0..k_max)
        .map(|k| {
            let lambda = exponent.deterministic_at(k)?;
            let base = floor + schedule.eval(k);
            Ok(1.0 - coefficient.modulus_cdf_at(k, base.powf(lambda))?)
        })
        .collect::<Result<_>>()?;
    finish(
        CriterionId::Thm2a,
        Some(rho),
        schedule.label().to_string(),
        &terms,
        BoundLevels {
            rho: Some(rho),
            refuted: None,
            upper: None,
        },
        None,
        policy,
    )
}

/// Necessary condition for `sigma = -inf`: the sum of
/// `1 - F*_k(E^{lambda_k})` must diverge for every `E > 1`, so a convergent
/// sum at the given `E` refutes `sigma = -inf` almost surely.
pub fn thm2b_sum(
    exponent: &ExponentLaw,
    coefficient: &CoefficientLaw,
    big_e: f64,
    k_max: usize,
    policy: &ClassifyPolicy,
) -> Result<CriterionReport> {
    require_deterministic_exponent(exponent, CriterionId::Thm2b)?;
    require_random_coefficient(coefficient, CriterionId::Thm2b)?;
    check_finite(big_e, "E")?;
    if big_e <= 1.0 {
        return Err(Error::Domain(format!("thm2b needs E > 1, got {big_e}")));
    }
    let terms: Vec<f64> = (0..k_max)
        .map(|k| {
            let lambda = exponent.deterministic_at(k)?;
            Ok(1.0 - coefficient.modulus_cdf_at(k, big_e.powf(lambda))?)
        })
        .collect::<Result<_>>()?;
    finish(
        CriterionId::Thm2b,
        None,
        format!("E={big_e:.8e}"),
        &terms,
        BoundLevels::default(),
        None,
        policy,
    )
}
