//! Monte Carlo harness: trials, aggregation, criteria, reconciliation.
//!
//! A trial draws one exponent sequence, estimates both abscissas by
//! bisection and the tail statistics over the window schedule. Criteria are
//! evaluated once from the laws (they do not depend on draws), and each
//! implied bound is reconciled against the per-trial abscissa estimates.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::criteria::{
    cor1_check, cor2_report, cor3_integral, cor4_report, remark3_sum, thm1a_sum, thm1b_sum,
    thm2a_sum, thm2b_sum, thm3_lower_sum, thm3_upper_sum, thm4_sum, CriterionId, CriterionReport,
    EpsSchedule, ImpliedBound, RefutedClaim, SumSide,
};
use crate::dist::{CdfModel, F_PLUS_ZERO_GRID};
use crate::error::{Error, Result};
use crate::law::{sample_trial, CoefficientLaw, ExponentLaw};
use crate::series::{sigma_abs, sigma_conv, BisectPolicy, SeriesClass};
use crate::tail::{alpha0, coef_condition, h_coeff, tau, CoefCondition, Trend, WindowSchedule};
use crate::xreal::XReal;

/// Epsilon policy shared by the criterion sums: a fraction for the
/// single-epsilon necessary conditions and a vanishing schedule for the
/// sufficient ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsPolicy {
    pub fraction: f64,
    pub schedule: EpsSchedule,
}

impl Default for EpsPolicy {
    fn default() -> EpsPolicy {
        EpsPolicy {
            fraction: 0.5,
            schedule: EpsSchedule::InvLog,
        }
    }
}

/// One requested criterion evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSpec {
    pub id: CriterionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "E")]
    pub big_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_b: Option<CdfModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominating: Option<CdfModel>,
}

impl CriterionSpec {
    pub fn new(id: CriterionId) -> CriterionSpec {
        CriterionSpec {
            id,
            rho: None,
            eps: None,
            delta: None,
            big_e: None,
            f_b: None,
            dominating: None,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> CriterionSpec {
        self.rho = Some(rho);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> CriterionSpec {
        self.eps = Some(eps);
        self
    }

    fn from_value(value: &Value) -> Result<CriterionSpec> {
        let map = as_object(value, "criteria entry")?;
        let mut spec = CriterionSpec::new(
            as_str(require(map, "id", "criteria entry")?, "criteria id")?.parse()?,
        );
        for (key, entry) in map {
            match key.as_str() {
                "id" => {}
                "rho" => spec.rho = Some(as_f64(entry, "rho")?),
                "eps" => spec.eps = Some(as_f64(entry, "eps")?),
                "delta" => spec.delta = Some(as_f64(entry, "delta")?),
                "E" => spec.big_e = Some(as_f64(entry, "E")?),
                "f_b" => spec.f_b = Some(CdfModel::from_value(entry)?),
                "dominating" => spec.dominating = Some(CdfModel::from_value(entry)?),
                other => {
                    return Err(Error::Config(format!(
                        "unknown field `{other}` in criteria entry"
                    )));
                }
            }
        }
        Ok(spec)
    }
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub exponent: ExponentLaw,
    pub coefficient: CoefficientLaw,
    pub k_max: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub x_range: (f64, f64),
    pub tol: f64,
    pub windows: WindowSchedule,
    pub rho_grid: Vec<f64>,
    pub eps_policy: EpsPolicy,
    pub criteria: Vec<CriterionSpec>,
    pub out_dir: Option<PathBuf>,
    pub consistent_frac: f64,
    pub tension_frac: f64,
}

impl ExperimentConfig {
    pub fn new(exponent: ExponentLaw, coefficient: CoefficientLaw) -> ExperimentConfig {
        ExperimentConfig {
            exponent,
            coefficient,
            k_max: 10_000,
            trials: 1,
            master_seed: 0,
            x_range: (-50.0, 50.0),
            tol: 0.01,
            windows: WindowSchedule::default(),
            rho_grid: Vec::new(),
            eps_policy: EpsPolicy::default(),
            criteria: Vec::new(),
            out_dir: None,
            consistent_frac: 0.95,
            tension_frac: 0.5,
        }
    }

    /// Parses the strict JSON schema: `exponent` and `coefficient` are
    /// required, every other field has a default, unknown fields are
    /// rejected.
    pub fn from_value(value: &Value) -> Result<ExperimentConfig> {
        let map = as_object(value, "experiment config")?;
        let exponent = ExponentLaw::from_value(require(map, "exponent", "experiment config")?)?;
        let coefficient =
            CoefficientLaw::from_value(require(map, "coefficient", "experiment config")?)?;
        let mut config = ExperimentConfig::new(exponent, coefficient);
        for (key, entry) in map {
            match key.as_str() {
                "exponent" | "coefficient" => {}
                "K" => config.k_max = as_usize(entry, "K")?,
                "trials" => config.trials = as_usize(entry, "trials")?,
                "master_seed" => config.master_seed = as_u64(entry, "master_seed")?,
                "x_range" => {
                    let pair = entry.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                        Error::Config("x_range must be a two-element array".to_string())
                    })?;
                    config.x_range = (as_f64(&pair[0], "x_range[0]")?, as_f64(&pair[1], "x_range[1]")?);
                }
                "tol" => config.tol = as_f64(entry, "tol")?,
                "windows" => {
                    let divisors = entry.as_array().ok_or_else(|| {
                        Error::Config("windows must be an array of divisors".to_string())
                    })?;
                    config.windows = WindowSchedule {
                        divisors: divisors
                            .iter()
                            .map(|d| as_usize(d, "window divisor"))
                            .collect::<Result<_>>()?,
                    };
                }
                "rho_grid" => {
                    let grid = entry.as_array().ok_or_else(|| {
                        Error::Config("rho_grid must be an array of numbers".to_string())
                    })?;
                    config.rho_grid = grid
                        .iter()
                        .map(|v| as_f64(v, "rho_grid entry"))
                        .collect::<Result<_>>()?;
                }
                "eps_policy" => {
                    let policy = as_object(entry, "eps_policy")?;
                    for (pk, pv) in policy {
                        match pk.as_str() {
                            "fraction" => config.eps_policy.fraction = as_f64(pv, "fraction")?,
                            "schedule" => {
                                config.eps_policy.schedule = serde_json::from_value(pv.clone())
                                    .map_err(|e| Error::Config(format!("eps schedule: {e}")))?;
                            }
                            other => {
                                return Err(Error::Config(format!(
                                    "unknown field `{other}` in eps_policy"
                                )));
                            }
                        }
                    }
                }
                "criteria" => {
                    let entries = entry.as_array().ok_or_else(|| {
                        Error::Config("criteria must be an array".to_string())
                    })?;
                    config.criteria = entries
                        .iter()
                        .map(CriterionSpec::from_value)
                        .collect::<Result<_>>()?;
                }
                "out_dir" => {
                    config.out_dir = Some(PathBuf::from(as_str(entry, "out_dir")?));
                }
                "consistent_frac" => config.consistent_frac = as_f64(entry, "consistent_frac")?,
                "tension_frac" => config.tension_frac = as_f64(entry, "tension_frac")?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown field `{other}` in experiment config"
                    )));
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)?;
        ExperimentConfig::from_value(&value)
    }

    /// Canonical JSON echo of the config; alphabetical keys, every default
    /// spelled out, so two equal configs serialize identically.
    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("exponent".to_string(), self.exponent.to_value());
        map.insert("coefficient".to_string(), self.coefficient.to_value());
        map.insert("K".to_string(), Value::from(self.k_max as u64));
        map.insert("trials".to_string(), Value::from(self.trials as u64));
        map.insert("master_seed".to_string(), Value::from(self.master_seed));
        map.insert(
            "x_range".to_string(),
            Value::from(vec![self.x_range.0, self.x_range.1]),
        );
        map.insert("tol".to_string(), Value::from(self.tol));
        map.insert(
            "windows".to_string(),
            Value::from(
                self.windows
                    .divisors
                    .iter()
                    .map(|&d| d as u64)
                    .collect::<Vec<_>>(),
            ),
        );
        map.insert("rho_grid".to_string(), Value::from(self.rho_grid.clone()));
        map.insert(
            "eps_policy".to_string(),
            serde_json::to_value(self.eps_policy).expect("eps policy serializes"),
        );
        map.insert(
            "criteria".to_string(),
            Value::from(
                self.criteria
                    .iter()
                    .map(|spec| serde_json::to_value(spec).expect("criterion spec serializes"))
                    .collect::<Vec<_>>(),
            ),
        );
        if let Some(dir) = &self.out_dir {
            map.insert(
                "out_dir".to_string(),
                Value::from(dir.to_string_lossy().into_owned()),
            );
        }
        map.insert(
            "consistent_frac".to_string(),
            Value::from(self.consistent_frac),
        );
        map.insert("tension_frac".to_string(), Value::from(self.tension_frac));
        Value::Object(map)
    }

    pub fn validate(&self) -> Result<()> {
        self.exponent.validate()?;
        self.coefficient.validate()?;
        if self.k_max < 16 {
            return Err(Error::Config(format!("K must be >= 16, got {}", self.k_max)));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be >= 1".to_string()));
        }
        if !(self.x_range.0.is_finite() && self.x_range.1.is_finite())
            || self.x_range.0 >= self.x_range.1
        {
            return Err(Error::Config(format!(
                "x_range must be a finite increasing pair, got [{}, {}]",
                self.x_range.0, self.x_range.1
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        self.windows.starts(self.k_max)?;
        if !self.rho_grid.windows(2).all(|pair| pair[0] < pair[1]) {
            return Err(Error::Config(
                "rho_grid must be strictly increasing".to_string(),
            ));
        }
        if !self.rho_grid.iter().all(|rho| rho.is_finite()) {
            return Err(Error::Config("rho_grid entries must be finite".to_string()));
        }
        if !(self.eps_policy.fraction > 0.0 && self.eps_policy.fraction < 1.0) {
            return Err(Error::Config(format!(
                "eps fraction must sit in (0, 1), got {}",
                self.eps_policy.fraction
            )));
        }
        for bound in [self.consistent_frac, self.tension_frac] {
            if !(bound > 0.0 && bound <= 1.0) {
                return Err(Error::Config(format!(
                    "reconciliation thresholds must sit in (0, 1], got {bound}"
                )));
            }
        }
        Ok(())
    }

    fn bisect_policy(&self) -> BisectPolicy {
        BisectPolicy {
            x_lo: self.x_range.0,
            x_hi: self.x_range.1,
            tol: self.tol,
            ..BisectPolicy::default()
        }
    }
}

fn as_object<'v>(value: &'v Value, what: &str) -> Result<&'v Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| Error::Config(format!("{what} must be a JSON object")))
}

fn require<'v>(map: &'v Map<String, Value>, key: &str, what: &str) -> Result<&'v Value> {
    map.get(key)
        .ok_or_else(|| Error::Config(format!("{what} is missing required field `{key}`")))
}

fn as_f64(value: &Value, what: &str) -> Result<f64> {
    value
        .as_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("{what} must be a finite number")))
}

fn as_u64(value: &Value, what: &str) -> Result<u64> {
    value
        .as_u64()
        .ok_or_else(|| Error::Config(format!("{what} must be a nonnegative integer")))
}

fn as_usize(value: &Value, what: &str) -> Result<usize> {
    Ok(as_u64(value, what)? as usize)
}

fn as_str<'v>(value: &'v Value, what: &str) -> Result<&'v str> {
    value
        .as_str()
        .ok_or_else(|| Error::Config(format!("{what} must be a string")))
}

/// Estimates from one trial; estimator failures land in `errors` instead
/// of aborting the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub sigma_abs: Option<XReal>,
    pub sigma_conv: Option<XReal>,
    pub alpha0: Option<XReal>,
    pub tau: Option<XReal>,
    pub h: Option<XReal>,
    pub trend_alpha0: Option<Trend>,
    pub trend_tau: Option<Trend>,
    pub trend_h: Option<Trend>,
    pub errors: Vec<String>,
}

/// Runs one trial: draw, both abscissas, all tail statistics.
///
/// A pure function of `(config, trial_index)`; identical inputs produce an
/// identical record.
pub fn run_trial(config: &ExperimentConfig, trial_index: usize) -> TrialRecord {
    let draw = sample_trial(
        &config.exponent,
        &config.coefficient,
        config.master_seed,
        trial_index as u64,
        config.k_max,
    );
    let policy = config.bisect_policy();
    let mut record = TrialRecord {
        trial: trial_index,
        sigma_abs: None,
        sigma_conv: None,
        alpha0: None,
        tau: None,
        h: None,
        trend_alpha0: None,
        trend_tau: None,
        trend_h: None,
        errors: Vec::new(),
    };
    match sigma_abs(&config.coefficient, &draw, &policy) {
        Ok(estimate) => record.sigma_abs = Some(estimate.value),
        Err(e) => record.errors.push(format!("sigma_abs: {e}")),
    }
    match sigma_conv(&config.coefficient, &draw, &policy) {
        Ok(estimate) => record.sigma_conv = Some(estimate.value),
        Err(e) => record.errors.push(format!("sigma_conv: {e}")),
    }
    match alpha0(&config.coefficient, &draw, &config.windows) {
        Ok(estimate) => {
            record.alpha0 = Some(estimate.value);
            record.trend_alpha0 = Some(estimate.trend);
        }
        Err(e) => record.errors.push(format!("alpha0: {e}")),
    }
    match tau(&draw, &config.windows) {
        Ok(estimate) => {
            record.tau = Some(estimate.value);
            record.trend_tau = Some(estimate.trend);
        }
        Err(e) => record.errors.push(format!("tau: {e}")),
    }
    match h_coeff(&config.coefficient, &draw, &config.windows) {
        Ok(estimate) => {
            record.h = Some(estimate.value);
            record.trend_h = Some(estimate.trend);
        }
        Err(e) => record.errors.push(format!("h: {e}")),
    }
    record
}

/// Order statistics of one estimated quantity across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub count: usize,
    pub median: XReal,
    pub iqr: Option<f64>,
    pub min: XReal,
    pub max: XReal,
    pub frac_pos_inf: f64,
    pub frac_neg_inf: f64,
}

/// Sorts the usable values and reads off the order statistics. The median
/// of an even count averages the central pair when both are finite and
/// falls back to the lower one otherwise; the IQR is `None` whenever a
/// quartile sits at a sentinel.
pub fn quantity_stats(values: &[XReal]) -> Option<QuantityStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (lo, hi) = (sorted[n / 2 - 1], sorted[n / 2]);
        if lo.is_finite() && hi.is_finite() {
            XReal::finite(0.5 * (lo.get() + hi.get()))
        } else {
            lo
        }
    };
    let q1 = sorted[((n - 1) as f64 * 0.25).floor() as usize];
    let q3 = sorted[((n - 1) as f64 * 0.75).floor() as usize];
    let iqr = (q1.is_finite() && q3.is_finite()).then(|| q3.get() - q1.get());
    let count_if = |pred: fn(XReal) -> bool| {
        sorted.iter().filter(|v| pred(**v)).count() as f64 / n as f64
    };
    Some(QuantityStats {
        count: n,
        median,
        iqr,
        min: sorted[0],
        max: sorted[n - 1],
        frac_pos_inf: count_if(XReal::is_pos_inf),
        frac_neg_inf: count_if(XReal::is_neg_inf),
    })
}

/// Aggregated statistics for every estimated quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub sigma_abs: Option<QuantityStats>,
    pub sigma_conv: Option<QuantityStats>,
    pub alpha0: Option<QuantityStats>,
    pub tau: Option<QuantityStats>,
    pub h: Option<QuantityStats>,
}

fn collect<F: Fn(&TrialRecord) -> Option<XReal>>(trials: &[TrialRecord], get: F) -> Vec<XReal> {
    trials.iter().filter_map(get).collect()
}

pub fn aggregate(trials: &[TrialRecord]) -> Aggregates {
    Aggregates {
        sigma_abs: quantity_stats(&collect(trials, |t| t.sigma_abs)),
        sigma_conv: quantity_stats(&collect(trials, |t| t.sigma_conv)),
        alpha0: quantity_stats(&collect(trials, |t| t.alpha0)),
        tau: quantity_stats(&collect(trials, |t| t.tau)),
        h: quantity_stats(&collect(trials, |t| t.h)),
    }
}

/// Verdict of confronting one implied bound with the trial estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconStatus {
    Consistent,
    Tension,
    Inconclusive,
}

impl std::fmt::Display for ReconStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReconStatus::Consistent => "consistent",
            ReconStatus::Tension => "tension",
            ReconStatus::Inconclusive => "inconclusive",
        })
    }
}

/// Whether one abscissa estimate satisfies a bound within `3 * tol`.
/// Sentinel estimates use extended-real comparisons: `+inf` satisfies every
/// lower bound, `-inf` every upper bound. `None` means the bound makes no
/// checkable claim.
pub fn bound_check(bound: &ImpliedBound, sigma: XReal, tol: f64) -> Option<bool> {
    let slack = 3.0 * tol;
    let s = sigma.get();
    match bound {
        ImpliedBound::SigmaGeq { level } => Some(s >= level.get() - slack),
        ImpliedBound::SigmaLeq { level } => Some(s <= level.get() + slack),
        ImpliedBound::SigmaEq { level } => Some((s - level.get()).abs() <= slack),
        ImpliedBound::NecessaryFails { refuted } => match refuted {
            RefutedClaim::SigmaAbove { level } => Some(s <= level.get() + slack),
            RefutedClaim::SigmaEqNegInf => Some(!sigma.is_neg_inf()),
        },
        ImpliedBound::NecessaryHolds | ImpliedBound::NotApplicable => None,
    }
}

/// One reconciliation row: a criterion's implied bound against the trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconRow {
    pub criterion: CriterionId,
    pub rho: Option<XReal>,
    pub implied_bound: ImpliedBound,
    pub fraction_satisfied: Option<f64>,
    pub status: ReconStatus,
}

fn reconcile(
    report: &CriterionReport,
    sigmas: &[XReal],
    tol: f64,
    consistent_frac: f64,
    tension_frac: f64,
) -> ReconRow {
    let checks: Vec<bool> = sigmas
        .iter()
        .filter_map(|&sigma| bound_check(&report.implied_bound, sigma, tol))
        .collect();
    let (fraction_satisfied, status) = if checks.is_empty() {
        (None, ReconStatus::Inconclusive)
    } else {
        let satisfied = checks.iter().filter(|&&ok| ok).count() as f64 / checks.len() as f64;
        let status = if satisfied >= consistent_frac {
            ReconStatus::Consistent
        } else if 1.0 - satisfied >= tension_frac {
            ReconStatus::Tension
        } else {
            ReconStatus::Inconclusive
        };
        (Some(satisfied), status)
    };
    ReconRow {
        criterion: report.criterion,
        rho: report.rho,
        implied_bound: report.implied_bound,
        fraction_satisfied,
        status,
    }
}

/// Spread diagnostic for the zero-one-law expectation that the abscissa is
/// almost surely constant. Reported, never asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constancy {
    pub iqr_sigma_abs: Option<f64>,
    pub note: String,
}

/// One cell of the sweep table: a criterion evaluated at a grid level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub criterion: CriterionId,
    pub rho: Option<XReal>,
    pub class: SeriesClass,
    pub implied_bound: ImpliedBound,
    pub fraction_satisfied: Option<f64>,
    pub status: ReconStatus,
}

/// One sweep level: a sufficient condition trying to establish
/// `sigma >= level` and a necessary condition trying to refute
/// `sigma > level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level: f64,
    pub establish: SweepCell,
    pub refute: SweepCell,
}

/// The sweep table plus its bracketing summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub established_max: Option<f64>,
    pub refuted_min: Option<f64>,
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: Value,
    pub trials: Vec<TrialRecord>,
    pub aggregates: Aggregates,
    pub criteria: Vec<CriterionReport>,
    pub reconciliation: Vec<ReconRow>,
    pub constancy: Constancy,
    /// The slow-coefficient condition `ln k = o(-ln|f_k|)` for the
    /// configured rule; recorded for deterministic coefficients, absent in
    /// random-modulus mode. The abscissa estimates are always reported
    /// separately, so the collapse the condition predicts is checked
    /// against them rather than assumed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coef_condition: Option<CoefCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepTable>,
}

impl ExperimentReport {
    /// True when any reconciliation row or sweep cell reports Tension.
    pub fn has_tension(&self) -> bool {
        self.reconciliation
            .iter()
            .any(|row| row.status == ReconStatus::Tension)
            || self.sweep.as_ref().is_some_and(|table| {
                table.rows.iter().any(|row| {
                    row.establish.status == ReconStatus::Tension
                        || row.refute.status == ReconStatus::Tension
                })
            })
    }
}

fn forbid(
    spec: &CriterionSpec,
    field: Option<()>,
    name: &str,
) -> Result<()> {
    if field.is_some() {
        return Err(Error::Config(format!(
            "criterion {} does not use `{name}`",
            spec.id
        )));
    }
    Ok(())
}

fn need_f64(value: Option<f64>, name: &str, id: CriterionId) -> Result<f64> {
    value.ok_or_else(|| Error::Config(format!("criterion {id} needs `{name}`")))
}

/// Evaluates one criterion spec against the configured laws.
///
/// Criteria are functions of the laws, not of the draws; the single
/// exception is cor4, whose monotonicity gate inspects the trial-0 draw.
pub fn evaluate_criterion(
    config: &ExperimentConfig,
    spec: &CriterionSpec,
) -> Result<CriterionReport> {
    let policy = config.bisect_policy().classify;
    let exponent = &config.exponent;
    let coefficient = &config.coefficient;
    let k_max = config.k_max;
    let fraction = config.eps_policy.fraction;
    let schedule = config.eps_policy.schedule;
    let not_rho = |s: &CriterionSpec| forbid(s, s.rho.map(|_| ()), "rho");
    let not_eps = |s: &CriterionSpec| forbid(s, s.eps.map(|_| ()), "eps");
    let not_delta = |s: &CriterionSpec| forbid(s, s.delta.map(|_| ()), "delta");
    let not_big_e = |s: &CriterionSpec| forbid(s, s.big_e.map(|_| ()), "E");
    let not_f_b = |s: &CriterionSpec| forbid(s, s.f_b.as_ref().map(|_| ()), "f_b");
    let not_dominating = |s: &CriterionSpec| forbid(s, s.dominating.as_ref().map(|_| ()), "dominating");

    match spec.id {
        CriterionId::Thm3i => {
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let rho = need_f64(spec.rho, "rho", spec.id)?;
            let eps = spec.eps.unwrap_or(fraction * rho);
            thm3_upper_sum(exponent, coefficient, rho, eps, k_max, &policy)
        }
        CriterionId::Thm3ii => {
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let rho = need_f64(spec.rho, "rho", spec.id)?;
            let eps = spec
                .eps
                .unwrap_or(if rho == 0.0 { fraction } else { fraction * rho.abs() });
            thm3_lower_sum(exponent, coefficient, rho, eps, k_max, &policy)
        }
        CriterionId::Thm4i | CriterionId::Thm4ii => {
            not_eps(spec)?;
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let rho = need_f64(spec.rho, "rho", spec.id)?;
            let side = if spec.id == CriterionId::Thm4i {
                SumSide::Upper
            } else {
                SumSide::Lower
            };
            thm4_sum(exponent, coefficient, rho, schedule, side, k_max, &policy)
        }
        CriterionId::Remark3 => {
            not_eps(spec)?;
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let rho = need_f64(spec.rho, "rho", spec.id)?;
            remark3_sum(exponent, coefficient, rho, k_max, &F_PLUS_ZERO_GRID, &policy)
        }
        CriterionId::Cor1 => {
            not_rho(spec)?;
            not_eps(spec)?;
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            cor1_check(exponent, coefficient, k_max, &F_PLUS_ZERO_GRID, &policy)
        }
        CriterionId::Cor2 => {
            not_rho(spec)?;
            not_eps(spec)?;
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            let dominating = spec
                .dominating
                .as_ref()
                .ok_or_else(|| Error::Config("criterion cor2 needs `dominating`".to_string()))?;
            cor2_report(
                exponent,
                dominating,
                coefficient,
                k_max,
                128,
                &F_PLUS_ZERO_GRID,
                &policy,
            )
        }
        CriterionId::Cor3 => {
            not_eps(spec)?;
            not_delta(spec)?;
            not_big_e(spec)?;
            not_dominating(spec)?;
            let rho = need_f64(spec.rho, "rho", spec.id)?;
            let f_b = spec
                .f_b
                .as_ref()
                .ok_or_else(|| Error::Config("criterion cor3 needs `f_b`".to_string()))?;
            Ok(cor3_integral(f_b, coefficient, rho, k_max, &policy)?.report)
        }
        CriterionId::Cor4 => {
            not_rho(spec)?;
            not_eps(spec)?;
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let draw = sample_trial(exponent, coefficient, config.master_seed, 0, k_max);
            cor4_report(exponent, coefficient, &draw, &F_PLUS_ZERO_GRID, &policy)
        }
        CriterionId::Thm1a => {
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let rho = need_f64(spec.rho, "rho", spec.id)?;
            let eps = need_f64(spec.eps, "eps", spec.id)?;
            thm1a_sum(exponent, coefficient, rho, eps, k_max, &policy)
        }
        CriterionId::Thm1b => {
            not_rho(spec)?;
            not_eps(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let delta = need_f64(spec.delta, "delta", spec.id)?;
            thm1b_sum(exponent, coefficient, delta, k_max, &policy)
        }
        CriterionId::Thm2a => {
            not_eps(spec)?;
            not_delta(spec)?;
            not_big_e(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let rho = need_f64(spec.rho, "rho", spec.id)?;
            thm2a_sum(exponent, coefficient, rho, schedule, k_max, &policy)
        }
        CriterionId::Thm2b => {
            not_rho(spec)?;
            not_eps(spec)?;
            not_delta(spec)?;
            not_f_b(spec)?;
            not_dominating(spec)?;
            let big_e = need_f64(spec.big_e, "E", spec.id)?;
            thm2b_sum(exponent, coefficient, big_e, k_max, &policy)
        }
    }
}

fn sweep_cell(
    report: &CriterionReport,
    sigmas: &[XReal],
    config: &ExperimentConfig,
) -> SweepCell {
    let row = reconcile(
        report,
        sigmas,
        config.tol,
        config.consistent_frac,
        config.tension_frac,
    );
    SweepCell {
        criterion: report.criterion,
        rho: report.rho,
        class: report.verdict.class,
        implied_bound: report.implied_bound,
        fraction_satisfied: row.fraction_satisfied,
        status: row.status,
    }
}

/// Runs the bracketing sweep over the config's rho grid.
///
/// Each level pairs a sufficient condition at the level itself (thm4i for
/// positive levels, thm4ii otherwise) with a necessary condition whose
/// sharp refutation level is the level (thm3i at nominal `(1 + phi) * L`
/// with `eps = phi * L`, thm3ii mirrored for negative levels, remark3 at
/// the origin). The summary reports the largest level established and the
/// smallest level refuted.
pub fn sweep(config: &ExperimentConfig, sigmas: &[XReal]) -> Result<SweepTable> {
    let policy = config.bisect_policy().classify;
    let phi = config.eps_policy.fraction;
    let mut rows = Vec::with_capacity(config.rho_grid.len());
    let mut established_max: Option<f64> = None;
    let mut refuted_min: Option<f64> = None;
    for &level in &config.rho_grid {
        let establish = if level > 0.0 {
            thm4_sum(
                &config.exponent,
                &config.coefficient,
                level,
                config.eps_policy.schedule,
                SumSide::Upper,
                config.k_max,
                &policy,
            )?
        } else {
            thm4_sum(
                &config.exponent,
                &config.coefficient,
                level,
                config.eps_policy.schedule,
                SumSide::Lower,
                config.k_max,
                &policy,
            )?
        };
        let refute = if level > 0.0 {
            thm3_upper_sum(
                &config.exponent,
                &config.coefficient,
                (1.0 + phi) * level,
                phi * level,
                config.k_max,
                &policy,
            )?
        } else if level < 0.0 {
            thm3_lower_sum(
                &config.exponent,
                &config.coefficient,
                (1.0 - phi) * level,
                phi * level.abs(),
                config.k_max,
                &policy,
            )?
        } else {
            remark3_sum(
                &config.exponent,
                &config.coefficient,
                0.0,
                config.k_max,
                &F_PLUS_ZERO_GRID,
                &policy,
            )?
        };
        if matches!(establish.implied_bound, ImpliedBound::SigmaGeq { .. }) {
            established_max = Some(established_max.map_or(level, |m: f64| m.max(level)));
        }
        if matches!(refute.implied_bound, ImpliedBound::NecessaryFails { .. }) {
            refuted_min = Some(refuted_min.map_or(level, |m: f64| m.min(level)));
        }
        rows.push(SweepRow {
            level,
            establish: sweep_cell(&establish, sigmas, config),
            refute: sweep_cell(&refute, sigmas, config),
        });
    }
    Ok(SweepTable {
        rows,
        established_max,
        refuted_min,
    })
}

/// Runs the whole experiment: trials in parallel, criteria once,
/// reconciliation, optional sweep, optional persistence.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let trials: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|index| run_trial(config, index))
        .collect();
    let aggregates = aggregate(&trials);
    let sigmas = collect(&trials, |t| t.sigma_abs);
    let criteria: Vec<CriterionReport> = config
        .criteria
        .iter()
        .map(|spec| evaluate_criterion(config, spec))
        .collect::<Result<_>>()?;
    let reconciliation: Vec<ReconRow> = criteria
        .iter()
        .map(|report| {
            reconcile(
                report,
                &sigmas,
                config.tol,
                config.consistent_frac,
                config.tension_frac,
            )
        })
        .collect();
    let constancy = Constancy {
        iqr_sigma_abs: aggregates.sigma_abs.as_ref().and_then(|s| s.iqr),
        note: "spread of sigma_abs across trials; the zero-one law expects it to shrink, \
               reported but never asserted"
            .to_string(),
    };
    let condition = if config.coefficient.is_deterministic() {
        let draw = sample_trial(
            &config.exponent,
            &config.coefficient,
            config.master_seed,
            0,
            config.k_max,
        );
        Some(coef_condition(&config.coefficient, &draw, &config.windows)?)
    } else {
        None
    };
    let sweep_table = if config.rho_grid.is_empty() {
        None
    } else {
        Some(sweep(config, &sigmas)?)
    };
    let report = ExperimentReport {
        config: config.to_value(),
        trials,
        aggregates,
        criteria,
        reconciliation,
        constancy,
        coef_condition: condition,
        sweep: sweep_table,
    };
    if let Some(dir) = &config.out_dir {
        persist(&report, dir)?;
    }
    Ok(report)
}

/// Caps the worker pool used for parallel trials. Returns false when a
/// global pool already exists, in which case the existing pool stays.
pub fn set_worker_threads(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok()
}

/// Formats one optional estimate for CSV: 9 significant digits, sentinels
/// as `inf`/`-inf`, missing values as `nan`.
pub fn csv_estimate(value: Option<XReal>) -> String {
    match value {
        None => "nan".to_string(),
        Some(v) if v.is_finite() => format!("{:.8e}", v.get()),
        Some(v) => v.to_string(),
    }
}

fn csv_trend(trend: Option<Trend>) -> String {
    trend.map_or_else(|| "nan".to_string(), |t| t.to_string())
}

/// Renders trials.csv: header `trial,sigma_abs,sigma_conv,alpha0,tau,h,
/// trend_alpha0,errors`, one row per trial.
pub fn trials_csv(trials: &[TrialRecord]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "trial",
        "sigma_abs",
        "sigma_conv",
        "alpha0",
        "tau",
        "h",
        "trend_alpha0",
        "errors",
    ])?;
    for record in trials {
        writer.write_record([
            record.trial.to_string(),
            csv_estimate(record.sigma_abs),
            csv_estimate(record.sigma_conv),
            csv_estimate(record.alpha0),
            csv_estimate(record.tau),
            csv_estimate(record.h),
            csv_trend(record.trend_alpha0),
            record.errors.join(";"),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Renders criteria.csv: header `criterion,rho,eps_policy,verdict,
/// implied_bound,partial_sum_at_K`, one row per criterion.
pub fn criteria_csv(reports: &[CriterionReport]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "criterion",
        "rho",
        "eps_policy",
        "verdict",
        "implied_bound",
        "partial_sum_at_K",
    ])?;
    for report in reports {
        writer.write_record([
            report.criterion.to_string(),
            csv_estimate(report.rho),
            report.eps_policy.clone(),
            report.verdict.class.to_string(),
            report.implied_bound.csv_label(),
            format!("{:.8e}", report.partial_sum_at_k),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes report.json, trials.csv, and criteria.csv into `dir`.
pub fn persist(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;
    fs::write(dir.join("trials.csv"), trials_csv(&report.trials)?)?;
    fs::write(dir.join("criteria.csv"), criteria_csv(&report.criteria)?)?;
    Ok(())
}
