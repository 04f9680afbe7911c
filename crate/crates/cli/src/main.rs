//! Command-line front end: estimate abscissas, evaluate criteria, run
//! experiments, and emit plot-ready CSV.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime or IO error,
//! 3 when any reconciliation reports tension.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dal::criteria::CriterionReport;
use dal::dist::CdfModel;
use dal::experiment::{
    criteria_csv, csv_estimate, evaluate_criterion, run_experiment, set_worker_threads,
    trials_csv, Aggregates, CriterionSpec, ExperimentConfig, ExperimentReport, QuantityStats,
    ReconRow, SweepTable, TrialRecord,
};
use dal::law::sample_trial;
use dal::tail::{alpha0, h_coeff, tau, Trend};
use dal::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dal",
    version,
    about = "Estimate, criterion-check, and reconcile convergence abscissas of random Dirichlet series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate abscissas and tail statistics across trials.
    Estimate(CommonArgs),
    /// Evaluate one convergence criterion from the configured laws.
    Criterion(CriterionArgs),
    /// Run trials, criteria, reconciliation, and the optional sweep.
    Experiment(CommonArgs),
    /// Run the bracketing sweep over the config's rho grid.
    Sweep(CommonArgs),
    /// Re-emit tables or plot CSV from a saved report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON document).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's truncation index K.
    #[arg(long)]
    k: Option<usize>,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Directory for report.json and CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stdout format.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args)]
struct CriterionArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Criterion name: thm3i, thm3ii, thm4i, thm4ii, remark3, cor1, cor2,
    /// cor3, cor4, thm1a, thm1b, thm2a, thm2b.
    #[arg(long)]
    criterion: String,
    /// Nominal level rho.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Margin eps for the single-epsilon necessary criteria.
    #[arg(long)]
    eps: Option<f64>,
    /// Threshold base delta for thm1b.
    #[arg(long)]
    delta: Option<f64>,
    /// Threshold base E for thm2b.
    #[arg(long = "E")]
    big_e: Option<f64>,
    /// Quantile-scale base law for cor3, as inline JSON.
    #[arg(long)]
    f_b: Option<String>,
    /// Dominating law for cor2, as inline JSON.
    #[arg(long)]
    dominating: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved report.json to load.
    #[arg(long)]
    input: PathBuf,
    /// Directory for regenerated CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stdout format.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(1);
    }
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_for(&error))
        }
    }
}

/// Restores the default SIGPIPE disposition so that piping into a pager
/// that exits early kills the process quietly instead of panicking on a
/// broken stdout.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn exit_for(error: &Error) -> u8 {
    match error {
        Error::InvalidParameter(_) | Error::Grammar(_) | Error::Domain(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    match std::env::var("DAL_THREADS") {
        Ok(text) => {
            let threads: usize = text
                .parse()
                .map_err(|_| format!("DAL_THREADS must be a positive integer, got `{text}`"))?;
            if threads == 0 {
                return Err("DAL_THREADS must be a positive integer, got `0`".to_string());
            }
            set_worker_threads(threads);
            Ok(())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(format!("DAL_THREADS: {e}")),
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Estimate(args) => run_estimate(&args),
        Command::Criterion(args) => run_criterion(&args),
        Command::Experiment(args) => run_experiment_cmd(&args),
        Command::Sweep(args) => run_sweep_cmd(&args),
        Command::Report(args) => run_report_cmd(&args),
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    if !args.config.exists() {
        return Err(Error::Config(format!(
            "config not found: {}",
            args.config.display()
        )));
    }
    let mut config = match ExperimentConfig::load(&args.config) {
        Ok(config) => config,
        Err(Error::Json(e)) => {
            return Err(Error::Config(format!("config parse: {e}")));
        }
        Err(e) => return Err(e),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(k) = args.k {
        config.k_max = k;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    config.validate()?;
    Ok(config)
}

fn run_estimate(args: &CommonArgs) -> Result<u8> {
    let mut config = load_config(args)?;
    config.criteria.clear();
    config.rho_grid.clear();
    config.out_dir = None;
    let report = run_experiment(&config)?;
    match args.format {
        Format::Table => {
            print!("{}", render_table(&trial_rows(&report.trials)));
            println!();
            print!("{}", render_table(&aggregate_rows(&report.aggregates)));
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => print!("{}", trials_csv(&report.trials)?),
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trials.csv"), trials_csv(&report.trials)?)?;
        fs::write(dir.join("windows.csv"), windows_csv(&config))?;
    }
    Ok(0)
}

fn parse_model(text: &str, what: &str) -> Result<CdfModel> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("{what} is not valid JSON: {e}")))?;
    CdfModel::from_value(&value)
}

fn run_criterion(args: &CriterionArgs) -> Result<u8> {
    let config = load_config(&args.common)?;
    let mut spec = CriterionSpec::new(args.criterion.parse()?);
    spec.rho = args.rho;
    spec.eps = args.eps;
    spec.delta = args.delta;
    spec.big_e = args.big_e;
    spec.f_b = args
        .f_b
        .as_deref()
        .map(|text| parse_model(text, "--f-b"))
        .transpose()?;
    spec.dominating = args
        .dominating
        .as_deref()
        .map(|text| parse_model(text, "--dominating"))
        .transpose()?;
    let report = evaluate_criterion(&config, &spec)?;
    match args.common.format {
        Format::Table => print_criterion(&report),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => print!("{}", criteria_csv(std::slice::from_ref(&report))?),
    }
    if let Some(dir) = &args.common.out {
        fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        fs::write(dir.join("criterion.json"), json)?;
        fs::write(dir.join("trace.csv"), traces_csv(std::slice::from_ref(&report)))?;
    }
    Ok(0)
}

fn run_experiment_cmd(args: &CommonArgs) -> Result<u8> {
    let mut config = load_config(args)?;
    if let Some(dir) = &args.out {
        config.out_dir = Some(dir.clone());
    }
    let report = run_experiment(&config)?;
    match args.format {
        Format::Table => print_report(&report),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => print!("{}", trials_csv(&report.trials)?),
    }
    Ok(if report.has_tension() { 3 } else { 0 })
}

fn run_sweep_cmd(args: &CommonArgs) -> Result<u8> {
    let mut config = load_config(args)?;
    if config.rho_grid.is_empty() {
        return Err(Error::Config(
            "sweep needs a non-empty rho_grid in the config".to_string(),
        ));
    }
    if let Some(dir) = &args.out {
        config.out_dir = Some(dir.clone());
    }
    let report = run_experiment(&config)?;
    let table = report.sweep.as_ref().expect("non-empty grid produces a sweep");
    match args.format {
        Format::Table => print_sweep(table),
        Format::Json => println!("{}", serde_json::to_string_pretty(table)?),
        Format::Csv => print!("{}", sweep_csv(table)),
    }
    Ok(if report.has_tension() { 3 } else { 0 })
}

fn run_report_cmd(args: &ReportArgs) -> Result<u8> {
    if !args.input.exists() {
        return Err(Error::Config(format!(
            "report not found: {}",
            args.input.display()
        )));
    }
    let text = fs::read_to_string(&args.input)?;
    let report: ExperimentReport = serde_json::from_str(&text)?;
    match args.format {
        Format::Table => print_report(&report),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => print!("{}", trials_csv(&report.trials)?),
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trials.csv"), trials_csv(&report.trials)?)?;
        fs::write(dir.join("criteria.csv"), criteria_csv(&report.criteria)?)?;
        fs::write(dir.join("traces.csv"), traces_csv(&report.criteria))?;
    }
    Ok(if report.has_tension() { 3 } else { 0 })
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(|| "nan".to_string(), |v| format!("{v:.8e}"))
}

fn trend_cell(trend: Option<Trend>) -> String {
    trend.map_or_else(|| "nan".to_string(), |t| t.to_string())
}

/// Pads every column to its widest cell, two spaces between columns, no
/// trailing whitespace.
fn render_table(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if i + 1 < row.len() {
                line.push_str(&" ".repeat(widths[i] - cell.len()));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn header(cells: &[&str]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

fn trial_rows(trials: &[TrialRecord]) -> Vec<Vec<String>> {
    let mut rows = vec![header(&[
        "trial",
        "sigma_abs",
        "sigma_conv",
        "alpha0",
        "tau",
        "h",
        "trend_alpha0",
        "trend_tau",
        "trend_h",
        "errors",
    ])];
    for record in trials {
        rows.push(vec![
            record.trial.to_string(),
            csv_estimate(record.sigma_abs),
            csv_estimate(record.sigma_conv),
            csv_estimate(record.alpha0),
            csv_estimate(record.tau),
            csv_estimate(record.h),
            trend_cell(record.trend_alpha0),
            trend_cell(record.trend_tau),
            trend_cell(record.trend_h),
            record.errors.join(";"),
        ]);
    }
    rows
}

fn aggregate_rows(aggregates: &Aggregates) -> Vec<Vec<String>> {
    let mut rows = vec![header(&[
        "quantity",
        "count",
        "median",
        "iqr",
        "min",
        "max",
        "frac_pos_inf",
        "frac_neg_inf",
    ])];
    let quantities: [(&str, Option<&QuantityStats>); 5] = [
        ("sigma_abs", aggregates.sigma_abs.as_ref()),
        ("sigma_conv", aggregates.sigma_conv.as_ref()),
        ("alpha0", aggregates.alpha0.as_ref()),
        ("tau", aggregates.tau.as_ref()),
        ("h", aggregates.h.as_ref()),
    ];
    for (name, stats) in quantities {
        rows.push(match stats {
            Some(stats) => vec![
                name.to_string(),
                stats.count.to_string(),
                csv_estimate(Some(stats.median)),
                fmt_opt(stats.iqr),
                csv_estimate(Some(stats.min)),
                csv_estimate(Some(stats.max)),
                format!("{:.8e}", stats.frac_pos_inf),
                format!("{:.8e}", stats.frac_neg_inf),
            ],
            None => {
                let mut row = vec![name.to_string(), "0".to_string()];
                row.extend(std::iter::repeat_n("nan".to_string(), 6));
                row
            }
        });
    }
    rows
}

fn criterion_rows(reports: &[CriterionReport]) -> Vec<Vec<String>> {
    let mut rows = vec![header(&[
        "criterion",
        "rho",
        "eps_policy",
        "verdict",
        "rationale",
        "implied_bound",
        "partial_sum_at_K",
    ])];
    for report in reports {
        rows.push(vec![
            report.criterion.to_string(),
            csv_estimate(report.rho),
            report.eps_policy.clone(),
            report.verdict.class.to_string(),
            report.verdict.rationale.to_string(),
            report.implied_bound.csv_label(),
            format!("{:.8e}", report.partial_sum_at_k),
        ]);
    }
    rows
}

fn reconciliation_rows(rows_in: &[ReconRow]) -> Vec<Vec<String>> {
    let mut rows = vec![header(&[
        "criterion",
        "rho",
        "implied_bound",
        "fraction_satisfied",
        "status",
    ])];
    for row in rows_in {
        rows.push(vec![
            row.criterion.to_string(),
            csv_estimate(row.rho),
            row.implied_bound.csv_label(),
            fmt_opt(row.fraction_satisfied),
            row.status.to_string(),
        ]);
    }
    rows
}

fn print_criterion(report: &CriterionReport) {
    println!("criterion         {}", report.criterion);
    println!("rho               {}", csv_estimate(report.rho));
    println!("eps_policy        {}", report.eps_policy);
    println!(
        "verdict           {} ({})",
        report.verdict.class, report.verdict.rationale
    );
    println!("implied_bound     {}", report.implied_bound.csv_label());
    println!("partial_sum_at_K  {:.8e}", report.partial_sum_at_k);
    if let Some(note) = &report.note {
        println!("note              {note}");
    }
    println!();
    let mut rows = vec![header(&["k", "partial_sum"])];
    for point in &report.term_trace {
        rows.push(vec![
            point.k.to_string(),
            csv_estimate(Some(point.partial_sum)),
        ]);
    }
    print!("{}", render_table(&rows));
}

fn print_report(report: &ExperimentReport) {
    println!("aggregates:");
    print!("{}", render_table(&aggregate_rows(&report.aggregates)));
    if !report.criteria.is_empty() {
        println!();
        println!("criteria:");
        print!("{}", render_table(&criterion_rows(&report.criteria)));
        println!();
        println!("reconciliation:");
        print!(
            "{}",
            render_table(&reconciliation_rows(&report.reconciliation))
        );
    }
    println!();
    println!(
        "constancy: iqr_sigma_abs={} ({})",
        fmt_opt(report.constancy.iqr_sigma_abs),
        report.constancy.note
    );
    if let Some(condition) = &report.coef_condition {
        println!(
            "coef_condition: {} (tail sup ln k / -ln|f_k| = {}, trend {})",
            if condition.holds { "holds" } else { "fails" },
            csv_estimate(Some(condition.estimate.value)),
            condition.estimate.trend,
        );
    }
    if let Some(table) = &report.sweep {
        println!();
        println!("sweep:");
        print_sweep(table);
    }
}

fn print_sweep(table: &SweepTable) {
    let mut rows = vec![header(&[
        "level",
        "establish",
        "est_bound",
        "est_status",
        "refute",
        "ref_bound",
        "ref_status",
    ])];
    for row in &table.rows {
        rows.push(vec![
            format!("{:.8e}", row.level),
            row.establish.criterion.to_string(),
            row.establish.implied_bound.csv_label(),
            row.establish.status.to_string(),
            row.refute.criterion.to_string(),
            row.refute.implied_bound.csv_label(),
            row.refute.status.to_string(),
        ]);
    }
    print!("{}", render_table(&rows));
    println!("established_max {}", fmt_opt(table.established_max));
    println!("refuted_min {}", fmt_opt(table.refuted_min));
}

fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::from(
        "level,establish,est_bound,est_status,refute,ref_bound,ref_status\n",
    );
    for row in &table.rows {
        out.push_str(&format!(
            "{:.8e},{},{},{},{},{},{}\n",
            row.level,
            row.establish.criterion,
            row.establish.implied_bound.csv_label(),
            row.establish.status,
            row.refute.criterion,
            row.refute.implied_bound.csv_label(),
            row.refute.status,
        ));
    }
    out
}

/// Plot-ready partial-sum traces, one row per checkpoint.
fn traces_csv(reports: &[CriterionReport]) -> String {
    let mut out = String::from("criterion,rho,k,partial_sum\n");
    for report in reports {
        for point in &report.term_trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                report.criterion,
                csv_estimate(report.rho),
                point.k,
                csv_estimate(Some(point.partial_sum)),
            ));
        }
    }
    out
}

/// Plot-ready window traces for the tail statistics, recomputed per trial.
fn windows_csv(config: &ExperimentConfig) -> String {
    let mut out = String::from("quantity,trial,start,value\n");
    for trial in 0..config.trials {
        let draw = sample_trial(
            &config.exponent,
            &config.coefficient,
            config.master_seed,
            trial as u64,
            config.k_max,
        );
        let estimates = [
            ("alpha0", alpha0(&config.coefficient, &draw, &config.windows)),
            ("tau", tau(&draw, &config.windows)),
            ("h", h_coeff(&config.coefficient, &draw, &config.windows)),
        ];
        for (name, estimate) in estimates {
            if let Ok(estimate) = estimate {
                for point in &estimate.window_trace {
                    out.push_str(&format!(
                        "{name},{trial},{},{}\n",
                        point.start,
                        csv_estimate(Some(point.value)),
                    ));
                }
            }
        }
    }
    out
}
