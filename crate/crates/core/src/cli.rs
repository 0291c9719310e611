//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE` with `key = value` lines named
//! after the long flags. File values are applied first and flags given on
//! the command line override them.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::conformance::conformance_suite;
use crate::dual::{expected_interference, expected_power, solve_duals, ConstraintBudget};
use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::oracle::{compare_seeded, discretize};
use crate::sim::{db_to_linear, estimate_with_workers, NetworkConfig, RateForm};
use crate::sweep::{sweep, write_csv, SweepTemplate, DEFAULT_SLOTS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "cogmac",
    version,
    about = "Opportunistic scheduling and power control under interference limits"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the multipliers and simulate the network for one N.
    Simulate(SimulateArgs),
    /// Solve the multipliers only.
    Duals(NetworkArgs),
    /// Throughput over a list of N with p = 1/N, as CSV.
    Sweep(SweepArgs),
    /// Compare the threshold policy with the relaxed optimum on a small grid.
    OracleCheck(OracleArgs),
    /// Check the fading models against their defining properties.
    DistCheck(DistArgs),
}

fn parse_model(s: &str) -> std::result::Result<FadingModel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_db(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("budget must be finite, got {s}"))
    }
}

fn parse_positive_count(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.trim().parse().map_err(|e| format!("{e}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".into())
    }
}

#[derive(Debug, Args, Clone)]
pub struct NetworkArgs {
    /// Secondary transmitter to secondary base gain, e.g. `weibull:4`.
    #[arg(long, value_parser = parse_model, default_value = "rayleigh")]
    pub model_h: FadingModel,
    /// Secondary transmitter to primary base gain.
    #[arg(long, value_parser = parse_model, default_value = "rayleigh")]
    pub model_g: FadingModel,
    /// Average total power budget in dB.
    #[arg(long, value_parser = parse_db, default_value_t = 15.0, allow_negative_numbers = true)]
    pub pave_db: f64,
    /// Average interference budget in dB.
    #[arg(long, value_parser = parse_db, default_value_t = 0.0, allow_negative_numbers = true)]
    pub qave_db: f64,
    /// Number of secondary users.
    #[arg(long, value_parser = parse_positive_count)]
    pub n: usize,
    /// Scheduling probability per user; defaults to 1/N.
    #[arg(long)]
    pub p: Option<f64>,
    /// Print one CSV row with header instead of `key: value` lines.
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl NetworkArgs {
    pub fn network(&self) -> Result<NetworkConfig> {
        let config = NetworkConfig::new(
            self.n,
            db_to_linear(self.pave_db),
            db_to_linear(self.qave_db),
        )?;
        match self.p {
            Some(p) => config.with_sched_prob(p),
            None => Ok(config),
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[arg(long, default_value_t = DEFAULT_SLOTS)]
    pub slots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Use the order-statistic rate instead of the collision rule.
    #[arg(long)]
    pub orderstat: bool,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[arg(long, value_parser = parse_model, default_value = "weibull:4")]
    pub model_h: FadingModel,
    #[arg(long, value_parser = parse_model, default_value = "rayleigh")]
    pub model_g: FadingModel,
    #[arg(long, value_parser = parse_db, default_value_t = 15.0, allow_negative_numbers = true)]
    pub pave_db: f64,
    #[arg(long, value_parser = parse_db, default_value_t = 0.0, allow_negative_numbers = true)]
    pub qave_db: f64,
    /// Comma-separated numbers of users.
    #[arg(long, value_parser = parse_positive_count, value_delimiter = ',', default_value = "100,200,300,400,500,600,700,800,900,1000")]
    pub n_list: Vec<usize>,
    /// Slots per row; rows with N <= 200 run ten times as many.
    #[arg(long, default_value_t = DEFAULT_SLOTS)]
    pub slots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct OracleArgs {
    #[arg(long, value_parser = parse_model, default_value = "rayleigh")]
    pub model_h: FadingModel,
    #[arg(long, value_parser = parse_model, default_value = "rayleigh")]
    pub model_g: FadingModel,
    #[arg(long, value_parser = parse_positive_count, default_value_t = 3)]
    pub grid_h: usize,
    #[arg(long, value_parser = parse_positive_count, default_value_t = 3)]
    pub grid_g: usize,
    /// Per-user power budget, linear.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub power: f64,
    /// Per-user interference budget, linear.
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub interference: f64,
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct DistArgs {
    #[arg(long, value_parser = parse_positive_count, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Path given to `--config`, if any.
fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// `key = value` lines as `--key=value` flags. Blank lines and `#` comments
/// are skipped; underscores in keys are read as dashes.
pub fn config_flags(text: &str) -> Result<Vec<OsString>> {
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Config(format!(
                "config line {}: bad key `{key}`",
                i + 1
            )));
        }
        let value = value.trim().trim_matches('"');
        flags.push(match value {
            "true" => format!("--{key}").into(),
            _ => format!("--{key}={value}").into(),
        });
    }
    Ok(flags)
}

/// Full argument list with the config file's flags spliced in right after
/// the subcommand name, so that later command-line flags take precedence.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let flags = config_flags(&text)?;
    let at = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| !a.to_string_lossy().starts_with('-'))
        .map_or(args.len(), |(i, _)| i + 1);
    let mut out = args[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_USAGE
    }
}

#[derive(Debug)]
pub enum ParseError {
    /// The config file could not be read or has a malformed line.
    File(Error),
    Args(clap::Error),
}

/// Parse `args` (program name first) together with any `--config` file.
pub fn parse<I, T>(args: I) -> std::result::Result<Cli, ParseError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args = expand_args(args.into_iter().map(Into::into).collect()).map_err(ParseError::File)?;
    Cli::try_parse_from(args).map_err(ParseError::Args)
}

/// Parse `args` (program name first), run the subcommand and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = match parse(args) {
        Ok(c) => c,
        Err(ParseError::File(e)) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
        Err(ParseError::Args(e)) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match execute(&cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn kv(out: &mut dyn Write, pairs: &[(&str, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(out, "{k}: {v}")?;
    }
    Ok(())
}

fn csv_row(out: &mut dyn Write, pairs: &[(&str, String)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(pairs.iter().map(|p| p.0))?;
    w.write_record(pairs.iter().map(|p| p.1.as_str()))?;
    w.flush()?;
    Ok(())
}

fn emit(out: &mut dyn Write, pairs: &[(&str, String)], as_csv: bool) -> Result<()> {
    if as_csv {
        csv_row(out, pairs)
    } else {
        kv(out, pairs)
    }
}

pub fn execute(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Duals(a) => {
            let config = a.network()?;
            let d = solve_duals(&config, &a.model_h, &a.model_g)?;
            let power = expected_power(d.lambda, d.mu, d.threshold, &a.model_h, &a.model_g)?;
            let interference =
                expected_interference(d.lambda, d.mu, d.threshold, &a.model_h, &a.model_g)?;
            let pairs = [
                ("n", config.n_users.to_string()),
                ("p", config.sched_prob.to_string()),
                ("lambda", d.lambda.to_string()),
                ("mu", d.mu.to_string()),
                ("threshold", d.threshold.to_string()),
                ("expected_power", power.to_string()),
                ("expected_interference", interference.to_string()),
                ("power_residual", d.diagnostics.power_residual.to_string()),
                (
                    "interference_residual",
                    d.diagnostics.interference_residual.to_string(),
                ),
                (
                    "schedule_residual",
                    d.diagnostics.schedule_residual.to_string(),
                ),
                (
                    "outer_iterations",
                    d.diagnostics.outer_iterations.to_string(),
                ),
                (
                    "inner_iterations",
                    d.diagnostics.inner_iterations.to_string(),
                ),
            ];
            emit(out, &pairs, a.csv)?;
            Ok(EXIT_OK)
        }
        Command::Simulate(a) => {
            let net = &a.network;
            let config = net.network()?;
            let d = solve_duals(&config, &net.model_h, &net.model_g)?;
            let form = if a.orderstat {
                if config.n_users < 2 {
                    return Err(Error::Config(
                        "order-statistic rate needs at least two users".into(),
                    ));
                }
                RateForm::OrderStatistic
            } else {
                RateForm::Collision
            };
            let workers = a.workers.unwrap_or_else(rayon::current_num_threads);
            let s = estimate_with_workers(
                &config,
                &d,
                &net.model_h,
                &net.model_g,
                a.slots,
                a.seed,
                form,
                workers,
            )?;
            let pairs = [
                ("n", config.n_users.to_string()),
                ("p", config.sched_prob.to_string()),
                ("lambda", d.lambda.to_string()),
                ("mu", d.mu.to_string()),
                ("threshold", d.threshold.to_string()),
                ("throughput", s.throughput.to_string()),
                ("throughput_stderr", s.throughput_stderr.to_string()),
                ("p_an", s.p_an.to_string()),
                ("p_an_stderr", s.p_an_stderr.to_string()),
                ("avg_power", s.avg_power.to_string()),
                ("avg_power_stderr", s.avg_power_stderr.to_string()),
                ("avg_interference", s.avg_interference.to_string()),
                (
                    "avg_interference_stderr",
                    s.avg_interference_stderr.to_string(),
                ),
                ("slots", s.slots.to_string()),
                ("seed", a.seed.to_string()),
            ];
            emit(out, &pairs, net.csv)?;
            Ok(EXIT_OK)
        }
        Command::Sweep(a) => {
            let template = SweepTemplate {
                model_h: a.model_h,
                model_g: a.model_g,
                p_ave: db_to_linear(a.pave_db),
                q_ave: db_to_linear(a.qave_db),
            };
            let report = sweep(&template, &a.n_list, a.slots, a.seed);
            for (n, e) in &report.failures {
                writeln!(err, "row n={n} failed: {e}")?;
            }
            match &a.output {
                Some(path) => write_csv(&report.rows, BufWriter::new(File::create(path)?))?,
                None => write_csv(&report.rows, &mut *out)?,
            }
            Ok(match report.failures.first() {
                None => EXIT_OK,
                Some((_, e)) => exit_code(e),
            })
        }
        Command::OracleCheck(a) => {
            let budget = ConstraintBudget::new(a.power, a.interference)?;
            let d = discretize(&a.model_h, &a.model_g, a.grid_h, a.grid_g)?;
            let c = compare_seeded(&d, &budget, a.p, a.seed)?;
            kv(
                out,
                &[
                    ("states", d.len().to_string()),
                    ("relaxed_objective", c.relaxed.objective.to_string()),
                    ("closed_form_objective", c.closed_form.objective.to_string()),
                    ("gap", c.gap.to_string()),
                    ("lambda", c.relaxed.lambda.to_string()),
                    ("mu", c.relaxed.mu.to_string()),
                    ("sched_eta", c.relaxed.sched_eta.to_string()),
                    ("closed_form_lambda", c.closed_form.lambda.to_string()),
                    ("closed_form_mu", c.closed_form.mu.to_string()),
                    ("power_residual", c.relaxed.residuals.power.to_string()),
                    (
                        "interference_residual",
                        c.relaxed.residuals.interference.to_string(),
                    ),
                    (
                        "schedule_residual",
                        c.relaxed.residuals.schedule.to_string(),
                    ),
                ],
            )?;
            Ok(EXIT_OK)
        }
        Command::DistCheck(a) => {
            let checks = conformance_suite(a.samples, a.seed);
            writeln!(
                out,
                "{:<14} {:<24} {:<6} detail",
                "model", "check", "result"
            )?;
            for c in &checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                writeln!(
                    out,
                    "{:<14} {:<24} {:<6} {}",
                    c.model.to_string(),
                    c.name,
                    verdict,
                    c.detail
                )?;
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            writeln!(out, "{} checks, {failed} failed", checks.len())?;
            Ok(if failed == 0 { EXIT_OK } else { EXIT_NUMERIC })
        }
    }
}
