//! `covert-fbl` command-line front end.
//!
//! Settings resolve as flags > `--config` TOML file > defaults
//! (`σ_b² = σ_w² = 1`, `ε = 0.1`, `N = 100`, KL mode, CSV, 9 digits,
//! seed 42, 10⁵ trials).
//!
//! Exit codes: 0 success, 1 validation failure, 2 invalid parameters,
//! 3 convergence failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::channel::{delta_fbl, rate_fbl, ChannelParams};
use crate::design::{
    optimize_delta, optimize_design, solve_p_star_exact, solve_p_star_kl, throughput_at,
    ConstraintMode, CovertConstraint, PowerSolution, SolverPath,
};
use crate::detection::{kl_divergence, total_error};
use crate::error::Error;
use crate::montecarlo::{simulate_detection, McConfig, DEFAULT_TRIALS};
use crate::output::{write_csv, write_json, Cell, Format, Table, DEFAULT_PRECISION};
use crate::specfun::Tolerance;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;

const DEFAULT_EPSILON: f64 = 0.1;
const DEFAULT_MAX_BLOCKLENGTH: u64 = 100;
const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "covert-fbl",
    version,
    about = "Covert communication design with finite blocklength"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Noise power at the legitimate receiver
    #[arg(long, global = true)]
    pub sigma_b2: Option<f64>,
    /// Noise power at the warden
    #[arg(long, global = true)]
    pub sigma_w2: Option<f64>,
    /// Covertness level, in (0, 0.5]
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Maximum blocklength N
    #[arg(long, global = true)]
    pub max_blocklength: Option<u64>,
    /// Covertness constraint
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<ConstraintMode>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Significant digits for numbers
    #[arg(long, global = true)]
    pub precision: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials per grid point
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// TOML file with default settings
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<ConstraintMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coding rate or decoding error at one operating point
    Rate(RateArgs),
    /// Radiometer error rates at one operating point
    Detect(PointArgs),
    /// Optimal covert design at the maximum blocklength
    Design,
    /// Evaluate the design over a grid of one variable
    Sweep(SweepArgs),
    /// Compare analytic detector error rates with Monte Carlo
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    /// Transmit power
    #[arg(long)]
    pub power: f64,
    /// Blocklength (defaults to --max-blocklength)
    #[arg(long)]
    pub blocklength: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Decoding error; prints the coding rate
    #[arg(long, conflicts_with = "rate", required_unless_present = "rate")]
    pub delta: Option<f64>,
    /// Coding rate in bits per use; prints the decoding error
    #[arg(long)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    #[value(name = "n", alias = "N")]
    #[serde(rename = "n")]
    N,
    Epsilon,
    Delta,
    Power,
}

impl SweepVariable {
    pub fn column(self) -> &'static str {
        match self {
            SweepVariable::N => "max_blocklength",
            SweepVariable::Epsilon => "epsilon",
            SweepVariable::Delta => "delta",
            SweepVariable::Power => "power",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Swept variable
    #[arg(long, value_enum)]
    pub variable: SweepVariable,
    /// Grid values, comma separated
    #[arg(long, value_delimiter = ',', num_args = 1.., required_unless_present = "range", conflicts_with = "range")]
    pub values: Vec<f64>,
    /// Arithmetic grid `start:stop:step`
    #[arg(long)]
    pub range: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Blocklengths to check
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 10, 100])]
    pub blocklengths: Vec<u64>,
    /// Transmit powers to check
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 1.0, 10.0])]
    pub powers: Vec<f64>,
}

/// Keys accepted in a `--config` file; all optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub sigma_b2: Option<f64>,
    pub sigma_w2: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_blocklength: Option<u64>,
    pub mode: Option<ConstraintMode>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub precision: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
}

/// Fully resolved settings; echoed in JSON `meta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub sigma_b2: f64,
    pub sigma_w2: f64,
    pub epsilon: f64,
    pub max_blocklength: u64,
    pub mode: ConstraintMode,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub precision: usize,
    pub seed: u64,
    pub trials: u64,
}

impl Settings {
    pub fn resolve(flags: &CommonArgs, file: &FileConfig) -> Settings {
        Settings {
            sigma_b2: flags.sigma_b2.or(file.sigma_b2).unwrap_or(1.0),
            sigma_w2: flags.sigma_w2.or(file.sigma_w2).unwrap_or(1.0),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
            max_blocklength: flags
                .max_blocklength
                .or(file.max_blocklength)
                .unwrap_or(DEFAULT_MAX_BLOCKLENGTH),
            mode: flags.mode.or(file.mode).unwrap_or(ConstraintMode::Kl),
            output: flags.output.clone().or_else(|| file.output.clone()),
            format: flags.format.or(file.format).unwrap_or_default(),
            precision: flags
                .precision
                .or(file.precision)
                .unwrap_or(DEFAULT_PRECISION),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            trials: flags.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.sigma_b2 > 0.0 && self.sigma_b2.is_finite()) {
            return Err(CliError::invalid(format!(
                "--sigma-b2 {} must be positive",
                self.sigma_b2
            )));
        }
        if !(self.sigma_w2 > 0.0 && self.sigma_w2.is_finite()) {
            return Err(CliError::invalid(format!(
                "--sigma-w2 {} must be positive",
                self.sigma_w2
            )));
        }
        if self.max_blocklength == 0 {
            return Err(CliError::invalid("--max-blocklength must be at least 1"));
        }
        if !(1..=17).contains(&self.precision) {
            return Err(CliError::invalid("--precision must lie in 1..=17"));
        }
        if self.trials == 0 {
            return Err(CliError::invalid("--trials must be at least 1"));
        }
        Ok(())
    }

    fn constraint(&self) -> Result<CovertConstraint, CliError> {
        Ok(CovertConstraint::new(self.epsilon, self.mode)?)
    }
}

pub fn load_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::invalid(format!("bad config {}: {e}", path.display())))
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Convergence { .. } => EXIT_CONVERGENCE,
            Error::Domain { .. } | Error::InvalidParameter(_) => EXIT_INVALID,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// What a command produced: a table plus command-specific `meta` entries.
struct Report {
    table: Table,
    extra: serde_json::Value,
    /// Non-zero exit after the table is written.
    status: Option<CliError>,
}

impl Report {
    fn ok(table: Table) -> Self {
        Report {
            table,
            extra: json!({}),
            status: None,
        }
    }
}

fn solver_path_name(path: SolverPath) -> &'static str {
    match path {
        SolverPath::Bisection => "bisection",
        SolverPath::ScanRefinement => "scan_refinement",
    }
}

fn params(settings: &Settings, power: f64) -> Result<ChannelParams, CliError> {
    Ok(ChannelParams::new(
        settings.sigma_b2,
        settings.sigma_w2,
        power,
    )?)
}

fn cmd_rate(settings: &Settings, args: &RateArgs) -> Result<Report, CliError> {
    let p = params(settings, args.point.power)?;
    let n = args.point.blocklength.unwrap_or(settings.max_blocklength);
    let (rate, delta) = match (args.delta, args.rate) {
        (Some(delta), _) => (rate_fbl(&p, n, delta)?, delta),
        (None, Some(rate)) => (rate, delta_fbl(&p, n, rate)?.value()),
        (None, None) => return Err(CliError::invalid("one of --delta or --rate is required")),
    };
    let eta = n as f64 * rate.max(0.0) * (1.0 - delta);
    let mut table = Table::new(vec![
        "blocklength",
        "power",
        "gamma_b",
        "rate",
        "delta",
        "eta",
    ]);
    table.push(vec![
        n.into(),
        p.power.into(),
        p.gamma_b().into(),
        rate.into(),
        delta.into(),
        eta.into(),
    ]);
    Ok(Report::ok(table))
}

fn cmd_detect(settings: &Settings, args: &PointArgs) -> Result<Report, CliError> {
    let p = params(settings, args.power)?;
    let n = args.blocklength.unwrap_or(settings.max_blocklength);
    let r = total_error(&p, n)?;
    let mut table = Table::new(vec![
        "blocklength",
        "power",
        "threshold",
        "p_false",
        "p_miss",
        "xi",
        "kl",
        "pinsker_bound",
    ]);
    table.push(vec![
        n.into(),
        p.power.into(),
        r.threshold.into(),
        r.p_false.value().into(),
        r.p_miss.value().into(),
        r.xi.into(),
        r.kl.into(),
        r.pinsker_bound.into(),
    ]);
    Ok(Report::ok(table))
}

fn cmd_design(settings: &Settings) -> Result<Report, CliError> {
    let tol = Tolerance::default();
    let d = optimize_design(
        settings.max_blocklength,
        &settings.constraint()?,
        settings.sigma_b2,
        settings.sigma_w2,
        &tol,
    )?;
    let mut table = Table::new(vec![
        "max_blocklength",
        "n_star",
        "p_star",
        "total_power",
        "r_star",
        "delta_star",
        "eta_star",
        "eta_per_use",
        "constraint_mode",
        "residual",
        "iterations",
        "power_path",
    ]);
    table.push(vec![
        settings.max_blocklength.into(),
        d.n_star.into(),
        d.p_star.into(),
        d.total_power.into(),
        d.r_star.into(),
        d.delta_star.value().into(),
        d.eta_star.into(),
        d.eta_per_use().into(),
        d.constraint.mode.as_str().into(),
        d.residual.into(),
        (d.iterations as u64).into(),
        solver_path_name(d.power_path).into(),
    ]);
    Ok(Report::ok(table))
}

/// A validated sweep: variable, grid and the settings held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, values: Vec<f64>) -> Result<Self, CliError> {
        if values.is_empty() {
            return Err(CliError::invalid("sweep grid is empty"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CliError::invalid(
                "sweep values must be strictly increasing",
            ));
        }
        for &v in &values {
            let ok = match variable {
                SweepVariable::N => v >= 1.0 && v.fract() == 0.0 && v <= u64::MAX as f64,
                SweepVariable::Epsilon => v > 0.0 && v <= 0.5,
                SweepVariable::Delta => v > 0.0 && v < 1.0,
                SweepVariable::Power => v > 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(CliError::invalid(format!(
                    "sweep value {v} is out of range for {}",
                    variable.column()
                )));
            }
        }
        Ok(SweepSpec { variable, values })
    }
}

/// Parse `start:stop:step` into an inclusive arithmetic grid.
pub fn parse_range(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            CliError::invalid(format!("bad --range `{text}`; expected start:stop:step"))
        })?;
    let [start, stop, step] = nums[..] else {
        return Err(CliError::invalid(format!(
            "bad --range `{text}`; expected start:stop:step"
        )));
    };
    if !(step > 0.0 && start.is_finite() && stop.is_finite()) || stop < start {
        return Err(CliError::invalid(format!("bad --range `{text}`")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(CliError::invalid("--range produces too many points"));
    }
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

const SWEEP_COLUMNS: [&str; 8] = [
    "p_star",
    "total_power",
    "r_star",
    "delta_star",
    "eta_star",
    "eta_per_use",
    "constraint_mode",
    "residual",
];

fn sweep_power(
    settings: &Settings,
    n: u64,
    constraint: &CovertConstraint,
) -> crate::Result<PowerSolution> {
    let tol = Tolerance::default();
    match constraint.mode {
        ConstraintMode::Kl => solve_p_star_kl(n, constraint, settings.sigma_w2, &tol),
        ConstraintMode::Exact => solve_p_star_exact(n, constraint, settings.sigma_w2, &tol),
    }
}

/// Constraint excess at power `p`; `<= 0` means the budget is met.
fn constraint_excess(
    settings: &Settings,
    n: u64,
    constraint: &CovertConstraint,
    p: f64,
) -> crate::Result<f64> {
    let params = ChannelParams::new(settings.sigma_b2, settings.sigma_w2, p)?;
    Ok(match constraint.mode {
        ConstraintMode::Kl => kl_divergence(&params, n) / constraint.kl_budget() - 1.0,
        ConstraintMode::Exact => (1.0 - constraint.epsilon) - total_error(&params, n)?.xi,
    })
}

fn sweep_row(settings: &Settings, variable: SweepVariable, value: f64) -> crate::Result<Vec<Cell>> {
    let tol = Tolerance::default();
    let mode = settings.mode;
    let (n, epsilon) = match variable {
        SweepVariable::N => (value as u64, settings.epsilon),
        SweepVariable::Epsilon => (settings.max_blocklength, value),
        _ => (settings.max_blocklength, settings.epsilon),
    };
    let constraint = CovertConstraint::new(epsilon, mode)?;
    let nf = n as f64;
    let (p_star, total_power, rate, delta, eta, residual) = match variable {
        SweepVariable::N | SweepVariable::Epsilon => {
            let d = optimize_design(n, &constraint, settings.sigma_b2, settings.sigma_w2, &tol)?;
            (
                d.p_star,
                d.total_power,
                d.r_star,
                d.delta_star.value(),
                d.eta_star,
                d.residual,
            )
        }
        SweepVariable::Delta => {
            let sol = sweep_power(settings, n, &constraint)?;
            let params = ChannelParams::new(settings.sigma_b2, settings.sigma_w2, sol.power)?;
            let rate = rate_fbl(&params, n, value)?.max(0.0);
            let eta = throughput_at(&params, n, value)?;
            (sol.power, nf * sol.power, rate, value, eta, sol.residual)
        }
        SweepVariable::Power => {
            let reference = sweep_power(settings, n, &constraint)?;
            let params = ChannelParams::new(settings.sigma_b2, settings.sigma_w2, value)?;
            let (delta, eta, _) = optimize_delta(&params, n, &tol)?;
            let rate = rate_fbl(&params, n, delta)?.max(0.0);
            let excess = constraint_excess(settings, n, &constraint, value)?;
            (reference.power, nf * value, rate, delta, eta, excess)
        }
    };
    let swept = match variable {
        SweepVariable::N => Cell::Int(n),
        _ => Cell::Num(value),
    };
    Ok(vec![
        swept,
        p_star.into(),
        total_power.into(),
        rate.into(),
        delta.into(),
        eta.into(),
        (eta / nf).into(),
        mode.as_str().into(),
        residual.into(),
    ])
}

fn cmd_sweep(settings: &Settings, args: &SweepArgs) -> Result<Report, CliError> {
    let values = match &args.range {
        Some(r) => parse_range(r)?,
        None => args.values.clone(),
    };
    let spec = SweepSpec::new(args.variable, values)?;
    if spec.variable != SweepVariable::Epsilon {
        settings.constraint()?;
    }
    let results: Vec<crate::Result<Vec<Cell>>> = spec
        .values
        .par_iter()
        .map(|&v| sweep_row(settings, spec.variable, v))
        .collect();

    let (table, status) = assemble_sweep(&spec, results);
    Ok(Report {
        table,
        extra: json!({ "variable": spec.variable, "values": spec.values }),
        status,
    })
}

/// Rows in grid order, stopping at the first failed point.
fn assemble_sweep(
    spec: &SweepSpec,
    results: Vec<crate::Result<Vec<Cell>>>,
) -> (Table, Option<CliError>) {
    let mut columns = vec![spec.variable.column()];
    columns.extend(SWEEP_COLUMNS);
    let mut table = Table::new(columns);
    for (i, row) in results.into_iter().enumerate() {
        match row {
            Ok(row) => table.push(row),
            Err(e) => {
                let status = CliError {
                    code: EXIT_CONVERGENCE,
                    message: format!(
                        "sweep aborted at {} = {}: {e}; partial output holds the {i} rows before it",
                        spec.variable.column(),
                        spec.values[i],
                    ),
                };
                return (table, Some(status));
            }
        }
    }
    (table, None)
}

fn cmd_validate(settings: &Settings, args: &ValidateArgs) -> Result<Report, CliError> {
    if args.blocklengths.is_empty() || args.powers.is_empty() {
        return Err(CliError::invalid("validation grid is empty"));
    }
    let mut table = Table::new(vec![
        "blocklength",
        "power",
        "p_false",
        "p_false_hat",
        "p_false_sigma",
        "p_false_pass",
        "p_miss",
        "p_miss_hat",
        "p_miss_sigma",
        "p_miss_pass",
    ]);
    let trials = settings.trials as f64;
    let within = |hat: f64, p: f64| -> (f64, bool) {
        let sigma = (p * (1.0 - p) / trials).sqrt();
        (sigma, (hat - p).abs() <= 3.0 * sigma)
    };
    let mut failures = 0usize;
    for &n in &args.blocklengths {
        for &power in &args.powers {
            let p = params(settings, power)?;
            if !(power > 0.0) {
                return Err(CliError::invalid(format!(
                    "validation power {power} must be positive"
                )));
            }
            let analytic = total_error(&p, n)?;
            let est = simulate_detection(&McConfig {
                trials: settings.trials,
                seed: settings.seed,
                n,
                params: p,
            })?;
            let (pf, pm) = (analytic.p_false.value(), analytic.p_miss.value());
            let (pf_hat, pm_hat) = (est.p_false_hat.value(), est.p_miss_hat.value());
            let (sf, ok_f) = within(pf_hat, pf);
            let (sm, ok_m) = within(pm_hat, pm);
            failures += usize::from(!ok_f) + usize::from(!ok_m);
            table.push(vec![
                n.into(),
                power.into(),
                pf.into(),
                pf_hat.into(),
                sf.into(),
                ok_f.into(),
                pm.into(),
                pm_hat.into(),
                sm.into(),
                ok_m.into(),
            ]);
        }
    }
    let status = (failures > 0).then(|| CliError {
        code: EXIT_VALIDATION,
        message: format!("{failures} comparison(s) outside 3 sigma"),
    });
    Ok(Report {
        table,
        extra: json!({}),
        status,
    })
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Rate(_) => "rate",
        Command::Detect(_) => "detect",
        Command::Design => "design",
        Command::Sweep(_) => "sweep",
        Command::Validate(_) => "validate",
    }
}

fn emit(
    settings: &Settings,
    command: &str,
    report: &Report,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    let io = match settings.format {
        Format::Csv => write_csv(&report.table, settings.precision, &mut buf),
        Format::Json => {
            let mut meta = json!({
                "tool": "covert-fbl",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "parameters": settings,
            });
            if let (Some(m), Some(extra)) = (meta.as_object_mut(), report.extra.as_object()) {
                m.extend(extra.clone());
            }
            write_json(&report.table, meta, settings.precision, &mut buf)
        }
    };
    io.map_err(|e| CliError::invalid(format!("cannot format output: {e}")))?;
    match &settings.output {
        Some(path) => fs::write(path, &buf)
            .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display()))),
        None => stdout
            .write_all(&buf)
            .map_err(|e| CliError::invalid(format!("cannot write output: {e}"))),
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.common.config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };
    let settings = Settings::resolve(&cli.common, &file);
    settings.validate()?;
    let report = match &cli.command {
        Command::Rate(args) => cmd_rate(&settings, args)?,
        Command::Detect(args) => cmd_detect(&settings, args)?,
        Command::Design => cmd_design(&settings)?,
        Command::Sweep(args) => cmd_sweep(&settings, args)?,
        Command::Validate(args) => cmd_validate(&settings, args)?,
    };
    emit(&settings, command_name(&cli.command), &report, stdout)?;
    if let Some(status) = report.status {
        let _ = writeln!(stderr, "covert-fbl: {}", status.message);
        return Err(CliError {
            code: status.code,
            message: String::new(),
        });
    }
    Ok(())
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                EXIT_INVALID
            } else {
                let _ = stdout.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if !e.message.is_empty() {
                let _ = writeln!(stderr, "covert-fbl: {}", e.message);
            }
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("covert-fbl").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn precedence() {
        let file = FileConfig {
            sigma_b2: Some(2.0),
            epsilon: Some(0.2),
            ..FileConfig::default()
        };
        let flags = CommonArgs {
            epsilon: Some(0.3),
            ..CommonArgs::default()
        };
        let s = Settings::resolve(&flags, &file);
        assert_eq!(s.epsilon, 0.3);
        assert_eq!(s.sigma_b2, 2.0);
        assert_eq!(s.sigma_w2, 1.0);
        assert_eq!(s.max_blocklength, 100);
        assert_eq!(s.mode, ConstraintMode::Kl);
        assert_eq!(s.precision, 9);
    }

    #[test]
    fn range_parsing() {
        assert_eq!(
            parse_range("100:500:100").unwrap(),
            vec![100.0, 200.0, 300.0, 400.0, 500.0]
        );
        assert_eq!(parse_range("0.1:0.3:0.1").unwrap().len(), 3);
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("5:1:1").is_err());
        assert!(parse_range("1:5:0").is_err());
    }

    #[test]
    fn sweep_spec_invariants() {
        assert!(SweepSpec::new(SweepVariable::N, vec![]).is_err());
        assert!(SweepSpec::new(SweepVariable::N, vec![200.0, 100.0]).is_err());
        assert!(SweepSpec::new(SweepVariable::N, vec![100.0, 100.0]).is_err());
        assert!(SweepSpec::new(SweepVariable::N, vec![1.5]).is_err());
        assert!(SweepSpec::new(SweepVariable::Epsilon, vec![0.1, 0.6]).is_err());
        assert!(SweepSpec::new(SweepVariable::Delta, vec![0.0]).is_err());
        assert!(SweepSpec::new(SweepVariable::Power, vec![0.01, 0.1]).is_ok());
    }

    #[test]
    fn failed_point_truncates_sweep() {
        let spec = SweepSpec::new(SweepVariable::Power, vec![0.1, 0.2, 0.3]).unwrap();
        let row = || Ok(vec![Cell::Num(0.0); 9]);
        let err = Err(Error::Convergence {
            routine: "test",
            iterations: 5,
            residual: 1.0,
        });
        let (table, status) = assemble_sweep(&spec, vec![row(), err, row()]);
        assert_eq!(table.rows.len(), 1);
        let status = status.unwrap();
        assert_eq!(status.code, EXIT_CONVERGENCE);
        assert!(status.message.contains("power = 0.2"), "{}", status.message);

        let (table, status) = assemble_sweep(&spec, vec![row(), row(), row()]);
        assert_eq!(table.rows.len(), 3);
        assert!(status.is_none());
    }

    #[test]
    fn design_reference_record() {
        let (code, out, _) =
            run_capture(&["design", "--max-blocklength", "100", "--epsilon", "0.1"]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        let p_star: f64 = row[header.iter().position(|c| *c == "p_star").unwrap()]
            .parse()
            .unwrap();
        assert!((p_star - 0.02027).abs() < 5e-5, "{p_star}");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_capture(&["design", "--epsilon", "0.6"]).0, EXIT_INVALID);
        assert_eq!(run_capture(&["validate", "--trials", "0"]).0, EXIT_INVALID);
        assert_eq!(run_capture(&["bogus"]).0, EXIT_INVALID);
        assert_eq!(run_capture(&["--version"]).0, EXIT_OK);
        let (code, _, err) = run_capture(&["sweep", "--variable", "n", "--values", "200,100"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains("strictly increasing"));
    }

    #[test]
    fn rate_both_directions() {
        let (code, out, _) = run_capture(&[
            "rate",
            "--power",
            "1",
            "--blocklength",
            "200",
            "--delta",
            "0.01",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("0.813584558"), "{out}");
        let (code, out, _) = run_capture(&[
            "rate",
            "--power",
            "1",
            "--blocklength",
            "200",
            "--rate",
            "0.813584558",
        ]);
        assert_eq!(code, 0);
        let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
        let delta: f64 = row[4].parse().unwrap();
        assert!((delta - 0.01).abs() < 1e-8, "{out}");
    }
}
