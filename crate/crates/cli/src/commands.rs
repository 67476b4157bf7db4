use std::fmt;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::Value;
use uniqrisk::bounds::bound_curves;
use uniqrisk::estimators::PoissonGammaProtocol;
use uniqrisk::polyapprox::{approx_bounds, PolyApproxProblem, DEFAULT_C0};
use uniqrisk::simulation::reproduce_table;
use uniqrisk::{estimate as run_estimate, CellCounts, EstimatorConfig, EstimatorKind, FrequencyProfile, ThetaConvention};

use crate::output::{Cell, Output, Table};

/// Invalid invocation detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 1 for bad invocations or inputs, 2 for numeric and convergence failures.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<uniqrisk::Error>() {
            return match e {
                uniqrisk::Error::NonConvergence { .. } | uniqrisk::Error::Unbounded(_) => 2,
                uniqrisk::Error::InvalidParameter(_) | uniqrisk::Error::PairingViolation { .. } => 1,
            };
        }
    }
    1
}

/// Separator joining key columns into one cell identifier; cannot occur in CSV text fields
/// produced by ordinary tools.
const KEY_SEPARATOR: char = '\u{1f}';

fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ProfileArgs {
    /// Input file, or `-` for stdin. Default: one cell identifier per line.
    #[arg(long = "in")]
    input: PathBuf,
    /// Input is a CSV with header `cell,count`.
    #[arg(long, conflicts_with = "key_cols")]
    counts: bool,
    /// Input is a CSV of records; these header columns (comma-separated) form the cell.
    #[arg(long, value_delimiter = ',')]
    key_cols: Option<Vec<String>>,
}

fn profile_from_counts(text: &str) -> Result<FrequencyProfile> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| usage(format!("counts CSV needs a '{name}' column")))
    };
    let (cell_col, count_col) = (col("cell")?, col("count")?);
    let mut cells = CellCounts::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let count: u64 = record[count_col]
            .trim()
            .parse()
            .map_err(|_| usage(format!("row {}: count '{}' is not a nonnegative integer", line + 2, &record[count_col])))?;
        cells.add(record[cell_col].to_string(), count);
    }
    Ok(cells.profile())
}

fn profile_from_keyed_records(text: &str, key_cols: &[String]) -> Result<FrequencyProfile> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let idx: Vec<usize> = key_cols
        .iter()
        .map(|k| {
            header
                .iter()
                .position(|h| h.trim() == k)
                .ok_or_else(|| usage(format!("key column '{k}' not in header")))
        })
        .collect::<Result<_>>()?;
    let mut keys = Vec::new();
    for record in reader.records() {
        let record = record?;
        let key: Vec<&str> = idx.iter().map(|&i| record.get(i).unwrap_or("")).collect();
        keys.push(key.join(&KEY_SEPARATOR.to_string()));
    }
    Ok(FrequencyProfile::from_records(keys))
}

pub fn profile(args: &ProfileArgs) -> Result<Output> {
    let text = read_input(&args.input)?;
    let profile = if args.counts {
        profile_from_counts(&text)?
    } else if let Some(cols) = &args.key_cols {
        profile_from_keyed_records(&text, cols)?
    } else {
        // blank lines are separators, not an empty-named cell
        FrequencyProfile::from_records(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    };
    let mut table = Table::new(["i", "z"]);
    for (i, z) in profile.entries() {
        table.push(vec![i.into(), z.into()]);
    }
    Ok(Output { table, json: Some(serde_json::to_value(&profile)?), failure: None })
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// Profile JSON as written by `profile`, or `-` for stdin.
    #[arg(long)]
    profile: PathBuf,
    /// Ratio of unobserved to observed records.
    #[arg(long)]
    lambda: f64,
    /// Population size (default: round((1+lambda) n)).
    #[arg(long)]
    nbar: Option<u64>,
    /// Estimator name or `all` (every estimator valid at this lambda).
    #[arg(long, default_value = "all", conflicts_with = "smoothing")]
    estimator: String,
    /// Run the series estimator with this smoothing law instead.
    #[arg(long, value_parser = ["none", "poisson", "binomial2"])]
    smoothing: Option<String>,
    /// Override the Poisson smoothing parameter.
    #[arg(long)]
    beta: Option<f64>,
    /// Override the Binomial smoothing trials.
    #[arg(long)]
    x0: Option<u64>,
    /// Index range of the Dirichlet concentration equation.
    #[arg(long, default_value = "shifted", value_parser = ["shifted", "standard"])]
    theta_convention: String,
    /// Poisson-Gamma fitting protocol for bethlehem and skinner.
    #[arg(long, default_value = "sample", value_parser = ["sample", "population"])]
    poisson_gamma: String,
}

fn selected_estimators(args: &EstimateArgs) -> Result<Vec<EstimatorKind>> {
    if let Some(s) = &args.smoothing {
        return Ok(vec![match s.as_str() {
            "none" => EstimatorKind::Unbiased,
            "poisson" => EstimatorKind::Poisson,
            _ => EstimatorKind::Binomial2,
        }]);
    }
    if args.estimator == "all" {
        return Ok(EstimatorKind::applicable(args.lambda));
    }
    let kind = args.estimator.parse::<EstimatorKind>().map_err(|e| usage(e.to_string()))?;
    Ok(vec![kind])
}

fn describe_extras(report: &uniqrisk::EstimateReport) -> String {
    let mut parts = Vec::new();
    if let Some(spec) = &report.smoothing {
        match spec {
            uniqrisk::SmoothingSpec::None => parts.push("smoothing=none".to_string()),
            uniqrisk::SmoothingSpec::Poisson { beta } => {
                parts.push("smoothing=poisson".into());
                parts.push(format!("beta={}", crate::output::format_float(*beta)));
            }
            uniqrisk::SmoothingSpec::Binomial { trials, p } => {
                parts.push("smoothing=binomial".into());
                parts.push(format!("trials={trials}"));
                parts.push(format!("p={}", crate::output::format_float(*p)));
            }
        }
    }
    for (k, v) in report.fitted.iter().flatten() {
        parts.push(format!("{k}={}", crate::output::format_float(*v)));
    }
    parts.join(";")
}

pub fn estimate(args: &EstimateArgs) -> Result<Output> {
    let text = read_input(&args.profile)?;
    let profile: FrequencyProfile =
        serde_json::from_str(&text).map_err(|e| usage(format!("invalid profile JSON: {e}")))?;
    let mut config = EstimatorConfig::new(args.lambda);
    config.population_size = args.nbar;
    config.beta = args.beta;
    config.x0 = args.x0;
    config.theta_convention = args.theta_convention.parse::<ThetaConvention>()?;
    config.poisson_gamma = args.poisson_gamma.parse::<PoissonGammaProtocol>()?;

    let kinds = selected_estimators(args)?;
    let mut reports = Vec::new();
    let mut failure = None;
    for kind in kinds {
        match run_estimate(&profile, kind, &config) {
            Ok(r) => reports.push(r),
            Err(e) => {
                eprintln!("error: {kind}: {e}");
                failure.get_or_insert(anyhow::Error::new(e).context(format!("estimator {kind} failed")));
            }
        }
    }
    if reports.is_empty() {
        return Err(failure.unwrap_or_else(|| usage("no estimator selected")));
    }
    let mut table = Table::new(["name", "value", "clamped", "lambda", "details"]);
    for r in &reports {
        table.push(vec![r.name.name().into(), r.value.into(), r.clamped.into(), r.lambda.into(), describe_extras(r).into()]);
    }
    Ok(Output { table, json: Some(serde_json::to_value(&reports)?), failure })
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Which table to reproduce.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    table: u8,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    /// Shrinks cells, population and sample proportionally.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

pub fn simulate(args: &SimulateArgs, seed: u64) -> Result<Output> {
    if args.iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    if !(args.scale > 0.0 && args.scale <= 1.0) {
        return Err(usage(format!("--scale must lie in (0, 1], got {}", args.scale)));
    }
    let report = reproduce_table(args.table, seed, args.iterations, args.scale)?;
    let labels = report.labels();
    let mut header = vec!["estimator".to_string()];
    for l in &labels {
        header.push(l.clone());
        header.push(format!("{l}_sd"));
    }
    let mut table = Table::new(header);

    let mut row: Vec<Cell> = vec!["true_tau1".into()];
    for c in &report.columns {
        row.push(c.true_tau1.mean.into());
        row.push(c.true_tau1.sd.into());
    }
    table.push(row);
    for kind in EstimatorKind::TABLE {
        let mut row: Vec<Cell> = vec![kind.name().into()];
        for (c, label) in report.columns.iter().zip(&labels) {
            let s = &c.estimators[&kind];
            if s.failures > 0 {
                eprintln!(
                    "warning: {label}/{kind}: {} of {} iterations failed (first: {})",
                    s.failures,
                    args.iterations,
                    s.first_failure.as_deref().unwrap_or("?")
                );
            }
            row.push(s.estimate.mean.into());
            row.push(s.estimate.sd.into());
        }
        table.push(row);
    }
    Ok(Output::table(table))
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long)]
    lambda_min: f64,
    #[arg(long)]
    lambda_max: f64,
    /// Sample sizes, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<f64>,
    /// Number of lambda intervals; the grid has steps+1 points.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Constant of the minimax lower bound.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
}

pub fn bounds(args: &BoundsArgs) -> Result<Output> {
    let curves = bound_curves(args.lambda_min, args.lambda_max, args.steps, &args.n, args.k)?;
    let mut table = Table::new(["kind", "lambda", "n", "value"]);
    for c in &curves {
        for &(l, v) in &c.points {
            table.push(vec![c.kind.clone().into(), l.into(), c.n.into(), v.into()]);
        }
    }
    Ok(Output::table(table))
}

#[derive(Debug, Args, Serialize)]
pub struct PolyapproxArgs {
    /// Sample size used to derive xi and B.
    #[arg(long)]
    n: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Polynomial degree.
    #[arg(long = "L")]
    l: usize,
    /// Override xi (left end of the interval is 1/xi).
    #[arg(long)]
    xi: Option<f64>,
    /// Override B (the exponent is -2Bx).
    #[arg(long = "B")]
    b: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C0)]
    c0: f64,
}

pub fn polyapprox(args: &PolyapproxArgs) -> Result<Output> {
    let derived = match (args.n, args.lambda) {
        (Some(n), Some(lambda)) => Some(PolyApproxProblem::from_n_lambda(n, lambda, args.l, args.c0)?),
        (None, None) => None,
        _ => return Err(usage("--n and --lambda go together")),
    };
    let xi = args.xi.or(derived.map(|p| p.xi));
    let b = args.b.or(derived.map(|p| p.b));
    let (Some(xi), Some(b)) = (xi, b) else {
        return Err(usage("give --n and --lambda, or both --xi and --B"));
    };
    let problem = PolyApproxProblem::new(xi, b, args.l)?;
    let report = approx_bounds(&problem)?;
    let mut doc = serde_json::to_value(&report)?;
    if let (Some(n), Some(lambda)) = (args.n, args.lambda) {
        doc["n"] = n.into();
        doc["lambda"] = lambda.into();
        doc["b_in_range"] = problem.b_in_range(n, lambda).into();
    }
    Ok(Output { table: object_to_table(&doc), json: Some(doc), failure: None })
}

/// Flat JSON object as a one-row table.
fn object_to_table(doc: &Value) -> Table {
    let obj = doc.as_object().expect("reports serialize to objects");
    let mut table = Table::new(obj.keys().cloned());
    let row = obj
        .values()
        .map(|v| match v {
            Value::Number(x) => match x.as_u64() {
                Some(i) => Cell::Int(i),
                None => Cell::Float(x.as_f64().unwrap_or(f64::NAN)),
            },
            Value::String(s) => Cell::Text(s.clone()),
            Value::Null => Cell::Float(f64::NAN),
            other => Cell::Text(other.to_string()),
        })
        .collect();
    table.push(row);
    table
}
