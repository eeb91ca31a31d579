//! Experiment runner behind the `rode-density` binary.
//!
//! A run is described by a JSON [`RunConfig`]; command-line flags override
//! its fields and a named example fills in whatever is still missing.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use rode_core::config::{named_example, NamedExample, ProblemConfig, XsGrid};
use rode_core::density::{density_grid, DensityGrid, Formula};
use rode_core::error::Error;
use rode_core::quadrature::QuadratureSpec;
use rode_core::report::{write_file, write_grid_csv};
use rode_core::solution::{fmt17, sample_paths, write_paths_csv, PathSample, ProblemSpec};
use rode_core::verify::{
    convergence_table, exact_oracle, hypothesis_reports, ConvergenceReport, ErrorKind, HypothesisOptions,
    HypothesisReport,
};

/// Default number of simulated trajectories for `paths`.
pub const DEFAULT_PATHS: usize = 10;

/// Points of the default time grid for `paths`.
pub const DEFAULT_PATH_TIMES: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Density,
    Table,
    Verify,
    Paths,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Density => "density",
            Command::Table => "table",
            Command::Verify => "verify",
            Command::Paths => "paths",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    Exact,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

/// One experiment. Every field is optional so that flags and named
/// examples can fill the gaps; validation reports whatever is still missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub example: Option<String>,
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    #[serde(default, rename = "N", alias = "n")]
    pub n: Option<usize>,
    #[serde(default, rename = "Ns", alias = "ns")]
    pub ns: Option<Vec<usize>>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub ts: Option<Vec<f64>>,
    #[serde(default)]
    pub xs: Option<XsGrid>,
    #[serde(default)]
    pub quad: Option<QuadratureSpec>,
    #[serde(default)]
    pub formula: Option<Formula>,
    #[serde(default)]
    pub oracle: Option<Oracle>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n_paths: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "rode-density", version, about = "Densities of linear random differential equations")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Named example (example1..example5).
    #[arg(long)]
    pub example: Option<String>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Truncation order.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Comma-separated truncation orders.
    #[arg(long = "Ns", value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Comma-separated times.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub ts: Option<Vec<f64>>,
    /// Uniform x grid as lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    pub xs: Option<String>,
    /// tensor:<nodes> or mc:<samples>:<seed>.
    #[arg(long)]
    pub quad: Option<String>,
    #[arg(long, value_enum)]
    pub oracle: Option<Oracle>,
    /// auto, f1n, f1homo, eta1, xi1 or f1homo_split.
    #[arg(long)]
    pub formula: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of trajectories for `paths`.
    #[arg(long = "paths")]
    pub n_paths: Option<usize>,
}

/// Failure of a run, rendered as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub t: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl CliError {
    pub fn validation(violations: Vec<String>) -> Self {
        CliError {
            kind: "validation".into(),
            message: format!("invalid configuration: {}", violations.join("; ")),
            violations,
            location: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.kind == "validation" {
            2
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let location = match &e {
            Error::AtPoint { x, t, n, .. } => Some(Location { x: *x, t: *t, n: *n }),
            _ => None,
        };
        let violations = match &e {
            Error::Validation(v) => v.clone(),
            _ => Vec::new(),
        };
        CliError { kind: e.kind().into(), message: e.to_string(), violations, location }
    }
}

/// Parse `tensor:<n>` or `mc:<samples>:<seed>`.
pub fn parse_quad(s: &str) -> Result<QuadratureSpec, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let bad = || format!("quad '{s}' must be tensor:<nodes> or mc:<samples>:<seed>");
    match parts.as_slice() {
        ["tensor", n] => Ok(QuadratureSpec::tensor(n.parse().map_err(|_| bad())?)),
        ["mc", samples, seed] => {
            Ok(QuadratureSpec::mc(samples.parse().map_err(|_| bad())?, seed.parse().map_err(|_| bad())?))
        }
        _ => Err(bad()),
    }
}

/// Read the config file (if any) and lay the flags over it. Unparseable flag
/// values are collected rather than reported one at a time.
pub fn merge(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => read_config(path)?,
        None => RunConfig::default(),
    };
    let mut bad = Vec::new();
    if cli.command.is_some() {
        cfg.command = cli.command;
    }
    if cli.example.is_some() {
        cfg.example = cli.example.clone();
    }
    if cli.n.is_some() {
        cfg.n = cli.n;
    }
    if cli.ns.is_some() {
        cfg.ns = cli.ns.clone();
    }
    if cli.t.is_some() {
        cfg.t = cli.t;
    }
    if cli.ts.is_some() {
        cfg.ts = cli.ts.clone();
    }
    if let Some(xs) = &cli.xs {
        match xs.parse::<XsGrid>() {
            Ok(g) => cfg.xs = Some(g),
            Err(e) => bad.push(e.to_string()),
        }
    }
    if let Some(q) = &cli.quad {
        match parse_quad(q) {
            Ok(q) => cfg.quad = Some(q),
            Err(e) => bad.push(e),
        }
    }
    if let Some(f) = &cli.formula {
        match Formula::from_str(f) {
            Ok(f) => cfg.formula = Some(f),
            Err(e) => bad.push(e.to_string()),
        }
    }
    if cli.oracle.is_some() {
        cfg.oracle = cli.oracle;
    }
    if cli.out.is_some() || cli.format.is_some() {
        let out = cfg.output.get_or_insert_with(OutputConfig::default);
        if cli.out.is_some() {
            out.path = cli.out.clone();
        }
        if cli.format.is_some() {
            out.format = cli.format;
        }
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.n_paths.is_some() {
        cfg.n_paths = cli.n_paths;
    }
    if bad.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::validation(bad))
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::from(Error::Io { path: path.display().to_string(), message: e.to_string() }))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(vec![format!("config {}: {e}", path.display())]))
}

/// A fully resolved and validated run.
#[derive(Debug, Clone)]
pub struct Plan {
    pub command: Command,
    pub spec: ProblemSpec,
    pub ns: Vec<usize>,
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    pub quad: QuadratureSpec,
    pub formula: Formula,
    pub oracle: Oracle,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub n_paths: usize,
}

/// Expand the named example, apply defaults and check every field, reporting
/// all violations together.
pub fn resolve(cfg: &RunConfig) -> Result<Plan, CliError> {
    let mut v = Vec::new();
    let example: Option<NamedExample> = match &cfg.example {
        Some(name) => match named_example(name) {
            Ok(e) => Some(e),
            Err(e) => {
                v.push(e.to_string());
                None
            }
        },
        None => None,
    };
    let command = cfg.command;
    if command.is_none() {
        v.push("command is required (density, table, verify or paths)".into());
    }
    let problem = cfg.problem.clone().or_else(|| example.as_ref().map(|e| e.problem.clone()));
    let spec = match &problem {
        Some(p) => match p.build() {
            Ok(s) => Some(s),
            Err(e) => {
                v.push(format!("problem: {e}"));
                None
            }
        },
        None => {
            if cfg.example.is_none() {
                v.push("problem is required (set example or problem)".into());
            }
            None
        }
    };

    // Truncation orders.
    let ns: Vec<usize> = match (cfg.n, &cfg.ns) {
        (Some(_), Some(_)) => {
            v.push("give either N or Ns, not both".into());
            Vec::new()
        }
        (Some(n), None) => vec![n],
        (None, Some(ns)) => ns.clone(),
        (None, None) => match (command, &example) {
            (Some(Command::Table), Some(e)) => e.ns.clone(),
            (Some(Command::Verify), _) => vec![HypothesisOptions::default().n],
            (Some(Command::Density) | Some(Command::Paths), Some(e)) => vec![*e.ns.last().unwrap_or(&1)],
            _ => Vec::new(),
        },
    };
    match command {
        Some(Command::Table) if ns.is_empty() => v.push("table needs Ns".into()),
        Some(Command::Density | Command::Paths | Command::Verify) if ns.len() != 1 => {
            v.push(format!("{} needs exactly one N", command.unwrap()))
        }
        _ => {}
    }

    // Times.
    let ts: Vec<f64> = match (cfg.t, &cfg.ts) {
        (Some(_), Some(_)) => {
            v.push("give either t or ts, not both".into());
            Vec::new()
        }
        (Some(t), None) => vec![t],
        (None, Some(ts)) => ts.clone(),
        (None, None) => match (command, &example, &spec) {
            (Some(Command::Paths), _, Some(s)) => {
                let (a, b) = s.interval();
                (0..DEFAULT_PATH_TIMES).map(|i| a + (b - a) * i as f64 / (DEFAULT_PATH_TIMES - 1) as f64).collect()
            }
            (Some(Command::Density | Command::Table), Some(e), _) => vec![e.t],
            _ => Vec::new(),
        },
    };
    match command {
        Some(Command::Table) if ts.len() != 1 => v.push("table needs exactly one t".into()),
        Some(Command::Density | Command::Paths) if ts.is_empty() => {
            v.push(format!("{} needs t or ts", command.unwrap()))
        }
        _ => {}
    }
    if let Some(s) = &spec {
        let (a, b) = s.interval();
        for &t in &ts {
            if !(t >= a && t <= b) {
                v.push(format!("t = {t} outside [{a}, {b}]"));
            }
        }
    }

    // Spatial grid.
    let grid = cfg.xs.or_else(|| example.as_ref().map(|e| e.xs));
    let xs = match (command, grid) {
        (Some(Command::Density | Command::Table), None) => {
            v.push("xs is required (lo:hi:n)".into());
            Vec::new()
        }
        (_, Some(g)) => {
            let bad = g.violations();
            let none = bad.is_empty();
            v.extend(bad);
            if none {
                g.points()
            } else {
                Vec::new()
            }
        }
        (_, None) => Vec::new(),
    };
    if matches!(command, Some(Command::Density | Command::Table)) && cfg.xs.is_some_and(|g| g.n == 0) {
        v.push("xs needs at least one point".into());
    }

    let mut quad = cfg.quad.clone().or_else(|| example.as_ref().map(|e| e.quad.clone())).unwrap_or_default();
    if let (Some(s), QuadratureSpec::Mc { seed, .. }) = (cfg.seed, &mut quad) {
        *seed = s;
    }
    v.extend(quad.violations());

    let oracle = cfg.oracle.unwrap_or(match &example {
        Some(e) if e.exact_oracle && cfg.problem.is_none() && command == Some(Command::Table) => Oracle::Exact,
        _ => Oracle::None,
    });
    if oracle == Oracle::Exact && command.is_some_and(|c| c != Command::Table) {
        v.push("oracle exact only applies to table".into());
    }

    let n_paths = cfg.n_paths.unwrap_or(DEFAULT_PATHS);
    if n_paths == 0 {
        v.push("n_paths must be positive".into());
    }

    let out = cfg.output.as_ref().and_then(|o| o.path.clone());
    let format = cfg
        .output
        .as_ref()
        .and_then(|o| o.format)
        .or_else(|| match out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") => Some(Format::Json),
            _ => None,
        })
        .unwrap_or(Format::Csv);

    if !v.is_empty() {
        return Err(CliError::validation(v));
    }
    Ok(Plan {
        command: command.expect("checked"),
        spec: spec.expect("checked"),
        ns,
        ts,
        xs,
        quad,
        formula: cfg.formula.unwrap_or(Formula::Auto),
        oracle,
        out,
        format,
        seed: cfg.seed.unwrap_or(0),
        n_paths,
    })
}

/// Serializable trajectory for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_id: usize,
    pub ts: Vec<f64>,
    pub x_vals: Vec<f64>,
    pub x0: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl From<&PathSample> for PathRecord {
    fn from(p: &PathSample) -> Self {
        PathRecord {
            path_id: p.path_id,
            ts: p.ts.clone(),
            x_vals: p.x_vals.clone(),
            x0: p.x0_draw,
            xi: p.coeffs_xi.clone(),
            eta: p.coeffs_eta.clone(),
        }
    }
}

/// Computed artifact of a run.
pub enum Artifact {
    Grid(DensityGrid),
    Table(ConvergenceReport),
    Hypotheses(Vec<HypothesisReport>),
    Paths(Vec<PathSample>),
}

pub fn compute(plan: &Plan) -> Result<Artifact, CliError> {
    let spec = &plan.spec;
    Ok(match plan.command {
        Command::Density => {
            Artifact::Grid(density_grid(spec, plan.ns[0], &plan.xs, &plan.ts, &plan.quad, plan.formula)?)
        }
        Command::Table => {
            let t = plan.ts[0];
            let oracle = match plan.oracle {
                Oracle::Exact => Some(exact_oracle(spec, t, &plan.xs)?),
                Oracle::None => None,
            };
            Artifact::Table(convergence_table(
                spec,
                &plan.ns,
                t,
                &plan.xs,
                &plan.quad,
                plan.formula,
                oracle.as_deref(),
            )?)
        }
        Command::Verify => {
            let opts = HypothesisOptions { n: plan.ns[0], seed: plan.seed, ..HypothesisOptions::default() };
            Artifact::Hypotheses(hypothesis_reports(spec, &opts))
        }
        Command::Paths => {
            Artifact::Paths(sample_paths(spec, plan.ns[0], plan.ns[0], plan.n_paths, &plan.ts, plan.seed)?)
        }
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn json_line<T: Serialize, W: Write>(value: &T, w: &mut W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
    writeln!(w)
}

/// Render an artifact in the requested format.
pub fn emit<W: Write>(artifact: &Artifact, format: Format, w: &mut W) -> std::io::Result<()> {
    match (artifact, format) {
        (Artifact::Grid(g), Format::Csv) => write_grid_csv(g, w),
        (Artifact::Grid(g), Format::Json) => json_line(g, w),
        (Artifact::Table(r), Format::Csv) => {
            writeln!(w, "N,error,reference")?;
            for row in &r.rows {
                let reference = match row.kind {
                    ErrorKind::VsOracle => "exact".to_string(),
                    ErrorKind::VsNextN => format!("N={}", next_order(r, row.n)),
                };
                writeln!(w, "{},{},{}", row.n, fmt17(row.error), reference)?;
            }
            Ok(())
        }
        (Artifact::Table(r), Format::Json) => json_line(r, w),
        (Artifact::Hypotheses(h), Format::Csv) => {
            writeln!(w, "theorem,check,status,detail,verdict")?;
            for rep in h {
                let verdict = serde_json::to_value(rep.verdict).expect("enum").as_str().unwrap_or("").to_string();
                for c in &rep.checks {
                    let status = serde_json::to_value(c.status).expect("enum").as_str().unwrap_or("").to_string();
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        rep.theorem,
                        csv_field(&c.name),
                        status,
                        csv_field(&c.detail),
                        verdict
                    )?;
                }
            }
            Ok(())
        }
        (Artifact::Hypotheses(h), Format::Json) => json_line(h, w),
        (Artifact::Paths(p), Format::Csv) => write_paths_csv(p, w),
        (Artifact::Paths(p), Format::Json) => json_line(&p.iter().map(PathRecord::from).collect::<Vec<_>>(), w),
    }
}

fn next_order(r: &ConvergenceReport, n: usize) -> usize {
    // Rows compare each order with the next one of the sorted list; the last
    // order only appears as a reference.
    let mut orders: Vec<usize> = r.rows.iter().map(|row| row.n).collect();
    orders.sort_unstable();
    orders.iter().position(|&m| m == n).and_then(|i| orders.get(i + 1)).copied().unwrap_or(n + 1)
}

/// Compute and write the artifact; returns the one-line summary.
pub fn run(plan: &Plan) -> Result<String, CliError> {
    let artifact = compute(plan)?;
    let dest = match &plan.out {
        Some(path) => {
            write_file(path, |w| emit(&artifact, plan.format, w))?;
            path.display().to_string()
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit(&artifact, plan.format, &mut lock)
                .and_then(|_| lock.flush())
                .map_err(|e| CliError::from(Error::Io { path: "<stdout>".into(), message: e.to_string() }))?;
            "<stdout>".into()
        }
    };
    Ok(summary(plan, &artifact, &dest))
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn summary(plan: &Plan, artifact: &Artifact, dest: &str) -> String {
    let orders = if plan.ns.len() == 1 { format!("N={}", plan.ns[0]) } else { format!("Ns={}", join(&plan.ns)) };
    let times = match plan.command {
        Command::Verify => String::new(),
        _ if plan.ts.len() == 1 => format!(" t={}", plan.ts[0]),
        _ => format!(" ts={}..{} ({} times)", plan.ts[0], plan.ts[plan.ts.len() - 1], plan.ts.len()),
    };
    let extra = match artifact {
        Artifact::Grid(g) => {
            format!("{} values, formula {}", g.xs.len() * g.ts.len(), g.formulas.first().map_or("-", |f| f.name()))
        }
        Artifact::Table(r) => {
            format!("errors {}", r.rows.iter().map(|row| format!("{:.6e}", row.error)).collect::<Vec<_>>().join(","))
        }
        Artifact::Hypotheses(h) => {
            let ok = h.iter().filter(|r| {
                serde_json::to_value(r.verdict)
                    .ok()
                    .and_then(|v| v.as_str().map(|s| s == "applicable"))
                    .unwrap_or(false)
            });
            format!("{} of {} theorems applicable", ok.count(), h.len())
        }
        Artifact::Paths(p) => format!("{} paths", p.len()),
    };
    format!("{} {orders}{times} -> {dest} ({extra})", plan.command)
}

/// Cap rayon's pool from RODE_THREADS when set.
pub fn configure_threads(value: Option<String>) -> Result<(), CliError> {
    let Some(raw) = value else { return Ok(()) };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(CliError::validation(vec![format!("RODE_THREADS must be a positive integer, got '{raw}'")])),
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError {
        kind: "invalid_parameter".into(),
        message: e.to_string(),
        violations: vec![],
        location: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_flag_parses() {
        assert_eq!(parse_quad("tensor:12").unwrap(), QuadratureSpec::tensor(12));
        assert_eq!(parse_quad("mc:40000:1").unwrap(), QuadratureSpec::mc(40_000, 1));
        assert!(parse_quad("mc:10").is_err());
        assert!(parse_quad("grid:3").is_err());
    }

    #[test]
    fn empty_config_lists_required_fields() {
        let e = resolve(&RunConfig::default()).unwrap_err();
        assert_eq!(e.kind, "validation");
        assert!(e.violations.iter().any(|v| v.contains("command")));
        assert!(e.violations.iter().any(|v| v.contains("problem")));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn all_violations_reported_together() {
        let cfg = RunConfig {
            command: Some(Command::Table),
            example: Some("example1".into()),
            t: Some(3.0),
            xs: Some(XsGrid::new(2.0, 1.0, 5)),
            quad: Some(QuadratureSpec::tensor(0)),
            ..RunConfig::default()
        };
        let e = resolve(&cfg).unwrap_err();
        assert!(e.violations.len() >= 3, "{:?}", e.violations);
    }

    #[test]
    fn example_fills_defaults_and_flags_override() {
        let cfg = RunConfig { command: Some(Command::Table), example: Some("example1".into()), ..RunConfig::default() };
        let p = resolve(&cfg).unwrap();
        assert_eq!(p.ns, vec![1, 2, 3]);
        assert_eq!(p.ts, vec![0.5]);
        assert_eq!(p.xs.len(), 401);
        assert_eq!(p.oracle, Oracle::Exact);
        let cfg = RunConfig { ns: Some(vec![2]), t: Some(0.25), ..cfg };
        let p = resolve(&cfg).unwrap();
        assert_eq!(p.ns, vec![2]);
        assert_eq!(p.ts, vec![0.25]);
    }

    #[test]
    fn seed_overrides_mc_seed() {
        let cfg = RunConfig {
            command: Some(Command::Density),
            example: Some("example5".into()),
            n: Some(2),
            seed: Some(9),
            ..RunConfig::default()
        };
        assert_eq!(resolve(&cfg).unwrap().quad, QuadratureSpec::mc(40_000, 9));
    }

    #[test]
    fn config_json_round_trip() {
        let raw = r#"{"command":"density","example":"example4","N":2,"t":0.5,
            "xs":{"lo":-1,"hi":1,"n":3},"quad":{"mode":"tensor","nodes_per_dim":8},
            "output":{"path":"out.json"}}"#;
        let cfg: RunConfig = serde_json::from_str(raw).unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let p = resolve(&cfg).unwrap();
        assert_eq!(p.format, Format::Json);
        assert_eq!(p.xs, vec![-1.0, 0.0, 1.0]);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn error_json_carries_location() {
        let e = CliError::from(Error::Numerical("nan".into()).at(0.5, 0.25, 3));
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "numerical");
        assert_eq!(v["error"]["location"]["N"], 3);
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn threads_env_validated() {
        assert!(configure_threads(None).is_ok());
        assert!(configure_threads(Some("zero".into())).is_err());
        assert!(configure_threads(Some("0".into())).is_err());
    }
}
