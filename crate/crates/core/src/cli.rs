//! Command-line front end.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! mode = "deterministic"        # or "randomized", "play_the_winner"
//! matrix = [1, 3, 2, 2]         # a, b, c, d
//! # randomized:      matrix = [[pmf of W], [pmf of Z]]
//! # play_the_winner: matrix = [p1, p2]
//! w0 = 3
//! b0 = 2
//! t_star = 2.0
//! replications = 500            # default 500
//! seed = 20240501               # default 0
//! order_cap = 4                 # default 4, at most 6
//! output_dir = "out"            # default "out"
//! ```
//!
//! Command-line flags override the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_theory::{limit_for, GammaLimit};
use crate::moment_engine::{
    build_moment_ode, leading_coefficient, moment_indices, solve_moments, MAX_ORDER_CAP,
};
use crate::process_sim::{run_ensemble, run_ensemble_with_threads, EnsembleResult, SimConfig};
use crate::stats_verify::{build_report, histogram, scaled_samples, VerificationReport};
use crate::urn_model::{EntryDistribution, RandomizedRule, ReplacementRule, Rule};

pub const REPLICAS_FILE: &str = "replicas.csv";
pub const MOMENTS_FILE: &str = "moments.csv";
pub const REPORT_FILE: &str = "report.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";

/// Default moment grid: `0, 0.1, ..., 3`.
pub fn default_moment_grid() -> Vec<f64> {
    (0..=30).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Deterministic,
    Randomized,
    PlayTheWinner,
}

/// On-disk run description; echoed verbatim (after overrides) into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub mode: Mode,
    pub matrix: toml::Value,
    pub w0: u64,
    pub b0: u64,
    pub t_star: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_order_cap")]
    pub order_cap: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_replications() -> usize {
    500
}

fn default_order_cap() -> u32 {
    4
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct Overrides {
    /// Master seed for the replica streams
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long = "out", global = true)]
    pub out: Option<PathBuf>,
    /// Number of Monte-Carlo replications
    #[arg(long, global = true)]
    pub replications: Option<usize>,
    /// Simulation stopping time
    #[arg(long = "t-star", global = true)]
    pub t_star: Option<f64>,
    /// Moment order cap
    #[arg(long = "order", global = true)]
    pub order: Option<u32>,
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: RunConfigFile,
    pub sim: SimConfig,
    pub order_cap: u32,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_file(mut file: RunConfigFile, overrides: &Overrides) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            file.seed = seed;
        }
        if let Some(out) = &overrides.out {
            file.output_dir = out.clone();
        }
        if let Some(r) = overrides.replications {
            file.replications = r;
        }
        if let Some(t) = overrides.t_star {
            file.t_star = t;
        }
        if let Some(n) = overrides.order {
            file.order_cap = n;
        }
        if file.order_cap < 1 || file.order_cap > MAX_ORDER_CAP {
            return Err(Error::OrderCap(file.order_cap));
        }
        let rule = parse_rule(file.mode, &file.matrix)?;
        let sim = SimConfig::new(rule, file.w0, file.b0, file.t_star, file.replications, file.seed)?;
        Ok(Self {
            order_cap: file.order_cap,
            output_dir: file.output_dir.clone(),
            sim,
            file,
        })
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::ConfigFile {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let file: RunConfigFile = toml::from_str(&text).map_err(|e| Error::ConfigFile {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Self::from_file(file, overrides).map_err(|e| Error::ConfigFile {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn tau0(&self) -> u64 {
        self.sim.tau0()
    }
}

fn parse_rule(mode: Mode, matrix: &toml::Value) -> Result<Rule> {
    let bad = |what: &str| Error::InvalidConfig(format!("matrix for mode {mode:?}: {what}"));
    let array = matrix.as_array().ok_or_else(|| bad("expected an array"))?;
    let number = |v: &toml::Value| -> Option<f64> {
        v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
    };
    match mode {
        Mode::Deterministic => {
            let entries: Vec<i64> = array
                .iter()
                .map(|v| v.as_integer())
                .collect::<Option<_>>()
                .ok_or_else(|| bad("entries must be integers"))?;
            match entries[..] {
                [a, b, c, d] => Ok(ReplacementRule::new(a, b, c, d).into()),
                _ => Err(bad("expected four integers a, b, c, d")),
            }
        }
        Mode::Randomized => {
            let pmfs: Vec<Vec<f64>> = array
                .iter()
                .map(|row| row.as_array()?.iter().map(number).collect::<Option<Vec<f64>>>())
                .collect::<Option<_>>()
                .ok_or_else(|| bad("expected two arrays of probabilities"))?;
            match &pmfs[..] {
                [w, z] => {
                    let rule = RandomizedRule::new(
                        EntryDistribution::new(w.clone())?,
                        EntryDistribution::new(z.clone())?,
                    )?;
                    Ok(rule.into())
                }
                _ => Err(bad("expected exactly two pmfs")),
            }
        }
        Mode::PlayTheWinner => {
            let ps: Vec<f64> = array
                .iter()
                .map(number)
                .collect::<Option<_>>()
                .ok_or_else(|| bad("success rates must be numbers"))?;
            match ps[..] {
                [p1, p2] if (0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p2) => {
                    Ok(RandomizedRule::play_the_winner(p1, p2)?.into())
                }
                [_, _] => Err(bad("success rates must lie in [0, 1]")),
                _ => Err(bad("expected [p1, p2]")),
            }
        }
    }
}

/// Writes every `(name, contents)` pair into `dir` through temporary files,
/// renaming only once all of them are on disk.
fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, contents) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(Error::io(&tmp, e));
        }
        staged.push((tmp, dir.join(name)));
    }
    let mut out = Vec::with_capacity(staged.len());
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
        out.push(dest);
    }
    Ok(out)
}

fn ensemble(config: &RunConfig, threads: Option<usize>) -> Result<EnsembleResult> {
    match threads {
        Some(n) => run_ensemble_with_threads(&config.sim, n),
        None => run_ensemble(&config.sim),
    }
}

pub fn replicas_csv(ensemble: &EnsembleResult, k: f64, t_star: f64) -> String {
    let mut out = String::from("replica,final_w,final_b,events,scaled_w,scaled_b\n");
    let scaled = scaled_samples(ensemble, k, t_star);
    for (idx, (r, (sw, sb))) in ensemble.replicas.iter().zip(scaled).enumerate() {
        let _ = writeln!(
            out,
            "{idx},{},{},{},{sw},{sb}",
            r.final_state.white, r.final_state.blue, r.events
        );
    }
    out
}

/// Runs the ensemble and writes `replicas.csv`.
pub fn cmd_simulate(config: &RunConfig, threads: Option<usize>) -> Result<PathBuf> {
    let ens = ensemble(config, threads)?;
    let csv = replicas_csv(&ens, config.sim.k() as f64, config.sim.t_star);
    let mut paths = write_outputs(&config.output_dir, &[(REPLICAS_FILE, csv)])?;
    Ok(paths.remove(0))
}

/// Solves the moment system on the default grid and writes `moments.csv`.
pub fn cmd_moments(config: &RunConfig) -> Result<PathBuf> {
    let system = build_moment_ode(&config.sim.rule, config.order_cap, config.sim.w0, config.sim.b0)?;
    let grid = default_moment_grid();
    let traj = solve_moments(&system, &grid)?;
    let mut out = String::from("t,i,j,m,scaled_m\n");
    for (t_idx, t) in grid.iter().enumerate() {
        for &(i, j) in &traj.index {
            let _ = writeln!(
                out,
                "{t},{i},{j},{},{}",
                traj.raw(i, j, t_idx),
                traj.scaled_value(i, j, t_idx)
            );
        }
    }
    let mut paths = write_outputs(&config.output_dir, &[(MOMENTS_FILE, out)])?;
    Ok(paths.remove(0))
}

fn trim(x: f64) -> String {
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_owned() } else { s.to_owned() }
}

fn describe_rule(rule: &Rule) -> String {
    match rule {
        Rule::Deterministic(r) => format!(
            "deterministic [[{}, {}], [{}, {}]], k = {}",
            r.a,
            r.b,
            r.c,
            r.d,
            r.k()
        ),
        Rule::Randomized(r) => format!(
            "randomized, k = {}, W ~ {:?} (mean {}), Z ~ {:?} (mean {})",
            r.k(),
            r.dist_w().pmf(),
            trim(r.mean_w()),
            r.dist_z().pmf(),
            trim(r.mean_z())
        ),
    }
}

/// Limit law and leading-coefficient table as text.
pub fn cmd_limits(config: &RunConfig) -> Result<String> {
    let rule = &config.sim.rule;
    let tau0 = config.tau0();
    let limit = limit_for(rule, tau0)?;
    let mut out = String::new();
    let _ = writeln!(out, "rule: {}", describe_rule(rule));
    let _ = writeln!(out, "tau0: {tau0}");
    let _ = writeln!(out, "shape: {}", trim(limit.shape));
    let _ = writeln!(out, "scale: {}", trim(limit.scale));
    let _ = writeln!(out, "weights: {:.6}/{:.6}", limit.weights.0, limit.weights.1);
    let (w, b) = (limit.white(), limit.blue());
    let _ = writeln!(out, "white marginal: Gamma({}, {})", trim(w.shape), trim(w.scale));
    let _ = writeln!(out, "blue marginal: Gamma({}, {})", trim(b.shape), trim(b.scale));
    let symbol = match rule {
        Rule::Deterministic(_) => "K",
        Rule::Randomized(_) => "M",
    };
    let _ = writeln!(out, "asymptotic coefficients {symbol}_(i,j) for 1 <= i + j <= {}:", config.order_cap);
    let _ = writeln!(out, "i,j,value");
    for (i, j) in moment_indices(config.order_cap) {
        let v = leading_coefficient(rule, i, j, tau0)?;
        let _ = writeln!(out, "{i},{j},{}", trim(v));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct ReportDocument<'a> {
    version: &'static str,
    config: &'a RunConfigFile,
    limit: &'a GammaLimit,
    passed: bool,
    #[serde(flatten)]
    report: &'a VerificationReport,
}

pub struct VerifyOutcome {
    pub report: VerificationReport,
    pub paths: Vec<PathBuf>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.report.pass_flags.all()
    }
}

/// Simulates, solves, and compares; writes `report.json` and
/// `histogram.csv`.
pub fn cmd_verify(config: &RunConfig, threads: Option<usize>) -> Result<VerifyOutcome> {
    let sim = &config.sim;
    let ens = ensemble(config, threads).map_err(|e| e.at_stage("simulate"))?;
    let traj = build_moment_ode(&sim.rule, config.order_cap, sim.w0, sim.b0)
        .and_then(|system| solve_moments(&system, &[0.0, sim.t_star]))
        .map_err(|e| e.at_stage("moments"))?;
    let limit = limit_for(&sim.rule, sim.tau0()).map_err(|e| e.at_stage("limits"))?;
    let report = build_report(&ens, sim, &limit, &traj).map_err(|e| e.at_stage("report"))?;

    let samples = scaled_samples(&ens, sim.k() as f64, sim.t_star);
    let mut hist = String::from("color,bin_left,bin_right,count,density,gamma_pdf_mid\n");
    for (color, data, marginal) in [
        ("white", samples.iter().map(|s| s.0).collect::<Vec<_>>(), limit.white()),
        ("blue", samples.iter().map(|s| s.1).collect(), limit.blue()),
    ] {
        for bin in histogram(&data, &marginal) {
            let _ = writeln!(
                hist,
                "{color},{},{},{},{},{}",
                bin.bin_left, bin.bin_right, bin.count, bin.density, bin.gamma_pdf_mid
            );
        }
    }

    let doc = ReportDocument {
        version: env!("CARGO_PKG_VERSION"),
        config: &config.file,
        limit: &limit,
        passed: report.pass_flags.all(),
        report: &report,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialize(e.to_string()))?;
    let paths = write_outputs(&config.output_dir, &[(REPORT_FILE, json + "\n"), (HISTOGRAM_FILE, hist)])
        .map_err(|e| e.at_stage("write"))?;
    Ok(VerifyOutcome { report, paths })
}

#[derive(Debug, Parser)]
#[command(name = "polya", version, about = "Poissonized two-color Pólya urns: simulate, solve moments, derive limits, verify")]
pub struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for the ensemble (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run the Monte-Carlo ensemble and write replicas.csv
    Simulate,
    /// Solve the mixed-moment ODEs and write moments.csv
    Moments,
    /// Print the Gamma limit law and leading coefficients
    Limits,
    /// Compare simulation with theory; write report.json and histogram.csv
    Verify,
}

/// Exit codes: 0 success, 1 verification checks failed, 2 error.
pub fn run(cli: Cli) -> ExitCode {
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--config PATH is required".into()))?;
    let config = RunConfig::load(path, &cli.overrides)?;
    match cli.command {
        Command::Simulate => {
            let out = cmd_simulate(&config, cli.threads)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Moments => {
            let out = cmd_moments(&config)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Limits => {
            print!("{}", cmd_limits(&config)?);
            Ok(true)
        }
        Command::Verify => {
            let outcome = cmd_verify(&config, cli.threads)?;
            let r = &outcome.report;
            let flags = &r.pass_flags;
            let line = |name: &str, ok: bool, detail: String| {
                println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
            };
            line(
                "proportion",
                flags.proportion,
                format!("{:.5} vs {:.5} (tol {})", r.proportion_white, r.theory_proportion, r.thresholds.proportion_tolerance),
            );
            line(
                "correlation",
                flags.correlation,
                format!("{:?} (min {})", r.pearson_corr, r.thresholds.min_correlation),
            );
            line("ks_white", flags.ks_white, format!("D = {:.5} (crit {:.5})", r.ks_white.statistic, r.thresholds.ks_critical));
            line("ks_blue", flags.ks_blue, format!("D = {:.5} (crit {:.5})", r.ks_blue.statistic, r.thresholds.ks_critical));
            line(
                "event_count",
                flags.event_count,
                format!("{:.1} vs {:.1}", r.event_count_mean, r.event_count_expected),
            );
            let worst = r.moment_table.iter().map(|m| m.z.abs()).fold(0.0, f64::max);
            line("moments", flags.moments, format!("max |z| = {worst:.3} (max {})", r.thresholds.moment_z_max));
            for p in &outcome.paths {
                println!("wrote {}", p.display());
            }
            Ok(outcome.passed())
        }
    }
}
