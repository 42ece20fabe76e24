//! Command-line front end: scenario loading, run orchestration and output
//! files. `main.rs` only parses arguments and maps the outcome to an exit
//! status.

pub mod library;
pub mod output;
pub mod scenario_file;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{debug, info};
use thiserror::Error;

use crate::metrics::{self, BoundReport, MetricsError};
use crate::model::UserSet;
use crate::oracle::{compute_foc, fair_rates, verify_cm4_fairness, witness_allocation, Foc};
use crate::rational::{format_decimal, Rat};
use crate::scheduler::Variant;
use crate::sim::{self, Scenario, SnapshotPolicy, StateView, Trace, TraceOptions};

pub use scenario_file::{Check, ScenarioFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 1 for anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    BoundViolation,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::BoundViolation => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cm4fq", version, about = "Multi-server max-min fair queuing simulator and bound checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and check the requested bounds.
    Run {
        /// Scenario file, or `builtin:<name>` for a bundled one.
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// full, reduced or sfq.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Print the fluid clustering and a fair rate matrix for a backlogged set.
    Oracle {
        scenario: String,
        /// Comma-separated user ids; defaults to the file's `backlogged` or all users.
        #[arg(long, value_delimiter = ',')]
        backlogged: Option<Vec<String>>,
    },
    /// Run CM4FQ and miDRR on the same arrivals and tabulate per-user rates.
    Compare {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the bundled scenarios.
    List,
    /// Print a bundled scenario file.
    Show { name: String },
}

/// Reads a scenario from disk or from the bundled library.
pub fn load(spec: &str) -> Result<ScenarioFile, CliError> {
    let text = match spec.strip_prefix("builtin:") {
        Some(name) => library::get(name)
            .ok_or_else(|| CliError::Config(format!("no bundled scenario named {name:?}")))?
            .to_string(),
        None => fs::read_to_string(spec).map_err(|source| CliError::Io {
            path: spec.into(),
            source,
        })?,
    };
    ScenarioFile::parse(&text)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    }
}

fn create(path: &Path) -> Result<io::BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(io::BufWriter::new).map_err(io_err(path))
}

/// Outcome of the requested checks on one trace.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub reports: Vec<BoundReport>,
    /// Checks not evaluated, with the reason.
    pub skipped: Vec<String>,
}

impl Evaluation {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    fn absorb(&mut self, what: &str, res: Result<Vec<BoundReport>, MetricsError>) {
        match res {
            Ok(rs) => self.reports.extend(rs),
            Err(e) => self.skipped.push(format!("{what}: {e}")),
        }
    }
}

/// Windows for the dynamic checks: each configured window, or the run from
/// the first change of the backlogged set to the horizon.
fn windows<'a>(file: &ScenarioFile, trace: &'a Trace) -> Result<Vec<(&'a StateView, &'a StateView)>, CliError> {
    if file.windows.is_empty() {
        return Ok(trace
            .boundaries
            .first()
            .map(|b| vec![(&b.after, &trace.final_state)])
            .unwrap_or_default());
    }
    file.windows
        .iter()
        .map(|w| {
            let view = |t: &Rat| {
                trace
                    .checkpoint(t)
                    .ok_or_else(|| CliError::Config(format!("window edge {t} lies beyond the horizon")))
            };
            Ok((view(&w.start)?, view(&w.end)?))
        })
        .collect()
}

pub fn trace_options(file: &ScenarioFile, scenario: &Scenario) -> TraceOptions {
    let mut opts = TraceOptions::for_scenario(scenario);
    opts.record_levels = file.checks.iter().any(Check::needs_levels);
    opts.checkpoints = file.windows.iter().flat_map(|w| [w.start, w.end]).collect();
    opts
}

/// Runs every check listed in the scenario file against `trace`.
pub fn evaluate(file: &ScenarioFile, trace: &Trace) -> Result<Evaluation, CliError> {
    let mut ev = Evaluation::default();
    let intervals: Vec<_> = trace
        .steady_intervals()
        .into_iter()
        .filter(|iv| iv.t1() > iv.t0())
        .collect();
    let mut checks = file.checks.clone();
    checks.sort();
    checks.dedup();
    for check in checks {
        match check {
            Check::SteadyState => {
                for iv in &intervals {
                    ev.absorb("steady_state", metrics::check_steady_state(trace, iv));
                }
            }
            Check::TagWorkIdentity => {
                for iv in &intervals {
                    ev.absorb("tag_work_identity", metrics::check_tag_work_identity(trace, iv));
                }
            }
            Check::IsolatedCluster => {
                let p = &trace.params;
                for iv in &intervals {
                    let foc = compute_foc(&p.matrix, &p.rates, &p.weights, &iv.backlogged())
                        .map_err(|e| CliError::Config(e.to_string()))?;
                    for m in foc.positive() {
                        let what = format!("isolated_cluster [{}, {}) cluster {m}", iv.t0(), iv.t1());
                        ev.absorb(&what, metrics::check_isolated_cluster_bounds(trace, iv, m));
                    }
                }
            }
            Check::SingleServer => {
                for iv in &intervals {
                    ev.absorb("single_server", metrics::check_single_server(trace, iv));
                }
            }
            Check::WorstCase => {
                for (a, b) in windows(file, trace)? {
                    let (_, inter) = metrics::interval_sets(trace, a, b);
                    for i in inter {
                        ev.absorb("worst_case", metrics::check_worst_case(trace, a, b, i));
                    }
                }
            }
            Check::Separation => {
                for (a, b) in windows(file, trace)? {
                    ev.absorb("separation", metrics::check_separation(trace, a, b).map(|r| vec![r]));
                }
            }
            Check::TagFloor => ev.reports.push(metrics::check_tag_floor(trace)),
            Check::LevelGap => {
                let bound = file
                    .gap_bound
                    .ok_or_else(|| CliError::Config("level_gap check needs gap_bound".into()))?;
                ev.reports.push(metrics::check_gap_bound(trace, bound));
            }
        }
    }
    Ok(ev)
}

fn names(ids: &[String], set: &UserSet) -> String {
    let list: Vec<&str> = set.iter().map(|&i| ids[i].as_str()).collect();
    format!("{{{}}}", list.join(","))
}

fn bps(v: &Rat) -> String {
    format_decimal(v, 9)
}

/// Per-user average rates over each steady interval next to the fluid rates.
pub fn rate_summary(file: &ScenarioFile, trace: &Trace) -> Result<String, CliError> {
    let ids = file.user_ids();
    let p = &trace.params;
    let mut s = String::new();
    for iv in trace.steady_intervals().into_iter().filter(|iv| iv.t1() > iv.t0()) {
        let backlogged = iv.backlogged();
        let foc = compute_foc(&p.matrix, &p.rates, &p.weights, &backlogged).map_err(|e| CliError::Config(e.to_string()))?;
        let fair = fair_rates(&foc, &p.weights);
        let measured = metrics::average_rates(&iv.start, &iv.end);
        let _ = writeln!(
            s,
            "interval [{}, {}) s, backlogged {}",
            format_decimal(&iv.t0(), 9),
            format_decimal(&iv.t1(), 9),
            names(&ids, &backlogged)
        );
        for &i in &backlogged {
            let _ = writeln!(s, "  {:<8} measured {:>14} bps   fair {:>14} bps", ids[i], bps(&measured[i]), bps(&fair[i]));
        }
    }
    Ok(s)
}

fn summary_text(file: &ScenarioFile, trace: &Trace, ev: &Evaluation) -> Result<String, CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", file.name);
    let _ = writeln!(s, "scheduler: {}", trace.params.scheduler);
    let _ = writeln!(s, "horizon: {} s, seed {}", format_decimal(&trace.params.horizon, 9), file.seed);
    let _ = writeln!(
        s,
        "events: {}, arrivals: {}, dispatches: {}",
        trace.events,
        trace.arrivals,
        trace.dispatches.len()
    );
    let _ = writeln!(
        s,
        "max work-level gap: {} bits at t={} s",
        format_decimal(&trace.max_gap, 12),
        format_decimal(&trace.max_gap_time, 12)
    );
    s.push_str(&rate_summary(file, trace)?);
    let failed = ev.reports.iter().filter(|r| !r.pass).count();
    let _ = writeln!(
        s,
        "checks: {} evaluated, {} passed, {} failed, {} skipped",
        ev.reports.len(),
        ev.reports.len() - failed,
        failed,
        ev.skipped.len()
    );
    for r in ev.reports.iter().filter(|r| !r.pass) {
        let _ = writeln!(
            s,
            "  FAIL {} [{}, {}) {}: {} {} {}",
            r.bound,
            format_decimal(&r.t0, 9),
            format_decimal(&r.t1, 9),
            r.scope,
            format_decimal(&r.lhs, 12),
            r.relation,
            r.rhs.render(12)
        );
    }
    for why in &ev.skipped {
        let _ = writeln!(s, "  skipped {why}");
    }
    Ok(s)
}

/// Simulates under the requested overrides and writes `trace.csv`,
/// `reports.csv` and `summary.txt` into `out`.
pub fn cmd_run(file: &ScenarioFile, out: &Path, seed: Option<u64>, variant: Option<Variant>) -> Result<Status, CliError> {
    let mut file = file.clone();
    if let Some(s) = seed {
        file.seed = s;
    }
    if let Some(v) = variant {
        file.variant = v;
    }
    let scenario = file.to_scenario()?;
    let opts = trace_options(&file, &scenario);
    info!("running {} ({} users, {} servers)", file.name, scenario.n_users(), scenario.n_servers());
    let trace = sim::run(&scenario, &opts).map_err(|e| CliError::Config(e.to_string()))?;
    debug!("{} events, {} dispatches", trace.events, trace.dispatches.len());
    let ev = evaluate(&file, &trace)?;

    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("trace.csv");
    output::write_trace_csv(&trace, &file.user_ids(), &file.server_ids(), create(&path)?).map_err(csv_err(&path))?;
    let path = out.join("reports.csv");
    let tagged: Vec<_> = ev.reports.iter().map(|r| (trace.params.scheduler.clone(), r.clone())).collect();
    output::write_reports_csv(&tagged, create(&path)?).map_err(csv_err(&path))?;
    let path = out.join("summary.txt");
    fs::write(&path, summary_text(&file, &trace, &ev)?).map_err(io_err(&path))?;
    Ok(if ev.passed() { Status::Pass } else { Status::BoundViolation })
}

/// Text rendering of a clustering and a witness allocation.
pub fn describe_foc(file: &ScenarioFile, foc: &Foc, witness: &crate::oracle::RateMatrix) -> String {
    let users = file.user_ids();
    let servers = file.server_ids();
    let mut s = String::new();
    for (m, c) in foc.clusters.iter().enumerate() {
        let us: Vec<&str> = c.users.iter().map(|&i| users[i].as_str()).collect();
        let ss: Vec<&str> = c.servers.iter().map(|&k| servers[k].as_str()).collect();
        let _ = writeln!(
            s,
            "cluster {m}: users {{{}}} servers {{{}}} normalized rate {} bps",
            us.join(","),
            ss.join(","),
            bps(&c.rate)
        );
    }
    let _ = writeln!(s, "rate matrix (bps), rows users, columns {}", servers.join(" "));
    for (i, row) in witness.rates.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(bps).collect();
        let _ = writeln!(s, "  {:<8} {}", users[i], cells.join(" "));
    }
    s
}

pub fn cmd_oracle(file: &ScenarioFile, backlogged: Option<&[String]>, out: &mut dyn Write) -> Result<Status, CliError> {
    let scenario = file.to_scenario()?;
    let set = match backlogged.or(file.backlogged.as_deref()) {
        Some(ids) => file.user_set(ids)?,
        None => (0..scenario.n_users()).collect(),
    };
    let cfg = |e: crate::oracle::OracleError| CliError::Config(e.to_string());
    let foc = compute_foc(&scenario.matrix, &scenario.rates, &scenario.weights, &set).map_err(cfg)?;
    let witness = witness_allocation(&foc, &scenario.matrix, &scenario.rates, &scenario.weights).map_err(cfg)?;
    let report = verify_cm4_fairness(&scenario.matrix, &scenario.rates, &scenario.weights, &set, &witness);
    let mut text = describe_foc(file, &foc, &witness);
    let _ = writeln!(text, "fairness check: {}", if report.is_fair() { "accepted" } else { "rejected" });
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
    Ok(if report.is_fair() { Status::Pass } else { Status::BoundViolation })
}

/// Runs full CM4FQ and miDRR on identical arrivals and writes `rates.csv`
/// (per steady interval of the CM4FQ run) plus
/// `summary.txt`. Fails only if checks requested by the file fail on the
/// CM4FQ run.
pub fn cmd_compare(file: &ScenarioFile, out: &Path, seed: Option<u64>, stdout: &mut dyn Write) -> Result<Status, CliError> {
    let mut file = file.clone();
    if let Some(s) = seed {
        file.seed = s;
    }
    file.variant = Variant::Full;
    let scenario = file.to_scenario()?;
    let mut opts = trace_options(&file, &scenario);
    opts.snapshots = SnapshotPolicy::ChangesOnly;
    let cfg = |e: sim::SimError| CliError::Config(e.to_string());
    let fq = sim::run(&scenario, &opts).map_err(cfg)?;
    let mut drr = scenario.midrr().map_err(cfg)?;
    let dr = sim::run_with(&scenario, &mut drr, &opts).map_err(cfg)?;
    let ev = evaluate(&file, &fq)?;

    let ids = file.user_ids();
    let p = &fq.params;
    let windows: Vec<(Rat, Rat, UserSet)> = fq
        .steady_intervals()
        .into_iter()
        .filter(|iv| iv.t1() > iv.t0())
        .map(|iv| (iv.t0(), iv.t1(), iv.backlogged()))
        .collect();
    let mut rows = Vec::new();
    let mut table = String::new();
    let _ = writeln!(table, "{:<22} {:<8} {:>14} {:>14} {:>14}", "window (s)", "user", "fair bps", "cm4fq bps", "midrr bps");
    for (t0, t1, set) in &windows {
        let foc = compute_foc(&p.matrix, &p.rates, &p.weights, set).map_err(|e| CliError::Config(e.to_string()))?;
        let fair = fair_rates(&foc, &p.weights);
        let span = t1 - t0;
        for &i in set {
            let a = Rat::from_integer(metrics::allocated_work(&fq, i, t0, t1) as i128) / span;
            let b = Rat::from_integer(metrics::allocated_work(&dr, i, t0, t1) as i128) / span;
            let _ = writeln!(
                table,
                "{:<22} {:<8} {:>14} {:>14} {:>14}",
                format!("[{}, {})", format_decimal(t0, 6), format_decimal(t1, 6)),
                ids[i],
                bps(&fair[i]),
                bps(&a),
                bps(&b)
            );
            rows.push((fq.params.scheduler.clone(), *t0, *t1, ids[i].clone(), a, fair[i]));
            rows.push((dr.params.scheduler.clone(), *t0, *t1, ids[i].clone(), b, fair[i]));
        }
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("rates.csv");
    output::write_rates_csv(&rows, create(&path)?).map_err(csv_err(&path))?;
    let path = out.join("reports.csv");
    let tagged: Vec<_> = ev.reports.iter().map(|r| (fq.params.scheduler.clone(), r.clone())).collect();
    output::write_reports_csv(&tagged, create(&path)?).map_err(csv_err(&path))?;
    let path = out.join("summary.txt");
    let mut summary = summary_text(&file, &fq, &ev)?;
    summary.push_str(&table);
    fs::write(&path, summary).map_err(io_err(&path))?;
    stdout.write_all(table.as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
    Ok(if ev.passed() { Status::Pass } else { Status::BoundViolation })
}

/// Executes a parsed command line.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<Status, CliError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            variant,
        } => {
            let status = cmd_run(&load(&scenario)?, &out, seed, variant)?;
            let _ = writeln!(stdout, "{}", fs::read_to_string(out.join("summary.txt")).unwrap_or_default().trim_end());
            Ok(status)
        }
        Command::Oracle { scenario, backlogged } => cmd_oracle(&load(&scenario)?, backlogged.as_deref(), stdout),
        Command::Compare { scenario, out, seed } => cmd_compare(&load(&scenario)?, &out, seed, stdout),
        Command::List => {
            for (name, text) in library::BUNDLED {
                let desc = ScenarioFile::parse(text).map(|f| f.description).unwrap_or_default();
                let _ = writeln!(stdout, "{name:<24} {desc}");
            }
            Ok(Status::Pass)
        }
        Command::Show { name } => {
            let text = library::get(&name).ok_or_else(|| CliError::Config(format!("no bundled scenario named {name:?}")))?;
            let _ = stdout.write_all(text.as_bytes());
            Ok(Status::Pass)
        }
    }
}
