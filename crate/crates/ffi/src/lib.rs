//! C interface to the cm4fq simulator and fluid clustering oracle.
//!
//! Every function returns a [`Cm4fqStatus`]; results come back through out
//! pointers. Objects are opaque handles created by `*_new`-style functions
//! and released with the matching `*_free`. On failure the message for the
//! calling thread is available from [`cm4fq_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cm4fq::cli::{self, ScenarioFile};
use cm4fq::metrics;
use cm4fq::model::{EligibilityMatrix, UserSet};
use cm4fq::oracle::{compute_foc, fair_rates, witness_allocation, Foc, RateMatrix};
use cm4fq::rational::{to_f64, Rat};
use cm4fq::scheduler::Variant;
use cm4fq::sim::{self, Scenario, Trace};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cm4fqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Scenario or argument rejected.
    Config = 3,
    Io = 4,
    Simulation = 5,
    OutOfRange = 6,
    Oracle = 7,
    /// A value does not fit the 64-bit rational representation.
    Overflow = 8,
    Panic = 9,
}

/// Exact value `num / den` with `den > 0`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cm4fqRational {
    pub num: i64,
    pub den: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cm4fqDispatch {
    pub time: Cm4fqRational,
    pub time_seconds: f64,
    pub server: usize,
    pub user: usize,
    pub length: u64,
    /// Per-user packet sequence number.
    pub seq: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cm4fqVariant {
    Full = 0,
    Reduced = 1,
    Sfq = 2,
}

pub struct Cm4fqScenario {
    file: ScenarioFile,
    scenario: Scenario,
}

pub struct Cm4fqTrace {
    trace: Trace,
    users: Vec<String>,
    servers: Vec<String>,
    evaluation: Option<cli::Evaluation>,
}

pub struct Cm4fqFoc {
    foc: Foc,
    fair: Vec<Rat>,
    witness: RateMatrix,
    n_users: usize,
    n_servers: usize,
}

struct Failure {
    status: Cm4fqStatus,
    message: String,
}

impl Failure {
    fn new(status: Cm4fqStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<cli::CliError> for Failure {
    fn from(e: cli::CliError) -> Self {
        let status = match e {
            cli::CliError::Config(_) => Cm4fqStatus::Config,
            cli::CliError::Io { .. } => Cm4fqStatus::Io,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<sim::SimError> for Failure {
    fn from(e: sim::SimError) -> Self {
        let status = match e {
            sim::SimError::Scheduler(_) => Cm4fqStatus::Simulation,
            _ => Cm4fqStatus::Config,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<cm4fq::oracle::OracleError> for Failure {
    fn from(e: cm4fq::oracle::OracleError) -> Self {
        Failure::new(Cm4fqStatus::Oracle, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Cm4fqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            Cm4fqStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(_) => {
            set_last_error("internal panic");
            Cm4fqStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(Cm4fqStatus::NullPointer, format!("{what} is null")))
}

unsafe fn obj_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(Cm4fqStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(Cm4fqStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(Cm4fqStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(Cm4fqStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn to_c(r: &Rat) -> Result<Cm4fqRational, Failure> {
    let overflow = || Failure::new(Cm4fqStatus::Overflow, format!("{r} does not fit in 64-bit integers"));
    Ok(Cm4fqRational {
        num: i64::try_from(*r.numer()).map_err(|_| overflow())?,
        den: i64::try_from(*r.denom()).map_err(|_| overflow())?,
    })
}

fn from_c(r: Cm4fqRational) -> Result<Rat, Failure> {
    if r.den == 0 {
        return Err(Failure::new(Cm4fqStatus::Config, "rational with zero denominator"));
    }
    Ok(Rat::new(r.num as i128, r.den as i128))
}

fn check_index(i: usize, n: usize, what: &str) -> Result<(), Failure> {
    if i < n {
        Ok(())
    } else {
        Err(Failure::new(Cm4fqStatus::OutOfRange, format!("{what} {i} out of range (count {n})")))
    }
}

fn into_handle(file: ScenarioFile, out: *mut *mut Cm4fqScenario) -> Result<(), Failure> {
    let scenario = file.to_scenario()?;
    let boxed = Box::into_raw(Box::new(Cm4fqScenario { file, scenario }));
    // SAFETY: caller checked `out` is non-null before building the scenario
    unsafe { out.write(boxed) };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cm4fq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message describing the last failure on this thread, or an empty string.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cm4fq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_scenario_from_json(json: *const c_char, out: *mut *mut Cm4fqScenario) -> Cm4fqStatus {
    guard(|| {
        let json = text(json, "json")?;
        obj_mut(out, "out")?;
        into_handle(ScenarioFile::parse(json)?, out)
    })
}

/// Loads a scenario file, or a bundled one when `path` is `builtin:<name>`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_scenario_load(path: *const c_char, out: *mut *mut Cm4fqScenario) -> Cm4fqStatus {
    guard(|| {
        let path = text(path, "path")?;
        obj_mut(out, "out")?;
        into_handle(cli::load(path)?, out)
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_scenario_free(scenario: *mut Cm4fqScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_scenario_user_count(scenario: *const Cm4fqScenario, out: *mut usize) -> Cm4fqStatus {
    guard(|| put(out, obj(scenario, "scenario")?.scenario.n_users()))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_scenario_server_count(scenario: *const Cm4fqScenario, out: *mut usize) -> Cm4fqStatus {
    guard(|| put(out, obj(scenario, "scenario")?.scenario.n_servers()))
}

/// Replaces the random seed used for traffic generation.
///
/// # Safety
/// `scenario` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_scenario_set_seed(scenario: *mut Cm4fqScenario, seed: u64) -> Cm4fqStatus {
    guard(|| {
        let s = obj_mut(scenario, "scenario")?;
        s.file.seed = seed;
        s.scenario.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_scenario_set_variant(scenario: *mut Cm4fqScenario, variant: Cm4fqVariant) -> Cm4fqStatus {
    guard(|| {
        let s = obj_mut(scenario, "scenario")?;
        let v = match variant {
            Cm4fqVariant::Full => Variant::Full,
            Cm4fqVariant::Reduced => Variant::Reduced,
            Cm4fqVariant::Sfq => Variant::SfqBased,
        };
        s.file.variant = v;
        s.scenario.variant = v;
        Ok(())
    })
}

fn run_scenario(s: &Cm4fqScenario, midrr: bool) -> Result<Cm4fqTrace, Failure> {
    let opts = cli::trace_options(&s.file, &s.scenario);
    let trace = if midrr {
        let mut m = s.scenario.midrr()?;
        sim::run_with(&s.scenario, &mut m, &opts)?
    } else {
        sim::run(&s.scenario, &opts)?
    };
    let evaluation = if midrr { None } else { Some(cli::evaluate(&s.file, &trace)?) };
    Ok(Cm4fqTrace {
        trace,
        users: s.file.user_ids(),
        servers: s.file.server_ids(),
        evaluation,
    })
}

/// Simulates the scenario under its CM4FQ variant and evaluates the checks
/// listed in the scenario.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_run(scenario: *const Cm4fqScenario, out: *mut *mut Cm4fqTrace) -> Cm4fqStatus {
    guard(|| {
        let s = obj(scenario, "scenario")?;
        obj_mut(out, "out")?;
        let t = run_scenario(s, false)?;
        put(out, Box::into_raw(Box::new(t)))
    })
}

/// Simulates the scenario's arrivals under miDRR.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_run_midrr(scenario: *const Cm4fqScenario, out: *mut *mut Cm4fqTrace) -> Cm4fqStatus {
    guard(|| {
        let s = obj(scenario, "scenario")?;
        obj_mut(out, "out")?;
        let t = run_scenario(s, true)?;
        put(out, Box::into_raw(Box::new(t)))
    })
}

/// # Safety
/// `trace` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_trace_free(trace: *mut Cm4fqTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_trace_dispatch_count(trace: *const Cm4fqTrace, out: *mut usize) -> Cm4fqStatus {
    guard(|| put(out, obj(trace, "trace")?.trace.dispatches.len()))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_trace_dispatch(trace: *const Cm4fqTrace, index: usize, out: *mut Cm4fqDispatch) -> Cm4fqStatus {
    guard(|| {
        let t = &obj(trace, "trace")?.trace;
        check_index(index, t.dispatches.len(), "dispatch")?;
        let d = &t.dispatches[index];
        put(
            out,
            Cm4fqDispatch {
                time: to_c(&d.time)?,
                time_seconds: to_f64(&d.time),
                server: d.server,
                user: d.user(),
                length: d.packet.length,
                seq: d.packet.seq,
            },
        )
    })
}

/// Bits of `user`'s packets dispatched in `[t0, t1)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_trace_allocated_work(
    trace: *const Cm4fqTrace,
    user: usize,
    t0: Cm4fqRational,
    t1: Cm4fqRational,
    out: *mut u64,
) -> Cm4fqStatus {
    guard(|| {
        let t = &obj(trace, "trace")?.trace;
        check_index(user, t.params.n_users(), "user")?;
        put(out, metrics::allocated_work(t, user, &from_c(t0)?, &from_c(t1)?))
    })
}

/// Largest finite work-level gap seen during the run.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_trace_max_gap(trace: *const Cm4fqTrace, out: *mut Cm4fqRational) -> Cm4fqStatus {
    guard(|| put(out, to_c(&obj(trace, "trace")?.trace.max_gap)?))
}

/// Number of bound checks evaluated on a CM4FQ run and how many failed.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_trace_check_counts(
    trace: *const Cm4fqTrace,
    evaluated: *mut usize,
    failed: *mut usize,
) -> Cm4fqStatus {
    guard(|| {
        let ev = obj(trace, "trace")?
            .evaluation
            .as_ref()
            .ok_or_else(|| Failure::new(Cm4fqStatus::Config, "checks are only evaluated on CM4FQ runs"))?;
        put(evaluated, ev.reports.len())?;
        put(failed, ev.reports.iter().filter(|r| !r.pass).count())
    })
}

/// Writes the trace rows as CSV.
///
/// # Safety
/// `trace` must be valid and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_trace_write_csv(trace: *const Cm4fqTrace, path: *const c_char) -> Cm4fqStatus {
    guard(|| {
        let t = obj(trace, "trace")?;
        let path = Path::new(text(path, "path")?);
        let io = |e: std::io::Error| Failure::new(Cm4fqStatus::Io, format!("{}: {e}", path.display()));
        let f = std::fs::File::create(path).map_err(io)?;
        cli::output::write_trace_csv(&t.trace, &t.users, &t.servers, std::io::BufWriter::new(f))
            .map_err(|e| Failure::new(Cm4fqStatus::Io, format!("{}: {e}", path.display())))
    })
}

/// Computes the fluid clustering.
///
/// `eligibility` holds `n_users * n_servers` bytes in row-major order
/// (nonzero = eligible), `rates` and `weights` one value per server and
/// user, `backlogged` one byte per user (nonzero = backlogged).
///
/// # Safety
/// Arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_foc_compute(
    n_users: usize,
    n_servers: usize,
    eligibility: *const u8,
    rates: *const Cm4fqRational,
    weights: *const Cm4fqRational,
    backlogged: *const u8,
    out: *mut *mut Cm4fqFoc,
) -> Cm4fqStatus {
    guard(|| {
        if eligibility.is_null() || rates.is_null() || weights.is_null() || backlogged.is_null() {
            return Err(Failure::new(Cm4fqStatus::NullPointer, "input array is null"));
        }
        obj_mut(out, "out")?;
        let cells = n_users
            .checked_mul(n_servers)
            .ok_or_else(|| Failure::new(Cm4fqStatus::OutOfRange, "matrix size overflows"))?;
        let cells = std::slice::from_raw_parts(eligibility, cells);
        let rows: Vec<Vec<bool>> = (0..n_users)
            .map(|i| cells[i * n_servers..(i + 1) * n_servers].iter().map(|&b| b != 0).collect())
            .collect();
        let matrix = EligibilityMatrix::new(rows).map_err(|e| Failure::new(Cm4fqStatus::Config, e.to_string()))?;
        let rates = std::slice::from_raw_parts(rates, n_servers)
            .iter()
            .map(|&r| from_c(r))
            .collect::<Result<Vec<_>, _>>()?;
        let weights = std::slice::from_raw_parts(weights, n_users)
            .iter()
            .map(|&r| from_c(r))
            .collect::<Result<Vec<_>, _>>()?;
        let set: UserSet = std::slice::from_raw_parts(backlogged, n_users)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| i)
            .collect();
        let foc = compute_foc(&matrix, &rates, &weights, &set)?;
        let witness = witness_allocation(&foc, &matrix, &rates, &weights)?;
        let fair = fair_rates(&foc, &weights);
        put(
            out,
            Box::into_raw(Box::new(Cm4fqFoc {
                foc,
                fair,
                witness,
                n_users,
                n_servers,
            })),
        )
    })
}

/// # Safety
/// `foc` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_foc_free(foc: *mut Cm4fqFoc) {
    if !foc.is_null() {
        drop(Box::from_raw(foc));
    }
}

/// Number of clusters, including the zero-rate one when present. Clusters
/// are indexed in increasing rate order.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_foc_cluster_count(foc: *const Cm4fqFoc, out: *mut usize) -> Cm4fqStatus {
    guard(|| put(out, obj(foc, "foc")?.foc.clusters.len()))
}

/// Normalized rate of a cluster.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_foc_cluster_rate(foc: *const Cm4fqFoc, cluster: usize, out: *mut Cm4fqRational) -> Cm4fqStatus {
    guard(|| {
        let f = obj(foc, "foc")?;
        check_index(cluster, f.foc.clusters.len(), "cluster")?;
        put(out, to_c(&f.foc.clusters[cluster].rate)?)
    })
}

/// Index of the cluster holding `user`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_foc_user_cluster(foc: *const Cm4fqFoc, user: usize, out: *mut usize) -> Cm4fqStatus {
    guard(|| {
        let f = obj(foc, "foc")?;
        check_index(user, f.n_users, "user")?;
        let c = f.foc.cluster_of_user(user).expect("every user is clustered");
        put(out, c)
    })
}

/// Index of the cluster holding `server`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_foc_server_cluster(foc: *const Cm4fqFoc, server: usize, out: *mut usize) -> Cm4fqStatus {
    guard(|| {
        let f = obj(foc, "foc")?;
        check_index(server, f.n_servers, "server")?;
        let c = f.foc.cluster_of_server(server).expect("every server is clustered");
        put(out, c)
    })
}

/// Fair rate of `user` (weight times cluster rate).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_foc_fair_rate(foc: *const Cm4fqFoc, user: usize, out: *mut Cm4fqRational) -> Cm4fqStatus {
    guard(|| {
        let f = obj(foc, "foc")?;
        check_index(user, f.n_users, "user")?;
        put(out, to_c(&f.fair[user])?)
    })
}

/// Rate that server `server` gives `user` in a fair allocation realizing
/// the clustering.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cm4fq_foc_allocation(
    foc: *const Cm4fqFoc,
    user: usize,
    server: usize,
    out: *mut Cm4fqRational,
) -> Cm4fqStatus {
    guard(|| {
        let f = obj(foc, "foc")?;
        check_index(user, f.n_users, "user")?;
        check_index(server, f.n_servers, "server")?;
        put(out, to_c(&f.witness.get(user, server))?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn rationals_round_trip_and_overflow() {
        let r = Rat::new(-7, 3);
        assert_eq!(from_c(to_c(&r).ok().unwrap()).ok(), Some(r));
        let big = Rat::from_integer(i128::from(i64::MAX) + 1);
        assert_eq!(to_c(&big).err().map(|f| f.status), Some(Cm4fqStatus::Overflow));
        assert!(from_c(Cm4fqRational { num: 1, den: 0 }).is_err());
    }

    #[test]
    fn panics_become_a_status() {
        assert_eq!(guard(|| panic!("boom")), Cm4fqStatus::Panic);
        let msg = unsafe { CStr::from_ptr(cm4fq_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }

    #[test]
    fn null_output_is_reported() {
        let status = unsafe { cm4fq_scenario_load(c"builtin:two_servers".as_ptr(), ptr::null_mut()) };
        assert_eq!(status, Cm4fqStatus::NullPointer);
    }
}
