//! C ABI over `tmnre`.
//!
//! A run is configured with the same TOML accepted by the `tmnre run`
//! command, executed in memory and exposed through an opaque `TmnreRun`
//! handle. Every fallible call returns a `TmnreStatus`; on failure the
//! message is available from `tmnre_last_error` on the same thread.
//!
//! Strings returned by the library are released with `tmnre_string_free`,
//! handles with `tmnre_run_free`. Nothing else needs freeing.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tmnre::cli::{Algorithm, Resolved, RunConfig, RunHistory, RunState};
use tmnre::posterior::rejection_sample;
use tmnre::prior::Region;
use tmnre::ratio::{MarginalIndex, MarginalRatioEstimator};
use tmnre::truncation::{run_mnre, run_tmnre, RoundKind};
use tmnre::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TmnreStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Malformed argument: bad UTF-8, wrong length, unknown marginal.
    InvalidArgument = 2,
    /// The configuration failed to parse or validate.
    Config = 3,
    /// Training, truncation or sampling failed numerically.
    Numeric = 4,
    /// File system or serialization failure.
    Io = 5,
    /// The simulator reported an error.
    Simulator = 6,
    /// A panic was caught at the boundary.
    Panic = 7,
}

/// Outcome of a completed run.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TmnreRunState {
    /// The stopping rule was met.
    Converged = 0,
    /// The round limit was reached first.
    MaxRounds = 1,
    /// Single-round MNRE.
    Completed = 2,
}

/// Scalar summary of a run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct TmnreRunInfo {
    /// Parameter dimension.
    pub dim: usize,
    /// Length of the observation.
    pub x_dim: usize,
    /// Number of constraining rounds.
    pub constraining_rounds: usize,
    /// Simulations over all rounds.
    pub total_simulations: usize,
    /// Trained marginal heads available for evaluation and sampling.
    pub marginals: usize,
    /// A `TmnreRunState` value.
    pub state: i32,
}

/// Opaque handle to a finished run.
pub struct TmnreRun {
    res: Resolved,
    history: RunHistory,
    region: Region,
    estimators: Vec<MarginalRatioEstimator>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TmnreStatus {
    match e {
        Error::Config(_) => TmnreStatus::Config,
        Error::DimensionMismatch { .. } | Error::InvalidRegion(_) => TmnreStatus::InvalidArgument,
        Error::Simulator { .. } => TmnreStatus::Simulator,
        Error::Io(_) | Error::Json(_) | Error::Format { .. } | Error::Locked(_) => TmnreStatus::Io,
        _ => TmnreStatus::Numeric,
    }
}

struct Fail(TmnreStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(TmnreStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records its error and converts panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TmnreStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TmnreStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TmnreStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(TmnreStatus::NullArgument, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn run_ref<'a>(run: *const TmnreRun) -> Result<&'a TmnreRun, Fail> {
    non_null(run, "run")?;
    Ok(&*run)
}

unsafe fn marginal(run: &TmnreRun, dims: *const usize, ndims: usize) -> Result<&MarginalRatioEstimator, Fail> {
    non_null(dims, "dims")?;
    let wanted = std::slice::from_raw_parts(dims, ndims).to_vec();
    if wanted.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("marginal dimensions must be strictly ascending, got {wanted:?}")));
    }
    let index = MarginalIndex::new(wanted.clone()).map_err(|e| invalid(e.to_string()))?;
    run.estimators
        .iter()
        .find(|e| e.index == index)
        .ok_or_else(|| invalid(format!("no trained head for marginal {wanted:?}")))
}

fn execute(res: Resolved) -> tmnre::Result<TmnreRun> {
    let cfg = res.config.clone();
    let mut history = RunHistory {
        state: RunState::Running,
        seed: cfg.seed,
        x_o: res.x_o.clone(),
        rounds: Vec::new(),
    };
    let (region, estimators) = match cfg.algorithm {
        Algorithm::Tmnre => {
            let mut observer = |_: tmnre::truncation::RoundEvent<'_>| Ok(());
            let run = run_tmnre(&*res.simulator, &res.prior, &res.x_o, &cfg.tmnre, &cfg.train, cfg.seed, None, &mut observer)?;
            history.state = run.status.into();
            history.rounds = run.rounds;
            (run.final_region, run.final_estimators)
        }
        Algorithm::Mnre => {
            let run = run_mnre(&*res.simulator, &res.prior, cfg.tmnre.budget, cfg.tmnre.final_marginals, &cfg.train, cfg.seed, None)?;
            history.state = RunState::Completed;
            history.rounds = vec![run.record];
            (history.rounds[0].region.clone(), run.estimators)
        }
    };
    Ok(TmnreRun {
        res,
        history,
        region,
        estimators,
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tmnre_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn tmnre_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn tmnre_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a TOML run configuration, runs it to completion and stores the
/// handle in `*out`. Nothing is written to disk.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tmnre_run_from_toml(config_toml: *const c_char, out: *mut *mut TmnreRun) -> TmnreStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(config_toml, "config_toml")?;
        let res = RunConfig::from_toml_str(text)?.resolve()?;
        *out = Box::into_raw(Box::new(execute(res)?));
        Ok(())
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from `tmnre_run_from_toml` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tmnre_run_free(run: *mut TmnreRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tmnre_run_info(run: *const TmnreRun, out: *mut TmnreRunInfo) -> TmnreStatus {
    guard(|| {
        let run = run_ref(run)?;
        non_null(out, "out")?;
        let h = &run.history;
        *out = TmnreRunInfo {
            dim: run.region.dims(),
            x_dim: run.res.x_o.len(),
            constraining_rounds: h.rounds.iter().filter(|r| r.kind == RoundKind::Constrain).count(),
            total_simulations: h.rounds.last().map_or(0, |r| r.total_simulations),
            marginals: run.estimators.len(),
            state: match h.state {
                RunState::Converged => TmnreRunState::Converged,
                RunState::MaxRounds => TmnreRunState::MaxRounds,
                _ => TmnreRunState::Completed,
            } as i32,
        };
        Ok(())
    })
}

/// Copies the bounds of the final region into `lo` and `hi`, each of
/// length `len` (the parameter dimension).
///
/// # Safety
/// `lo` and `hi` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tmnre_run_region(run: *const TmnreRun, lo: *mut f64, hi: *mut f64, len: usize) -> TmnreStatus {
    guard(|| {
        let run = run_ref(run)?;
        non_null(lo, "lo")?;
        non_null(hi, "hi")?;
        let ivs = run.region.intervals();
        if len != ivs.len() {
            return Err(invalid(format!("region has {} dimensions, buffers hold {len}", ivs.len())));
        }
        for (k, iv) in ivs.iter().enumerate() {
            *lo.add(k) = iv.lo;
            *hi.add(k) = iv.hi;
        }
        Ok(())
    })
}

/// Per-round history as JSON. Free the result with `tmnre_string_free`.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tmnre_run_history_json(run: *const TmnreRun, out: *mut *mut c_char) -> TmnreStatus {
    guard(|| {
        let run = run_ref(run)?;
        non_null(out, "out")?;
        let json = serde_json::to_string(&run.history).map_err(Error::from)?;
        *out = CString::new(json).expect("json has no nul bytes").into_raw();
        Ok(())
    })
}

/// Evaluates the log ratio of the marginal over `dims` (ascending, one or
/// two entries) at `n` points stored row-major in `theta`, writing `n`
/// values to `out`. The observation is the run's own.
///
/// # Safety
/// `dims` holds `ndims` entries, `theta` holds `n * ndims` doubles and
/// `out` holds `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn tmnre_run_log_ratio(
    run: *const TmnreRun,
    dims: *const usize,
    ndims: usize,
    theta: *const f64,
    n: usize,
    out: *mut f64,
) -> TmnreStatus {
    guard(|| {
        let run = run_ref(run)?;
        let head = marginal(run, dims, ndims)?;
        non_null(theta, "theta")?;
        non_null(out, "out")?;
        let theta = std::slice::from_raw_parts(theta, n * ndims);
        for (k, t) in theta.chunks_exact(ndims).enumerate() {
            *out.add(k) = head.log_ratio(&run.res.x_o, t)?.value;
        }
        Ok(())
    })
}

/// Draws `n` posterior samples of the marginal over `dims` by rejection
/// from the truncated prior. Rows are written to `out`, which must hold
/// `out_len >= n * ndims` doubles. Equal seeds give equal samples.
///
/// # Safety
/// `dims` holds `ndims` entries and `out` holds `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tmnre_run_sample(
    run: *const TmnreRun,
    dims: *const usize,
    ndims: usize,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> TmnreStatus {
    guard(|| {
        let run = run_ref(run)?;
        let head = marginal(run, dims, ndims)?;
        non_null(out, "out")?;
        if out_len < n * ndims {
            return Err(invalid(format!("output holds {out_len} values, need {}", n * ndims)));
        }
        let spec = &run.res.config.posterior;
        let grid = if ndims == 1 { spec.envelope_grid } else { spec.envelope_grid_2d };
        let mut rng = tmnre::seed::rng(seed, &[]);
        let s = rejection_sample(head, &run.res.x_o, &run.res.prior, &run.region, n, grid, &mut rng)?;
        ptr::copy_nonoverlapping(s.samples.as_ptr(), out, s.samples.len().min(out_len));
        Ok(())
    })
}
