//! C ABI over the cotrade library: opaque handles, integer error codes and
//! a thread-local last-error message. The generated header lands in
//! `include/cotrade.h`.

use cotrade::config::RunConfig;
use cotrade::ewens::{
    conditional_ewens_pmf, estimate_theta, ewens_log_pmf, expected_clusters, lambda_n,
    PartitionVector,
};
use cotrade::pipeline::{run_pipeline, Stage};
use cotrade::svn::{hypergeom_pvalue, CooccurrenceCounts};
use cotrade::trade::{parse_trades, TradeTable};
use libc::{c_char, c_double, c_ulonglong};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CotradeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    NumericalError = 5,
    PipelineError = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<Vec<u8>>) {
    let cstring = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(cstring));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message describing the most recent failure on this thread, or NULL.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cotrade_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn cotrade_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn guard<F: FnOnce() -> CotradeStatus>(f: F) -> CotradeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            CotradeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, CotradeStatus> {
    if ptr.is_null() {
        set_error(format!("{name} is NULL"));
        return Err(CotradeStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        CotradeStatus::InvalidArgument
    })
}

fn write_out(out: *mut c_double, value: f64) -> CotradeStatus {
    if out.is_null() {
        set_error("out pointer is NULL");
        return CotradeStatus::NullPointer;
    }
    unsafe { *out = value };
    clear_error();
    CotradeStatus::Ok
}

// ---------------------------------------------------------------------------
// Trade table handle
// ---------------------------------------------------------------------------

/// Opaque trade-ledger handle.
pub struct CotradeTable {
    table: TradeTable,
}

/// Parses a trade CSV file into a new table handle, or returns NULL with the
/// error retrievable via `cotrade_last_error_message`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; the returned handle must be
/// released with `cotrade_table_free`.
#[no_mangle]
pub unsafe extern "C" fn cotrade_table_from_csv(path: *const c_char) -> *mut CotradeTable {
    let run = || -> Result<*mut CotradeTable, ()> {
        let path = str_arg(path, "path").map_err(|_| ())?;
        let text = fs::read_to_string(path).map_err(|e| {
            set_error(format!("{path}: {e}"));
        })?;
        let table = parse_trades(text.as_bytes()).map_err(|e| {
            set_error(e.to_string());
        })?;
        clear_error();
        Ok(Box::into_raw(Box::new(CotradeTable { table })))
    };
    match catch_unwind(AssertUnwindSafe(run)) {
        Ok(Ok(handle)) => handle,
        Ok(Err(())) => ptr::null_mut(),
        Err(_) => {
            set_error("internal panic");
            ptr::null_mut()
        }
    }
}

/// Number of trades in the table.
///
/// # Safety
/// `table` must be a live handle from `cotrade_table_from_csv`.
#[no_mangle]
pub unsafe extern "C" fn cotrade_table_len(table: *const CotradeTable) -> usize {
    if table.is_null() {
        return 0;
    }
    (*table).table.len()
}

/// Number of distinct traders in the table.
///
/// # Safety
/// `table` must be a live handle from `cotrade_table_from_csv`.
#[no_mangle]
pub unsafe extern "C" fn cotrade_table_trader_count(table: *const CotradeTable) -> usize {
    if table.is_null() {
        return 0;
    }
    (*table).table.trader_ids().len()
}

/// Releases a table handle. NULL is ignored.
///
/// # Safety
/// `table` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cotrade_table_free(table: *mut CotradeTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

// ---------------------------------------------------------------------------
// Numeric kernel
// ---------------------------------------------------------------------------

/// Upper-tail hypergeometric p-value `P(X >= n_pq)` for co-occurrence counts.
#[no_mangle]
pub extern "C" fn cotrade_hypergeom_pvalue(
    n: c_ulonglong,
    n_p: c_ulonglong,
    n_q: c_ulonglong,
    n_pq: c_ulonglong,
    out: *mut c_double,
) -> CotradeStatus {
    guard(|| {
        let counts = match CooccurrenceCounts::new(n, n_p, n_q, n_pq) {
            Ok(c) => c,
            Err(e) => {
                set_error(e.to_string());
                return CotradeStatus::InvalidArgument;
            }
        };
        match hypergeom_pvalue(&counts) {
            Ok(p) => write_out(out, p),
            Err(e) => {
                set_error(e.to_string());
                CotradeStatus::NumericalError
            }
        }
    })
}

/// Log of the Ewens probability of the size histogram `counts[0..len]`,
/// where `counts[i]` is the number of clusters of size `i + 1`.
///
/// # Safety
/// `counts` must point to `len` readable u64 values.
#[no_mangle]
pub unsafe extern "C" fn cotrade_ewens_log_pmf(
    counts: *const c_ulonglong,
    len: usize,
    theta: c_double,
    out: *mut c_double,
) -> CotradeStatus {
    if counts.is_null() {
        set_error("counts is NULL");
        return CotradeStatus::NullPointer;
    }
    let slice = std::slice::from_raw_parts(counts, len).to_vec();
    guard(|| {
        let vector = match PartitionVector::new(slice.clone()) {
            Ok(v) => v,
            Err(e) => {
                set_error(e.to_string());
                return CotradeStatus::InvalidArgument;
            }
        };
        match ewens_log_pmf(&vector, theta) {
            Ok(v) => write_out(out, v),
            Err(e) => {
                set_error(e.to_string());
                CotradeStatus::NumericalError
            }
        }
    })
}

/// Probability of the size histogram under the singleton-free conditional
/// Ewens law (zero outside the support).
///
/// # Safety
/// `counts` must point to `len` readable u64 values.
#[no_mangle]
pub unsafe extern "C" fn cotrade_conditional_ewens_pmf(
    counts: *const c_ulonglong,
    len: usize,
    theta: c_double,
    out: *mut c_double,
) -> CotradeStatus {
    if counts.is_null() {
        set_error("counts is NULL");
        return CotradeStatus::NullPointer;
    }
    let slice = std::slice::from_raw_parts(counts, len).to_vec();
    guard(|| {
        let vector = match PartitionVector::new(slice.clone()) {
            Ok(v) => v,
            Err(e) => {
                set_error(e.to_string());
                return CotradeStatus::InvalidArgument;
            }
        };
        match conditional_ewens_pmf(&vector, theta) {
            Ok(v) => write_out(out, v),
            Err(e) => {
                set_error(e.to_string());
                CotradeStatus::NumericalError
            }
        }
    })
}

/// `lambda_n(theta)`: probability that an Ewens partition of `n` has no
/// singleton cluster.
#[no_mangle]
pub extern "C" fn cotrade_lambda_n(
    theta: c_double,
    n: usize,
    out: *mut c_double,
) -> CotradeStatus {
    guard(|| match lambda_n(theta, n) {
        Ok(v) => write_out(out, v),
        Err(e) => {
            set_error(e.to_string());
            CotradeStatus::InvalidArgument
        }
    })
}

/// Expected number of clusters of an (optionally conditional) Ewens
/// partition of `n` at the given theta.
#[no_mangle]
pub extern "C" fn cotrade_expected_clusters(
    n: usize,
    theta: c_double,
    conditional: bool,
    out: *mut c_double,
) -> CotradeStatus {
    guard(|| match expected_clusters(n, theta, conditional) {
        Ok(v) => write_out(out, v),
        Err(e) => {
            set_error(e.to_string());
            CotradeStatus::InvalidArgument
        }
    })
}

/// Inverts the expected-cluster-count curve: the theta at which an
/// (optionally conditional) Ewens partition of `n` has `observed_k` expected
/// clusters.
#[no_mangle]
pub extern "C" fn cotrade_estimate_theta(
    observed_k: c_double,
    n: usize,
    conditional: bool,
    out: *mut c_double,
) -> CotradeStatus {
    guard(|| match estimate_theta(observed_k, n, conditional) {
        Ok(v) => write_out(out, v),
        Err(e) => {
            set_error(e.to_string());
            CotradeStatus::InvalidArgument
        }
    })
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Runs pipeline stages from a config file. `stages` is a comma-separated
/// subset of `simulate,states,svn,cluster,ewens-fit,track,backtest,report`;
/// NULL or empty means the full pipeline.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string; `stages` must be
/// NULL or a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cotrade_run_pipeline(
    config_path: *const c_char,
    stages: *const c_char,
) -> CotradeStatus {
    let config_path = match str_arg(config_path, "config_path") {
        Ok(p) => p.to_owned(),
        Err(status) => return status,
    };
    let stages_text = if stages.is_null() {
        String::new()
    } else {
        match str_arg(stages, "stages") {
            Ok(s) => s.to_owned(),
            Err(status) => return status,
        }
    };
    guard(move || {
        let text = match fs::read_to_string(&config_path) {
            Ok(t) => t,
            Err(e) => {
                set_error(format!("{config_path}: {e}"));
                return CotradeStatus::IoError;
            }
        };
        let config = match RunConfig::parse(&text) {
            Ok(c) => c,
            Err(e) => {
                set_error(e.to_string());
                return CotradeStatus::InvalidArgument;
            }
        };
        let mut parsed = Vec::new();
        for name in stages_text.split(',').filter(|s| !s.trim().is_empty()) {
            match Stage::parse(name.trim()) {
                Some(s) => parsed.push(s),
                None => {
                    set_error(format!("unknown stage `{}`", name.trim()));
                    return CotradeStatus::InvalidArgument;
                }
            }
        }
        if parsed.is_empty() {
            parsed = Stage::all().to_vec();
        }
        match run_pipeline(&config, &parsed) {
            Ok(_) => {
                clear_error();
                CotradeStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                CotradeStatus::PipelineError
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(cotrade_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn hypergeom_through_the_abi() {
        let mut out = f64::NAN;
        let status = cotrade_hypergeom_pvalue(10, 5, 5, 3, &mut out);
        assert_eq!(status, CotradeStatus::Ok);
        assert!((out - 0.5).abs() < 1e-12);

        let status = cotrade_hypergeom_pvalue(4, 9, 2, 1, &mut out);
        assert_eq!(status, CotradeStatus::InvalidArgument);
        let msg = unsafe { CStr::from_ptr(cotrade_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("co-occurrence"));
    }

    #[test]
    fn ewens_functions_through_the_abi() {
        // partition of 3 into {1,1,1}: c = (3): pmf 1/6 at theta = 1
        let counts = [3u64];
        let mut out = 0.0;
        let status =
            unsafe { cotrade_ewens_log_pmf(counts.as_ptr(), counts.len(), 1.0, &mut out) };
        assert_eq!(status, CotradeStatus::Ok);
        assert!((out.exp() - 1.0 / 6.0).abs() < 1e-12);

        let status = cotrade_lambda_n(1.0, 4, &mut out);
        assert_eq!(status, CotradeStatus::Ok);
        assert!((out - 0.375).abs() < 1e-12);

        let status = cotrade_expected_clusters(3, 1.0, false, &mut out);
        assert_eq!(status, CotradeStatus::Ok);
        assert!((out - 11.0 / 6.0).abs() < 1e-12);

        let status = cotrade_estimate_theta(11.0 / 6.0, 3, false, &mut out);
        assert_eq!(status, CotradeStatus::Ok);
        assert!((out - 1.0).abs() < 1e-6);

        // conditional pmf outside the support is 0
        let counts = [1u64, 1u64];
        let status = unsafe {
            cotrade_conditional_ewens_pmf(counts.as_ptr(), counts.len(), 1.0, &mut out)
        };
        assert_eq!(status, CotradeStatus::Ok);
        assert_eq!(out, 0.0);

        let status = cotrade_lambda_n(-2.0, 4, &mut out);
        assert_eq!(status, CotradeStatus::InvalidArgument);
    }

    #[test]
    fn null_pointers_are_rejected() {
        let mut out = 0.0;
        assert_eq!(
            unsafe { cotrade_ewens_log_pmf(std::ptr::null(), 0, 1.0, &mut out) },
            CotradeStatus::NullPointer
        );
        assert_eq!(
            cotrade_hypergeom_pvalue(4, 2, 2, 1, std::ptr::null_mut()),
            CotradeStatus::NullPointer
        );
        assert!(unsafe { cotrade_table_from_csv(std::ptr::null()) }.is_null());
        unsafe { cotrade_table_free(std::ptr::null_mut()) };
    }

    #[test]
    fn table_handle_round_trip() {
        let dir = std::env::temp_dir().join("cotrade-ffi-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trades.csv");
        std::fs::write(
            &path,
            "trader_id,open_time,close_time,symbol,side,lots\n\
             T1,2015-01-05T09:00:00Z,2015-01-05T10:00:00Z,EURUSD,long,1.5\n\
             T2,2015-01-05T09:30:00Z,2015-01-05T11:00:00Z,EURUSD,short,2.0\n",
        )
        .unwrap();
        let cpath = c(path.to_str().unwrap());
        let table = unsafe { cotrade_table_from_csv(cpath.as_ptr()) };
        assert!(!table.is_null());
        assert_eq!(unsafe { cotrade_table_len(table) }, 2);
        assert_eq!(unsafe { cotrade_table_trader_count(table) }, 2);
        unsafe { cotrade_table_free(table) };

        let missing = c("/definitely/not/here.csv");
        let table = unsafe { cotrade_table_from_csv(missing.as_ptr()) };
        assert!(table.is_null());
        let msg = unsafe { CStr::from_ptr(cotrade_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("not/here.csv"));
    }

    #[test]
    fn pipeline_through_the_abi() {
        let dir = std::env::temp_dir().join("cotrade-ffi-pipeline");
        std::fs::create_dir_all(&dir).unwrap();
        let out_dir = dir.join("out");
        let config_path = dir.join("run.cfg");
        std::fs::write(
            &config_path,
            format!(
                "out_dir = {}\ntraders = 12\ngroups = 2\ngroup_size = 4\nhorizon_days = 30\n\
                 window_days = 14\nstep_days = 7\ncutoff = 5\ndeltas_minutes = 60\n\
                 strategies = ew\nrhos = 1\n",
                out_dir.display()
            ),
        )
        .unwrap();
        let cfg = c(config_path.to_str().unwrap());
        let stages = c("simulate,states");
        let status = unsafe { cotrade_run_pipeline(cfg.as_ptr(), stages.as_ptr()) };
        assert_eq!(status, CotradeStatus::Ok);
        assert!(out_dir.join("trades.csv").exists());
        assert!(out_dir.join("positions.csv").exists());

        let bad = c("nonsense-stage");
        let status = unsafe { cotrade_run_pipeline(cfg.as_ptr(), bad.as_ptr()) };
        assert_eq!(status, CotradeStatus::InvalidArgument);
    }
}
