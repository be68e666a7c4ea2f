//! C ABI over a termnet session.
//!
//! Every function returns a [`TnStatus`]; on failure the message is kept per
//! thread and read back with [`tn_last_error_message`]. Strings are UTF-8 and
//! NUL-terminated. Sessions are opaque and must be released with
//! [`tn_session_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use termnet::cli::render_binding;
use termnet::session::{QueryId, Session};
use termnet::{netfile, Error};

/// Result codes.
#[repr(C)]
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    UnknownVariable = 4,
    UnknownValue = 5,
    Conflict = 6,
    InvalidArgument = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque session handle.
pub struct TnSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TnStatus {
    match e {
        Error::Parse { .. } => TnStatus::Parse,
        Error::UnknownVariable(_) => TnStatus::UnknownVariable,
        Error::UnknownValue { .. } => TnStatus::UnknownValue,
        Error::ConflictingEvidence { .. } | Error::QueryObserved(_) => TnStatus::Conflict,
        Error::Io(_) => TnStatus::Io,
        _ => TnStatus::InvalidArgument,
    }
}

fn fail(status: TnStatus, msg: &str) -> TnStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), (TnStatus, String)>) -> TnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TnStatus::Ok
        }
        Ok(Err((s, msg))) => fail(s, &msg),
        Err(_) => fail(TnStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> (TnStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TnStatus, String)> {
    if p.is_null() {
        return Err((TnStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TnStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn session<'a>(s: *mut TnSession) -> Result<&'a mut Session, (TnStatus, String)> {
    s.as_mut()
        .map(|h| &mut h.inner)
        .ok_or((TnStatus::NullArgument, "session is null".to_string()))
}

fn null(what: &str) -> (TnStatus, String) {
    (TnStatus::NullArgument, format!("{what} is null"))
}

/// Copies `text` into `buf`; `out_len` always receives the size needed
/// including the terminator.
unsafe fn write_out(text: &str, buf: *mut c_char, cap: usize, out_len: *mut usize) -> Result<(), (TnStatus, String)> {
    if !out_len.is_null() {
        *out_len = text.len() + 1;
    }
    if buf.is_null() || cap < text.len() + 1 {
        return Err((TnStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1)));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
    *buf.add(text.len()) = 0;
    Ok(())
}

fn parse_vars(s: &Session, csv: &str) -> Result<Vec<termnet::VarId>, (TnStatus, String)> {
    csv.split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|n| s.net().id_of(n).map_err(lib_err))
        .collect()
}

/// Parses a network in the text format and opens a session on it.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tn_session_new_from_text(text: *const c_char, out: *mut *mut TnSession) -> TnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(text, "text")?;
        let net = netfile::parse(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TnSession {
            inner: Session::new(net),
        }));
        Ok(())
    })
}

/// Loads a network file and opens a session on it.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tn_session_new_from_file(path: *const c_char, out: *mut *mut TnSession) -> TnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = read_str(path, "path")?;
        let net = netfile::load(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TnSession {
            inner: Session::new(net),
        }));
        Ok(())
    })
}

/// Releases a session. Null is ignored.
///
/// # Safety
/// `s` must come from one of the constructors and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tn_session_free(s: *mut TnSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Registers a marginal query over comma-separated variable names.
///
/// # Safety
/// Pointers must be valid; `vars` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tn_session_query(s: *mut TnSession, vars: *const c_char, out_query: *mut usize) -> TnStatus {
    guard(|| {
        let sess = session(s)?;
        let vars = parse_vars(sess, read_str(vars, "vars")?)?;
        if out_query.is_null() {
            return Err(null("out_query"));
        }
        *out_query = sess.add_query(&vars).map_err(lib_err)?.0;
        Ok(())
    })
}

/// Observes `var = value`.
///
/// # Safety
/// Pointers must be valid and NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tn_session_evidence(s: *mut TnSession, var: *const c_char, value: *const c_char) -> TnStatus {
    guard(|| {
        let sess = session(s)?;
        let v = sess.net().id_of(read_str(var, "var")?).map_err(lib_err)?;
        let x = sess.net().value_index(v, read_str(value, "value")?).map_err(lib_err)?;
        sess.assert_evidence(v, x).map_err(lib_err)?;
        Ok(())
    })
}

/// Runs up to `k` more steps of a query; `out_done` receives how many
/// produced a term (fewer once the query is exhausted).
///
/// # Safety
/// Pointers must be valid; `out_done` may be null.
#[no_mangle]
pub unsafe extern "C" fn tn_session_step(s: *mut TnSession, query: usize, k: usize, out_done: *mut usize) -> TnStatus {
    guard(|| {
        let sess = session(s)?;
        let done = sess.step(QueryId(query), k).map_err(lib_err)?;
        if !out_done.is_null() {
            *out_done = done;
        }
        Ok(())
    })
}

/// Writes per-value brackets in value order: query variables in network
/// order, last one fastest.
/// `out_count` receives the number of values; if it exceeds `cap` nothing is
/// written and `BufferTooSmall` is returned.
///
/// # Safety
/// `lowers` and `uppers` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn tn_session_bounds(
    s: *mut TnSession,
    query: usize,
    lowers: *mut f64,
    uppers: *mut f64,
    cap: usize,
    out_count: *mut usize,
) -> TnStatus {
    guard(|| {
        let sess = session(s)?;
        let b = sess.bounds(QueryId(query)).map_err(lib_err)?;
        if !out_count.is_null() {
            *out_count = b.values.len();
        }
        if cap < b.values.len() {
            return Err((TnStatus::BufferTooSmall, format!("need {} slots", b.values.len())));
        }
        if lowers.is_null() || uppers.is_null() {
            return Err(null("lowers/uppers"));
        }
        for (i, v) in b.values.iter().enumerate() {
            *lowers.add(i) = v.lower;
            *uppers.add(i) = v.upper;
        }
        Ok(())
    })
}

/// Most likely joint assignment of `vars` given the evidence, creating at
/// most `budget` terms. `out_found` is 0 when the budget ran out first;
/// otherwise the assignment is written as `A=a,B=b` and its mass stored.
///
/// # Safety
/// Pointers must be valid; `buf` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn tn_session_mlch(
    s: *mut TnSession,
    vars: *const c_char,
    budget: usize,
    out_found: *mut i32,
    out_mass: *mut f64,
    buf: *mut c_char,
    cap: usize,
    out_len: *mut usize,
) -> TnStatus {
    guard(|| {
        let sess = session(s)?;
        let vars = parse_vars(sess, read_str(vars, "vars")?)?;
        if out_found.is_null() || out_mass.is_null() {
            return Err(null("out_found/out_mass"));
        }
        let out = sess.mlch_over(&vars, budget).map_err(lib_err)?;
        match out.hypothesis {
            Some((b, m)) => {
                *out_found = 1;
                *out_mass = m;
                write_out(&render_binding(sess.net(), &b), buf, cap, out_len)
            }
            None => {
                *out_found = 0;
                *out_mass = 0.0;
                write_out("", buf, cap, out_len)
            }
        }
    })
}

/// Total terms created by the session so far.
///
/// # Safety
/// `s` must be a valid session or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn tn_session_terms_created(s: *const TnSession) -> usize {
    s.as_ref().map_or(0, |h| h.inner.terms_created())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tn_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(c) => c,
        Err(_) => panic!("version has no interior NUL"),
    };
    VERSION.as_ptr()
}
