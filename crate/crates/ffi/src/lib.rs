//! C ABI for the qpl toolchain.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns a
//! [`QplStatus`]; on failure [`qpl_last_error`] describes the problem. Strings
//! returned through out-parameters are owned by the caller and released with
//! [`qpl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qpl::cte::{compile, render};
use qpl::interpret::interpret;
use qpl::parser::{check_prefix, check_prefix_with_schema, parse, serialize, PrefixVerdict};
use qpl::plan::Plan;
use qpl::schema::{load_database, load_schema, Database, Schema};
use qpl::semantic::validate;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QplStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    LoadError = 5,
    ExecutionError = 6,
    Panic = 7,
}

/// Verdict of a prefix check.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QplPrefix {
    Valid = 0,
    Complete = 1,
    Invalid = 2,
}

/// Output format of [`qpl_plan_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QplFormat {
    Csv = 0,
    Json = 1,
}

/// A relational schema.
pub struct QplSchema(Schema);

/// A parsed plan.
pub struct QplPlan(Plan);

/// A schema with loaded table contents.
pub struct QplDatabase(Database);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qpl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qpl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

type Fallible = Result<(), (QplStatus, String)>;

fn guard(f: impl FnOnce() -> Fallible) -> QplStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QplStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QplStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be NULL or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, (QplStatus, String)> {
    if s.is_null() {
        return Err((QplStatus::NullArgument, format!("`{name}` is NULL")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (QplStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

/// # Safety
/// `p` must be NULL or point to a live `T`.
unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, (QplStatus, String)> {
    p.as_ref().ok_or_else(|| (QplStatus::NullArgument, format!("`{name}` is NULL")))
}

/// # Safety
/// `out` must be NULL or writable.
unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Fallible {
    if out.is_null() {
        return Err((QplStatus::NullArgument, format!("`{name}` is NULL")));
    }
    out.write(value);
    Ok(())
}

fn into_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NULs removed").into_raw()
}

/// Parses a schema JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpl_schema_load(json: *const c_char, out: *mut *mut QplSchema) -> QplStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let schema = load_schema(json).map_err(|e| (QplStatus::LoadError, e.to_string()))?;
        put(out, Box::into_raw(Box::new(QplSchema(schema))), "out")
    })
}

/// # Safety
/// `schema` must be NULL or a handle from [`qpl_schema_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpl_schema_free(schema: *mut QplSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Loads `<table>.csv` for every table of `schema` from `data_dir`.
///
/// # Safety
/// `schema` must be a live handle, `data_dir` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpl_database_load(
    schema: *const QplSchema,
    data_dir: *const c_char,
    out: *mut *mut QplDatabase,
) -> QplStatus {
    guard(|| {
        let schema = handle(schema, "schema")?;
        let dir = str_arg(data_dir, "data_dir")?;
        let db = load_database(&schema.0, Path::new(dir)).map_err(|e| (QplStatus::LoadError, e.to_string()))?;
        put(out, Box::into_raw(Box::new(QplDatabase(db))), "out")
    })
}

/// # Safety
/// `db` must be NULL or a handle from [`qpl_database_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpl_database_free(db: *mut QplDatabase) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Parses QPL text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpl_plan_parse(text: *const c_char, out: *mut *mut QplPlan) -> QplStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let plan = parse(text).map_err(|d| {
            let msg = d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n");
            (QplStatus::ParseError, msg)
        })?;
        put(out, Box::into_raw(Box::new(QplPlan(plan))), "out")
    })
}

/// # Safety
/// `plan` must be NULL or a handle from [`qpl_plan_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpl_plan_free(plan: *mut QplPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Writes the plan's depth and number of steps.
///
/// # Safety
/// `plan` must be a live handle; `depth` and `steps` writable.
#[no_mangle]
pub unsafe extern "C" fn qpl_plan_metrics(plan: *const QplPlan, depth: *mut usize, steps: *mut usize) -> QplStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        put(depth, plan.0.depth(), "depth")?;
        put(steps, plan.0.step_count(), "steps")
    })
}

/// Canonical single-line form of the plan.
///
/// # Safety
/// `plan` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpl_plan_serialize(plan: *const QplPlan, out: *mut *mut c_char) -> QplStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        put(out, into_c(serialize(&plan.0)), "out")
    })
}

/// Returns `QPL_STATUS_OK` when the plan is valid for `schema`, otherwise
/// `QPL_STATUS_VALIDATION_ERROR` with the diagnostics in [`qpl_last_error`].
///
/// # Safety
/// `plan` and `schema` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn qpl_plan_validate(plan: *const QplPlan, schema: *const QplSchema) -> QplStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        let schema = handle(schema, "schema")?;
        let report = validate(&plan.0, &schema.0);
        if report.ok {
            Ok(())
        } else {
            let msg = report.diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n");
            Err((QplStatus::ValidationError, msg))
        }
    })
}

/// Renders the plan's CTE program.
///
/// # Safety
/// `plan` and `schema` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpl_plan_compile(
    plan: *const QplPlan,
    schema: *const QplSchema,
    out: *mut *mut c_char,
) -> QplStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        let schema = handle(schema, "schema")?;
        let program = compile(&plan.0, &schema.0).map_err(|e| (QplStatus::ValidationError, e.to_string()))?;
        put(out, into_c(render(&program)), "out")
    })
}

/// Runs the plan and writes its result as CSV or JSON.
///
/// # Safety
/// `plan` and `db` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpl_plan_run(
    plan: *const QplPlan,
    db: *const QplDatabase,
    format: QplFormat,
    out: *mut *mut c_char,
) -> QplStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        let db = handle(db, "db")?;
        let rel = interpret(&plan.0, &db.0).map_err(|e| (QplStatus::ExecutionError, e.to_string()))?;
        let text = match format {
            QplFormat::Csv => rel.to_csv(),
            QplFormat::Json => rel.to_json().to_string(),
        };
        put(out, into_c(text), "out")
    })
}

/// Classifies a character prefix of a plan. `schema` may be NULL. On an
/// invalid prefix `offset` (if not NULL) receives the byte offset of the
/// error and [`qpl_last_error`] its reason.
///
/// # Safety
/// `prefix` must be a NUL-terminated string, `schema` NULL or a live handle,
/// `verdict` writable and `offset` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn qpl_check_prefix(
    prefix: *const c_char,
    schema: *const QplSchema,
    verdict: *mut QplPrefix,
    offset: *mut usize,
) -> QplStatus {
    guard(|| {
        let prefix = str_arg(prefix, "prefix")?;
        let v = match schema.as_ref() {
            Some(s) => check_prefix_with_schema(prefix, &s.0),
            None => check_prefix(prefix),
        };
        let (code, at) = match v {
            PrefixVerdict::ValidPrefix => (QplPrefix::Valid, None),
            PrefixVerdict::Complete => (QplPrefix::Complete, None),
            PrefixVerdict::Invalid { offset, reason } => {
                set_error(reason);
                (QplPrefix::Invalid, Some(offset))
            }
        };
        put(verdict, code, "verdict")?;
        if let (Some(at), false) = (at, offset.is_null()) {
            offset.write(at);
        }
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string returned through an out-parameter of this
/// library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qpl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
