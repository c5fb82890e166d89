//! C interface: compile a program, keep a reactive landscape over a grid of
//! cells, push weight updates and read the landscape back.
//!
//! Every fallible call returns an [`RmlErrorCode`]; on failure the message
//! is available from [`rml_last_error`] on the same thread.

// `!(x > 0.0)` is how NaN gets rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rml_core::circuit::{partition, CircuitError, ReactiveCircuit, WeightUpdate};
use rml_core::compiler::{compile_wmc, CompileError, WmcCircuit};
use rml_core::lang::{parse_program, validate};
use rml_core::signals::ClusterConfig;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmlErrorCode {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// The program text does not parse.
    Parse = 3,
    /// The program parses but breaks a language rule.
    InvalidProgram = 4,
    Compile = 5,
    UnknownChannel = 6,
    /// Wrong number of values or cells.
    Shape = 7,
    /// A weight vector is negative, non-finite or does not sum to one.
    InvalidWeights = 8,
    /// Some source has never been set, so there is no landscape yet.
    NotReady = 9,
    OutOfRange = 10,
    Panic = 11,
}

/// A validated, compiled program.
pub struct RmlProgram {
    wmc: WmcCircuit,
    channels: Vec<CString>,
}

/// A reactive landscape over a fixed number of cells.
pub struct RmlEngine {
    rc: ReactiveCircuit,
    clusters: BTreeMap<String, usize>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RmlErrorCode, String);

impl From<CircuitError> for Failure {
    fn from(e: CircuitError) -> Self {
        let code = match &e {
            CircuitError::UnknownChannel(_) => RmlErrorCode::UnknownChannel,
            CircuitError::ShapeMismatch(_)
            | CircuitError::Compile(CompileError::ShapeMismatch(_)) => RmlErrorCode::Shape,
            CircuitError::Compile(CompileError::InvalidWeights { .. }) => {
                RmlErrorCode::InvalidWeights
            }
            CircuitError::UninitializedSource(_) => RmlErrorCode::NotReady,
            _ => RmlErrorCode::Compile,
        };
        Failure(code, e.to_string())
    }
}

fn fail(code: RmlErrorCode, msg: impl Into<String>) -> Failure {
    Failure(code, msg.into())
}

/// Runs `f`, records any failure for [`rml_last_error`] and turns panics
/// into [`RmlErrorCode::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RmlErrorCode {
    let outcome = catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| Err(fail(RmlErrorCode::Panic, "panic")));
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RmlErrorCode::Ok
        }
        Err(Failure(code, msg)) => {
            let msg = CString::new(msg.replace('\0', " ")).expect("no interior nul");
            LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
            code
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(RmlErrorCode::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RmlErrorCode::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(RmlErrorCode::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(RmlErrorCode::NullPointer, format!("{what} is null")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(RmlErrorCode::NullPointer, format!("{what} is null")))
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn rml_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses, validates and compiles `text`. Free the result with
/// [`rml_program_free`].
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rml_program_parse(
    text: *const c_char,
    out: *mut *mut RmlProgram,
) -> RmlErrorCode {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let program = parse_program(text).map_err(|e| fail(RmlErrorCode::Parse, e.to_string()))?;
        let report = validate(&program);
        if !report.is_ok() {
            return Err(fail(RmlErrorCode::InvalidProgram, report.to_string()));
        }
        let wmc = compile_wmc(&program).map_err(|e| fail(RmlErrorCode::Compile, e.to_string()))?;
        let channels = wmc
            .variables()
            .iter()
            .map(|v| CString::new(v.channel.as_str()).expect("channel tokens have no nul"))
            .collect();
        *out = Box::into_raw(Box::new(RmlProgram { wmc, channels }));
        Ok(())
    })
}

/// # Safety
/// `program` must come from [`rml_program_parse`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rml_program_free(program: *mut RmlProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Number of world variables, one per source the target depends on.
///
/// # Safety
/// `program` must be null or a live program.
#[no_mangle]
pub unsafe extern "C" fn rml_program_variable_count(program: *const RmlProgram) -> usize {
    program.as_ref().map_or(0, |p| p.channels.len())
}

/// Channel token and arity of variable `index`. The string lives as long as
/// the program.
///
/// # Safety
/// `program` must be a live program; `channel` and `arity` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rml_program_variable(
    program: *const RmlProgram,
    index: usize,
    channel: *mut *const c_char,
    arity: *mut usize,
) -> RmlErrorCode {
    guard(|| {
        let p = ref_arg(program, "program")?;
        let (channel, arity) = (mut_arg(channel, "channel")?, mut_arg(arity, "arity")?);
        let v = p.wmc.variables().get(index).ok_or_else(|| {
            fail(
                RmlErrorCode::OutOfRange,
                format!("variable {index} of {}", p.channels.len()),
            )
        })?;
        *channel = p.channels[index].as_ptr();
        *arity = v.arity();
        Ok(())
    })
}

/// Scalar operations for one full evaluation of one cell.
///
/// # Safety
/// `program` must be null or a live program.
#[no_mangle]
pub unsafe extern "C" fn rml_program_omega(program: *const RmlProgram) -> u64 {
    program.as_ref().map_or(0, |p| p.wmc.omega())
}

/// A reactive landscape over `cells` cells, all sources in cluster 0. The
/// engine keeps its own copy of the program.
///
/// # Safety
/// `program` must be a live program and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rml_engine_new(
    program: *const RmlProgram,
    cells: usize,
    epsilon: f64,
    out: *mut *mut RmlEngine,
) -> RmlErrorCode {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = ref_arg(program, "program")?;
        if cells == 0 {
            return Err(fail(
                RmlErrorCode::Shape,
                "an engine needs at least one cell",
            ));
        }
        if !(epsilon >= 0.0) {
            return Err(fail(
                RmlErrorCode::OutOfRange,
                "epsilon must be non-negative",
            ));
        }
        let clusters = BTreeMap::new();
        let mut rc = partition(&p.wmc, &clusters, ClusterConfig::default(), cells);
        rc.set_epsilon(epsilon);
        *out = Box::into_raw(Box::new(RmlEngine { rc, clusters }));
        Ok(())
    })
}

/// # Safety
/// `engine` must come from [`rml_engine_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rml_engine_free(engine: *mut RmlEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// New weights for the listed cells of one channel: `values` holds one
/// vector of the channel's arity per cell. Pass `cells = NULL` and
/// `n_cells = 0` to set every cell. `ops` and `skipped`, when not null,
/// receive the work done and whether the update was dropped as not
/// meaningful.
///
/// # Safety
/// Pointers must be valid for the given lengths; `ops` and `skipped` may be
/// null.
#[no_mangle]
pub unsafe extern "C" fn rml_engine_update(
    engine: *mut RmlEngine,
    channel: *const c_char,
    cells: *const usize,
    n_cells: usize,
    values: *const f64,
    n_values: usize,
    ops: *mut u64,
    skipped: *mut bool,
) -> RmlErrorCode {
    guard(|| {
        let e = mut_arg(engine, "engine")?;
        let channel = str_arg(channel, "channel")?;
        let values = slice_arg(values, n_values, "values")?;
        let update = if cells.is_null() && n_cells == 0 {
            WeightUpdate::Full(values)
        } else {
            WeightUpdate::Cells {
                cells: slice_arg(cells, n_cells, "cells")?,
                values,
            }
        };
        let r = e.rc.apply_update(channel, update)?;
        if let Some(ops) = ops.as_mut() {
            *ops = r.ops;
        }
        if let Some(skipped) = skipped.as_mut() {
            *skipped = r.skipped;
        }
        Ok(())
    })
}

/// Moves one channel to another FoC cluster and re-cuts the circuit.
///
/// # Safety
/// `engine` must be a live engine and `channel` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rml_engine_set_cluster(
    engine: *mut RmlEngine,
    channel: *const c_char,
    cluster: usize,
) -> RmlErrorCode {
    guard(|| {
        let e = mut_arg(engine, "engine")?;
        let channel = str_arg(channel, "channel")?;
        if e.rc.wmc().variable_for_channel(channel).is_none() {
            return Err(fail(
                RmlErrorCode::UnknownChannel,
                format!("unknown channel {channel}"),
            ));
        }
        e.clusters.insert(channel.to_string(), cluster);
        e.rc = e.rc.repartition(&e.clusters).0;
        Ok(())
    })
}

/// Copies the landscape, one probability per cell, into `out`.
///
/// # Safety
/// `engine` must be a live engine and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rml_engine_landscape(
    engine: *const RmlEngine,
    out: *mut f64,
    len: usize,
) -> RmlErrorCode {
    guard(|| {
        let e = ref_arg(engine, "engine")?;
        if len != e.rc.cells() {
            return Err(fail(
                RmlErrorCode::Shape,
                format!("landscape has {} cells, buffer {len}", e.rc.cells()),
            ));
        }
        if !e.rc.is_evaluated() {
            return Err(fail(
                RmlErrorCode::NotReady,
                "some source has never been set",
            ));
        }
        if out.is_null() {
            return Err(fail(RmlErrorCode::NullPointer, "out is null"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&e.rc.root_grid());
        Ok(())
    })
}
