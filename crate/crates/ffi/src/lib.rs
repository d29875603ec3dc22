//! C ABI over the `cfgmorph` library.
//!
//! Handles are opaque and owned by the caller; every `*_new`/parse result
//! must be released with its matching `*_free`. Functions return a
//! [`CfmStatus`]; the message for the most recent failure on the calling
//! thread is available from [`cfm_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cfgmorph::transform::{obfuscate, ObfuscateParams, ObfuscatedProgram};
use cfgmorph::vm::{run_output, Limits, VmError};
use cfgmorph::{extract_cfg, is_isomorphic, parse_program, serialize_program, Program};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Transform = 4,
    Vm = 5,
    StepLimit = 6,
    BufferTooSmall = 7,
    Analysis = 8,
    Panic = 9,
}

/// A parsed mini-ISA program.
pub struct CfmProgram {
    inner: Program,
}

/// The result of one obfuscation run.
pub struct CfmObfuscated {
    inner: ObfuscatedProgram,
}

/// Pipeline parameters; obtain defaults from [`cfm_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CfmParams {
    pub target_factor: f64,
    pub edge_budget: f64,
    pub extra_hops: u32,
    pub max_restarts: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CfmStatus, msg: impl Into<String>) -> CfmStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CfmStatus) -> CfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CfmStatus::Panic, "internal panic"),
    }
}

fn vm_status(e: &VmError) -> CfmStatus {
    match e {
        VmError::StepLimit { .. } => CfmStatus::StepLimit,
        _ => CfmStatus::Vm,
    }
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, CfmStatus> {
    if s.is_null() {
        return Err(fail(CfmStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(CfmStatus::InvalidUtf8, "string is not UTF-8"))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cfm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer returned by a `cfm_*` function that
/// documents string ownership, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn cfm_params_default() -> CfmParams {
    let d = ObfuscateParams::default();
    CfmParams {
        target_factor: d.target_factor,
        edge_budget: d.edge_budget,
        extra_hops: d.extra_hops as u32,
        max_restarts: d.max_restarts as u32,
    }
}

/// Parse assembler text into a program handle.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfm_program_parse(source: *const c_char, out: *mut *mut CfmProgram) -> CfmStatus {
    guard(|| {
        if out.is_null() {
            return fail(CfmStatus::NullArgument, "null output pointer");
        }
        let text = match str_arg(source) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_program(text) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(CfmProgram { inner: p }));
                CfmStatus::Ok
            }
            Err(e) => fail(CfmStatus::Parse, e.to_string()),
        }
    })
}

/// # Safety
/// `p` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfm_program_free(p: *mut CfmProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Assembler text of `p`; free with [`cfm_string_free`]. Null on failure.
///
/// # Safety
/// `p` must be a valid program handle.
#[no_mangle]
pub unsafe extern "C" fn cfm_program_text(p: *const CfmProgram) -> *mut c_char {
    match p.as_ref() {
        Some(p) => to_c_string(serialize_program(&p.inner)),
        None => {
            set_error("null program");
            ptr::null_mut()
        }
    }
}

/// Number of basic blocks in the restricted CFG of `p`.
///
/// # Safety
/// `p` must be a valid program handle.
#[no_mangle]
pub unsafe extern "C" fn cfm_program_block_count(p: *const CfmProgram) -> usize {
    p.as_ref().map_or(0, |p| extract_cfg(&p.inner).blocks.len())
}

/// Run `p` on `inputs` (loaded into r0..). Writes at most `out_cap` output
/// words to `out`; `out_len` always receives the full output length.
/// Returns `BufferTooSmall` when the log did not fit.
///
/// # Safety
/// `inputs` must point to `n_inputs` words (or be null when `n_inputs` is 0),
/// `out` to `out_cap` writable words (or be null when `out_cap` is 0);
/// `out_len` and `steps` may be null.
#[no_mangle]
pub unsafe extern "C" fn cfm_program_run(
    p: *const CfmProgram,
    inputs: *const u64,
    n_inputs: usize,
    max_steps: u64,
    out: *mut u64,
    out_cap: usize,
    out_len: *mut usize,
    steps: *mut u64,
) -> CfmStatus {
    guard(|| {
        let Some(p) = p.as_ref() else { return fail(CfmStatus::NullArgument, "null program") };
        if (inputs.is_null() && n_inputs > 0) || (out.is_null() && out_cap > 0) {
            return fail(CfmStatus::NullArgument, "null buffer with nonzero length");
        }
        let inputs = if n_inputs == 0 { &[][..] } else { std::slice::from_raw_parts(inputs, n_inputs) };
        let (log, n) = match run_output(&p.inner, inputs, Limits { max_steps }) {
            Ok(r) => r,
            Err(e) => return fail(vm_status(&e), e.to_string()),
        };
        if let Some(l) = out_len.as_mut() {
            *l = log.len();
        }
        if let Some(s) = steps.as_mut() {
            *s = n;
        }
        let k = log.len().min(out_cap);
        if k > 0 {
            std::slice::from_raw_parts_mut(out, k).copy_from_slice(&log[..k]);
        }
        if log.len() > out_cap {
            return fail(CfmStatus::BufferTooSmall, format!("output has {} words", log.len()));
        }
        CfmStatus::Ok
    })
}

/// Whether the restricted CFGs of `a` and `b` are isomorphic.
///
/// # Safety
/// `a` and `b` must be valid program handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfm_cfg_isomorphic(a: *const CfmProgram, b: *const CfmProgram, out: *mut bool) -> CfmStatus {
    guard(|| {
        let (Some(a), Some(b), Some(out)) = (a.as_ref(), b.as_ref(), out.as_mut()) else {
            return fail(CfmStatus::NullArgument, "null argument");
        };
        match is_isomorphic(&extract_cfg(&a.inner), &extract_cfg(&b.inner)) {
            Ok(iso) => {
                *out = iso;
                CfmStatus::Ok
            }
            Err(e) => fail(CfmStatus::Analysis, e.to_string()),
        }
    })
}

/// Obfuscate `p`; `params` may be null for defaults.
///
/// # Safety
/// `p` must be a valid program handle, `params` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cfm_obfuscate(
    p: *const CfmProgram,
    params: *const CfmParams,
    seed: u64,
    out: *mut *mut CfmObfuscated,
) -> CfmStatus {
    guard(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return fail(CfmStatus::NullArgument, "null argument");
        };
        let c = params.as_ref().copied().unwrap_or_else(|| cfm_params_default());
        let params = ObfuscateParams {
            target_factor: c.target_factor,
            edge_budget: c.edge_budget,
            extra_hops: c.extra_hops as usize,
            max_restarts: c.max_restarts as usize,
            ..ObfuscateParams::default()
        };
        match obfuscate(&p.inner, &params, seed) {
            Ok(ob) => {
                *out = Box::into_raw(Box::new(CfmObfuscated { inner: ob }));
                CfmStatus::Ok
            }
            Err(e) => fail(CfmStatus::Transform, e.to_string()),
        }
    })
}

/// # Safety
/// `ob` must be null or a handle from [`cfm_obfuscate`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfm_obfuscated_free(ob: *mut CfmObfuscated) {
    if !ob.is_null() {
        drop(Box::from_raw(ob));
    }
}

/// New program handle holding P′; free with [`cfm_program_free`].
///
/// # Safety
/// `ob` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cfm_obfuscated_program(ob: *const CfmObfuscated) -> *mut CfmProgram {
    match ob.as_ref() {
        Some(ob) => Box::into_raw(Box::new(CfmProgram { inner: ob.inner.program.clone() })),
        None => {
            set_error("null handle");
            ptr::null_mut()
        }
    }
}

/// Sidecar metadata as JSON; free with [`cfm_string_free`].
///
/// # Safety
/// `ob` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn cfm_obfuscated_metadata(ob: *const CfmObfuscated) -> *mut c_char {
    match ob.as_ref() {
        Some(ob) => to_c_string(ob.inner.sidecar_json()),
        None => {
            set_error("null handle");
            ptr::null_mut()
        }
    }
}

/// Source and target node counts.
///
/// # Safety
/// `ob` must be a valid handle; the output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn cfm_obfuscated_node_counts(
    ob: *const CfmObfuscated,
    source: *mut usize,
    target: *mut usize,
) -> CfmStatus {
    let Some(ob) = ob.as_ref() else { return fail(CfmStatus::NullArgument, "null handle") };
    if let Some(s) = source.as_mut() {
        *s = ob.inner.sidecar.source_nodes;
    }
    if let Some(t) = target.as_mut() {
        *t = ob.inner.sidecar.target_nodes;
    }
    CfmStatus::Ok
}
