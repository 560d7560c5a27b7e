//! C ABI for the knowledge-base diagnosis library.
//!
//! Knowledge bases are opaque handles created by `abl_kb_parse` or
//! `abl_kb_builtin` (already grounded) and released with `abl_kb_free`.
//! Functions return [`AblStatus`]; on any non-`Ok` status the thread-local
//! message from `abl_last_error` describes the failure. Strings returned
//! through out-parameters are owned by the caller and must be released
//! with `abl_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use abl_rank::kb::{self, BuiltinKind, KnowledgeBase};
use abl_rank::probmatrix::{diagnose, rank_exact, ClassPrior};
use abl_rank::Verdict;

/// Opaque handle to a grounded knowledge base.
pub struct AblKb {
    inner: KnowledgeBase,
}

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    GroundError = 4,
    DiagnoseError = 5,
    UnknownBuiltin = 6,
    RenderError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).expect("NUL stripped");
    });
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn abl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be a pointer previously returned through one of this library's
/// string out-parameters, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Frees a knowledge-base handle. NULL is a no-op.
///
/// # Safety
/// `kb` must come from `abl_kb_parse` or `abl_kb_builtin`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn abl_kb_free(kb: *mut AblKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, AblStatus> {
    if ptr.is_null() {
        set_error("null pointer argument");
        return Err(AblStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        AblStatus::InvalidUtf8
    })
}

fn emit_kb(kb: KnowledgeBase, out: *mut *mut AblKb) -> AblStatus {
    match kb.ground() {
        Ok(grounded) => {
            unsafe { *out = Box::into_raw(Box::new(AblKb { inner: grounded })) };
            AblStatus::Ok
        }
        Err(err) => {
            set_error(err.to_string());
            AblStatus::GroundError
        }
    }
}

/// Parses KB text and grounds it into `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abl_kb_parse(text: *const c_char, out: *mut *mut AblKb) -> AblStatus {
    if out.is_null() {
        set_error("null out pointer");
        return AblStatus::NullPointer;
    }
    let text = match read_str(text) {
        Ok(text) => text,
        Err(status) => return status,
    };
    match kb::parse_kb(text) {
        Ok(kb) => emit_kb(kb, out),
        Err(err) => {
            set_error(err.to_string());
            AblStatus::ParseError
        }
    }
}

/// Builds and grounds a builtin KB (`conj_eq`, `conjunction`, `addition`,
/// `hed`) into `*out`. `base` applies to `addition` and `hed`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abl_kb_builtin(
    name: *const c_char,
    base: u32,
    out: *mut *mut AblKb,
) -> AblStatus {
    if out.is_null() {
        set_error("null out pointer");
        return AblStatus::NullPointer;
    }
    let name = match read_str(name) {
        Ok(name) => name,
        Err(status) => return status,
    };
    let Some(kind) = BuiltinKind::from_name(name) else {
        set_error(format!("unknown builtin {name:?}"));
        return AblStatus::UnknownBuiltin;
    };
    match kb::builtin_kb(kind, base) {
        Ok(kb) => emit_kb(kb, out),
        Err(err) => {
            set_error(err.to_string());
            AblStatus::GroundError
        }
    }
}

/// Number of classes in the KB's alphabet; 0 when `kb` is NULL.
///
/// # Safety
/// `kb` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn abl_kb_classes(kb: *const AblKb) -> u32 {
    match kb.as_ref() {
        Some(kb) => kb.inner.num_classes() as u32,
        None => 0,
    }
}

fn emit_string(content: String, out: *mut *mut c_char) -> AblStatus {
    match CString::new(content) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            AblStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL");
            AblStatus::RenderError
        }
    }
}

/// Renders the KB back to its text format.
///
/// # Safety
/// `kb` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abl_kb_render(kb: *const AblKb, out: *mut *mut c_char) -> AblStatus {
    let Some(kb) = kb.as_ref() else {
        set_error("null kb handle");
        return AblStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null out pointer");
        return AblStatus::NullPointer;
    }
    emit_string(kb::render_kb(&kb.inner), out)
}

/// Diagnoses the KB under a uniform class prior and writes the report JSON
/// (the same schema the CLI emits) into `*out`.
///
/// # Safety
/// `kb` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn abl_diagnose_json(
    kb: *const AblKb,
    out: *mut *mut c_char,
) -> AblStatus {
    let Some(kb) = kb.as_ref() else {
        set_error("null kb handle");
        return AblStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null out pointer");
        return AblStatus::NullPointer;
    }
    let prior = ClassPrior::uniform(kb.inner.num_classes());
    match diagnose(&kb.inner, &prior) {
        Ok(report) => emit_string(report.to_json_string(), out),
        Err(err) => {
            set_error(err.to_string());
            AblStatus::DiagnoseError
        }
    }
}

/// Verdict under a uniform prior: 0 when supervision suffices (full row
/// rank), 2 when insufficient, -1 on error. Mirrors the CLI exit codes.
///
/// # Safety
/// `kb` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn abl_diagnose_verdict(kb: *const AblKb) -> i32 {
    let Some(kb) = kb.as_ref() else {
        set_error("null kb handle");
        return -1;
    };
    let prior = ClassPrior::uniform(kb.inner.num_classes());
    match diagnose(&kb.inner, &prior) {
        Ok(report) => match report.verdict {
            Verdict::Learnable => 0,
            Verdict::Insufficient => 2,
        },
        Err(err) => {
            set_error(err.to_string());
            -1
        }
    }
}

/// Exact row rank of the KB's probability matrix under a uniform prior;
/// -1 on error.
///
/// # Safety
/// `kb` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn abl_matrix_rank(kb: *const AblKb) -> i32 {
    let Some(kb) = kb.as_ref() else {
        set_error("null kb handle");
        return -1;
    };
    let prior = ClassPrior::uniform(kb.inner.num_classes());
    match abl_rank::probmatrix::joint_matrix(&kb.inner, &prior) {
        Ok(matrix) => rank_exact(&matrix) as i32,
        Err(err) => {
            set_error(err.to_string());
            -1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    unsafe fn own_string(ptr: *mut c_char) -> String {
        let out = CStr::from_ptr(ptr).to_str().unwrap().to_string();
        abl_string_free(ptr);
        out
    }

    #[test]
    fn builtin_diagnose_round_trip() {
        unsafe {
            let mut kb: *mut AblKb = ptr::null_mut();
            let name = cstr("conjunction");
            assert_eq!(abl_kb_builtin(name.as_ptr(), 0, &mut kb), AblStatus::Ok);
            assert_eq!(abl_kb_classes(kb), 2);
            assert_eq!(abl_diagnose_verdict(kb), 0);
            assert_eq!(abl_matrix_rank(kb), 2);

            let mut json: *mut c_char = ptr::null_mut();
            assert_eq!(abl_diagnose_json(kb, &mut json), AblStatus::Ok);
            let report: serde_json::Value =
                serde_json::from_str(&own_string(json)).unwrap();
            assert_eq!(report["verdict"], "Learnable");
            abl_kb_free(kb);
        }
    }

    #[test]
    fn insufficient_kb_reports_two() {
        unsafe {
            let mut kb: *mut AblKb = ptr::null_mut();
            let name = cstr("hed");
            assert_eq!(abl_kb_builtin(name.as_ptr(), 10, &mut kb), AblStatus::Ok);
            assert_eq!(abl_diagnose_verdict(kb), 2);
            assert_eq!(abl_matrix_rank(kb), 7);
            abl_kb_free(kb);
        }
    }

    #[test]
    fn parse_and_render_through_the_abi() {
        unsafe {
            let text = cstr(
                "classes 2\nconcept conj arity 3 { facts: [0,0,0] [0,1,0] [1,0,0] [1,1,1] }",
            );
            let mut kb: *mut AblKb = ptr::null_mut();
            assert_eq!(abl_kb_parse(text.as_ptr(), &mut kb), AblStatus::Ok);

            let mut rendered: *mut c_char = ptr::null_mut();
            assert_eq!(abl_kb_render(kb, &mut rendered), AblStatus::Ok);
            let rendered = own_string(rendered);
            assert!(rendered.contains("concept conj arity 3"));
            abl_kb_free(kb);
        }
    }

    #[test]
    fn errors_set_the_thread_local_message() {
        unsafe {
            let mut kb: *mut AblKb = ptr::null_mut();
            let bad = cstr("classes 2\nconcept a arity 2 { facts: [0,3] }");
            assert_eq!(abl_kb_parse(bad.as_ptr(), &mut kb), AblStatus::ParseError);
            let message = CStr::from_ptr(abl_last_error()).to_str().unwrap();
            assert!(message.contains("out of range"), "message {message:?}");

            let ghost = cstr("warp");
            assert_eq!(
                abl_kb_builtin(ghost.as_ptr(), 2, &mut kb),
                AblStatus::UnknownBuiltin
            );
            assert_eq!(abl_kb_parse(ptr::null(), &mut kb), AblStatus::NullPointer);
            assert_eq!(abl_diagnose_verdict(ptr::null()), -1);
        }
    }

    #[test]
    fn null_frees_are_no_ops() {
        unsafe {
            abl_kb_free(ptr::null_mut());
            abl_string_free(ptr::null_mut());
        }
    }
}
