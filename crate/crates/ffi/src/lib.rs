//! C ABI over `annotate-core`.
//!
//! Every function returns an [`AnnotateStatus`]; results come back through
//! out-pointers. On failure the message is available from
//! [`annotate_last_error`] on the same thread until the next call.
//!
//! Ownership: a project handle is freed with [`annotate_project_free`],
//! byte buffers with [`annotate_buffer_free`], strings with
//! [`annotate_string_free`]. Passing anything else to those is undefined.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use annotate_core::geometry::{Point, Shape};
use annotate_core::model::{AttributeSpec, EntryDraft, FileSpec, MetadataId, ModelError, Project};
use annotate_core::serialization::{self, LoadError, SaveError};
use annotate_core::timeline;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotateStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Schema = 4,
    InvalidProject = 5,
    Rejected = 6,
    NotFound = 7,
    InvalidArgument = 8,
    Panic = 99,
}

/// Opaque project handle.
pub struct AnnotateProject {
    inner: Project,
}

/// Bytes owned by the library.
#[repr(C)]
pub struct AnnotateBuffer {
    pub data: *mut u8,
    pub len: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AnnotateStatus, String);

type Outcome = Result<(), Failure>;

fn fail(status: AnnotateStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome) -> AnnotateStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AnnotateStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            AnnotateStatus::Panic
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        let status = match &e {
            LoadError::Parse { .. } => AnnotateStatus::Parse,
            LoadError::SchemaVersionUnsupported(_) | LoadError::Schema(_) => AnnotateStatus::Schema,
            LoadError::InvalidProject(_) => AnnotateStatus::InvalidProject,
        };
        let msg = match &e {
            LoadError::InvalidProject(v) => violation_text(v),
            _ => e.to_string(),
        };
        Failure(status, msg)
    }
}

impl From<SaveError> for Failure {
    fn from(e: SaveError) -> Self {
        let SaveError::InvalidProject(v) = e;
        Failure(AnnotateStatus::InvalidProject, violation_text(&v))
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match e {
            ModelError::UnknownMetadata(_) => AnnotateStatus::NotFound,
            _ => AnnotateStatus::Rejected,
        };
        Failure(status, e.to_string())
    }
}

fn violation_text(v: &[annotate_core::model::Violation]) -> String {
    v.iter().map(|v| format!("{v}\n")).collect()
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(AnnotateStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AnnotateStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(AnnotateStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn project_ref<'a>(p: *const AnnotateProject) -> Result<&'a Project, Failure> {
    p.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| fail(AnnotateStatus::NullArgument, "project is null"))
}

unsafe fn project_mut<'a>(p: *mut AnnotateProject) -> Result<&'a mut Project, Failure> {
    p.as_mut()
        .map(|h| &mut h.inner)
        .ok_or_else(|| fail(AnnotateStatus::NullArgument, "project is null"))
}

unsafe fn put<T>(out: *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(fail(AnnotateStatus::NullArgument, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn check_out<T>(out: *mut T) -> Outcome {
    if out.is_null() {
        Err(fail(AnnotateStatus::NullArgument, "output pointer is null"))
    } else {
        Ok(())
    }
}

fn into_buffer(bytes: Vec<u8>) -> AnnotateBuffer {
    let boxed = bytes.into_boxed_slice();
    let len = boxed.len();
    let data = Box::into_raw(boxed) as *mut u8;
    AnnotateBuffer { data, len }
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(AnnotateStatus::InvalidArgument, "string contains NUL"))
}

fn json_arg<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(s).map_err(|e| fail(AnnotateStatus::Schema, format!("{what}: {e}")))
}

fn shape_arg(s: &str) -> Result<Shape, Failure> {
    json_arg(s, "shape")
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn annotate_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates an empty project with a random pid.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_new(name: *const c_char, out: *mut *mut AnnotateProject) -> AnnotateStatus {
    guard(|| {
        check_out(out)?;
        let name = str_arg(name, "name")?;
        let inner = Project::create(name)?;
        put(out, Box::into_raw(Box::new(AnnotateProject { inner })))
    })
}

/// Parses and validates a project document.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_load(
    data: *const u8,
    len: usize,
    out: *mut *mut AnnotateProject,
) -> AnnotateStatus {
    guard(|| {
        check_out(out)?;
        let doc = bytes_arg(data, len, "data")?;
        let inner = serialization::load_project(doc)?.project;
        put(out, Box::into_raw(Box::new(AnnotateProject { inner })))
    })
}

/// # Safety
/// `project` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_free(project: *mut AnnotateProject) {
    if !project.is_null() {
        drop(Box::from_raw(project));
    }
}

/// Canonical JSON document. Fails with `INVALID_PROJECT` if the project does
/// not validate.
///
/// # Safety
/// `project` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_save(project: *const AnnotateProject, out: *mut AnnotateBuffer) -> AnnotateStatus {
    guard(|| {
        check_out(out)?;
        let bytes = serialization::save_project(project_ref(project)?)?;
        put(out, into_buffer(bytes))
    })
}

/// # Safety
/// `project` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_export_csv(
    project: *const AnnotateProject,
    out: *mut AnnotateBuffer,
) -> AnnotateStatus {
    guard(|| {
        check_out(out)?;
        let bytes = serialization::export_csv(project_ref(project)?)?;
        put(out, into_buffer(bytes))
    })
}

/// Number of violations, and optionally their text, one per line.
///
/// # Safety
/// `project` must be a live handle; `count` must be writable; `text` may be
/// NULL.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_validate(
    project: *const AnnotateProject,
    count: *mut usize,
    text: *mut AnnotateBuffer,
) -> AnnotateStatus {
    guard(|| {
        check_out(count)?;
        let found = project_ref(project)?.validate();
        put(count, found.len())?;
        if !text.is_null() {
            text.write(into_buffer(violation_text(&found).into_bytes()));
        }
        Ok(())
    })
}

/// # Safety
/// `project` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_revision(project: *const AnnotateProject) -> u64 {
    project.as_ref().map_or(0, |h| h.inner.revision())
}

/// # Safety
/// `project` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_entry_count(project: *const AnnotateProject) -> usize {
    project.as_ref().map_or(0, |h| h.inner.metadata().len())
}

/// Adds an attribute from a JSON spec such as
/// `{"name":"species","anchor":"spatial_region","input":"dropdown","options":{"1":"cat"}}`
/// and returns its new id.
///
/// # Safety
/// `project` must be a live handle; `spec_json` a NUL-terminated string;
/// `out_aid` writable. The returned id is freed with `annotate_string_free`.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_add_attribute(
    project: *mut AnnotateProject,
    spec_json: *const c_char,
    out_aid: *mut *mut c_char,
) -> AnnotateStatus {
    guard(|| {
        check_out(out_aid)?;
        let p = project_mut(project)?;
        let spec: AttributeSpec = json_arg(str_arg(spec_json, "spec")?, "attribute spec")?;
        let aid = p.add_attribute(spec)?;
        put(out_aid, into_c_string(aid.to_string())?)
    })
}

/// Adds a file from a JSON spec such as
/// `{"uri":"a.mp4","media":"video","dims":[1280,720],"duration":60}`.
///
/// # Safety
/// As for `annotate_project_add_attribute`.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_add_file(
    project: *mut AnnotateProject,
    spec_json: *const c_char,
    out_fid: *mut *mut c_char,
) -> AnnotateStatus {
    guard(|| {
        check_out(out_fid)?;
        let p = project_mut(project)?;
        let spec: FileSpec = json_arg(str_arg(spec_json, "spec")?, "file spec")?;
        let fid = p.add_file_with(spec)?;
        put(out_fid, into_c_string(fid.to_string())?)
    })
}

/// Inserts (`mid` NULL) or replaces (`mid` set) a metadata entry given as
/// JSON `{"file_id":"f2","z":[1.5,3],"xy":{...},"av":{"a1":"x"}}`.
///
/// # Safety
/// `project` must be a live handle; `mid` NULL or a NUL-terminated string;
/// `draft_json` a NUL-terminated string; `out_mid` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_upsert(
    project: *mut AnnotateProject,
    mid: *const c_char,
    draft_json: *const c_char,
    out_mid: *mut *mut c_char,
) -> AnnotateStatus {
    guard(|| {
        let p = project_mut(project)?;
        let mid = if mid.is_null() {
            None
        } else {
            Some(MetadataId::new(str_arg(mid, "mid")?))
        };
        let draft: EntryDraft = json_arg(str_arg(draft_json, "draft")?, "entry")?;
        let id = p.upsert_metadata(mid.as_ref(), draft)?;
        if !out_mid.is_null() {
            out_mid.write(into_c_string(id.to_string())?);
        }
        Ok(())
    })
}

/// # Safety
/// `project` must be a live handle; `mid` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn annotate_project_delete(project: *mut AnnotateProject, mid: *const c_char) -> AnnotateStatus {
    guard(|| {
        let p = project_mut(project)?;
        let mid = MetadataId::new(str_arg(mid, "mid")?);
        p.delete_metadata(&mid)?;
        Ok(())
    })
}

/// Whether `(x, y)` lies inside `shape_json` or within `tolerance` of its
/// outline.
///
/// # Safety
/// `shape_json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn annotate_shape_hit_test(
    shape_json: *const c_char,
    x: f64,
    y: f64,
    tolerance: f64,
    out: *mut bool,
) -> AnnotateStatus {
    guard(|| {
        check_out(out)?;
        if tolerance.is_nan() || tolerance < 0.0 || !x.is_finite() || !y.is_finite() {
            return Err(fail(AnnotateStatus::InvalidArgument, "point must be finite and tolerance non-negative"));
        }
        let shape = shape_arg(str_arg(shape_json, "shape")?)?;
        put(out, shape.hit_test(Point::new(x, y), tolerance))
    })
}

/// # Safety
/// `shape_json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn annotate_shape_area(shape_json: *const c_char, out: *mut f64) -> AnnotateStatus {
    guard(|| {
        check_out(out)?;
        let shape = shape_arg(str_arg(shape_json, "shape")?)?;
        put(out, shape.area())
    })
}

/// Rounds `t` to the nearest multiple of `grid` seconds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn annotate_snap(t: f64, grid: f64, out: *mut f64) -> AnnotateStatus {
    guard(|| {
        check_out(out)?;
        if grid.is_nan() || grid <= 0.0 || !grid.is_finite() || !t.is_finite() {
            return Err(fail(AnnotateStatus::InvalidArgument, "grid must be positive and t finite"));
        }
        put(out, timeline::snap(t, grid))
    })
}

/// # Safety
/// `buf` must have come from this library and not been freed.
#[no_mangle]
pub unsafe extern "C" fn annotate_buffer_free(buf: AnnotateBuffer) {
    if !buf.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn annotate_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
