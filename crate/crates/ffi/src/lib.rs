//! C ABI over the memproc cost model, planner and selection kernels.
//!
//! Every fallible call returns a [`MemprocStatus`]. On failure the message is
//! kept per thread and read with [`memproc_last_error`]. Handles are opaque and
//! must be released with their `_free` function. Strings returned through an
//! out-pointer are owned by the caller and released with
//! [`memproc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use memproc::config::apply_override;
use memproc::device::{load_device, load_link};
use memproc::kernels::streaming_topk;
use memproc::pipeline::Step;
use memproc::scheduler::{select_plan, DeviceSet, PlacementPlan, SchedulerPolicy};
use memproc::workloads::{rest_of_llm_work, step_work, WorkloadConfig};
use memproc::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemprocStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    UnknownProfile = 4,
    UnknownMethod = 5,
    InvalidArgument = 6,
    NotApplicable = 7,
    Infeasible = 8,
    Io = 9,
    Internal = 10,
}

/// Named devices plus the link between them.
pub struct MemprocDeviceSet(DeviceSet);

/// A workload configuration for one method.
pub struct MemprocWorkload(WorkloadConfig);

/// A selected placement.
pub struct MemprocPlan(PlacementPlan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MemprocStatus {
    match e {
        Error::Parse(_) => MemprocStatus::Parse,
        Error::UnknownProfile(_) | Error::InvalidProfile { .. } => MemprocStatus::UnknownProfile,
        Error::UnknownMethod(_) => MemprocStatus::UnknownMethod,
        Error::StepNotApplicable { .. } | Error::ClassificationOnly(_) => {
            MemprocStatus::NotApplicable
        }
        Error::NoFeasiblePlan(_) | Error::CapacityExceeded { .. } => MemprocStatus::Infeasible,
        Error::Io { .. } => MemprocStatus::Io,
        _ => MemprocStatus::InvalidArgument,
    }
}

struct Fail(MemprocStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Fail>;

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> MemprocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MemprocStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MemprocStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MemprocStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MemprocStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

fn owned_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(MemprocStatus::Internal, "string holds a nul byte".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn memproc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn memproc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn memproc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads device and link profiles by name. `profile_dir` may be null to use
/// the shipped profiles only.
///
/// # Safety
/// `names` points to `n_names` valid C strings; `link` is a valid C string.
#[no_mangle]
pub unsafe extern "C" fn memproc_devices_new(
    names: *const *const c_char,
    n_names: usize,
    link: *const c_char,
    profile_dir: *const c_char,
    out: *mut *mut MemprocDeviceSet,
) -> MemprocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if names.is_null() {
            return Err(null("names"));
        }
        let dir = if profile_dir.is_null() {
            None
        } else {
            Some(std::path::PathBuf::from(str_arg(
                profile_dir,
                "profile_dir",
            )?))
        };
        let mut devices = Vec::with_capacity(n_names);
        for i in 0..n_names {
            let name = str_arg(*names.add(i), "names[i]")?;
            devices.push(load_device(name, dir.as_deref())?);
        }
        let link = load_link(str_arg(link, "link")?, dir.as_deref())?;
        *out = Box::into_raw(Box::new(MemprocDeviceSet(DeviceSet::new(devices, link)?)));
        Ok(())
    })
}

/// # Safety
/// `set` is null or a handle from [`memproc_devices_new`].
#[no_mangle]
pub unsafe extern "C" fn memproc_devices_free(set: *mut MemprocDeviceSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Default workload for a method, by canonical name or fixture slug.
///
/// # Safety
/// `method` is a valid C string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn memproc_workload_defaults(
    method: *const c_char,
    out: *mut *mut MemprocWorkload,
) -> MemprocStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kind = str_arg(method, "method")?.parse()?;
        *out = Box::into_raw(Box::new(MemprocWorkload(WorkloadConfig::defaults(kind)?)));
        Ok(())
    })
}

/// Sets one workload field. `value` is a TOML literal, e.g. `"262144"`.
///
/// # Safety
/// `w` is a live workload handle; `key` and `value` are valid C strings.
#[no_mangle]
pub unsafe extern "C" fn memproc_workload_set(
    w: *mut MemprocWorkload,
    key: *const c_char,
    value: *const c_char,
) -> MemprocStatus {
    guard(|| {
        let w = out_arg(w, "workload")?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        let mut doc = toml::Table::new();
        apply_override(&mut doc, &format!("workload.{key}={value}"))?;
        let table = doc["workload"]
            .as_table()
            .expect("override creates the section");
        let (cfg, _) = w.0.with_overrides(table)?;
        w.0 = cfg;
        Ok(())
    })
}

/// # Safety
/// `w` is null or a handle from [`memproc_workload_defaults`].
#[no_mangle]
pub unsafe extern "C" fn memproc_workload_free(w: *mut MemprocWorkload) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Flops and bytes of one node: 0..=3 for the pipeline steps in order,
/// 4 for the rest of the model.
///
/// # Safety
/// `w` is a live workload handle; `flops` and `bytes` are writable.
#[no_mangle]
pub unsafe extern "C" fn memproc_step_work(
    w: *const MemprocWorkload,
    node: u32,
    flops: *mut f64,
    bytes: *mut f64,
) -> MemprocStatus {
    guard(|| {
        let w = ref_arg(w, "workload")?;
        let (flops, bytes) = (out_arg(flops, "flops")?, out_arg(bytes, "bytes")?);
        let work = match node {
            0..=3 => step_work(&w.0, Step::ALL[node as usize])?,
            4 => rest_of_llm_work(&w.0),
            _ => {
                return Err(Fail(
                    MemprocStatus::InvalidArgument,
                    format!("node {node} is out of range 0..=4"),
                ))
            }
        };
        *flops = work.flops;
        *bytes = work.bytes_moved;
        Ok(())
    })
}

/// Selects a placement with the default scheduler policy.
///
/// # Safety
/// `w` and `set` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn memproc_plan_select(
    w: *const MemprocWorkload,
    set: *const MemprocDeviceSet,
    out: *mut *mut MemprocPlan,
) -> MemprocStatus {
    guard(|| {
        let w = ref_arg(w, "workload")?;
        let set = ref_arg(set, "devices")?;
        let out = out_arg(out, "out")?;
        let plan = select_plan(&w.0, &set.0, &SchedulerPolicy::default())?;
        *out = Box::into_raw(Box::new(MemprocPlan(plan)));
        Ok(())
    })
}

/// Predicted latency in seconds, energy in joules (NaN when a device has no
/// power figure) and memory-processing share of decoding time.
///
/// # Safety
/// `plan` is a live handle; the out-pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn memproc_plan_metrics(
    plan: *const MemprocPlan,
    latency_s: *mut f64,
    energy_j: *mut f64,
    fraction: *mut f64,
) -> MemprocStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.0;
        *out_arg(latency_s, "latency_s")? = p.predicted_latency_s;
        *out_arg(energy_j, "energy_j")? = p.predicted_energy_j.unwrap_or(f64::NAN);
        *out_arg(fraction, "fraction")? = p.memory_processing_fraction()?;
        Ok(())
    })
}

/// Device name for step 0..=3, returned as an owned string.
///
/// # Safety
/// `plan` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn memproc_plan_device(
    plan: *const MemprocPlan,
    step: u32,
    out: *mut *mut c_char,
) -> MemprocStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.0;
        let out = out_arg(out, "out")?;
        let step = Step::ALL.get(step as usize).ok_or_else(|| {
            Fail(
                MemprocStatus::InvalidArgument,
                format!("step {step} is out of range 0..=3"),
            )
        })?;
        *out = owned_string(p.device_of(*step).to_owned())?;
        Ok(())
    })
}

/// The versioned plain-text plan record, as an owned string.
///
/// # Safety
/// `plan` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn memproc_plan_record(
    plan: *const MemprocPlan,
    out: *mut *mut c_char,
) -> MemprocStatus {
    guard(|| {
        let p = &ref_arg(plan, "plan")?.0;
        *out_arg(out, "out")? = owned_string(p.to_record())?;
        Ok(())
    })
}

/// # Safety
/// `plan` is null or a handle from [`memproc_plan_select`].
#[no_mangle]
pub unsafe extern "C" fn memproc_plan_free(plan: *mut MemprocPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Ids of the `k` highest scores, best first, ties to the smaller id.
/// `out_ids` must hold `min(k, n)` entries; the count is written to `out_len`.
///
/// # Safety
/// `scores` holds `n` floats (may be null when `n` is 0); `out_ids` holds
/// `min(k, n)` entries; `out_len` is writable.
#[no_mangle]
pub unsafe extern "C" fn memproc_topk(
    scores: *const f32,
    n: usize,
    k: usize,
    out_ids: *mut usize,
    out_len: *mut usize,
) -> MemprocStatus {
    guard(|| {
        let out_len = out_arg(out_len, "out_len")?;
        let scores: &[f32] = if n == 0 {
            &[]
        } else if scores.is_null() {
            return Err(null("scores"));
        } else {
            std::slice::from_raw_parts(scores, n)
        };
        let picked = streaming_topk(scores.iter().copied().enumerate(), k).ids;
        if !picked.is_empty() && out_ids.is_null() {
            return Err(null("out_ids"));
        }
        for (i, id) in picked.iter().enumerate() {
            *out_ids.add(i) = *id;
        }
        *out_len = picked.len();
        Ok(())
    })
}
