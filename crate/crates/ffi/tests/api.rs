use std::ffi::{CStr, CString};
use std::ptr;

use memproc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(memproc_last_error())
            .to_string_lossy()
            .into_owned()
    }
}

unsafe fn devices(names: &[&str]) -> *mut MemprocDeviceSet {
    let owned: Vec<CString> = names.iter().map(|n| c(n)).collect();
    let ptrs: Vec<_> = owned.iter().map(|n| n.as_ptr()).collect();
    let mut set = ptr::null_mut();
    let link = c("pcie3-p2p");
    let st = memproc_devices_new(
        ptrs.as_ptr(),
        ptrs.len(),
        link.as_ptr(),
        ptr::null(),
        &mut set,
    );
    assert_eq!(st, MemprocStatus::Ok, "{}", last_error());
    set
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_owned();
    memproc_string_free(s);
    out
}

#[test]
fn hybrid_plan_round_trip() {
    unsafe {
        let set = devices(&["mi210", "u55c"]);
        let mut w = ptr::null_mut();
        assert_eq!(
            memproc_workload_defaults(c("dsa").as_ptr(), &mut w),
            MemprocStatus::Ok
        );
        assert_eq!(
            memproc_workload_set(w, c("seq_len").as_ptr(), c("262144").as_ptr()),
            MemprocStatus::Ok
        );
        let mut plan = ptr::null_mut();
        assert_eq!(
            memproc_plan_select(w, set, &mut plan),
            MemprocStatus::Ok,
            "{}",
            last_error()
        );
        let mut devs = Vec::new();
        for s in 0..4 {
            let mut name = ptr::null_mut();
            assert_eq!(memproc_plan_device(plan, s, &mut name), MemprocStatus::Ok);
            devs.push(take(name));
        }
        assert_eq!(devs, ["mi210", "u55c", "u55c", "mi210"]);
        let (mut lat, mut e, mut f) = (0.0, 0.0, 0.0);
        assert_eq!(
            memproc_plan_metrics(plan, &mut lat, &mut e, &mut f),
            MemprocStatus::Ok
        );
        assert!(lat > 0.0 && e > 0.0 && f > 0.0 && f < 1.0);
        let mut rec = ptr::null_mut();
        assert_eq!(memproc_plan_record(plan, &mut rec), MemprocStatus::Ok);
        let rec = take(rec);
        assert!(rec.starts_with("memproc-plan v1\n"));
        let (m, d) = memproc::scheduler::parse_record(&rec).unwrap();
        assert_eq!(m.name(), "DeepSeekAttention");
        assert_eq!(d.to_vec(), devs);
        memproc_plan_free(plan);
        memproc_workload_free(w);
        memproc_devices_free(set);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let names = [c("h100")];
        let ptrs = [names[0].as_ptr()];
        let mut set = ptr::null_mut();
        let st = memproc_devices_new(
            ptrs.as_ptr(),
            1,
            c("pcie3-p2p").as_ptr(),
            ptr::null(),
            &mut set,
        );
        assert_eq!(st, MemprocStatus::UnknownProfile);
        assert!(last_error().contains("h100"));
        assert!(set.is_null());

        let mut w = ptr::null_mut();
        assert_eq!(
            memproc_workload_defaults(c("nope").as_ptr(), &mut w),
            MemprocStatus::UnknownMethod
        );
        assert_eq!(
            memproc_workload_defaults(ptr::null(), &mut w),
            MemprocStatus::NullArgument
        );

        assert_eq!(
            memproc_workload_defaults(c("MemAgent").as_ptr(), &mut w),
            MemprocStatus::Ok
        );
        assert_eq!(
            memproc_workload_set(w, c("bogus").as_ptr(), c("1").as_ptr()),
            MemprocStatus::Parse
        );
        assert_eq!(
            memproc_workload_set(w, c("seq_len").as_ptr(), c("0").as_ptr()),
            MemprocStatus::InvalidArgument
        );
        let (mut f, mut b) = (0.0, 0.0);
        assert_eq!(
            memproc_step_work(w, 1, &mut f, &mut b),
            MemprocStatus::NotApplicable
        );
        assert_eq!(
            memproc_step_work(w, 9, &mut f, &mut b),
            MemprocStatus::InvalidArgument
        );
        assert_eq!(memproc_step_work(w, 2, &mut f, &mut b), MemprocStatus::Ok);
        assert_eq!(f, 0.0);
        memproc_workload_free(w);
    }
}

#[test]
fn topk_matches_sort() {
    let scores = [0.5f32, 2.0, 2.0, -1.0, 3.0];
    let mut ids = [0usize; 3];
    let mut n = 0;
    let st = unsafe { memproc_topk(scores.as_ptr(), scores.len(), 3, ids.as_mut_ptr(), &mut n) };
    assert_eq!(st, MemprocStatus::Ok);
    assert_eq!(&ids[..n], &[4, 1, 2]);
    let st = unsafe { memproc_topk(ptr::null(), 0, 3, ptr::null_mut(), &mut n) };
    assert_eq!(st, MemprocStatus::Ok);
    assert_eq!(n, 0);
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(memproc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn free_accepts_null() {
    unsafe {
        memproc_string_free(ptr::null_mut());
        memproc_plan_free(ptr::null_mut());
        memproc_workload_free(ptr::null_mut());
        memproc_devices_free(ptr::null_mut());
    }
}
