//! Compiles a small C program against the header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "memproc.h"

int main(void) {
    const char *names[] = {"mi210", "u55c"};
    MemprocDeviceSet *set = NULL;
    MemprocWorkload *w = NULL;
    MemprocPlan *plan = NULL;
    char *dev = NULL;
    if (memproc_devices_new(names, 2, "pcie3-p2p", NULL, &set) != MEMPROC_STATUS_OK) return 1;
    if (memproc_workload_defaults("SingleStageRAG", &w) != MEMPROC_STATUS_OK) return 2;
    if (memproc_workload_set(w, "doc_count", "1000000") != MEMPROC_STATUS_OK) return 3;
    if (memproc_plan_select(w, set, &plan) != MEMPROC_STATUS_OK) return 4;
    if (memproc_plan_device(plan, 1, &dev) != MEMPROC_STATUS_OK) return 5;
    printf("%s\n", dev);
    memproc_string_free(dev);
    if (memproc_workload_defaults("bogus", &w) != MEMPROC_STATUS_UNKNOWN_METHOD) return 6;
    if (strstr(memproc_last_error(), "bogus") == NULL) return 7;
    memproc_plan_free(plan);
    memproc_workload_free(w);
    memproc_devices_free(set);
    return 0;
}
"#;

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test> -> target/<profile>
    let dir = std::env::current_exe()
        .ok()?
        .parent()?
        .parent()?
        .to_path_buf();
    let lib = dir.join("libmemproc_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    let exe = tmp.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I", include])
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "u55c\n");
}
