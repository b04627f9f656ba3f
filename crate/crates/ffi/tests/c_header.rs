//! Compiles and runs a small C program against the generated header and
//! the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "fruitfield.h"

int main(void) {
    FfConfig *cfg = NULL;
    if (ff_config_default(&cfg) != FF_STATUS_OK) return 10;
    if (ff_config_set(cfg, "count.dbscan.eps=0") != FF_STATUS_OK) return 11;
    if (ff_config_validate(cfg) != FF_STATUS_INVALID_CONFIG) return 12;
    if (strstr(ff_last_error(), "count.dbscan.eps") == NULL) return 13;
    ff_config_free(cfg);

    double pred[3] = {0.0, 0.0, 0.0};
    double gt[6] = {0.01, 0.0, 0.0, 1.0, 1.0, 1.0};
    FfMetrics m;
    if (ff_match_centers(pred, 1, gt, 2, 0.04, 0, &m) != FF_STATUS_OK) return 14;
    if (m.true_positives != 1 || m.false_negatives != 1) return 15;
    printf("f1=%.4f version=%s\n", m.f1, ff_version());
    return 0;
}
"#;

/// `<target>/<profile>`; test binaries live in its `deps` directory.
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = profile_dir().join("libfruitfield_ffi.a");
    assert!(lib.is_file(), "static library not built at {}", lib.display());
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = work.path().join("main");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("a C compiler named cc");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("f1=0.6667 version="), "{text}");
}
