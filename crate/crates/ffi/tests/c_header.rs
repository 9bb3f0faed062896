//! Builds a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

/// `target/<profile>`, where cargo leaves `libtmnre_ffi.a`.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_as_c_and_cpp() {
    for (compiler, flags) in [("cc", vec!["-std=c99", "-x", "c"]), ("c++", vec!["-x", "c++"])] {
        let status = Command::new(compiler)
            .args(&flags)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(header_dir())
            .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tmnre.h"))
            .status()
            .expect("compiler available");
        assert!(status.success(), "{compiler} rejected the header");
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = lib_dir().join("libtmnre_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let out = Command::new("cc")
        .arg("-std=c99")
        .arg("-I")
        .arg(header_dir())
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("dim=2"), "{stdout}");
}
