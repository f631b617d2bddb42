//! Builds `smoke.c` against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<this test> → target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libpiste_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());

    let out = tempfile::tempdir().unwrap();
    let bin = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "cc failed");

    let run = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(run.status.success(), "smoke program failed:\n{stdout}{stderr}");
    assert!(stdout.contains("0 failure(s)"), "{stdout}");
}

#[test]
fn header_is_current() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/piste.h")).unwrap();
    for sym in [
        "piste_engine_new",
        "piste_engine_step_with_box",
        "piste_engine_free",
        "piste_estimate_homography",
        "typedef struct PisteEngine PisteEngine",
        "PISTE_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}
