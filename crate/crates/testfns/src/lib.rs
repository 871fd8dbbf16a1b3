//! Locates the bundled test functions.
//!
//! `echo` copies stdin to stdout, `exit-7` exits with status 7,
//! `sleep-forever` never returns, and `sleep` reads a millisecond count from
//! stdin, sleeps that long and prints `slept <ms>`.

use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;

pub const FUNCTIONS: [&str; 4] = ["echo", "exit-7", "sleep-forever", "sleep"];

/// Target directory holding the binaries of the running test executable.
fn bin_dir() -> PathBuf {
    let exe = std::env::current_exe().expect("current executable path");
    let dir = exe.parent().expect("executable has a parent directory");
    // integration and unit test binaries live in <target>/<profile>/deps
    if dir.ends_with("deps") {
        dir.parent().expect("deps has a parent").to_owned()
    } else {
        dir.to_owned()
    }
}

fn build_once() {
    static BUILT: OnceLock<()> = OnceLock::new();
    BUILT.get_or_init(|| {
        if FUNCTIONS.iter().all(|f| bin_dir().join(f).exists()) {
            return;
        }
        let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
        let status = Command::new(cargo)
            .args(["build", "-p", "coldfaas-testfns", "--bins"])
            .status()
            .expect("running cargo build for the test functions");
        assert!(status.success(), "building the test functions failed");
    });
}

/// Path of the bundled function `name`, building it first if needed.
pub fn path(name: &str) -> PathBuf {
    assert!(FUNCTIONS.contains(&name), "unknown test function {name:?}");
    build_once();
    let path = bin_dir().join(name);
    assert!(path.exists(), "{} is missing", path.display());
    path
}

/// Contents of the bundled function `name`, for deploying it.
pub fn image(name: &str) -> Vec<u8> {
    std::fs::read(path(name)).expect("reading test function")
}
