//! Drives the installed binary end to end: example generation, runs over
//! every verb, artifact determinism, and exit codes for bad input.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gradsoc"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn gradsoc");
    assert!(
        out.status.success(),
        "gradsoc {args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn example_solve_design_and_determinism() {
    let tmp = std::env::temp_dir().join(format!("gradsoc-cli-{}", std::process::id()));
    let tmp = tmp.to_str().unwrap();
    let text = run_ok(&["example", "four_tank", "--out", tmp]);
    assert!(text.contains("four_tank.json"));
    let scenario = format!("{tmp}/four_tank.json");

    // steady solve on the base (pipe-free) topology
    let out_a = format!("{tmp}/steady");
    let text = run_ok(&["solve", &scenario, "--out", &out_a]);
    assert!(text.contains("optimal"), "{text}");

    // design run reproduces the reference table
    let out_b = format!("{tmp}/design");
    let text = run_ok(&["design", &scenario, "--out", &out_b]);
    assert!(text.contains("pipes [2->1, 2->3, 2->4, 4->3]"), "{text}");
    assert!(text.contains("objective 8.81"), "{text}");
    let design_csv = std::fs::read_to_string(Path::new(&out_b).join("design.csv")).unwrap();
    assert!(design_csv.lines().count() > 12);

    // identical bytes for the deterministic artifacts on a repeated run
    let out_c = format!("{tmp}/design2");
    run_ok(&["design", &scenario, "--out", &out_c]);
    for file in [
        "design.csv",
        "solution.csv",
        "validation.csv",
        "bnb_log.txt",
    ] {
        let a = std::fs::read(Path::new(&out_b).join(file)).unwrap();
        let b = std::fs::read(Path::new(&out_c).join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }

    // model override switches the growth law
    let out_d = format!("{tmp}/rmx");
    let text = run_ok(&["design", &scenario, "--model", "rmx", "--out", &out_d]);
    assert!(text.contains("objective 10.2"), "{text}");

    std::fs::remove_dir_all(tmp).ok();
}

#[test]
fn validate_verb_and_batch() {
    let tmp = std::env::temp_dir().join(format!("gradsoc-cli-b-{}", std::process::id()));
    let tmp = tmp.to_str().unwrap();
    run_ok(&[
        "example",
        "four_tank_modified",
        "--out",
        &format!("{tmp}/batchdir"),
    ]);
    let text = run_ok(&[
        "validate",
        &format!("{tmp}/batchdir/four_tank_modified.json"),
        "--out",
        &format!("{tmp}/val"),
    ]);
    assert!(text.contains("exactness"), "{text}");
    let text = run_ok(&[
        "batch",
        &format!("{tmp}/batchdir"),
        "--out",
        &format!("{tmp}/batch-out"),
    ]);
    assert!(text.contains("four_tank_modified"), "{text}");
    std::fs::remove_dir_all(tmp).ok();
}

#[test]
fn bad_input_exits_4() {
    let tmp = std::env::temp_dir().join(format!("gradsoc-cli-c-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let bad = tmp.join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1, \"name\": \"x\"").unwrap();
    let out = bin()
        .args(["solve", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    // parse errors carry a line anchor
    assert!(err.contains("line"), "{err}");
    let out = bin().args(["example", "nonexistent"]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    std::fs::remove_dir_all(&tmp).ok();
}
