use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus").join(file)
}

fn csp2c(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csp2c"))
        .args(args)
        .env_remove("CSP2C_CC")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn parse_prints_summary() {
    let o = csp2c(&["parse", path(&corpus("ternary_conflicts.xml"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("6 vars, 1 group, 2 constraints"));
}

#[test]
fn parse_errors_exit_2_and_name_the_element() {
    let o = csp2c(&["parse", path(&corpus("bad_unsupported_sum.xml"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sum"), "{}", stderr(&o));
    assert_eq!(code(&csp2c(&["parse", path(&corpus("bad_empty_file.xml"))])), 2);
    assert_eq!(code(&csp2c(&["parse", "/no/such/file.xml"])), 2);
}

#[test]
fn machine_parse_is_one_json_line() {
    let o = csp2c(&["--machine", "parse", path(&corpus("dist_alldiff.xml"))]);
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 1);
    let v: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(v["variables"], 5);
    assert_eq!(v["family"], "intensional");
}

#[test]
fn gen_all_writes_twelve_programs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = csp2c(&[
        "gen",
        path(&corpus("ternary_conflicts.xml")),
        "--versions",
        "all",
        "--family",
        "extensional",
        "-o",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c_files = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "c"))
        .count();
    assert_eq!(c_files, 12);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 13);
}

#[test]
fn gen_single_version_and_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let file = corpus("ternary_conflicts.xml");
    let o = csp2c(&["gen", path(&file), "--versions", "5", "-o", path(dir.path())]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("ternary_conflicts__extensional5__klee.c").exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);

    let o = csp2c(&["gen", path(&file), "--versions", "13", "-o", path(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("13"));
    let o = csp2c(&["gen", path(&corpus("dist_alldiff.xml")), "--versions", "11", "-o", path(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_rejects_wrong_family() {
    let dir = tempfile::tempdir().unwrap();
    let o = csp2c(&[
        "gen",
        path(&corpus("ternary_conflicts.xml")),
        "--family",
        "intensional",
        "-o",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = csp2c(&["gen", path(&corpus("haystacks_small.xml")), "--dialect", "llbmc", "-o", path(d.path())]);
        assert_eq!(code(&o), 0);
    }
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn solve_exit_codes() {
    let o = csp2c(&["solve", path(&corpus("ternary_conflicts.xml"))]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("SATISFIABLE\nx0="));
    assert_eq!(code(&csp2c(&["solve", path(&corpus("pigeonhole_3_2.xml"))])), 1);
    assert_eq!(code(&csp2c(&["solve", path(&corpus("pigeonhole_3_2.xml")), "--limit", "1"])), 3);
}

#[test]
fn verify_passes_and_reports_compiler_failure() {
    let file = corpus("dist_alldiff.xml");
    let o = csp2c(&["--machine", "verify", path(&file), "--versions", "1,2,9"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["status"], "pass");
    assert_eq!(v["assignments_checked"], 1024);

    let o = csp2c(&["verify", path(&file), "--versions", "1", "--cc", "false {src} {out}"]);
    assert_eq!(code(&o), 4);

    // the environment variable supplies the default template
    let o = Command::new(env!("CARGO_BIN_EXE_csp2c"))
        .args(["verify", path(&file), "--versions", "1"])
        .env("CSP2C_CC", "exit 1 {src} {out}")
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn verify_large_space_is_inconclusive() {
    let o = csp2c(&["verify", path(&corpus("dist_alldiff.xml")), "--versions", "3", "--bound", "10", "--samples", "20"]);
    assert_eq!(code(&o), 3, "{}", stdout(&o));
}

#[test]
fn bench_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let tools = dir.path().join("tools.toml");
    std::fs::write(
        &tools,
        r#"
[[tool]]
name = "grep"
kind = "analysis"
run = "grep -q 'assert(0)' {src} && echo REACHED"
timeout_seconds = 5
success_pattern = "REACHED"

[[tool]]
name = "oracle"
kind = "baseline"
run = "true"
timeout_seconds = 5
success_pattern = "never"
"#,
    )
    .unwrap();
    let instances = dir.path().join("instances.toml");
    std::fs::write(
        &instances,
        format!("[[instance]]\nid = \"ternary\"\npath = \"{}\"\n", path(&corpus("ternary_conflicts.xml"))),
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = csp2c(&[
        "bench",
        path(&tools),
        path(&instances),
        path(&out),
        "--versions",
        "E1,E5,E8",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("4 runs: 3 reached"), "{}", stdout(&o));
    let raw = std::fs::read_to_string(out.join("raw.csv")).unwrap();
    assert!(raw.starts_with("tool,instance,version,outcome,wallclock_s,normalized\n"));

    let again = dir.path().join("again");
    let o = csp2c(&["--machine", "report", path(&out.join("raw.csv")), path(&again), "--instances", path(&instances)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    for line in stdout(&o).lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert_eq!(
        std::fs::read_to_string(out.join("robustness.csv")).unwrap(),
        std::fs::read_to_string(again.join("robustness.csv")).unwrap()
    );

    let o = csp2c(&["bench", path(&tools), path(&instances), path(&out), "--workers", "2"]);
    assert_eq!(code(&o), 2);
    let o = csp2c(&["bench", path(&tools), path(&instances), path(&out), "--versions", "E99"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn conflicting_or_missing_arguments_are_usage_errors() {
    assert_eq!(code(&csp2c(&[])), 2);
    assert_eq!(code(&csp2c(&["solve"])), 2);
    assert_eq!(code(&csp2c(&["gen", "x.xml", "--dialect", "cbmc"])), 2);
}
