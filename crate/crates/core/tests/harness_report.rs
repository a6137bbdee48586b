use std::collections::BTreeMap;
use std::path::Path;

use csp2c_core::harness::{
    self, read_records, robustness_svg, summarize, write_report, HarnessError, RobustnessRow,
    RAW_COLUMNS, ROBUSTNESS_COLUMNS, SCALABILITY_COLUMNS,
};
use csp2c_core::{Outcome, RunRecord, ToolKind};

fn record(tool: &str, kind: ToolKind, instance: &str, version: &str, outcome: Outcome, t: f64) -> RunRecord {
    RunRecord {
        tool: tool.into(),
        kind,
        instance: instance.into(),
        version: version.into(),
        outcome,
        wallclock_s: t,
        normalized: None,
        exit_code: Some(0),
        parallel: false,
    }
}

fn sample() -> Vec<RunRecord> {
    use Outcome::*;
    use ToolKind::*;
    harness::normalize(&[
        record("solver", Baseline, "a", "baseline", Reached, 2.0),
        record("solver", Baseline, "b", "baseline", NotReached, 4.0),
        record("klee", Analysis, "a", "E1", Reached, 4.0),
        record("klee", Analysis, "b", "E1", NotReached, 4.0),
        record("klee", Analysis, "a", "E2", Timeout, 1000.0),
        record("klee", Analysis, "b", "E2", NotReached, 2.0),
        record("cbmc", Analysis, "a", "E1", ToolError, 0.0),
        record("cbmc", Analysis, "b", "E1", Reached, 8.0),
    ])
}

fn bar_heights(svg: &str) -> Vec<f64> {
    let re = regex::Regex::new(r#"<rect x="[^"]*" y="[^"]*" width="12" height="([0-9.]+)" fill="[^"]*"><title>"#).unwrap();
    re.captures_iter(svg).map(|c| c[1].parse().unwrap()).collect()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_string).collect()
}

#[test]
fn robustness_means_skip_timeouts_and_errors() {
    let report = summarize(&sample(), &BTreeMap::new());
    let row = |tool: &str, v: &str| report.robustness.iter().find(|r| r.tool == tool && r.version == v).unwrap();
    // E1: (4/2 + 4/4) / 2
    assert_eq!(row("klee", "E1").mean, Some(1.5));
    assert_eq!(row("klee", "E2").mean, Some(0.5));
    assert_eq!(row("klee", "E2").timeouts, 1);
    assert_eq!(row("cbmc", "E1").tool_errors, 1);
    assert_eq!(row("cbmc", "E1").mean, Some(2.0));
    assert!(!report.no_analysis_tools && !report.raw_seconds);
}

#[test]
fn bars_are_linear_in_the_mean() {
    let rows: Vec<RobustnessRow> = [("E1", 2.0), ("E2", 0.5)]
        .into_iter()
        .map(|(v, m)| RobustnessRow {
            tool: "t".into(),
            version: v.into(),
            mean: Some(m),
            normalized: true,
            completed: 1,
            timeouts: 0,
            tool_errors: 0,
        })
        .collect();
    let h = bar_heights(&robustness_svg(&rows));
    assert_eq!(h.len(), 2);
    assert!((h[0] / h[1] - 4.0).abs() < 0.01, "{h:?}");
}

#[test]
fn report_files_use_the_published_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_report(&sample(), &BTreeMap::new(), dir.path()).unwrap();
    assert!(files.warnings.is_empty(), "{:?}", files.warnings);
    assert_eq!(header(&dir.path().join("raw.csv")), RAW_COLUMNS);
    assert_eq!(header(&dir.path().join("robustness.csv")), ROBUSTNESS_COLUMNS);
    assert_eq!(header(&dir.path().join("scalability.csv")), SCALABILITY_COLUMNS);
    for name in ["robustness.svg", "scalability.svg", "summary.json", "records.jsonl"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["no_analysis_tools"], false);
}

#[test]
fn records_round_trip_through_csv_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let records = sample();
    write_report(&records, &BTreeMap::new(), dir.path()).unwrap();
    let from_jsonl = read_records(&dir.path().join("records.jsonl")).unwrap();
    assert_eq!(from_jsonl, records);
    let from_csv = read_records(&dir.path().join("raw.csv")).unwrap();
    assert_eq!(from_csv.len(), records.len());
    for (a, b) in from_csv.iter().zip(&records) {
        assert_eq!((&a.tool, a.kind, &a.instance, &a.version, a.outcome), (&b.tool, b.kind, &b.instance, &b.version, b.outcome));
        assert_eq!(a.normalized, b.normalized);
    }
}

#[test]
fn baseline_only_records_are_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let only: Vec<RunRecord> = sample().into_iter().filter(|r| r.kind == ToolKind::Baseline).collect();
    let files = write_report(&only, &BTreeMap::new(), dir.path()).unwrap();
    assert!(summarize(&only, &BTreeMap::new()).no_analysis_tools);
    assert!(files.warnings.iter().any(|w| w.contains("no analysis tools")));
    assert!(files.warnings.iter().any(|w| w.contains("scalability")));
    assert!(!dir.path().join("scalability.svg").exists());
}

#[test]
fn scalability_orders_by_size() {
    let sizes = BTreeMap::from([("a".to_string(), 10.0), ("b".to_string(), 3.0)]);
    let report = summarize(&sample(), &sizes);
    let klee: Vec<_> = report.scalability.iter().filter(|r| r.tool == "klee").collect();
    assert_eq!(klee[0].instance, "b");
    assert_eq!(klee[1].instance, "a");
    assert_eq!((klee[0].timeouts, klee[1].timeouts), (0, 1));
}

#[test]
fn manifests_reject_bad_input() {
    let p = Path::new("tools.toml");
    let missing_run = "[[tool]]\nname = \"x\"\nkind = \"analysis\"\nsuccess_pattern = \"ok\"\n";
    assert!(matches!(harness::parse_tools(missing_run, p), Err(HarnessError::Manifest { .. })));
    let bad_regex = "[[tool]]\nname = \"x\"\nkind = \"analysis\"\nrun = \"true\"\nsuccess_pattern = \"(\"\n";
    assert!(harness::parse_tools(bad_regex, p).is_err());
    let unknown = "[[tool]]\nname = \"x\"\nkind = \"analysis\"\nrun = \"true\"\nsuccess_pattern = \"ok\"\ncolour = 1\n";
    assert!(harness::parse_tools(unknown, p).is_err());
    let ok = "[[tool]]\nname = \"x\"\nkind = \"baseline\"\nrun = \"true\"\nsuccess_pattern = \"ok\"\n";
    let tools = harness::parse_tools(ok, p).unwrap();
    assert_eq!(tools[0].kind, ToolKind::Baseline);
    assert_eq!(tools[0].timeout_seconds(), harness::DEFAULT_TIMEOUT_SECONDS);
}
