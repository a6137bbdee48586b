//! Benchmark harness for external analysis tools.
//!
//! Tools are described in a TOML manifest and invoked through `sh -c` with
//! placeholders filled in:
//!
//! | placeholder | value |
//! |---|---|
//! | `{src}` | generated C file (analysis tools) or the XCSP3 file (baselines) |
//! | `{bitcode}` | `{work}/prog.bc`, for a prepare step that emits bitcode |
//! | `{out}` | `{work}/out`, a scratch output path |
//! | `{work}` | a fresh per-run directory, also the working directory |
//! | `{timeout}` | the tool's timeout in whole seconds |
//! | `{name}` | `<instance>__<version>` |
//!
//! ```toml
//! [[tool]]
//! name = "klee"
//! kind = "analysis"
//! dialect = "klee"
//! prepare = "clang -emit-llvm -c -g -O3 -Xclang -disable-llvm-passes {src} -o {bitcode}"
//! run = "klee --exit-on-error --max-time={timeout}s --output-dir={out} {bitcode}"
//! timeout_seconds = 1000
//! success_pattern = "ASSERTION FAIL"
//! ```
//!
//! Each run is classified as reached, not reached, timeout or tool error.
//! Baseline runs (a CSP solver on the original instance) give the
//! per-instance reference time used to normalise analysis times.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{parse_label, transform, Dialect, Family, TransformSpec};
use crate::model::CspInstance;
use crate::xcsp;

/// Time between SIGTERM and SIGKILL for a run that exceeded its timeout.
pub const KILL_GRACE: Duration = Duration::from_secs(5);

pub const DEFAULT_TIMEOUT_SECONDS: f64 = 1000.0;

/// Version column value for baseline runs.
pub const BASELINE_VERSION: &str = "baseline";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("instance `{id}`: {message}")]
    Instance { id: String, message: String },
    #[error("{0} workers requested; concurrent runs distort timings and must be enabled explicitly")]
    ParallelNotAllowed(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Analysis,
    Baseline,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTool {
    name: String,
    kind: ToolKind,
    dialect: Option<String>,
    prepare: Option<String>,
    run: String,
    timeout_seconds: Option<f64>,
    success_pattern: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToolFile {
    #[serde(default)]
    tool: Vec<RawTool>,
}

#[derive(Debug, Clone)]
pub struct ToolSpec {
    pub name: String,
    pub kind: ToolKind,
    /// Dialect of the programs handed to an analysis tool.
    pub dialect: Dialect,
    pub prepare: Option<String>,
    pub run: String,
    pub timeout: Duration,
    pub success_pattern: Regex,
}

impl ToolSpec {
    pub fn timeout_seconds(&self) -> f64 {
        self.timeout.as_secs_f64()
    }
}

pub fn parse_tools(text: &str, path: &Path) -> Result<Vec<ToolSpec>, HarnessError> {
    let bad = |message: String| HarnessError::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let file: ToolFile = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
    if file.tool.is_empty() {
        return Err(bad("no [[tool]] entries".into()));
    }
    let mut seen = BTreeSet::new();
    file.tool
        .into_iter()
        .map(|t| {
            if !seen.insert(t.name.clone()) {
                return Err(bad(format!("duplicate tool name `{}`", t.name)));
            }
            if t.name.is_empty() || t.name.contains(['/', ',', '\n']) {
                return Err(bad(format!("invalid tool name `{}`", t.name)));
            }
            if t.run.trim().is_empty() {
                return Err(bad(format!("tool `{}` has an empty run command", t.name)));
            }
            let secs = t.timeout_seconds.unwrap_or(DEFAULT_TIMEOUT_SECONDS);
            if !(secs.is_finite() && secs > 0.0) {
                return Err(bad(format!("tool `{}`: timeout must be positive", t.name)));
            }
            let dialect = match &t.dialect {
                Some(d) => d
                    .parse()
                    .map_err(|e| bad(format!("tool `{}`: dialect {e}", t.name)))?,
                None => Dialect::Klee,
            };
            let success_pattern = Regex::new(&t.success_pattern)
                .map_err(|e| bad(format!("tool `{}`: bad success_pattern: {e}", t.name)))?;
            Ok(ToolSpec {
                name: t.name,
                kind: t.kind,
                dialect,
                prepare: t.prepare.filter(|p| !p.trim().is_empty()),
                run: t.run,
                timeout: Duration::from_secs_f64(secs),
                success_pattern,
            })
        })
        .collect()
}

pub fn load_tools(path: &Path) -> Result<Vec<ToolSpec>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_tools(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expected {
    Sat,
    Unsat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEntry {
    pub id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    pub family: Option<String>,
    /// Ordering key for scalability; defaults to the variable count.
    pub size: Option<u64>,
    pub expected: Option<Expected>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    #[serde(default)]
    instance: Vec<InstanceEntry>,
}

pub fn parse_instances(text: &str, path: &Path) -> Result<Vec<InstanceEntry>, HarnessError> {
    let file: InstanceFile = toml::from_str(text).map_err(|e| HarnessError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    file.instance
        .into_iter()
        .map(|mut e| {
            if !seen.insert(e.id.clone()) {
                return Err(HarnessError::Manifest {
                    path: path.to_path_buf(),
                    message: format!("duplicate instance id `{}`", e.id),
                });
            }
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            Ok(e)
        })
        .collect()
}

pub fn load_instances(path: &Path) -> Result<Vec<InstanceEntry>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_instances(&text, path)
}

/// A manifest entry with its parsed model.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub entry: InstanceEntry,
    pub csp: CspInstance,
    pub family: Family,
}

impl LoadedInstance {
    pub fn load(entry: InstanceEntry) -> Result<Self, HarnessError> {
        let fail = |message: String| HarnessError::Instance {
            id: entry.id.clone(),
            message,
        };
        let text = std::fs::read_to_string(&entry.path)
            .map_err(|e| fail(format!("{}: {e}", entry.path.display())))?;
        let csp = xcsp::parse_document_named(&text, &entry.id)
            .map_err(|f| fail(f.to_string()))?
            .instance;
        let detected =
            Family::of(&csp).ok_or_else(|| fail("mixes extensional and intensional constraints".into()))?;
        let family = match &entry.family {
            None => detected,
            Some(f) => {
                let declared: Family = f.parse().map_err(|e| fail(format!("family {e}")))?;
                if declared != detected && csp.constraint_count() > 0 {
                    return Err(fail(format!("declared {declared} but constraints are {detected}")));
                }
                declared
            }
        };
        Ok(LoadedInstance { entry, csp, family })
    }

    pub fn size(&self) -> f64 {
        self.entry
            .size
            .map_or(self.csp.variables().len() as f64, |s| s as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Reached,
    NotReached,
    Timeout,
    ToolError,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::NotReached => "not-reached",
            Outcome::Timeout => "timeout",
            Outcome::ToolError => "tool-error",
        }
    }

    /// Whether the run finished on its own and its time is meaningful.
    pub fn is_completed(self) -> bool {
        matches!(self, Outcome::Reached | Outcome::NotReached)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub kind: ToolKind,
    pub instance: String,
    /// Version label such as `E5`, or [`BASELINE_VERSION`].
    pub version: String,
    pub outcome: Outcome,
    pub wallclock_s: f64,
    /// Wallclock divided by the instance's baseline time.
    pub normalized: Option<f64>,
    pub exit_code: Option<i32>,
    /// Set when runs shared the machine with other runs.
    pub parallel: bool,
}

/// Result of one supervised process.
#[derive(Debug, Clone)]
pub struct Execution {
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub wallclock: Duration,
    pub timed_out: bool,
    pub spawn_error: Option<String>,
}

fn signal_group(pgid: i32, signal: i32) {
    // SAFETY: killpg only sends a signal; the group was created for this
    // child, and ESRCH for an already-empty group is harmless.
    unsafe {
        libc::killpg(pgid, signal);
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Runs `command` under `sh -c` in its own process group. At the deadline
/// the whole group receives SIGTERM, then SIGKILL after `grace`.
pub fn execute(command: &str, cwd: &Path, timeout: Duration, grace: Duration) -> Execution {
    let start = Instant::now();
    let spawned = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(e) => {
            return Execution {
                exit_code: None,
                signal: None,
                stdout: String::new(),
                stderr: String::new(),
                wallclock: start.elapsed(),
                timed_out: false,
                spawn_error: Some(e.to_string()),
            }
        }
    };
    let pgid = child.id() as i32;
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());

    let mut timed_out = false;
    let mut term_sent: Option<Instant> = None;
    let mut pause = Duration::from_millis(2);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {}
            Err(_) => break None,
        }
        let now = Instant::now();
        match term_sent {
            None if now.duration_since(start) >= timeout => {
                timed_out = true;
                signal_group(pgid, libc::SIGTERM);
                term_sent = Some(now);
            }
            Some(t) if now.duration_since(t) >= grace => {
                signal_group(pgid, libc::SIGKILL);
                break child.wait().ok();
            }
            _ => {}
        }
        thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(25));
    };
    let elapsed = start.elapsed();
    // stray background processes would otherwise keep the pipes open
    signal_group(pgid, libc::SIGKILL);
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Execution {
        exit_code: status.and_then(|s| s.code()),
        signal: status.and_then(|s| s.signal()),
        stdout,
        stderr,
        wallclock: if timed_out { elapsed.max(timeout) } else { elapsed },
        timed_out,
        spawn_error: None,
    }
}

/// Maps an execution to an outcome. Precedence: timeout, then tool error
/// (spawn failure, exit 126/127, death by signal), then the success
/// pattern on stdout or stderr.
pub fn classify(exec: &Execution, pattern: &Regex) -> Outcome {
    if exec.timed_out {
        Outcome::Timeout
    } else if exec.spawn_error.is_some()
        || exec.signal.is_some()
        || matches!(exec.exit_code, None | Some(126) | Some(127))
    {
        Outcome::ToolError
    } else if pattern.is_match(&exec.stdout) || pattern.is_match(&exec.stderr) {
        Outcome::Reached
    } else {
        Outcome::NotReached
    }
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

pub fn fill_template(template: &str, src: &Path, work: &Path, timeout: Duration, name: &str) -> String {
    template
        .replace("{src}", &shell_quote(src))
        .replace("{bitcode}", &shell_quote(&work.join("prog.bc")))
        .replace("{out}", &shell_quote(&work.join("out")))
        .replace("{work}", &shell_quote(work))
        .replace("{timeout}", &(timeout.as_secs_f64().ceil() as u64).to_string())
        .replace("{name}", name)
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub out_dir: PathBuf,
    /// Restricts analysis runs to these versions; all versions when empty.
    pub versions: Vec<TransformSpec>,
    pub workers: usize,
    pub allow_parallel: bool,
    pub grace: Duration,
}

impl HarnessConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        HarnessConfig {
            out_dir: out_dir.into(),
            versions: Vec::new(),
            workers: 1,
            allow_parallel: false,
            grace: KILL_GRACE,
        }
    }
}

struct Job<'a> {
    tool: &'a ToolSpec,
    instance: String,
    version: String,
    input: PathBuf,
}

fn versions_for(family: Family, dialect: Dialect, cfg: &HarnessConfig) -> Vec<TransformSpec> {
    TransformSpec::all(family, dialect)
        .into_iter()
        .filter(|s| {
            cfg.versions.is_empty()
                || cfg
                    .versions
                    .iter()
                    .any(|v| v.family == s.family && v.version() == s.version())
        })
        .collect()
}

/// Number of records [`run_matrix`] produces: one per analysis tool,
/// instance and selected version, plus one per baseline tool and instance.
pub fn expected_record_count(tools: &[ToolSpec], instances: &[LoadedInstance], cfg: &HarnessConfig) -> usize {
    tools
        .iter()
        .map(|t| match t.kind {
            ToolKind::Baseline => instances.len(),
            ToolKind::Analysis => instances
                .iter()
                .map(|i| versions_for(i.family, t.dialect, cfg).len())
                .sum(),
        })
        .sum()
}

/// Generates every program, runs every tool and returns the records in a
/// deterministic order (tool, instance, version), normalised.
pub fn run_matrix(
    tools: &[ToolSpec],
    instances: &[LoadedInstance],
    cfg: &HarnessConfig,
) -> Result<Vec<RunRecord>, HarnessError> {
    let workers = cfg.workers.max(1);
    if workers > 1 && !cfg.allow_parallel {
        return Err(HarnessError::ParallelNotAllowed(workers));
    }
    let programs = cfg.out_dir.join("programs");
    std::fs::create_dir_all(&programs).map_err(io_err(&programs))?;

    let mut jobs = Vec::new();
    for tool in tools {
        for inst in instances {
            let id = &inst.entry.id;
            match tool.kind {
                ToolKind::Baseline => jobs.push(Job {
                    tool,
                    instance: id.clone(),
                    version: BASELINE_VERSION.into(),
                    input: inst.entry.path.canonicalize().map_err(io_err(&inst.entry.path))?,
                }),
                ToolKind::Analysis => {
                    for spec in versions_for(inst.family, tool.dialect, cfg) {
                        let program = transform(&inst.csp, spec).map_err(|e| HarnessError::Instance {
                            id: id.clone(),
                            message: e.to_string(),
                        })?;
                        let path = programs.join(program.file_name(id));
                        if !path.exists() {
                            std::fs::write(&path, &program.source).map_err(io_err(&path))?;
                        }
                        jobs.push(Job {
                            tool,
                            instance: id.clone(),
                            version: program.version_label,
                            input: path.canonicalize().map_err(io_err(&path))?,
                        });
                    }
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Io {
            path: cfg.out_dir.clone(),
            source: io::Error::other(e),
        })?;
    let records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(job, cfg, workers > 1))
            .collect::<Result<_, _>>()
    })?;
    Ok(normalize(&records))
}

fn run_job(job: &Job<'_>, cfg: &HarnessConfig, parallel: bool) -> Result<RunRecord, HarnessError> {
    let name = format!("{}__{}", job.instance, job.version);
    let work = cfg.out_dir.join("work").join(&job.tool.name).join(&name);
    std::fs::create_dir_all(&work).map_err(io_err(&work))?;
    let work = work.canonicalize().map_err(io_err(&work))?;
    let tool = job.tool;
    let record = |outcome, wallclock_s, exit_code| RunRecord {
        tool: tool.name.clone(),
        kind: tool.kind,
        instance: job.instance.clone(),
        version: job.version.clone(),
        outcome,
        wallclock_s,
        normalized: None,
        exit_code,
        parallel,
    };

    if let Some(prepare) = &tool.prepare {
        let cmd = fill_template(prepare, &job.input, &work, tool.timeout, &name);
        let exec = execute(&cmd, &work, tool.timeout, cfg.grace);
        write_logs(&work, "prepare", &exec)?;
        if exec.timed_out || exec.exit_code != Some(0) {
            return Ok(record(Outcome::ToolError, 0.0, exec.exit_code));
        }
    }
    let cmd = fill_template(&tool.run, &job.input, &work, tool.timeout, &name);
    let exec = execute(&cmd, &work, tool.timeout, cfg.grace);
    write_logs(&work, "run", &exec)?;
    Ok(record(
        classify(&exec, &tool.success_pattern),
        exec.wallclock.as_secs_f64(),
        exec.exit_code,
    ))
}

fn write_logs(work: &Path, stage: &str, exec: &Execution) -> Result<(), HarnessError> {
    for (suffix, text) in [("stdout", &exec.stdout), ("stderr", &exec.stderr)] {
        let p = work.join(format!("{stage}.{suffix}"));
        std::fs::write(&p, text).map_err(io_err(&p))?;
    }
    Ok(())
}

/// Divides each analysis record's wallclock by its instance's baseline
/// time: the first baseline record that completed with a positive time.
/// Instances without such a record keep `normalized = None`.
pub fn normalize(records: &[RunRecord]) -> Vec<RunRecord> {
    let mut base: HashMap<&str, f64> = HashMap::new();
    for r in records {
        if r.kind == ToolKind::Baseline && r.outcome.is_completed() && r.wallclock_s > 0.0 {
            base.entry(r.instance.as_str()).or_insert(r.wallclock_s);
        }
    }
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.normalized = match r.kind {
                ToolKind::Analysis => base.get(r.instance.as_str()).map(|b| r.wallclock_s / b),
                ToolKind::Baseline => None,
            };
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub tool: String,
    pub version: String,
    /// Mean over completed runs; `None` when none completed.
    pub mean: Option<f64>,
    /// True when `mean` is in baseline units, false for raw seconds.
    pub normalized: bool,
    pub completed: usize,
    pub timeouts: usize,
    pub tool_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalabilityRow {
    pub tool: String,
    /// 1-based position of the instance when ordered by (size, id).
    pub rank: usize,
    pub instance: String,
    pub size: Option<f64>,
    pub timeouts: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub robustness: Vec<RobustnessRow>,
    pub scalability: Vec<ScalabilityRow>,
    /// Only baseline records were given.
    pub no_analysis_tools: bool,
    /// Some robustness means are in seconds for lack of a baseline.
    pub raw_seconds: bool,
    pub warnings: Vec<String>,
}

fn version_key(v: &str) -> (u8, u8, String) {
    match parse_label(v) {
        Some((Family::Extensional, n)) => (0, n, String::new()),
        Some((Family::Intensional, n)) => (1, n, String::new()),
        None => (2, 0, v.to_string()),
    }
}

/// Aggregates records. `sizes` orders instances for the scalability table;
/// instances without a size come last, by id.
pub fn summarize(records: &[RunRecord], sizes: &BTreeMap<String, f64>) -> Report {
    let mut report = Report::default();
    let analysis: Vec<&RunRecord> = records.iter().filter(|r| r.kind == ToolKind::Analysis).collect();
    if analysis.is_empty() {
        report.no_analysis_tools = true;
        report.warnings.push("no analysis tools in the records".into());
    }

    type Cell = (String, (u8, u8, String), String);
    let mut cells: BTreeMap<Cell, Vec<&RunRecord>> = BTreeMap::new();
    for r in &analysis {
        cells
            .entry((r.tool.clone(), version_key(&r.version), r.version.clone()))
            .or_default()
            .push(r);
    }
    for ((tool, _, version), rs) in cells {
        let done: Vec<&&RunRecord> = rs.iter().filter(|r| r.outcome.is_completed()).collect();
        let normalized = !done.is_empty() && done.iter().all(|r| r.normalized.is_some());
        let values: Vec<f64> = done
            .iter()
            .map(|r| if normalized { r.normalized.unwrap() } else { r.wallclock_s })
            .collect();
        if !done.is_empty() && !normalized {
            report.raw_seconds = true;
            report
                .warnings
                .push(format!("{tool} {version}: no baseline for some instances, mean is in seconds"));
        }
        report.robustness.push(RobustnessRow {
            tool,
            version,
            mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
            normalized,
            completed: done.len(),
            timeouts: rs.iter().filter(|r| r.outcome == Outcome::Timeout).count(),
            tool_errors: rs.iter().filter(|r| r.outcome == Outcome::ToolError).count(),
        });
    }

    let mut instances: Vec<&str> = analysis.iter().map(|r| r.instance.as_str()).collect();
    instances.sort_unstable();
    instances.dedup();
    instances.sort_by(|a, b| {
        let sa = sizes.get(*a).copied().unwrap_or(f64::INFINITY);
        let sb = sizes.get(*b).copied().unwrap_or(f64::INFINITY);
        sa.total_cmp(&sb).then_with(|| a.cmp(b))
    });
    let tools: BTreeSet<&str> = analysis.iter().map(|r| r.tool.as_str()).collect();
    for tool in tools {
        for (i, inst) in instances.iter().enumerate() {
            let rs: Vec<&&RunRecord> = analysis
                .iter()
                .filter(|r| r.tool == tool && r.instance == *inst)
                .collect();
            report.scalability.push(ScalabilityRow {
                tool: tool.to_string(),
                rank: i + 1,
                instance: inst.to_string(),
                size: sizes.get(*inst).copied(),
                timeouts: rs.iter().filter(|r| r.outcome == Outcome::Timeout).count(),
                runs: rs.len(),
            });
        }
    }
    report
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RAW_COLUMNS: [&str; 6] = ["tool", "instance", "version", "outcome", "wallclock_s", "normalized"];
pub const ROBUSTNESS_COLUMNS: [&str; 5] = ["tool", "version", "mean_normalized", "timeouts", "n"];
pub const SCALABILITY_COLUMNS: [&str; 3] = ["tool", "size_index", "timeouts"];

pub fn write_raw_csv(records: &[RunRecord], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RAW_COLUMNS)?;
    for r in records {
        w.write_record([
            r.tool.as_str(),
            &r.instance,
            &r.version,
            r.outcome.name(),
            &r.wallclock_s.to_string(),
            &opt(r.normalized),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads a `raw.csv` back. Rows whose version is [`BASELINE_VERSION`] are
/// baseline runs; columns beyond the raw schema are not stored there, so
/// exit codes are absent and `parallel` is false.
pub fn read_raw_csv(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let bad = |message: String| HarnessError::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != RAW_COLUMNS {
        return Err(bad(format!("expected header {}", RAW_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let outcome = match &row[3] {
            "reached" => Outcome::Reached,
            "not-reached" => Outcome::NotReached,
            "timeout" => Outcome::Timeout,
            "tool-error" => Outcome::ToolError,
            other => return Err(bad(format!("line {line}: unknown outcome `{other}`"))),
        };
        let wallclock_s = row[4]
            .parse()
            .map_err(|_| bad(format!("line {line}: bad wallclock `{}`", &row[4])))?;
        let normalized = match &row[5] {
            "" => None,
            v => Some(v.parse().map_err(|_| bad(format!("line {line}: bad normalized `{v}`")))?),
        };
        out.push(RunRecord {
            tool: row[0].to_string(),
            kind: if &row[2] == BASELINE_VERSION {
                ToolKind::Baseline
            } else {
                ToolKind::Analysis
            },
            instance: row[1].to_string(),
            version: row[2].to_string(),
            outcome,
            wallclock_s,
            normalized,
            exit_code: None,
            parallel: false,
        });
    }
    Ok(out)
}

/// Loads records from `records.jsonl` or `raw.csv`, chosen by extension.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => read_records_jsonl(path),
        _ => read_raw_csv(path),
    }
}

pub fn write_records_jsonl(records: &[RunRecord], path: &Path) -> Result<(), HarnessError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}

/// Files written by [`write_report`].
#[derive(Debug, Clone, Default)]
pub struct ReportFiles {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Writes `raw.csv`, `records.jsonl`, `robustness.csv`, `scalability.csv`,
/// `summary.json` (the full report with its flags) and the SVG charts.
pub fn write_report(
    records: &[RunRecord],
    sizes: &BTreeMap<String, f64>,
    dir: &Path,
) -> Result<ReportFiles, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let report = summarize(records, sizes);
    let mut files = ReportFiles {
        warnings: report.warnings.clone(),
        ..ReportFiles::default()
    };

    let raw = dir.join("raw.csv");
    write_raw_csv(records, &raw)?;
    let jsonl = dir.join("records.jsonl");
    write_records_jsonl(records, &jsonl)?;

    let rob = dir.join("robustness.csv");
    let mut w = csv::Writer::from_path(&rob)?;
    w.write_record(ROBUSTNESS_COLUMNS)?;
    for r in &report.robustness {
        w.write_record([
            r.tool.clone(),
            r.version.clone(),
            opt(r.mean),
            r.timeouts.to_string(),
            r.completed.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&rob))?;

    let scal = dir.join("scalability.csv");
    let mut w = csv::Writer::from_path(&scal)?;
    w.write_record(SCALABILITY_COLUMNS)?;
    for r in &report.scalability {
        w.write_record([r.tool.clone(), r.rank.to_string(), r.timeouts.to_string()])?;
    }
    w.flush().map_err(io_err(&scal))?;

    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(&summary, text + "\n").map_err(io_err(&summary))?;
    files.written.extend([raw, jsonl, rob, scal, summary]);

    if !report.robustness.is_empty() {
        let p = dir.join("robustness.svg");
        std::fs::write(&p, robustness_svg(&report.robustness)).map_err(io_err(&p))?;
        files.written.push(p);
    }
    if report.scalability.is_empty() {
        files
            .warnings
            .push("scalability table is empty; scalability.svg not written".into());
    } else {
        let p = dir.join("scalability.svg");
        std::fs::write(&p, scalability_svg(&report.scalability)).map_err(io_err(&p))?;
        files.written.push(p);
    }
    Ok(files)
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 || !v.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|&c| c >= v)
        .unwrap_or(10.0 * mag)
}

struct Frame {
    width: f64,
    height: f64,
    left: f64,
    top: f64,
    plot_w: f64,
    plot_h: f64,
    y_max: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        self.top + self.plot_h * (1.0 - v / self.y_max)
    }

    fn open(&self, svg: &mut String, y_label: &str, tools: &[&str]) {
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for i in 0..=5 {
            let v = self.y_max * i as f64 / 5.0;
            let y = self.y(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{l}" y1="{y:.1}" x2="{r}" y2="{y:.1}" stroke="#ddd"/><text x="{tx}" y="{ty:.1}" text-anchor="end">{v}</text>"##,
                l = self.left,
                r = self.left + self.plot_w,
                tx = self.left - 6.0,
                ty = y + 4.0,
                v = (v * 1000.0).round() / 1000.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text transform="translate(16,{y}) rotate(-90)" text-anchor="middle">{}</text>"#,
            xml_escape(y_label),
            y = self.top + self.plot_h / 2.0
        );
        for (i, tool) in tools.iter().enumerate() {
            let x = self.left + 10.0 + 130.0 * i as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="8" width="12" height="12" fill="{c}"/><text x="{tx}" y="18">{t}</text>"#,
                c = PALETTE[i % PALETTE.len()],
                tx = x + 16.0,
                t = xml_escape(tool)
            );
        }
    }
}

/// Grouped bars: one group per version, one bar per tool, linear y axis.
pub fn robustness_svg(rows: &[RobustnessRow]) -> String {
    let tools: Vec<&str> = rows.iter().map(|r| r.tool.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut versions: Vec<&str> = rows.iter().map(|r| r.version.as_str()).collect();
    versions.sort_by_key(|v| version_key(v));
    versions.dedup();
    let group_w = (tools.len() as f64 * 14.0 + 10.0).max(30.0);
    let frame = Frame {
        width: 70.0 + group_w * versions.len() as f64 + 20.0,
        height: 360.0,
        left: 70.0,
        top: 36.0,
        plot_w: group_w * versions.len() as f64,
        plot_h: 280.0,
        y_max: nice_max(rows.iter().filter_map(|r| r.mean).fold(0.0, f64::max)),
    };
    let unit = if rows.iter().all(|r| r.normalized) {
        "mean time / baseline time"
    } else {
        "mean time (s)"
    };
    let mut svg = String::new();
    frame.open(&mut svg, unit, &tools);
    for (vi, version) in versions.iter().enumerate() {
        let gx = frame.left + group_w * vi as f64;
        for (ti, tool) in tools.iter().enumerate() {
            let Some(mean) = rows
                .iter()
                .find(|r| r.tool == *tool && r.version == *version)
                .and_then(|r| r.mean)
            else {
                continue;
            };
            let y = frame.y(mean);
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{y:.1}" width="12" height="{h:.1}" fill="{c}"><title>{t} {v}: {mean}</title></rect>"#,
                x = gx + 5.0 + 14.0 * ti as f64,
                h = frame.top + frame.plot_h - y,
                c = PALETTE[ti % PALETTE.len()],
                t = xml_escape(tool),
                v = xml_escape(version),
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{y}" text-anchor="middle">{v}</text>"#,
            x = gx + group_w / 2.0,
            y = frame.top + frame.plot_h + 16.0,
            v = xml_escape(version)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Step lines of timeout counts against the size-ordered instance rank.
pub fn scalability_svg(rows: &[ScalabilityRow]) -> String {
    let tools: Vec<&str> = rows.iter().map(|r| r.tool.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let n = rows.iter().map(|r| r.rank).max().unwrap_or(1).max(1);
    let frame = Frame {
        width: 640.0,
        height: 360.0,
        left: 70.0,
        top: 36.0,
        plot_w: 540.0,
        plot_h: 280.0,
        y_max: nice_max(rows.iter().map(|r| r.timeouts as f64).fold(1.0, f64::max)),
    };
    let x = |rank: f64| frame.left + frame.plot_w * (rank - 0.5) / n as f64;
    let mut svg = String::new();
    frame.open(&mut svg, "timeouts", &tools);
    for (ti, tool) in tools.iter().enumerate() {
        let mut pts = Vec::new();
        for r in rows.iter().filter(|r| r.tool == *tool) {
            let y = frame.y(r.timeouts as f64);
            pts.push(format!("{:.1},{y:.1}", x(r.rank as f64 - 0.5)));
            pts.push(format!("{:.1},{y:.1}", x(r.rank as f64 + 0.5)));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{p}"><title>{t}</title></polyline>"#,
            c = PALETTE[ti % PALETTE.len()],
            p = pts.join(" "),
            t = xml_escape(tool)
        );
    }
    let step = (n / 10).max(1);
    for rank in (1..=n).filter(|r| (r - 1) % step == 0 || *r == n) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{rank}</text>"#,
            x(rank as f64),
            frame.top + frame.plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">problem index (by size)</text>"#,
        frame.left + frame.plot_w / 2.0,
        frame.height - 8.0
    );
    svg.push_str("</svg>\n");
    svg
}
