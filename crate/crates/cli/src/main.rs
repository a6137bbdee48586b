//! `csp2c`: parse XCSP3 instances, generate C program families, solve,
//! verify generated programs and drive benchmark runs.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success; `solve` found a solution; `verify` passed exhaustively |
//! | 1 | `solve` proved unsatisfiability; `verify` found a mismatch |
//! | 2 | usage error, unreadable or invalid input |
//! | 3 | inconclusive: `solve` hit its limit, `verify` was not exhaustive |
//! | 4 | the C compiler failed during `verify` |
//! | 5 | output could not be written |

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use csp2c_core::codegen::parse_label;
use csp2c_core::harness::{self, HarnessConfig, HarnessError, LoadedInstance};
use csp2c_core::oracle::{self, EvalError};
use csp2c_core::verifier::{self, VerifyError, DEFAULT_COMPILE_TEMPLATE};
use csp2c_core::xcsp::{self, Parsed};
use csp2c_core::{
    transform, version_to_spec, CodegenError, CspInstance, Dialect, Family, ParseFailure,
    SolveStatus, Toolchain, TransformSpec, VerifyConfig, VerifyStatus,
};

#[derive(Parser, Debug)]
#[command(name = "csp2c", version, about = "Generate C reachability benchmarks from XCSP3 constraint problems")]
struct Cli {
    /// Emit JSON lines instead of human-readable text.
    #[arg(long, global = true)]
    machine: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Summarize an instance or report why it cannot be read.
    Parse { file: PathBuf },
    /// Write one C program per selected version plus a manifest.csv.
    Gen(GenArgs),
    /// Brute-force the instance and print a witness if there is one.
    Solve {
        file: PathBuf,
        /// Maximum number of assignments to explore.
        #[arg(long, default_value_t = oracle::DEFAULT_LIMIT)]
        limit: u64,
    },
    /// Compile every version and compare its behaviour with the oracle.
    Verify(VerifyArgs),
    /// Run analysis and baseline tools over an instance set.
    Bench(BenchArgs),
    /// Rebuild summary tables and charts from saved run records.
    Report {
        /// raw.csv or records.jsonl written by `bench`.
        records: PathBuf,
        out: PathBuf,
        /// Instance manifest supplying sizes for the scalability order.
        #[arg(long)]
        instances: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct GenArgs {
    file: PathBuf,
    /// Defaults to the family of the instance.
    #[arg(long)]
    family: Option<Family>,
    /// `all` or a comma-separated list such as `1,5,8`.
    #[arg(long, default_value = "all", value_parser = parse_versions)]
    versions: Versions,
    #[arg(long, default_value = "klee")]
    dialect: Dialect,
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    file: PathBuf,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long, default_value = "all", value_parser = parse_versions)]
    versions: Versions,
    /// Compiler command with `{src}` and `{out}` placeholders.
    #[arg(long, env = "CSP2C_CC", default_value = DEFAULT_COMPILE_TEMPLATE)]
    cc: String,
    /// Largest domain product checked exhaustively.
    #[arg(long, default_value_t = 4096)]
    bound: u64,
    /// Assignments sampled above the bound; 0 skips such instances.
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Parallel executions; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Keep generated sources and binaries here.
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// TOML file of `[[tool]]` entries.
    tools: PathBuf,
    /// TOML file of `[[instance]]` entries.
    instances: PathBuf,
    out: PathBuf,
    /// `all` or labels such as `E1,E5,I3`.
    #[arg(long, default_value = "all")]
    versions: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Required for more than one worker; such records are marked parallel.
    #[arg(long)]
    allow_parallel: bool,
    /// Seconds between SIGTERM and SIGKILL on timeout.
    #[arg(long, default_value_t = harness::KILL_GRACE.as_secs_f64())]
    grace: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Versions {
    All,
    List(Vec<u8>),
}

fn parse_versions(s: &str) -> Result<Versions, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Versions::All);
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let v: u8 = part.parse().map_err(|_| format!("`{part}` is not a version number"))?;
        if !(1..=Family::Extensional.version_count()).contains(&v) {
            return Err(format!("version {v} does not exist (1-12 extensional, 1-10 intensional)"));
        }
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(Versions::List(out))
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:\n{failure}")]
    Parse { path: String, failure: ParseFailure },
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verify(VerifyError::Compile { .. }) => 4,
            CliError::Output { .. } => 5,
            CliError::Harness(HarnessError::Io { .. }) => 5,
            _ => 2,
        }
    }
}

fn output_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.display().to_string(),
        source,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if cli.machine {
                println!("{}", json!({"error": e.to_string(), "exit": e.exit_code()}));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let m = cli.machine;
    match &cli.command {
        Command::Parse { file } => cmd_parse(file, m),
        Command::Gen(args) => cmd_gen(args, m),
        Command::Solve { file, limit } => cmd_solve(file, *limit, m),
        Command::Verify(args) => cmd_verify(args, m),
        Command::Bench(args) => cmd_bench(args, m),
        Command::Report { records, out, instances } => cmd_report(records, out, instances.as_deref(), m),
    }
}

fn load(file: &Path) -> Result<CspInstance, CliError> {
    let Parsed { instance, warnings } = xcsp::parse_file(file).map_err(|failure| CliError::Parse {
        path: file.display().to_string(),
        failure,
    })?;
    for w in warnings {
        eprintln!("{}: {w}", file.display());
    }
    Ok(instance)
}

fn plural(n: usize, word: &str) -> String {
    format!("{n} {word}{}", if n == 1 { "" } else { "s" })
}

fn cmd_parse(file: &Path, machine: bool) -> Result<u8, CliError> {
    let csp = load(file)?;
    let family = Family::of(&csp).map_or("mixed".to_string(), |f| f.to_string());
    if machine {
        let domains: BTreeMap<&str, String> =
            csp.variables().iter().map(|v| (v.id.as_str(), v.domain.to_string())).collect();
        println!(
            "{}",
            json!({
                "instance": csp.name(),
                "variables": csp.variables().len(),
                "groups": csp.groups().len(),
                "constraints": csp.constraint_count(),
                "family": family,
                "search_space": csp.search_space().to_string(),
                "domains": domains,
            })
        );
        return Ok(0);
    }
    println!(
        "{}, {}, {}",
        plural(csp.variables().len(), "var"),
        plural(csp.groups().len(), "group"),
        plural(csp.constraint_count(), "constraint")
    );
    println!("family: {family}");
    println!("search space: {}", csp.search_space());
    for v in csp.variables() {
        println!("  {} in {}", v.id, v.domain);
    }
    Ok(0)
}

fn family_for(csp: &CspInstance, requested: Option<Family>) -> Result<Family, CliError> {
    match (requested, Family::of(csp)) {
        (Some(f), _) => Ok(f),
        (None, Some(f)) => Ok(f),
        (None, None) => Err(CliError::Usage(format!(
            "{} mixes extensional and intensional constraints; no version family applies",
            csp.name()
        ))),
    }
}

fn select(family: Family, versions: &Versions, dialect: Dialect) -> Result<Vec<TransformSpec>, CliError> {
    match versions {
        Versions::All => Ok(TransformSpec::all(family, dialect)),
        Versions::List(list) => list
            .iter()
            .map(|&v| {
                version_to_spec(family, v)
                    .map(|s| s.with_dialect(dialect))
                    .map_err(|e| CliError::Usage(e.to_string()))
            })
            .collect(),
    }
}

fn cmd_gen(args: &GenArgs, machine: bool) -> Result<u8, CliError> {
    let csp = load(&args.file)?;
    let family = family_for(&csp, args.family)?;
    let specs = select(family, &args.versions, args.dialect)?;
    std::fs::create_dir_all(&args.out).map_err(output_err(&args.out))?;

    let manifest_path = args.out.join("manifest.csv");
    let mut manifest = String::from("file,instance,family,version,construct,operator,grouping,dialect,statements,lines\n");
    let mut stdout = io::stdout().lock();
    for spec in specs {
        let program = transform(&csp, spec)?;
        let name = program.file_name(csp.name());
        let path = args.out.join(&name);
        std::fs::write(&path, &program.source).map_err(output_err(&path))?;
        let version = spec.version().unwrap_or(0);
        manifest.push_str(&format!(
            "{name},{},{family},{version},{},{},{},{},{},{}\n",
            csp.name(),
            spec.construct,
            spec.operator,
            spec.grouping,
            spec.dialect,
            program.statement_count,
            program.line_count
        ));
        let line = if machine {
            json!({
                "file": path.display().to_string(),
                "version": program.version_label,
                "statements": program.statement_count,
                "lines": program.line_count,
            })
            .to_string()
        } else {
            format!("{} ({}, {})", path.display(), program.version_label, plural(program.statement_count, "statement"))
        };
        writeln!(stdout, "{line}").map_err(output_err(Path::new("<stdout>")))?;
    }
    std::fs::write(&manifest_path, manifest).map_err(output_err(&manifest_path))?;
    Ok(0)
}

fn cmd_solve(file: &Path, limit: u64, machine: bool) -> Result<u8, CliError> {
    let csp = load(file)?;
    let r = oracle::solve(&csp, limit)?;
    let (word, code) = match r.status {
        SolveStatus::Satisfiable => ("SATISFIABLE", 0),
        SolveStatus::Unsatisfiable => ("UNSATISFIABLE", 1),
        SolveStatus::ResourceLimit => ("UNKNOWN", 3),
    };
    if machine {
        let witness = r.witness.as_ref().map(|w| {
            csp.variables()
                .iter()
                .map(|v| (v.id.clone(), w.get(&v.id)))
                .collect::<BTreeMap<_, _>>()
        });
        println!(
            "{}",
            json!({"instance": csp.name(), "status": word, "explored": r.explored, "witness": witness})
        );
    } else {
        println!("{word}");
        if let Some(w) = &r.witness {
            println!("{}", w.display_in(&csp));
        }
        if r.status == SolveStatus::ResourceLimit {
            println!("limit of {limit} assignments reached");
        }
    }
    Ok(code)
}

fn cmd_verify(args: &VerifyArgs, machine: bool) -> Result<u8, CliError> {
    let csp = load(&args.file)?;
    let family = family_for(&csp, args.family)?;
    let specs = select(family, &args.versions, Dialect::Concrete)?;
    let cfg = VerifyConfig {
        toolchain: Toolchain {
            compile_template: args.cc.clone(),
        },
        exhaustive_bound: args.bound,
        sample_size: args.samples,
        seed: args.seed,
        workers: args.workers,
        work_dir: args.work_dir.clone(),
    };
    let r = verifier::differential_check(&csp, &specs, &cfg)?;
    let code = match r.status {
        VerifyStatus::Pass => 0,
        VerifyStatus::Fail => 1,
        VerifyStatus::Sampled | VerifyStatus::SkippedTooLarge => 3,
    };
    if machine {
        let mismatches: Vec<_> = r
            .mismatches
            .iter()
            .map(|m| {
                json!({
                    "version": m.version,
                    "assignment": m.assignment.display_in(&csp),
                    "expected_reached": m.expected_reached,
                    "observed": format!("{:?}", m.observed),
                })
            })
            .collect();
        println!(
            "{}",
            json!({
                "instance": r.instance,
                "status": r.status.name(),
                "versions": r.versions,
                "assignments_checked": r.assignments_checked,
                "search_space": csp.search_space().to_string(),
                "oracle_accepted": r.oracle_accepted,
                "undefined": r.undefined,
                "executions": r.executions,
                "accepting_sets_agree": r.accepting_sets_agree(),
                "mismatches": mismatches,
            })
        );
        return Ok(code);
    }
    println!("{}: {}", r.instance, r.status.name().to_uppercase());
    println!("versions: {}", r.versions.join(" "));
    println!(
        "assignments checked: {} of {}; oracle accepts {}; undefined {}",
        r.assignments_checked,
        csp.search_space(),
        r.oracle_accepted,
        r.undefined
    );
    println!("executions: {} (including {} out-of-domain probes per version)", r.executions, r.probes);
    for m in &r.mismatches {
        println!(
            "mismatch {}: [{}] expected {}, observed {:?}",
            m.version,
            m.assignment.display_in(&csp),
            if m.expected_reached { "reached" } else { "rejected" },
            m.observed
        );
    }
    Ok(code)
}

fn bench_versions(s: &str) -> Result<Vec<TransformSpec>, CliError> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(str::trim)
        .map(|label| {
            parse_label(label)
                .and_then(|(f, v)| version_to_spec(f, v).ok())
                .ok_or_else(|| CliError::Usage(format!("`{label}` is not a version label such as E5 or I3")))
        })
        .collect()
}

fn load_instances(manifest: &Path) -> Result<Vec<LoadedInstance>, CliError> {
    harness::load_instances(manifest)?
        .into_iter()
        .map(|e| LoadedInstance::load(e).map_err(CliError::from))
        .collect()
}

fn sizes(instances: &[LoadedInstance]) -> BTreeMap<String, f64> {
    instances.iter().map(|i| (i.entry.id.clone(), i.size())).collect()
}

fn print_report(files: &harness::ReportFiles, machine: bool) {
    for w in &files.warnings {
        if machine {
            println!("{}", json!({"warning": w}));
        } else {
            eprintln!("warning: {w}");
        }
    }
    for p in &files.written {
        if machine {
            println!("{}", json!({"written": p.display().to_string()}));
        } else {
            println!("wrote {}", p.display());
        }
    }
}

fn cmd_bench(args: &BenchArgs, machine: bool) -> Result<u8, CliError> {
    let tools = harness::load_tools(&args.tools)?;
    let instances = load_instances(&args.instances)?;
    if !(args.grace.is_finite() && args.grace >= 0.0) {
        return Err(CliError::Usage(format!("--grace {} is not a duration", args.grace)));
    }
    let cfg = HarnessConfig {
        versions: bench_versions(&args.versions)?,
        workers: args.workers,
        allow_parallel: args.allow_parallel,
        grace: Duration::from_secs_f64(args.grace),
        ..HarnessConfig::new(&args.out)
    };
    let records = harness::run_matrix(&tools, &instances, &cfg)?;
    if machine {
        for r in &records {
            println!("{}", serde_json::to_string(r).expect("records serialize"));
        }
    } else {
        let count = |o| records.iter().filter(|r| r.outcome == o).count();
        use csp2c_core::Outcome::*;
        println!(
            "{} runs: {} reached, {} not reached, {} timeouts, {} tool errors",
            records.len(),
            count(Reached),
            count(NotReached),
            count(Timeout),
            count(ToolError)
        );
    }
    let files = harness::write_report(&records, &sizes(&instances), &args.out)?;
    print_report(&files, machine);
    Ok(0)
}

fn cmd_report(records: &Path, out: &Path, instances: Option<&Path>, machine: bool) -> Result<u8, CliError> {
    let recs = harness::read_records(records)?;
    let sizes = match instances {
        Some(p) => sizes(&load_instances(p)?),
        None => BTreeMap::new(),
    };
    let files = harness::write_report(&recs, &sizes, out)?;
    print_report(&files, machine);
    Ok(0)
}
