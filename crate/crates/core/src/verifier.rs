//! Differential testing of generated programs against the oracle.
//!
//! A transformation is checked by compiling its concrete driver with a
//! native C compiler and running the binary on assignments from the domain
//! product. Each run must reach the distinguished point exactly when
//! [`oracle::is_solution`] holds.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::codegen::{
    emit_concrete_driver, CodegenError, Dialect, Family, GeneratedProgram, TransformSpec,
    SAT_MARKER,
};
use crate::model::{CspInstance, Domain};
use crate::oracle::{self, Assignment, EvalError};

/// Environment variable overriding the compile command template.
pub const CC_ENV: &str = "CSP2C_CC";

/// Used when [`CC_ENV`] is unset. `{src}` and `{out}` are replaced by
/// shell-quoted paths.
pub const DEFAULT_COMPILE_TEMPLATE: &str = "cc -O0 -w -o {out} {src}";

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("compiler failed ({command}): {stderr}")]
    Compile { command: String, stderr: String },
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Toolchain {
    pub compile_template: String,
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain {
            compile_template: DEFAULT_COMPILE_TEMPLATE.into(),
        }
    }
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

impl Toolchain {
    pub fn from_env() -> Self {
        match std::env::var(CC_ENV) {
            Ok(t) if !t.trim().is_empty() => Toolchain { compile_template: t },
            _ => Toolchain::default(),
        }
    }

    pub fn command_for(&self, src: &Path, out: &Path) -> String {
        self.compile_template
            .replace("{src}", &shell_quote(src))
            .replace("{out}", &shell_quote(out))
    }

    /// Writes `source` to `dir/stem.c` and compiles it to `dir/stem`.
    pub fn compile(&self, source: &str, dir: &Path, stem: &str) -> Result<PathBuf, VerifyError> {
        let src = dir.join(format!("{stem}.c"));
        let out = dir.join(stem);
        std::fs::write(&src, source)?;
        let command = self.command_for(&src, &out);
        let output = Command::new("sh").arg("-c").arg(&command).output()?;
        if !output.status.success() || !out.exists() {
            return Err(VerifyError::Compile {
                command,
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        Ok(out)
    }
}

/// Search budget for collecting oracle witnesses when sampling.
const WITNESS_SEARCH_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub toolchain: Toolchain,
    /// Domain products up to this size are checked exhaustively.
    pub exhaustive_bound: u64,
    /// Assignments drawn when the product exceeds the bound; zero skips
    /// such instances instead.
    pub sample_size: usize,
    pub seed: u64,
    /// Worker threads; zero uses one per core.
    pub workers: usize,
    /// Where sources and binaries go; a temporary directory when unset.
    pub work_dir: Option<PathBuf>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            toolchain: Toolchain::from_env(),
            exhaustive_bound: 4096,
            sample_size: 512,
            seed: 0x5eed,
            workers: 0,
            work_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerifyStatus {
    /// Exhaustive run, no mismatch.
    Pass,
    Fail,
    /// Product too large and sampling disabled.
    SkippedTooLarge,
    /// Product too large; a sample was checked without mismatch.
    Sampled,
}

impl VerifyStatus {
    pub fn name(self) -> &'static str {
        match self {
            VerifyStatus::Pass => "pass",
            VerifyStatus::Fail => "fail",
            VerifyStatus::SkippedTooLarge => "skipped-too-large",
            VerifyStatus::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observed {
    Reached,
    Rejected,
    /// Any other exit code, or a signal (`None`).
    Abnormal(Option<i32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub version: String,
    pub assignment: Assignment,
    pub expected_reached: bool,
    pub observed: Observed,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub instance: String,
    /// Labels of the versions checked, in the order given.
    pub versions: Vec<String>,
    pub status: VerifyStatus,
    /// Assignments from the domain product (or the sample) run per version.
    pub assignments_checked: u64,
    /// How many of those the oracle accepts.
    pub oracle_accepted: u64,
    /// Assignments left out because the oracle hit a C `int` overflow.
    pub undefined: u64,
    /// Out-of-domain probes run per version; never counted as checked.
    pub probes: u64,
    /// Binary executions over all versions, probes included.
    pub executions: u64,
    pub mismatches: Vec<Mismatch>,
    /// Per version, positions in the checked assignment list at which the
    /// program reached the distinguished point.
    pub accepting: BTreeMap<String, BTreeSet<usize>>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        matches!(self.status, VerifyStatus::Pass | VerifyStatus::Sampled)
    }

    /// True when every version accepted exactly the same assignments.
    pub fn accepting_sets_agree(&self) -> bool {
        let mut sets = self.accepting.values();
        match sets.next() {
            Some(first) => sets.all(|s| s == first),
            None => true,
        }
    }
}

/// Value at position `k` of the sorted domain.
fn nth_value(d: &Domain, mut k: u64) -> i64 {
    for &(lo, hi) in d.ranges() {
        let len = (hi - lo) as u64 + 1;
        if k < len {
            return lo + k as i64;
        }
        k -= len;
    }
    panic!("index beyond domain size")
}

fn assignment_at(csp: &CspInstance, mut index: u64) -> Assignment {
    let mut a = Assignment::new();
    for v in csp.variables().iter().rev() {
        let size = v.domain.size();
        a.insert(v.id.clone(), nth_value(&v.domain, index % size));
        index /= size;
    }
    a
}

struct Points {
    main: Vec<Assignment>,
    probes: Vec<Assignment>,
    exhaustive: bool,
}

/// Assignments to run: the whole product when small enough, otherwise
/// oracle solutions plus seeded random points. Probes push one variable of
/// the first assignment just outside its domain.
fn assignments(csp: &CspInstance, cfg: &VerifyConfig) -> Result<Points, VerifyError> {
    let space = csp.search_space();
    let exhaustive = space <= cfg.exhaustive_bound as u128;
    let main: Vec<Assignment> = if exhaustive {
        (0..space as u64).map(|i| assignment_at(csp, i)).collect()
    } else {
        let mut picked = oracle::enumerate_solutions(csp, WITNESS_SEARCH_LIMIT)?;
        picked.truncate(cfg.sample_size / 2);
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        while picked.len() < cfg.sample_size {
            let a = csp
                .variables()
                .iter()
                .map(|v| (v.id.clone(), nth_value(&v.domain, rng.random_range(0..v.domain.size()))))
                .collect();
            picked.push(a);
        }
        picked
    };
    let mut probes = Vec::new();
    if let Some(base) = main.first() {
        for v in csp.variables() {
            for probe in [v.domain.min().map(|m| m - 1), v.domain.max().map(|m| m + 1)] {
                if let Some(p) = probe.filter(|p| i32::try_from(*p).is_ok()) {
                    let mut a = base.clone();
                    a.insert(v.id.clone(), p);
                    probes.push(a);
                }
            }
        }
    }
    Ok(Points {
        main,
        probes,
        exhaustive,
    })
}

fn run_binary(bin: &Path, csp: &CspInstance, a: &Assignment) -> io::Result<Observed> {
    let args: Vec<String> = csp
        .variables()
        .iter()
        .map(|v| a.get(&v.id).expect("complete assignment").to_string())
        .collect();
    let out = Command::new(bin).args(&args).output()?;
    Ok(match out.status.code() {
        Some(0) if String::from_utf8_lossy(&out.stdout).contains(SAT_MARKER) => Observed::Reached,
        Some(1) => Observed::Rejected,
        code => Observed::Abnormal(code),
    })
}

/// Checks the concrete driver of every version against the oracle.
pub fn differential_check(
    csp: &CspInstance,
    versions: &[TransformSpec],
    cfg: &VerifyConfig,
) -> Result<VerificationReport, VerifyError> {
    differential_check_with(csp, versions, cfg, emit_concrete_driver)
}

/// Like [`differential_check`] with a custom program generator, so that
/// deliberately broken encodings can be fed through the same pipeline.
pub fn differential_check_with<G>(
    csp: &CspInstance,
    versions: &[TransformSpec],
    cfg: &VerifyConfig,
    generate: G,
) -> Result<VerificationReport, VerifyError>
where
    G: Fn(&CspInstance, TransformSpec) -> Result<GeneratedProgram, CodegenError>,
{
    let mut report = VerificationReport {
        instance: csp.name().to_string(),
        versions: versions.iter().map(TransformSpec::label).collect(),
        status: VerifyStatus::Pass,
        assignments_checked: 0,
        oracle_accepted: 0,
        undefined: 0,
        probes: 0,
        executions: 0,
        mismatches: Vec::new(),
        accepting: BTreeMap::new(),
    };
    let programs = versions
        .iter()
        .map(|&spec| generate(csp, spec.with_dialect(Dialect::Concrete)))
        .collect::<Result<Vec<_>, _>>()?;
    if csp.search_space() > cfg.exhaustive_bound as u128 && cfg.sample_size == 0 {
        report.status = VerifyStatus::SkippedTooLarge;
        return Ok(report);
    }

    let temp;
    let dir = match &cfg.work_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.clone()
        }
        None => {
            temp = tempfile::tempdir()?;
            temp.path().to_path_buf()
        }
    };
    let points = assignments(csp, cfg)?;
    // Expected verdicts, or None where the oracle reports an overflow.
    let expect = |a: &Assignment| match oracle::is_solution(csp, a) {
        Ok(b) => Ok(Some(b)),
        Err(EvalError::Overflow { .. }) => Ok(None),
        Err(e) => Err(VerifyError::from(e)),
    };
    let main: Vec<(usize, &Assignment, bool)> = points
        .main
        .iter()
        .enumerate()
        .filter_map(|(i, a)| expect(a).map(|e| e.map(|e| (i, a, e))).transpose())
        .collect::<Result<_, _>>()?;
    let probes: Vec<(usize, &Assignment, bool)> = points
        .probes
        .iter()
        .filter_map(|a| expect(a).map(|e| e.map(|e| (usize::MAX, a, e))).transpose())
        .collect::<Result<_, _>>()?;
    report.assignments_checked = main.len() as u64;
    report.undefined = (points.main.len() - main.len()) as u64;
    report.oracle_accepted = main.iter().filter(|p| p.2).count() as u64;
    report.probes = probes.len() as u64;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| VerifyError::Pool(e.to_string()))?;
    for program in &programs {
        let label = program.version_label.clone();
        let stem = format!("{}__{label}", sanitize(csp.name()));
        let bin = cfg.toolchain.compile(&program.source, &dir, &stem)?;
        let all: Vec<&(usize, &Assignment, bool)> = main.iter().chain(&probes).collect();
        let observed: Vec<Observed> = pool.install(|| {
            all.par_iter()
                .map(|(_, a, _)| run_binary(&bin, csp, a))
                .collect::<io::Result<_>>()
        })?;
        report.executions += all.len() as u64;
        let accepting = report.accepting.entry(label.clone()).or_default();
        for (&&(i, a, expected), obs) in all.iter().zip(observed) {
            if obs == Observed::Reached && i != usize::MAX {
                accepting.insert(i);
            }
            let agrees = match obs {
                Observed::Reached => expected,
                Observed::Rejected => !expected,
                Observed::Abnormal(_) => false,
            };
            if !agrees {
                report.mismatches.push(Mismatch {
                    version: label.clone(),
                    assignment: a.clone(),
                    expected_reached: expected,
                    observed: obs,
                });
            }
        }
    }
    report.status = if !report.mismatches.is_empty() {
        VerifyStatus::Fail
    } else if points.exhaustive && report.undefined == 0 {
        VerifyStatus::Pass
    } else {
        VerifyStatus::Sampled
    };
    Ok(report)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Whether all `versions` accept the same assignments. Mismatches with
/// the oracle do not matter here, only agreement between versions.
pub fn cross_version_equivalence(
    csp: &CspInstance,
    versions: &[TransformSpec],
    cfg: &VerifyConfig,
) -> Result<bool, VerifyError> {
    Ok(differential_check(csp, versions, cfg)?.accepting_sets_agree())
}

/// [`cross_version_equivalence`] with a custom generator.
pub fn cross_version_equivalence_with<G>(
    csp: &CspInstance,
    versions: &[TransformSpec],
    cfg: &VerifyConfig,
    generate: G,
) -> Result<bool, VerifyError>
where
    G: Fn(&CspInstance, TransformSpec) -> Result<GeneratedProgram, CodegenError>,
{
    Ok(differential_check_with(csp, versions, cfg, generate)?.accepting_sets_agree())
}

/// All versions of `family`, for use as the `versions` argument.
pub fn all_versions(family: Family) -> Vec<TransformSpec> {
    TransformSpec::all(family, Dialect::Concrete)
}
