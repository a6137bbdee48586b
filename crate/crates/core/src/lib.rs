//! Turn finite-domain constraint satisfaction problems into families of
//! semantically equivalent C programs whose distinguished `assert(0)` is
//! reachable exactly when the problem is satisfiable.
//!
//! The pipeline is: [`xcsp`] reads an XCSP3 document into the [`model`] IR,
//! [`oracle`] brute-forces ground truth, [`codegen`] emits one C program
//! per transformation version, [`verifier`] differentially tests compiled
//! programs against the oracle, and [`harness`] runs external analysis
//! tools and summarises their robustness and scalability.

pub mod codegen;
pub mod expr;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod verifier;
pub mod xcsp;

pub use expr::{BinaryOp, IntensionExpr, UnaryOp};
pub use model::{
    instantiate_group, Arg, Constraint, ConstraintGroup, ConstraintTemplate, CspInstance, Domain,
    ModelError, Polarity, Slot, VariableDecl,
};
pub use oracle::{Assignment, SolveResult, SolveStatus};
pub use xcsp::{parse_document, parse_intension, ParseDiagnostic, ParseFailure};
pub use codegen::{
    emit_concrete_driver, transform, version_to_spec, CodegenError, Construct, Dialect, Family,
    GeneratedProgram, Grouping, Operator, TransformSpec,
};
pub use verifier::{
    cross_version_equivalence, differential_check, Toolchain, VerificationReport, VerifyConfig,
    VerifyStatus,
};
pub use harness::{normalize, Outcome, RunRecord, ToolKind, ToolSpec};
