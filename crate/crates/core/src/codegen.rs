//! C program generation.
//!
//! Every transformation version turns the same [`CspInstance`] into a
//! straight-line C `main` with four parts: one `int` per variable, symbolic
//! marking, domain assumptions, and the constraint encoding, followed by the
//! distinguished `assert(0)`. Versions differ only in how constraints are
//! encoded: the construct (`if` or assume), the connective family (logical
//! or bitwise) and how constraints are grouped into statements.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::expr::{BinaryOp, IntensionExpr, UnaryOp};
use crate::model::{Constraint, CspInstance, Domain, Polarity};

/// Column at which long statements are wrapped.
pub const WRAP_COLUMN: usize = 80;

/// Marker printed by concrete drivers at the distinguished point.
pub const SAT_MARKER: &str = "SAT-REACHED";

/// Comment that follows the distinguished statement in every dialect.
pub const DISTINGUISHED_COMMENT: &str = "/* CSP is satisfiable */";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Extensional,
    Intensional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Construct {
    IfStmt,
    Assume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Logical,
    Bitwise,
    /// One statement per atomic condition, no connective needed.
    Nop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Grouping {
    /// One statement per instantiated constraint.
    No,
    /// One statement per constraint group.
    Yes,
    /// One statement for the whole instance.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dialect {
    Klee,
    Llbmc,
    /// Reads variable values from argv; used for differential testing.
    Concrete,
}

macro_rules! names {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $(<$ty>::$variant => $name),* }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok(<$ty>::$variant),)*
                    _ => Err(format!(
                        "expected one of: {}",
                        [$($name),*].join(", ")
                    )),
                }
            }
        }
    };
}

names!(Family { Extensional => "extensional", Intensional => "intensional" });
names!(Construct { IfStmt => "if", Assume => "assume" });
names!(Operator { Logical => "logical", Bitwise => "bitwise", Nop => "nop" });
names!(Grouping { No => "no", Yes => "yes", All => "all" });
names!(Dialect { Klee => "klee", Llbmc => "llbmc", Concrete => "concrete" });

impl Family {
    /// The family an instance's constraints belong to, `None` when it mixes
    /// tables with intensional constraints. Constraint-free instances count
    /// as extensional.
    pub fn of(csp: &CspInstance) -> Option<Family> {
        if csp.is_purely_extensional() {
            Some(Family::Extensional)
        } else if csp.is_purely_intensional() {
            Some(Family::Intensional)
        } else {
            None
        }
    }

    pub fn version_count(self) -> u8 {
        self.table().len() as u8
    }

    fn table(self) -> &'static [(Construct, Operator, Grouping)] {
        match self {
            Family::Extensional => &EXTENSIONAL_VERSIONS,
            Family::Intensional => &INTENSIONAL_VERSIONS,
        }
    }

    fn letter(self) -> char {
        match self {
            Family::Extensional => 'E',
            Family::Intensional => 'I',
        }
    }
}

use Construct::{Assume, IfStmt};
use Grouping::{All, No, Yes};
use Operator::{Bitwise, Logical, Nop};

const EXTENSIONAL_VERSIONS: [(Construct, Operator, Grouping); 12] = [
    (IfStmt, Logical, No),
    (IfStmt, Logical, Yes),
    (IfStmt, Logical, All),
    (IfStmt, Bitwise, No),
    (IfStmt, Bitwise, Yes),
    (IfStmt, Bitwise, All),
    (Assume, Logical, No),
    (Assume, Logical, Yes),
    (Assume, Logical, All),
    (Assume, Bitwise, No),
    (Assume, Bitwise, Yes),
    (Assume, Bitwise, All),
];

const INTENSIONAL_VERSIONS: [(Construct, Operator, Grouping); 10] = [
    (IfStmt, Nop, No),
    (IfStmt, Logical, Yes),
    (IfStmt, Logical, All),
    (IfStmt, Bitwise, Yes),
    (IfStmt, Bitwise, All),
    (Assume, Nop, No),
    (Assume, Logical, Yes),
    (Assume, Logical, All),
    (Assume, Bitwise, Yes),
    (Assume, Bitwise, All),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("{family} version {version} does not exist (valid: 1..={max})")]
    InvalidVersion { family: Family, version: u8, max: u8 },
    #[error("({construct}, {operator}, grouping {grouping}) is not a {family} version")]
    InvalidCombination {
        family: Family,
        construct: Construct,
        operator: Operator,
        grouping: Grouping,
    },
    #[error("{family} transformation cannot encode a {kind} constraint")]
    FamilyMismatch { family: Family, kind: &'static str },
    #[error("instance has no variables")]
    NoVariables,
    #[error("{what} {value} does not fit a 32-bit C int")]
    OutOfRange { what: &'static str, value: i64 },
}

/// One cell of the transformation matrix plus the output dialect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformSpec {
    pub family: Family,
    pub construct: Construct,
    pub operator: Operator,
    pub grouping: Grouping,
    pub dialect: Dialect,
}

/// Looks up a version number (1-based) in the version table. The dialect
/// defaults to KLEE.
pub fn version_to_spec(family: Family, version: u8) -> Result<TransformSpec, CodegenError> {
    let table = family.table();
    let &(construct, operator, grouping) = table
        .get((version as usize).wrapping_sub(1))
        .ok_or(CodegenError::InvalidVersion {
            family,
            version,
            max: table.len() as u8,
        })?;
    Ok(TransformSpec {
        family,
        construct,
        operator,
        grouping,
        dialect: Dialect::Klee,
    })
}

impl TransformSpec {
    /// Every version of a family, in table order.
    pub fn all(family: Family, dialect: Dialect) -> Vec<TransformSpec> {
        (1..=family.version_count())
            .map(|v| version_to_spec(family, v).unwrap().with_dialect(dialect))
            .collect()
    }

    pub fn with_dialect(mut self, dialect: Dialect) -> Self {
        self.dialect = dialect;
        self
    }

    /// Position in the version table, if the combination is valid.
    pub fn version(&self) -> Option<u8> {
        self.family
            .table()
            .iter()
            .position(|&row| row == (self.construct, self.operator, self.grouping))
            .map(|i| i as u8 + 1)
    }

    pub fn validate(&self) -> Result<u8, CodegenError> {
        self.version().ok_or(CodegenError::InvalidCombination {
            family: self.family,
            construct: self.construct,
            operator: self.operator,
            grouping: self.grouping,
        })
    }

    /// Short label such as `E5` or `I3`.
    pub fn label(&self) -> String {
        match self.version() {
            Some(v) => format!("{}{v}", self.family.letter()),
            None => format!("{}?", self.family.letter()),
        }
    }
}

/// Parses labels like `E5` / `I10` back into family and version.
pub fn parse_label(label: &str) -> Option<(Family, u8)> {
    let family = match label.chars().next()? {
        'E' => Family::Extensional,
        'I' => Family::Intensional,
        _ => return None,
    };
    let v: u8 = label[1..].parse().ok()?;
    (1..=family.version_count()).contains(&v).then_some((family, v))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedProgram {
    pub source: String,
    pub spec: TransformSpec,
    pub version_label: String,
    /// Number of emitted constraint-encoding statements.
    pub statement_count: usize,
    /// CSP variable id to C identifier, in declaration order.
    pub var_map: Vec<(String, String)>,
    pub line_count: usize,
}

impl GeneratedProgram {
    /// `<instance>__<family><version>__<dialect>.c`
    pub fn file_name(&self, instance: &str) -> String {
        format!(
            "{instance}__{}{}__{}.c",
            self.spec.family,
            self.spec.version().unwrap_or(0),
            self.spec.dialect
        )
    }
}

/// Produces the C program for `spec`.
pub fn transform(csp: &CspInstance, spec: TransformSpec) -> Result<GeneratedProgram, CodegenError> {
    Generator::new(csp, spec)?.run()
}

/// Same encoding as [`transform`], but the program reads one integer per
/// variable from argv, turns assumptions into `exit(1)` guards and prints
/// [`SAT_MARKER`] at the distinguished point.
pub fn emit_concrete_driver(
    csp: &CspInstance,
    spec: TransformSpec,
) -> Result<GeneratedProgram, CodegenError> {
    transform(csp, spec.with_dialect(Dialect::Concrete))
}

// C operator precedence levels used for minimal parenthesization.
const PREC_PRIMARY: u8 = 16;
const PREC_UNARY: u8 = 15;
const PREC_MUL: u8 = 13;
const PREC_ADD: u8 = 12;
const PREC_REL: u8 = 10;
const PREC_EQ: u8 = 9;
const PREC_BAND: u8 = 8;
const PREC_BOR: u8 = 6;
const PREC_LAND: u8 = 5;
const PREC_LOR: u8 = 4;

#[derive(Debug, Clone, Copy)]
struct Connectives {
    and: &'static str,
    or: &'static str,
    and_prec: u8,
    or_prec: u8,
    bitwise: bool,
}

const LOGICAL: Connectives = Connectives {
    and: "&&",
    or: "||",
    and_prec: PREC_LAND,
    or_prec: PREC_LOR,
    bitwise: false,
};

const BITWISE: Connectives = Connectives {
    and: "&",
    or: "|",
    and_prec: PREC_BAND,
    or_prec: PREC_BOR,
    bitwise: true,
};

impl Operator {
    fn connectives(self) -> Connectives {
        match self {
            Operator::Bitwise => BITWISE,
            Operator::Logical | Operator::Nop => LOGICAL,
        }
    }
}

/// Boolean condition skeleton; atoms are already-rendered C comparisons.
#[derive(Debug, Clone)]
enum Cond {
    Atom(String, u8),
    And(Vec<Cond>),
    Or(Vec<Cond>),
    Not(Box<Cond>),
    True,
    False,
}

impl Cond {
    fn and(mut items: Vec<Cond>) -> Cond {
        match items.len() {
            0 => Cond::True,
            1 => items.pop().unwrap(),
            _ => Cond::And(items),
        }
    }

    fn or(mut items: Vec<Cond>) -> Cond {
        match items.len() {
            0 => Cond::False,
            1 => items.pop().unwrap(),
            _ => Cond::Or(items),
        }
    }

    fn not(c: Cond) -> Cond {
        Cond::Not(Box::new(c))
    }

    fn render(&self, ops: Connectives) -> (String, u8) {
        match self {
            Cond::Atom(s, p) => (s.clone(), *p),
            Cond::True => ("1".into(), PREC_PRIMARY),
            Cond::False => ("0".into(), PREC_PRIMARY),
            Cond::Not(c) => {
                let (s, p) = c.render(ops);
                if p >= PREC_UNARY {
                    (format!("!{s}"), PREC_UNARY)
                } else {
                    (format!("!({s})"), PREC_UNARY)
                }
            }
            Cond::And(_) | Cond::Or(_) => {
                let (pieces, op, prec) = self.pieces(ops).expect("list node");
                (pieces.join(&format!(" {op} ")), prec)
            }
        }
    }

    /// Rendered operands of a top-level connective, with the operator.
    fn pieces(&self, ops: Connectives) -> Option<(Vec<String>, &'static str, u8)> {
        let (items, op, prec, is_and) = match self {
            Cond::And(items) => (items, ops.and, ops.and_prec, true),
            Cond::Or(items) => (items, ops.or, ops.or_prec, false),
            _ => return None,
        };
        let pieces = items
            .iter()
            .map(|c| {
                let (s, p) = c.render(ops);
                let same = matches!((c, is_and), (Cond::And(_), true) | (Cond::Or(_), false));
                // conjunctions inside a disjunction are always bracketed
                let bracket = matches!((c, is_and), (Cond::And(_), false) | (Cond::Or(_), true))
                    || (p <= prec && !same);
                if bracket {
                    format!("({s})")
                } else {
                    s
                }
            })
            .collect();
        Some((pieces, op, prec))
    }

    fn is_compound_or(&self) -> bool {
        matches!(self, Cond::Or(items) if items.iter().any(|c| matches!(c, Cond::And(_))))
    }
}

/// Lays out `prefix cond suffix`, wrapping at top-level connectives. A
/// disjunction of bracketed conjunctions gets one disjunct per line; other
/// lists are filled greedily up to [`WRAP_COLUMN`].
fn layout(
    indent: usize,
    prefix: &str,
    cond: &Cond,
    suffix: &str,
    ops: Connectives,
    split_disjuncts: bool,
) -> Vec<String> {
    let (prefix, suffix, cond) = match cond {
        Cond::Not(inner) if matches!(**inner, Cond::And(_) | Cond::Or(_)) => {
            (format!("{prefix}!("), format!("){suffix}"), &**inner)
        }
        _ => (prefix.to_string(), suffix.to_string(), cond),
    };
    let pad = " ".repeat(indent);
    let Some((pieces, op, _)) = cond.pieces(ops) else {
        return vec![format!("{pad}{prefix}{}{suffix}", cond.render(ops).0)];
    };
    let one_line = format!("{pad}{prefix}{}{suffix}", pieces.join(&format!(" {op} ")));
    let per_line = split_disjuncts && cond.is_compound_or();
    if !per_line && one_line.len() <= WRAP_COLUMN {
        return vec![one_line];
    }
    let cont = " ".repeat(indent + prefix.len());
    let mut lines = Vec::new();
    let mut current = format!("{pad}{prefix}");
    let last = pieces.len() - 1;
    for (i, piece) in pieces.iter().enumerate() {
        let tail = if i == last {
            suffix.clone()
        } else {
            format!(" {op}")
        };
        let fresh = current.len() == indent + prefix.len();
        if !fresh && (per_line || current.len() + 1 + piece.len() + tail.len() > WRAP_COLUMN) {
            lines.push(std::mem::replace(&mut current, cont.clone()));
        } else if !fresh {
            current.push(' ');
        }
        current.push_str(piece);
        current.push_str(&tail);
    }
    lines.push(current);
    lines
}

fn c_const(v: i64) -> Result<(String, u8), CodegenError> {
    if v < i32::MIN as i64 || v > i32::MAX as i64 {
        return Err(CodegenError::OutOfRange {
            what: "constant",
            value: v,
        });
    }
    Ok(if v == i32::MIN as i64 {
        ("(-2147483647-1)".into(), PREC_PRIMARY)
    } else if v < 0 {
        (format!("({v})"), PREC_PRIMARY)
    } else {
        (v.to_string(), PREC_PRIMARY)
    })
}

fn bracket(s: String, p: u8, min: u8) -> String {
    if p < min {
        format!("({s})")
    } else {
        s
    }
}

const RESERVED: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "main", "argc", "argv", "dist", "iabs",
    "exit", "assert", "printf", "read_arg", "strtol", "errno", "abs", "NULL", "EOF",
];

fn c_identifier(id: &str, taken: &mut HashSet<String>) -> String {
    let mut s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty()
        || s.starts_with(|c: char| c.is_ascii_digit())
        || s.starts_with('_')
        || s.starts_with("klee_")
        || RESERVED.contains(&s.as_str())
    {
        s = format!("v_{s}");
    }
    while !taken.insert(s.clone()) {
        s.push('_');
    }
    s
}

enum Stmt {
    Assume(Cond),
    /// `if (c) reject;`
    IfReject(Cond),
    /// `if (c); else reject;`
    IfElseReject(Cond),
    /// `if (c) { distinguished point }`
    Guarded(Cond),
}

struct Generator<'a> {
    csp: &'a CspInstance,
    spec: TransformSpec,
    ops: Connectives,
    names: Vec<(String, String)>,
    uses_dist: bool,
    uses_abs: bool,
}

impl<'a> Generator<'a> {
    fn new(csp: &'a CspInstance, spec: TransformSpec) -> Result<Self, CodegenError> {
        spec.validate()?;
        if csp.variables().is_empty() {
            return Err(CodegenError::NoVariables);
        }
        for c in csp.constraints() {
            let ok = match spec.family {
                Family::Extensional => c.is_extensional(),
                Family::Intensional => !c.is_extensional(),
            };
            if !ok {
                return Err(CodegenError::FamilyMismatch {
                    family: spec.family,
                    kind: c.kind_name(),
                });
            }
        }
        let mut taken = HashSet::new();
        let names = csp
            .variables()
            .iter()
            .map(|v| (v.id.clone(), c_identifier(&v.id, &mut taken)))
            .collect();
        Ok(Generator {
            csp,
            spec,
            ops: spec.operator.connectives(),
            names,
            uses_dist: false,
            uses_abs: false,
        })
    }

    fn name(&self, id: &str) -> &str {
        let i = self.csp.variable_index(id).expect("validated instance");
        &self.names[i].1
    }

    fn eq_atom(&self, id: &str, v: i64) -> Result<Cond, CodegenError> {
        let (lit, _) = c_const(v).map_err(|_| CodegenError::OutOfRange {
            what: "tuple value",
            value: v,
        })?;
        Ok(Cond::Atom(format!("{}=={lit}", self.name(id)), PREC_EQ))
    }

    fn tuples(&self, scope: &[String], tuples: &[Vec<i64>]) -> Result<Vec<Cond>, CodegenError> {
        tuples
            .iter()
            .map(|t| {
                let atoms = scope
                    .iter()
                    .zip(t)
                    .map(|(id, &v)| self.eq_atom(id, v))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Cond::and(atoms))
            })
            .collect()
    }

    fn expr(&mut self, e: &IntensionExpr) -> Result<(String, u8), CodegenError> {
        Ok(match e {
            IntensionExpr::Var(v) => (self.name(v).to_string(), PREC_PRIMARY),
            IntensionExpr::Const(c) => c_const(*c)?,
            IntensionExpr::Placeholder(_) => unreachable!("validated instance has no placeholders"),
            IntensionExpr::Unary(op, x) => {
                let (s, p) = self.expr(x)?;
                match op {
                    UnaryOp::Neg => (format!("(-{})", bracket(s, p, PREC_UNARY)), PREC_PRIMARY),
                    UnaryOp::Not => (format!("!{}", bracket(s, p, PREC_UNARY)), PREC_UNARY),
                    UnaryOp::Abs => {
                        self.uses_abs = true;
                        (format!("iabs({s})"), PREC_PRIMARY)
                    }
                }
            }
            IntensionExpr::Binary(op, l, r) => {
                if *op == BinaryOp::Dist {
                    self.uses_dist = true;
                    let (a, _) = self.expr(l)?;
                    let (b, _) = self.expr(r)?;
                    return Ok((format!("dist({a},{b})"), PREC_PRIMARY));
                }
                let (tok, prec, assoc) = match op {
                    BinaryOp::Add => ("+", PREC_ADD, true),
                    BinaryOp::Sub => ("-", PREC_ADD, true),
                    BinaryOp::Mul => ("*", PREC_MUL, true),
                    BinaryOp::Lt => ("<", PREC_REL, false),
                    BinaryOp::Le => ("<=", PREC_REL, false),
                    BinaryOp::Gt => (">", PREC_REL, false),
                    BinaryOp::Ge => (">=", PREC_REL, false),
                    BinaryOp::Eq => ("==", PREC_EQ, false),
                    BinaryOp::Ne => ("!=", PREC_EQ, false),
                    BinaryOp::And => (self.ops.and, self.ops.and_prec, true),
                    BinaryOp::Or => (self.ops.or, self.ops.or_prec, true),
                    BinaryOp::Dist => unreachable!(),
                };
                let (ls, lp) = self.operand(l, op.is_logical())?;
                let (rs, rp) = self.operand(r, op.is_logical())?;
                let lmin = if assoc { prec } else { prec + 1 };
                (
                    format!("{}{tok}{}", bracket(ls, lp, lmin), bracket(rs, rp, prec + 1)),
                    prec,
                )
            }
        })
    }

    /// Under bitwise connectives an integer operand is first turned into a
    /// 0/1 truth value, so `&`/`|` agree with `&&`/`||`.
    fn operand(&mut self, e: &IntensionExpr, of_connective: bool) -> Result<(String, u8), CodegenError> {
        let (s, p) = self.expr(e)?;
        if of_connective && self.ops.bitwise && !e.is_boolean() {
            Ok((format!("{}!=0", bracket(s, p, PREC_EQ + 1)), PREC_EQ))
        } else {
            Ok((s, p))
        }
    }

    fn atom(&mut self, e: &IntensionExpr) -> Result<Cond, CodegenError> {
        let (s, p) = self.expr(e)?;
        Ok(if e.is_boolean() {
            Cond::Atom(s, p)
        } else {
            Cond::Atom(format!("{}!=0", bracket(s, p, PREC_EQ + 1)), PREC_EQ)
        })
    }

    fn intensional_atoms(&mut self, c: &Constraint) -> Result<Vec<Cond>, CodegenError> {
        match c {
            Constraint::Intensional { expr } => {
                expr.conjuncts().into_iter().map(|e| self.atom(e)).collect()
            }
            Constraint::AllDifferent { scope } => {
                let mut out = Vec::new();
                for (i, a) in scope.iter().enumerate() {
                    for b in &scope[i + 1..] {
                        out.push(Cond::Atom(
                            format!("{}!={}", self.name(a), self.name(b)),
                            PREC_EQ,
                        ));
                    }
                }
                Ok(out)
            }
            Constraint::Extensional { .. } => unreachable!("family checked up front"),
        }
    }

    fn units(&self) -> Vec<Vec<&'a Constraint>> {
        let csp = self.csp;
        match self.spec.grouping {
            Grouping::No => csp.constraints().map(|c| vec![c]).collect(),
            Grouping::Yes => {
                let mut units: Vec<Vec<&Constraint>> = vec![Vec::new(); csp.groups().len()];
                for (g, c) in csp.constraints_with_group() {
                    units[*g].push(c);
                }
                units.retain(|u| !u.is_empty());
                units
            }
            Grouping::All => vec![csp.constraints().collect()],
        }
    }

    fn encode(&mut self) -> Result<Vec<Stmt>, CodegenError> {
        let construct = self.spec.construct;
        let mut stmts = Vec::new();
        for unit in self.units() {
            match self.spec.family {
                Family::Extensional => {
                    let mut conflicts = Vec::new();
                    let mut supports = Vec::new();
                    for c in unit {
                        if let Constraint::Extensional {
                            scope,
                            polarity,
                            tuples,
                        } = c
                        {
                            let ts = self.tuples(scope, tuples)?;
                            match polarity {
                                Polarity::Conflicts => conflicts.extend(ts),
                                Polarity::Supports => supports.push(Cond::or(ts)),
                            }
                        }
                    }
                    let has_conflicts = !conflicts.is_empty();
                    let forbidden = Cond::or(conflicts);
                    stmts.push(match (construct, supports.is_empty()) {
                        (Construct::IfStmt, true) => Stmt::IfReject(forbidden),
                        (Construct::Assume, true) => Stmt::Assume(Cond::not(forbidden)),
                        (_, false) => {
                            let mut parts = Vec::new();
                            if has_conflicts {
                                parts.push(Cond::not(forbidden));
                            }
                            parts.extend(supports);
                            let allowed = Cond::and(parts);
                            if construct == Construct::IfStmt {
                                Stmt::IfElseReject(allowed)
                            } else {
                                Stmt::Assume(allowed)
                            }
                        }
                    });
                }
                Family::Intensional => {
                    let mut atoms = Vec::new();
                    for c in unit {
                        atoms.extend(self.intensional_atoms(c)?);
                    }
                    if self.spec.operator == Operator::Nop {
                        for a in atoms {
                            stmts.push(match construct {
                                Construct::IfStmt => Stmt::IfElseReject(a),
                                Construct::Assume => Stmt::Assume(a),
                            });
                        }
                        continue;
                    }
                    let cond = Cond::and(atoms);
                    stmts.push(match (construct, self.spec.grouping) {
                        (Construct::IfStmt, Grouping::All) => Stmt::Guarded(cond),
                        (Construct::IfStmt, _) => Stmt::IfElseReject(cond),
                        (Construct::Assume, _) => Stmt::Assume(cond),
                    });
                }
            }
        }
        Ok(stmts)
    }

    fn domain_cond(&self, id: &str, d: &Domain) -> Result<(Cond, Connectives), CodegenError> {
        for v in [d.min(), d.max()].into_iter().flatten() {
            if c_const(v).is_err() {
                return Err(CodegenError::OutOfRange {
                    what: "domain bound",
                    value: v,
                });
            }
        }
        let x = self.name(id);
        let bounds = |lo: i64, hi: i64| {
            Cond::And(vec![
                Cond::Atom(format!("{x} >= {}", c_const(lo).unwrap().0), PREC_REL),
                Cond::Atom(format!("{x} <= {}", c_const(hi).unwrap().0), PREC_REL),
            ])
        };
        if d.is_contiguous() {
            let (lo, hi) = d.ranges()[0];
            return Ok((bounds(lo, hi), LOGICAL));
        }
        let alts = d
            .ranges()
            .iter()
            .map(|&(lo, hi)| {
                if lo == hi {
                    Cond::Atom(format!("{x}=={}", c_const(lo).unwrap().0), PREC_EQ)
                } else {
                    bounds(lo, hi)
                }
            })
            .collect();
        Ok((Cond::Or(alts), self.ops))
    }

    fn assume_lines(&self, cond: &Cond, ops: Connectives, split: bool) -> Vec<String> {
        match self.spec.dialect {
            Dialect::Klee => layout(2, "klee_assume(", cond, ");", ops, split),
            Dialect::Llbmc => layout(2, "__llbmc_assume(", cond, ");", ops, split),
            Dialect::Concrete => match cond {
                Cond::Not(inner) => layout(2, "if (", inner, ") exit(1);", ops, split),
                _ => layout(2, "if (!(", cond, ")) exit(1);", ops, split),
            },
        }
    }

    fn reject(&self) -> &'static str {
        match self.spec.dialect {
            Dialect::Concrete => "exit(1);",
            Dialect::Klee | Dialect::Llbmc => "exit(0);",
        }
    }

    /// The distinguished statement with its trailing comment.
    fn distinguished(&self, indent: usize) -> String {
        let call = match self.spec.dialect {
            Dialect::Concrete => "reached();",
            Dialect::Klee | Dialect::Llbmc => "assert(0);",
        };
        format!("{}{call} {DISTINGUISHED_COMMENT}", " ".repeat(indent))
    }

    fn declarations(&self) -> Vec<String> {
        let names: Vec<&str> = self.names.iter().map(|(_, c)| c.as_str()).collect();
        let mut lines = Vec::new();
        let mut current = String::from("  int ");
        for (i, n) in names.iter().enumerate() {
            let tail = if i + 1 == names.len() { ";" } else { "," };
            if current.len() > 6 && current.len() + 1 + n.len() + tail.len() > WRAP_COLUMN {
                lines.push(std::mem::replace(&mut current, " ".repeat(6)));
            } else if current.len() > 6 {
                current.push(' ');
            }
            current.push_str(n);
            current.push_str(tail);
        }
        lines.push(current);
        lines
    }

    fn run(mut self) -> Result<GeneratedProgram, CodegenError> {
        let stmts = self.encode()?;
        let mut domain_lines = Vec::new();
        for v in self.csp.variables() {
            let (cond, ops) = self.domain_cond(&v.id, &v.domain)?;
            domain_lines.extend(self.assume_lines(&cond, ops, false));
        }
        let mut body = Vec::new();
        let mut guarded = false;
        let reject = self.reject();
        for s in &stmts {
            match s {
                Stmt::Assume(c) => body.extend(self.assume_lines(c, self.ops, true)),
                Stmt::IfReject(c) => {
                    body.extend(layout(2, "if (", c, &format!(") {reject}"), self.ops, true))
                }
                Stmt::IfElseReject(c) => {
                    body.extend(layout(2, "if (", c, &format!("); else {reject}"), self.ops, true))
                }
                Stmt::Guarded(c) => {
                    guarded = true;
                    body.extend(layout(2, "if (", c, ")", self.ops, true));
                    body.push(self.distinguished(4));
                }
            }
        }

        let spec = self.spec;
        let version = spec.version().expect("validated");
        let mut src = Vec::new();
        src.push(format!(
            "/* {}: {} version {version} ({}, {}, grouping {}), {} dialect */",
            self.csp.name().replace("*/", "*_/"),
            spec.family,
            spec.construct,
            spec.operator,
            spec.grouping,
            spec.dialect
        ));
        match spec.dialect {
            Dialect::Klee => {
                src.push("#include <assert.h>".into());
                src.push("#include <stdlib.h>".into());
                src.push("#include <klee/klee.h>".into());
            }
            Dialect::Llbmc => {
                src.push("#include <assert.h>".into());
                src.push("#include <stdlib.h>".into());
                src.push(String::new());
                src.push("int __llbmc_nondef_int(void);".into());
                src.push("void __llbmc_assume(_Bool);".into());
            }
            Dialect::Concrete => {
                for h in ["errno", "limits", "stdio", "stdlib"] {
                    src.push(format!("#include <{h}.h>"));
                }
            }
        }
        if self.uses_dist || self.uses_abs {
            src.push(String::new());
        }
        if self.uses_dist {
            src.push("#define dist(a,b) ((a)>(b)?(a)-(b):(b)-(a))".into());
        }
        if self.uses_abs {
            src.push("#define iabs(a) ((a)<0?-(a):(a))".into());
        }
        src.push(String::new());
        if spec.dialect == Dialect::Concrete {
            src.extend(
                [
                    "static int read_arg(const char *s) {",
                    "  char *end;",
                    "  long v;",
                    "  errno = 0;",
                    "  v = strtol(s, &end, 10);",
                    "  if (errno != 0 || end == s || *end != '\\0' || v < INT_MIN || v > INT_MAX)",
                    "    exit(2);",
                    "  return (int)v;",
                    "}",
                    "",
                    "static void reached(void) {",
                    "  printf(\"SAT-REACHED\\n\");",
                    "  exit(0);",
                    "}",
                    "",
                    "int main(int argc, char **argv) {",
                ]
                .map(String::from),
            );
        } else {
            src.push("int main(void) {".into());
        }
        src.extend(self.declarations());
        match spec.dialect {
            Dialect::Klee => {
                src.push("  /* declare variables symbolic */".into());
                for (id, c) in &self.names {
                    src.push(format!("  klee_make_symbolic(&{c},sizeof({c}),\"{id}\");"));
                }
            }
            Dialect::Llbmc => {
                src.push("  /* declare variables symbolic */".into());
                for (_, c) in &self.names {
                    src.push(format!("  {c} = __llbmc_nondef_int();"));
                }
            }
            Dialect::Concrete => {
                src.push("  /* read variable values from the command line */".into());
                src.push(format!("  if (argc != {}) exit(2);", self.names.len() + 1));
                for (i, (_, c)) in self.names.iter().enumerate() {
                    src.push(format!("  {c} = read_arg(argv[{}]);", i + 1));
                }
            }
        }
        src.push("  /* enforce variable domains */".into());
        src.extend(domain_lines);
        src.push("  /* constraints */".into());
        src.extend(body);
        if !guarded {
            src.push(self.distinguished(2));
        }
        src.push(match spec.dialect {
            // reached() exits 0, so falling off the end means rejection
            Dialect::Concrete => "  return 1;".into(),
            Dialect::Klee | Dialect::Llbmc => "  return 0;".into(),
        });
        src.push("}".into());

        let mut source = src.join("\n");
        source.push('\n');
        Ok(GeneratedProgram {
            line_count: source.lines().count(),
            source,
            spec,
            version_label: spec.label(),
            statement_count: stmts.len(),
            var_map: self.names,
        })
    }
}

/// Lines between the `/* constraints */` marker and the distinguished
/// point: the part of a program that actually encodes the constraints.
pub fn encoding_section(source: &str) -> Vec<&str> {
    source
        .lines()
        .skip_while(|l| l.trim() != "/* constraints */")
        .skip(1)
        .take_while(|l| !l.ends_with(DISTINGUISHED_COMMENT))
        .collect()
}
