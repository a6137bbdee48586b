//! Reader for the XCSP3 subset used by the benchmark families.
//!
//! Accepted: `<var>`/`<array>` with integer domains, `<group>`,
//! `<extension>` (`<supports>`/`<conflicts>`), `<intension>` and
//! `<allDifferent>`. Other XCSP3 elements are rejected with an
//! "unsupported" diagnostic that names them; anything else is an unknown
//! element. Nothing is silently dropped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use roxmltree::{Document, Node};
use thiserror::Error;

use crate::expr::{BinaryOp, IntensionExpr, UnaryOp};
use crate::model::{
    Arg, Constraint, ConstraintGroup, ConstraintTemplate, CspInstance, Domain, ModelError,
    Polarity, Slot, VariableDecl,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    MalformedXml,
    UnknownElement,
    Unsupported,
    ArityMismatch,
    EmptyDomain,
    UndeclaredVariable,
    Syntax,
    Invalid,
    Io,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::MalformedXml => "malformed-xml",
            DiagnosticKind::UnknownElement => "unknown-element",
            DiagnosticKind::Unsupported => "unsupported",
            DiagnosticKind::ArityMismatch => "arity",
            DiagnosticKind::EmptyDomain => "empty-domain",
            DiagnosticKind::UndeclaredVariable => "undeclared-variable",
            DiagnosticKind::Syntax => "syntax",
            DiagnosticKind::Invalid => "invalid",
            DiagnosticKind::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    /// Element path such as `/instance/constraints/group[2]/args`.
    pub path: String,
    /// 1-based source line, 0 when unknown.
    pub line: u32,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{sev}[{}] {}:{}: {}",
            self.kind.as_str(),
            self.path,
            self.line,
            self.message
        )
    }
}

/// A rejected document. Always carries at least one error diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseFailure {
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl ParseFailure {
    pub fn errors(&self) -> impl Iterator<Item = &ParseDiagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }

    pub fn has_kind(&self, kind: DiagnosticKind) -> bool {
        self.errors().any(|d| d.kind == kind)
    }
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub instance: CspInstance,
    pub warnings: Vec<ParseDiagnostic>,
}

/// Parses an XCSP3 document into an instance named `instance`.
pub fn parse_document(xml: &str) -> Result<CspInstance, ParseFailure> {
    parse_document_named(xml, "instance").map(|p| p.instance)
}

/// Parses an XCSP3 document, keeping non-fatal warnings.
pub fn parse_document_named(xml: &str, name: &str) -> Result<Parsed, ParseFailure> {
    let doc = match Document::parse(xml) {
        Ok(doc) => doc,
        Err(e) => {
            let pos = e.pos();
            return Err(ParseFailure {
                diagnostics: vec![ParseDiagnostic {
                    severity: Severity::Error,
                    kind: DiagnosticKind::MalformedXml,
                    path: "/".into(),
                    line: pos.row,
                    message: e.to_string(),
                }],
            });
        }
    };
    let mut reader = Reader::new(&doc);
    let built = reader.read_instance(name);
    let has_errors = reader
        .diags
        .iter()
        .any(|d| d.severity == Severity::Error);
    match built {
        Some(instance) if !has_errors => Ok(Parsed {
            instance,
            warnings: reader.diags,
        }),
        _ => {
            if !has_errors {
                reader.error(DiagnosticKind::Invalid, "/", 0, "document was rejected");
            }
            Err(ParseFailure {
                diagnostics: reader.diags,
            })
        }
    }
}

/// Reads and parses a file; the instance is named after the file stem.
pub fn parse_file(path: impl AsRef<Path>) -> Result<Parsed, ParseFailure> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ParseFailure {
        diagnostics: vec![ParseDiagnostic {
            severity: Severity::Error,
            kind: DiagnosticKind::Io,
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        }],
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into());
    parse_document_named(&text, &name)
}

/// XCSP3 constraint elements this reader knows about but does not handle.
const UNSUPPORTED_CONSTRAINTS: &[&str] = &[
    "block",
    "slide",
    "seqbin",
    "sum",
    "count",
    "nValues",
    "cardinality",
    "element",
    "channel",
    "maximum",
    "minimum",
    "ordered",
    "lex",
    "allEqual",
    "allDistinct",
    "regular",
    "grammar",
    "mdd",
    "smart",
    "circuit",
    "noOverlap",
    "cumulative",
    "stretch",
    "instantiation",
    "precedence",
    "knapsack",
    "binPacking",
    "flow",
    "clause",
    "nooverlap",
];

const UNSUPPORTED_TOP: &[&str] = &["objectives", "annotations"];

struct Reader<'a, 'input> {
    doc: &'a Document<'input>,
    diags: Vec<ParseDiagnostic>,
    /// Array id to dimension sizes.
    arrays: HashMap<String, Vec<usize>>,
    scalars: HashSet<String>,
    flat_ids: HashSet<String>,
    flattening: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy)]
enum IndexSpec {
    All,
    One(usize),
    Range(usize, usize),
}

fn text_of(node: Node) -> String {
    node.children()
        .filter(|c| c.is_text())
        .filter_map(|c| c.text())
        .collect::<Vec<_>>()
        .join(" ")
}

fn element_children<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(|c| c.is_element())
}

fn path_of(node: Node) -> String {
    let mut parts = Vec::new();
    let mut cur = Some(node);
    while let Some(n) = cur {
        if n.is_element() {
            let name = n.tag_name().name();
            let same: Vec<Node> = n
                .parent()
                .map(|p| {
                    element_children(p)
                        .filter(|s| s.tag_name().name() == name)
                        .collect()
                })
                .unwrap_or_default();
            if same.len() > 1 {
                let pos = same.iter().position(|s| *s == n).unwrap_or(0) + 1;
                parts.push(format!("{name}[{pos}]"));
            } else {
                parts.push(name.to_string());
            }
        }
        cur = n.parent();
    }
    parts.reverse();
    format!("/{}", parts.join("/"))
}

fn parse_int(tok: &str) -> Option<i64> {
    tok.trim().parse::<i64>().ok()
}

/// Splits a reference like `x[0][1..2]` into its base and index specs.
fn split_ref(tok: &str) -> Option<(&str, Vec<IndexSpec>)> {
    let (base, mut rest) = match tok.find('[') {
        Some(i) => (&tok[..i], &tok[i..]),
        None => (tok, ""),
    };
    if base.is_empty()
        || !base.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        || !base.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return None;
    }
    let mut specs = Vec::new();
    while !rest.is_empty() {
        let close = rest.find(']')?;
        if !rest.starts_with('[') {
            return None;
        }
        let inner = &rest[1..close];
        let spec = if inner.is_empty() {
            IndexSpec::All
        } else if let Some((a, b)) = inner.split_once("..") {
            IndexSpec::Range(a.parse().ok()?, b.parse().ok()?)
        } else {
            IndexSpec::One(inner.parse().ok()?)
        };
        specs.push(spec);
        rest = &rest[close + 1..];
    }
    Some((base, specs))
}

fn flat_name(base: &str, idx: &[usize]) -> String {
    let joined: Vec<String> = idx.iter().map(usize::to_string).collect();
    format!("{base}{}", joined.join("_"))
}

fn original_name(base: &str, idx: &[usize]) -> String {
    let mut s = base.to_string();
    for i in idx {
        s.push_str(&format!("[{i}]"));
    }
    s
}

/// Parses a domain such as `0 1`, `0..9` or `1 3..5 8`.
fn parse_domain(text: &str) -> Result<Domain, String> {
    let mut ranges = Vec::new();
    for tok in text.split_whitespace() {
        if let Some((a, b)) = tok.split_once("..") {
            let lo = parse_int(a).ok_or_else(|| format!("bad range bound `{a}`"))?;
            let hi = parse_int(b).ok_or_else(|| format!("bad range bound `{b}`"))?;
            ranges.push((lo, hi));
        } else {
            let v = parse_int(tok).ok_or_else(|| format!("bad domain value `{tok}`"))?;
            ranges.push((v, v));
        }
    }
    Ok(Domain::from_ranges(ranges))
}

enum TupleError {
    Syntax(String),
    Starred,
    Arity { index: usize, found: usize },
}

/// Parses `(0,0,0) (0,1,0)`; commas and whitespace are both accepted as
/// separators. Unary tables may also be bare values and ranges.
fn parse_tuples(text: &str, arity: usize) -> Result<Vec<Vec<i64>>, TupleError> {
    let trimmed = text.trim();
    if arity == 1 && !trimmed.contains('(') {
        let mut out = Vec::new();
        for tok in trimmed.split_whitespace() {
            if tok == "*" {
                return Err(TupleError::Starred);
            }
            if let Some((a, b)) = tok.split_once("..") {
                let (lo, hi) = parse_int(a)
                    .zip(parse_int(b))
                    .ok_or_else(|| TupleError::Syntax(format!("bad range `{tok}`")))?;
                out.extend((lo..=hi).map(|v| vec![v]));
            } else {
                let v = parse_int(tok)
                    .ok_or_else(|| TupleError::Syntax(format!("bad value `{tok}`")))?;
                out.push(vec![v]);
            }
        }
        return Ok(out);
    }
    let mut out = Vec::new();
    let mut rest = trimmed;
    loop {
        rest = rest.trim_start_matches(|c: char| c.is_whitespace() || c == ',');
        if rest.is_empty() {
            break;
        }
        if !rest.starts_with('(') {
            let bad: String = rest.chars().take(12).collect();
            return Err(TupleError::Syntax(format!("expected `(` before `{bad}`")));
        }
        let close = rest
            .find(')')
            .ok_or_else(|| TupleError::Syntax("unterminated tuple".into()))?;
        let inner = &rest[1..close];
        if inner.contains('(') {
            return Err(TupleError::Syntax("nested `(` in tuple".into()));
        }
        let mut tuple = Vec::new();
        for tok in inner
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            if tok == "*" {
                return Err(TupleError::Starred);
            }
            tuple.push(
                parse_int(tok).ok_or_else(|| TupleError::Syntax(format!("bad value `{tok}`")))?,
            );
        }
        if tuple.len() != arity {
            return Err(TupleError::Arity {
                index: out.len(),
                found: tuple.len(),
            });
        }
        out.push(tuple);
        rest = &rest[close + 1..];
    }
    Ok(out)
}

impl<'a, 'input> Reader<'a, 'input> {
    fn new(doc: &'a Document<'input>) -> Self {
        Reader {
            doc,
            diags: Vec::new(),
            arrays: HashMap::new(),
            scalars: HashSet::new(),
            flat_ids: HashSet::new(),
            flattening: BTreeMap::new(),
        }
    }

    fn line(&self, node: Node) -> u32 {
        self.doc.text_pos_at(node.range().start).row
    }

    fn error(&mut self, kind: DiagnosticKind, path: &str, line: u32, msg: impl Into<String>) {
        self.diags.push(ParseDiagnostic {
            severity: Severity::Error,
            kind,
            path: path.to_string(),
            line,
            message: msg.into(),
        });
    }

    fn error_at(&mut self, node: Node, kind: DiagnosticKind, msg: impl Into<String>) {
        let (path, line) = (path_of(node), self.line(node));
        self.error(kind, &path, line, msg);
    }

    fn warn_at(&mut self, node: Node, kind: DiagnosticKind, msg: impl Into<String>) {
        self.diags.push(ParseDiagnostic {
            severity: Severity::Warning,
            kind,
            path: path_of(node),
            line: self.line(node),
            message: msg.into(),
        });
    }

    fn reject_element(&mut self, node: Node, known_unsupported: &[&str]) {
        let name = node.tag_name().name();
        if known_unsupported.contains(&name) || UNSUPPORTED_CONSTRAINTS.contains(&name) {
            self.error_at(
                node,
                DiagnosticKind::Unsupported,
                format!("unsupported feature: <{name}>"),
            );
        } else {
            self.error_at(
                node,
                DiagnosticKind::UnknownElement,
                format!("unknown element <{name}>"),
            );
        }
    }

    fn read_instance(&mut self, name: &str) -> Option<CspInstance> {
        let root = self.doc.root_element();
        if root.tag_name().name() != "instance" {
            let tag = root.tag_name().name().to_string();
            self.error_at(
                root,
                DiagnosticKind::UnknownElement,
                format!("expected <instance> root, found <{tag}>"),
            );
            return None;
        }
        match root.attribute("format") {
            Some("XCSP3") => {}
            other => self.warn_at(
                root,
                DiagnosticKind::Invalid,
                format!("format attribute is {other:?}, expected \"XCSP3\""),
            ),
        }
        match root.attribute("type") {
            None | Some("CSP") => {}
            Some("COP") => self.error_at(
                root,
                DiagnosticKind::Unsupported,
                "unsupported feature: COP instances (<objectives>)",
            ),
            Some(other) => self.error_at(
                root,
                DiagnosticKind::Unsupported,
                format!("unsupported feature: instance type {other}"),
            ),
        }

        let mut variables = Vec::new();
        let mut groups = Vec::new();
        let mut seen_vars = false;
        let mut seen_cons = false;
        for child in element_children(root) {
            match child.tag_name().name() {
                "variables" if !seen_vars => {
                    seen_vars = true;
                    self.read_variables(child, &mut variables);
                }
                "constraints" if !seen_cons => {
                    if !seen_vars {
                        self.error_at(
                            child,
                            DiagnosticKind::Invalid,
                            "<constraints> appears before <variables>",
                        );
                    }
                    seen_cons = true;
                    self.read_constraints(child, &mut groups);
                }
                "variables" | "constraints" => self.error_at(
                    child,
                    DiagnosticKind::Invalid,
                    format!("duplicate <{}> section", child.tag_name().name()),
                ),
                _ => self.reject_element(child, UNSUPPORTED_TOP),
            }
        }
        if !seen_vars {
            self.error_at(root, DiagnosticKind::Invalid, "missing <variables> section");
        }
        if self.diags.iter().any(|d| d.severity == Severity::Error) {
            return None;
        }
        match CspInstance::new(name, variables, groups) {
            Ok(inst) => Some(inst.with_flattening(std::mem::take(&mut self.flattening))),
            Err(e) => {
                let kind = match e {
                    ModelError::UndeclaredVariable(_) => DiagnosticKind::UndeclaredVariable,
                    ModelError::TupleArity { .. } | ModelError::ArgsArity { .. } => {
                        DiagnosticKind::ArityMismatch
                    }
                    ModelError::EmptyDomain(_) => DiagnosticKind::EmptyDomain,
                    _ => DiagnosticKind::Invalid,
                };
                self.error(kind, "/instance", self.line(root), e.to_string());
                None
            }
        }
    }

    fn declare(&mut self, node: Node, flat: String, original: String, domain: &Domain, out: &mut Vec<VariableDecl>) {
        if !self.flat_ids.insert(flat.clone()) {
            self.error_at(
                node,
                DiagnosticKind::Invalid,
                format!("identifier `{flat}` (from `{original}`) is declared more than once"),
            );
            return;
        }
        if flat != original {
            self.flattening.insert(original, flat.clone());
        }
        out.push(VariableDecl::new(flat, domain.clone()));
    }

    fn read_domain(&mut self, node: Node) -> Option<Domain> {
        match parse_domain(&text_of(node)) {
            Ok(d) if d.is_empty() => {
                self.error_at(node, DiagnosticKind::EmptyDomain, "empty domain");
                None
            }
            Ok(d) => Some(d),
            Err(msg) => {
                self.error_at(node, DiagnosticKind::Syntax, msg);
                None
            }
        }
    }

    fn read_variables(&mut self, node: Node, out: &mut Vec<VariableDecl>) {
        for child in element_children(node) {
            let tag = child.tag_name().name();
            if tag != "var" && tag != "array" {
                self.reject_element(child, &[]);
                continue;
            }
            let Some(id) = child.attribute("id").map(str::to_string) else {
                self.error_at(child, DiagnosticKind::Invalid, format!("<{tag}> without id"));
                continue;
            };
            if split_ref(&id).is_none_or(|(_, specs)| !specs.is_empty()) {
                self.error_at(child, DiagnosticKind::Syntax, format!("invalid identifier `{id}`"));
                continue;
            }
            if child.attribute("as").is_some() {
                self.error_at(
                    child,
                    DiagnosticKind::Unsupported,
                    "unsupported feature: variable aliases (as=)",
                );
                continue;
            }
            if let Some(t) = child.attribute("type").filter(|t| *t != "integer") {
                self.error_at(
                    child,
                    DiagnosticKind::Unsupported,
                    format!("unsupported feature: variable type {t}"),
                );
                continue;
            }
            if let Some(inner) = element_children(child).next() {
                let name = inner.tag_name().name();
                self.error_at(
                    inner,
                    DiagnosticKind::Unsupported,
                    format!("unsupported feature: <{name}> inside <{tag}>"),
                );
                continue;
            }
            if self.scalars.contains(&id) || self.arrays.contains_key(&id) {
                self.error_at(child, DiagnosticKind::Invalid, format!("`{id}` declared twice"));
                continue;
            }
            let Some(domain) = self.read_domain(child) else {
                continue;
            };
            if tag == "var" {
                self.scalars.insert(id.clone());
                self.declare(child, id.clone(), id, &domain, out);
                continue;
            }
            let dims = child.attribute("size").and_then(|s| {
                let (_, specs) = split_ref(&format!("a{s}"))?;
                specs
                    .into_iter()
                    .map(|sp| match sp {
                        IndexSpec::One(n) if n > 0 => Some(n),
                        _ => None,
                    })
                    .collect::<Option<Vec<usize>>>()
                    .filter(|d| !d.is_empty())
            });
            let Some(dims) = dims else {
                self.error_at(
                    child,
                    DiagnosticKind::Syntax,
                    format!("array `{id}` needs a size like \"[6]\" or \"[3][4]\""),
                );
                continue;
            };
            self.arrays.insert(id.clone(), dims.clone());
            for idx in cartesian(&dims.iter().map(|&d| (0, d - 1)).collect::<Vec<_>>()) {
                self.declare(child, flat_name(&id, &idx), original_name(&id, &idx), &domain, out);
            }
        }
    }

    /// Expands a variable reference into flat ids.
    fn resolve_ref(&self, tok: &str) -> Result<Vec<String>, (DiagnosticKind, String)> {
        let Some((base, specs)) = split_ref(tok) else {
            return Err((DiagnosticKind::Syntax, format!("invalid reference `{tok}`")));
        };
        if let Some(dims) = self.arrays.get(base) {
            if specs.len() != dims.len() {
                return Err((
                    DiagnosticKind::UndeclaredVariable,
                    format!(
                        "`{tok}` indexes {} dimension(s) of array `{base}` with {} dimension(s)",
                        specs.len(),
                        dims.len()
                    ),
                ));
            }
            let mut bounds = Vec::with_capacity(dims.len());
            for (spec, &d) in specs.iter().zip(dims) {
                let (lo, hi) = match *spec {
                    IndexSpec::All => (0, d - 1),
                    IndexSpec::One(i) => (i, i),
                    IndexSpec::Range(a, b) => (a, b),
                };
                if lo > hi || hi >= d {
                    return Err((
                        DiagnosticKind::UndeclaredVariable,
                        format!("`{tok}` is out of bounds for array `{base}`"),
                    ));
                }
                bounds.push((lo, hi));
            }
            Ok(cartesian(&bounds)
                .iter()
                .map(|idx| flat_name(base, idx))
                .collect())
        } else if self.scalars.contains(base) && specs.is_empty() {
            Ok(vec![base.to_string()])
        } else {
            Err((
                DiagnosticKind::UndeclaredVariable,
                format!("undeclared variable `{tok}`"),
            ))
        }
    }

    fn read_constraints(&mut self, node: Node, out: &mut Vec<ConstraintGroup>) {
        for (i, child) in element_children(node).enumerate() {
            let group = match child.tag_name().name() {
                "group" => self.read_group(child, i + 1),
                "extension" | "intension" | "allDifferent" => self
                    .read_template(child, false)
                    .and_then(|t| self.concrete(child, t))
                    .map(ConstraintGroup::Single),
                _ => {
                    self.reject_element(child, &[]);
                    None
                }
            };
            out.extend(group);
        }
    }

    /// A top-level constraint has no placeholders, so the template
    /// instantiates with an empty argument list.
    fn concrete(&mut self, node: Node, t: ConstraintTemplate) -> Option<Constraint> {
        let g = ConstraintGroup::Template {
            name: path_of(node),
            template: t,
            args: vec![vec![]],
        };
        match g.instantiate() {
            Ok(mut cs) => cs.pop(),
            Err(e) => {
                self.error_at(node, DiagnosticKind::Invalid, e.to_string());
                None
            }
        }
    }

    fn read_group(&mut self, node: Node, ordinal: usize) -> Option<ConstraintGroup> {
        let name = node
            .attribute("id")
            .map(str::to_string)
            .unwrap_or_else(|| format!("group#{ordinal}"));
        let mut children = element_children(node);
        let Some(first) = children.next() else {
            self.error_at(node, DiagnosticKind::Invalid, "empty <group>");
            return None;
        };
        let template = match first.tag_name().name() {
            "extension" | "intension" | "allDifferent" => self.read_template(first, true),
            _ => {
                self.reject_element(first, &[]);
                None
            }
        };
        let expected = template.as_ref().map(ConstraintTemplate::placeholder_count);
        let mut args = Vec::new();
        for a in children {
            if a.tag_name().name() != "args" {
                self.reject_element(a, &[]);
                continue;
            }
            let mut row = Vec::new();
            let mut ok = true;
            for tok in text_of(a).split_whitespace() {
                if let Some(c) = parse_int(tok) {
                    row.push(Arg::Const(c));
                    continue;
                }
                match self.resolve_ref(tok) {
                    Ok(ids) => row.extend(ids.into_iter().map(Arg::Var)),
                    Err((kind, msg)) => {
                        self.error_at(a, kind, msg);
                        ok = false;
                    }
                }
            }
            if !ok {
                continue;
            }
            if let Some(expected) = expected.filter(|&e| e != row.len()) {
                self.error_at(
                    a,
                    DiagnosticKind::ArityMismatch,
                    format!(
                        "group `{name}`: <args> has {} entries, template expects {expected}",
                        row.len()
                    ),
                );
                continue;
            }
            args.push(row);
        }
        if args.is_empty() {
            self.error_at(node, DiagnosticKind::Invalid, format!("group `{name}` has no <args>"));
            return None;
        }
        Some(ConstraintGroup::Template {
            name,
            template: template?,
            args,
        })
    }

    /// Reads the scope tokens of `<list>`/`<allDifferent>`; `%i` slots are
    /// only legal inside groups.
    fn read_slots(&mut self, node: Node, text: &str, in_group: bool) -> Option<Vec<Slot>> {
        let mut slots = Vec::new();
        let mut ok = true;
        for tok in text.split_whitespace() {
            if let Some(rest) = tok.strip_prefix('%') {
                match rest.parse::<usize>() {
                    Ok(i) if in_group => slots.push(Slot::Placeholder(i)),
                    Ok(_) => {
                        self.error_at(node, DiagnosticKind::Invalid, format!("`{tok}` outside a <group>"));
                        ok = false;
                    }
                    Err(_) => {
                        self.error_at(
                            node,
                            DiagnosticKind::Unsupported,
                            format!("unsupported feature: placeholder `{tok}`"),
                        );
                        ok = false;
                    }
                }
                continue;
            }
            match self.resolve_ref(tok) {
                Ok(ids) => slots.extend(ids.into_iter().map(Slot::Var)),
                Err((kind, msg)) => {
                    self.error_at(node, kind, msg);
                    ok = false;
                }
            }
        }
        ok.then_some(slots)
    }

    fn read_template(&mut self, node: Node, in_group: bool) -> Option<ConstraintTemplate> {
        match node.tag_name().name() {
            "extension" => self.read_extension(node, in_group),
            "intension" => self.read_intension(node, in_group),
            "allDifferent" => self.read_all_different(node, in_group),
            _ => unreachable!("caller filters tag names"),
        }
    }

    fn read_extension(&mut self, node: Node, in_group: bool) -> Option<ConstraintTemplate> {
        let mut list = None;
        let mut table = None;
        for child in element_children(node) {
            match child.tag_name().name() {
                "list" if list.is_none() => list = Some(child),
                "supports" | "conflicts" if table.is_none() => table = Some(child),
                "list" | "supports" | "conflicts" => {
                    self.error_at(child, DiagnosticKind::Invalid, "duplicate element in <extension>");
                    return None;
                }
                _ => {
                    self.reject_element(child, &[]);
                    return None;
                }
            }
        }
        let (Some(list), Some(table)) = (list, table) else {
            self.error_at(
                node,
                DiagnosticKind::Invalid,
                "<extension> needs a <list> and one of <supports>/<conflicts>",
            );
            return None;
        };
        if element_children(list).next().is_some() {
            self.error_at(list, DiagnosticKind::Unsupported, "unsupported feature: structured <list>");
            return None;
        }
        let scope = self.read_slots(list, &text_of(list), in_group)?;
        if scope.is_empty() {
            self.error_at(list, DiagnosticKind::Invalid, "empty scope");
            return None;
        }
        let polarity = if table.tag_name().name() == "supports" {
            Polarity::Supports
        } else {
            Polarity::Conflicts
        };
        match parse_tuples(&text_of(table), scope.len()) {
            Ok(tuples) => Some(ConstraintTemplate::Extensional {
                scope,
                polarity,
                tuples,
            }),
            Err(TupleError::Starred) => {
                self.error_at(
                    table,
                    DiagnosticKind::Unsupported,
                    "unsupported feature: starred tuples (`*`)",
                );
                None
            }
            Err(TupleError::Arity { index, found }) => {
                self.error_at(
                    table,
                    DiagnosticKind::ArityMismatch,
                    format!(
                        "tuple #{index} has arity {found}, scope has arity {}",
                        scope.len()
                    ),
                );
                None
            }
            Err(TupleError::Syntax(msg)) => {
                self.error_at(table, DiagnosticKind::Syntax, msg);
                None
            }
        }
    }

    fn read_intension(&mut self, node: Node, in_group: bool) -> Option<ConstraintTemplate> {
        let mut text = text_of(node);
        for child in element_children(node) {
            if child.tag_name().name() == "function" && text.trim().is_empty() {
                text = text_of(child);
            } else {
                self.reject_element(child, &[]);
                return None;
            }
        }
        let raw = match parse_intension(&text) {
            Ok(e) => e,
            Err(e) => {
                let kind = match e {
                    ExprSyntaxError::UnknownOperator { .. } => DiagnosticKind::Unsupported,
                    _ => DiagnosticKind::Syntax,
                };
                self.error_at(node, kind, e.to_string());
                return None;
            }
        };
        if !in_group && raw.has_placeholders() {
            self.error_at(node, DiagnosticKind::Invalid, "placeholder outside a <group>");
            return None;
        }
        let resolved = raw.map_vars(&mut |v: &str| match self.resolve_ref(v) {
            Ok(ids) if ids.len() == 1 => Ok(ids.into_iter().next().unwrap()),
            Ok(_) => Err((
                DiagnosticKind::Invalid,
                format!("`{v}` denotes several variables inside an expression"),
            )),
            Err(e) => Err(e),
        });
        match resolved {
            Ok(expr) => Some(ConstraintTemplate::Intensional { expr }),
            Err((kind, msg)) => {
                self.error_at(node, kind, msg);
                None
            }
        }
    }

    fn read_all_different(&mut self, node: Node, in_group: bool) -> Option<ConstraintTemplate> {
        let mut text = text_of(node);
        let mut lists = 0;
        for child in element_children(node) {
            match child.tag_name().name() {
                "list" => {
                    lists += 1;
                    if lists > 1 {
                        self.error_at(
                            child,
                            DiagnosticKind::Unsupported,
                            "unsupported feature: allDifferent over several lists",
                        );
                        return None;
                    }
                    text = text_of(child);
                }
                "matrix" | "except" => {
                    let name = child.tag_name().name();
                    self.error_at(
                        child,
                        DiagnosticKind::Unsupported,
                        format!("unsupported feature: <{name}> in <allDifferent>"),
                    );
                    return None;
                }
                _ => {
                    self.reject_element(child, &[]);
                    return None;
                }
            }
        }
        let scope = self.read_slots(node, &text, in_group)?;
        if scope.len() < 2 {
            self.error_at(node, DiagnosticKind::Invalid, "allDifferent needs at least two variables");
            return None;
        }
        Some(ConstraintTemplate::AllDifferent { scope })
    }
}

fn cartesian(bounds: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in bounds {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (lo..=hi).map(move |i| {
                    let mut p = prefix.clone();
                    p.push(i);
                    p
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprSyntaxError {
    #[error("empty expression")]
    Empty,
    #[error("unknown operator `{name}` at offset {pos}")]
    UnknownOperator { name: String, pos: usize },
    #[error("unbalanced parentheses at offset {pos}")]
    Unbalanced { pos: usize },
    #[error("unexpected `{found}` at offset {pos}")]
    Unexpected { found: String, pos: usize },
    #[error("`{op}` takes {expected} operand(s), got {found}")]
    Arity {
        op: String,
        expected: &'static str,
        found: usize,
    },
    #[error("invalid integer `{0}`")]
    BadNumber(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    Comma,
    Int(i64),
    Slot(usize),
    Ident(String),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ExprSyntaxError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            _ if c.is_whitespace() => i += 1,
            '(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            ',' => {
                out.push((i, Tok::Comma));
                i += 1;
            }
            '%' => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let digits = &text[start + 1..i];
                let n = digits.parse().map_err(|_| ExprSyntaxError::Unexpected {
                    found: text[start..(i + 1).min(text.len())].to_string(),
                    pos: start,
                })?;
                out.push((start, Tok::Slot(n)));
            }
            '-' | '+' | '0'..='9' => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let lit = &text[start..i];
                let n = lit
                    .parse()
                    .map_err(|_| ExprSyntaxError::BadNumber(lit.to_string()))?;
                out.push((start, Tok::Int(n)));
            }
            _ if c.is_ascii_alphabetic() => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'[' | b']' | b'.'))
                {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ExprSyntaxError::Unexpected {
                    found: c.to_string(),
                    pos: start,
                })
            }
        }
    }
    Ok(out)
}

struct ExprParser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl ExprParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn expr(&mut self) -> Result<IntensionExpr, ExprSyntaxError> {
        let at = self.offset();
        let Some((_, tok)) = self.toks.get(self.pos).cloned() else {
            return Err(if self.toks.is_empty() {
                ExprSyntaxError::Empty
            } else {
                ExprSyntaxError::Unbalanced { pos: at }
            });
        };
        self.pos += 1;
        match tok {
            Tok::Int(n) => Ok(IntensionExpr::Const(n)),
            Tok::Slot(i) => Ok(IntensionExpr::Placeholder(i)),
            Tok::Ident(name) if self.peek() == Some(&Tok::Open) => {
                self.pos += 1;
                let mut operands = vec![self.expr()?];
                loop {
                    match self.peek() {
                        Some(Tok::Comma) => {
                            self.pos += 1;
                            operands.push(self.expr()?);
                        }
                        Some(Tok::Close) => {
                            self.pos += 1;
                            break;
                        }
                        None => return Err(ExprSyntaxError::Unbalanced { pos: self.end }),
                        Some(t) => {
                            return Err(ExprSyntaxError::Unexpected {
                                found: format!("{t:?}"),
                                pos: self.offset(),
                            })
                        }
                    }
                }
                build_node(&name, at, operands)
            }
            Tok::Ident(name) => Ok(IntensionExpr::Var(name)),
            Tok::Close => Err(ExprSyntaxError::Unbalanced { pos: at }),
            Tok::Open | Tok::Comma => Err(ExprSyntaxError::Unexpected {
                found: if tok == Tok::Open { "(" } else { "," }.into(),
                pos: at,
            }),
        }
    }
}

fn build_node(
    name: &str,
    pos: usize,
    mut operands: Vec<IntensionExpr>,
) -> Result<IntensionExpr, ExprSyntaxError> {
    let arity_err = |expected, found| ExprSyntaxError::Arity {
        op: name.to_string(),
        expected,
        found,
    };
    if let Some(op) = UnaryOp::from_name(name) {
        if operands.len() != 1 {
            return Err(arity_err("1", operands.len()));
        }
        let e = operands.pop().unwrap();
        // abs(sub(a,b)) is the long spelling of dist(a,b)
        if let (UnaryOp::Abs, IntensionExpr::Binary(BinaryOp::Sub, l, r)) = (op, &e) {
            return Ok(IntensionExpr::Binary(BinaryOp::Dist, l.clone(), r.clone()));
        }
        return Ok(IntensionExpr::unary(op, e));
    }
    let Some(op) = BinaryOp::from_name(name) else {
        return Err(ExprSyntaxError::UnknownOperator {
            name: name.to_string(),
            pos,
        });
    };
    let ok = if op.is_variadic() {
        operands.len() >= 2
    } else {
        operands.len() == 2
    };
    if !ok {
        let expected = if op.is_variadic() { "2 or more" } else { "2" };
        return Err(arity_err(expected, operands.len()));
    }
    let mut it = operands.into_iter();
    let first = it.next().unwrap();
    Ok(it.fold(first, |acc, e| IntensionExpr::binary(op, acc, e)))
}

/// Parses XCSP3 functional syntax such as `eq(%0,dist(%1,%2))`.
///
/// Variable names are kept verbatim (`x[0]` stays `x[0]`); placeholder
/// indices are checked against the args arity only at instantiation.
pub fn parse_intension(text: &str) -> Result<IntensionExpr, ExprSyntaxError> {
    let toks = tokenize(text)?;
    let mut p = ExprParser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if let Some((pos, t)) = p.toks.get(p.pos) {
        return Err(match t {
            Tok::Close => ExprSyntaxError::Unbalanced { pos: *pos },
            other => ExprSyntaxError::Unexpected {
                found: format!("{other:?}"),
                pos: *pos,
            },
        });
    }
    Ok(e)
}
