//! Expression trees for intensional constraints.

use std::fmt;

use crate::model::Arg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    /// `|a - b|`
    Dist,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Not => "not",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "neg" => UnaryOp::Neg,
            "abs" => UnaryOp::Abs,
            "not" => UnaryOp::Not,
            _ => return None,
        })
    }
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 12] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Eq,
        BinaryOp::Ne,
        BinaryOp::Lt,
        BinaryOp::Le,
        BinaryOp::Gt,
        BinaryOp::Ge,
        BinaryOp::And,
        BinaryOp::Or,
        BinaryOp::Dist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Eq => "eq",
            BinaryOp::Ne => "ne",
            BinaryOp::Lt => "lt",
            BinaryOp::Le => "le",
            BinaryOp::Gt => "gt",
            BinaryOp::Ge => "ge",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
            BinaryOp::Dist => "dist",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }

    /// Operators that XCSP3 allows with more than two operands; they are
    /// folded left into binary nodes.
    pub fn is_variadic(self) -> bool {
        matches!(
            self,
            BinaryOp::Add | BinaryOp::Mul | BinaryOp::And | BinaryOp::Or
        )
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::And | BinaryOp::Or)
    }
}

/// An intensional relation in XCSP3 functional form.
///
/// `Placeholder(i)` stands for the `%i` slot of a group template and never
/// appears in an instantiated constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum IntensionExpr {
    Var(String),
    Const(i64),
    Placeholder(usize),
    Unary(UnaryOp, Box<IntensionExpr>),
    Binary(BinaryOp, Box<IntensionExpr>, Box<IntensionExpr>),
}

impl IntensionExpr {
    pub fn var(id: impl Into<String>) -> Self {
        IntensionExpr::Var(id.into())
    }

    pub fn unary(op: UnaryOp, e: IntensionExpr) -> Self {
        IntensionExpr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, l: IntensionExpr, r: IntensionExpr) -> Self {
        IntensionExpr::Binary(op, Box::new(l), Box::new(r))
    }

    /// True when the node denotes a 0/1 truth value.
    pub fn is_boolean(&self) -> bool {
        match self {
            IntensionExpr::Unary(UnaryOp::Not, _) => true,
            IntensionExpr::Binary(op, _, _) => op.is_comparison() || op.is_logical(),
            _ => false,
        }
    }

    /// Variables in first-occurrence order, without repeats.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            IntensionExpr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            IntensionExpr::Const(_) | IntensionExpr::Placeholder(_) => {}
            IntensionExpr::Unary(_, e) => e.collect_vars(out),
            IntensionExpr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Number of slots a template built from this expression needs
    /// (highest placeholder index plus one).
    pub fn placeholder_count(&self) -> usize {
        match self {
            IntensionExpr::Placeholder(i) => i + 1,
            IntensionExpr::Var(_) | IntensionExpr::Const(_) => 0,
            IntensionExpr::Unary(_, e) => e.placeholder_count(),
            IntensionExpr::Binary(_, l, r) => l.placeholder_count().max(r.placeholder_count()),
        }
    }

    pub fn has_placeholders(&self) -> bool {
        self.placeholder_count() > 0
    }

    /// Replaces `%i` with `args[i]`.
    pub fn substitute(&self, args: &[Arg]) -> Result<IntensionExpr, usize> {
        Ok(match self {
            IntensionExpr::Placeholder(i) => match args.get(*i) {
                Some(Arg::Var(v)) => IntensionExpr::Var(v.clone()),
                Some(Arg::Const(c)) => IntensionExpr::Const(*c),
                None => return Err(*i),
            },
            IntensionExpr::Var(_) | IntensionExpr::Const(_) => self.clone(),
            IntensionExpr::Unary(op, e) => IntensionExpr::unary(*op, e.substitute(args)?),
            IntensionExpr::Binary(op, l, r) => {
                IntensionExpr::binary(*op, l.substitute(args)?, r.substitute(args)?)
            }
        })
    }

    /// Renames every variable through `f`.
    pub fn map_vars<E>(
        &self,
        f: &mut impl FnMut(&str) -> Result<String, E>,
    ) -> Result<IntensionExpr, E> {
        Ok(match self {
            IntensionExpr::Var(v) => IntensionExpr::Var(f(v)?),
            IntensionExpr::Const(_) | IntensionExpr::Placeholder(_) => self.clone(),
            IntensionExpr::Unary(op, e) => IntensionExpr::unary(*op, e.map_vars(f)?),
            IntensionExpr::Binary(op, l, r) => {
                IntensionExpr::binary(*op, l.map_vars(f)?, r.map_vars(f)?)
            }
        })
    }

    /// Splits a top-level chain of `and` nodes into its conjuncts.
    pub fn conjuncts(&self) -> Vec<&IntensionExpr> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            match e {
                IntensionExpr::Binary(BinaryOp::And, l, r) => {
                    stack.push(r);
                    stack.push(l);
                }
                other => out.push(other),
            }
        }
        out
    }

    /// Every integer literal in the tree.
    pub fn constants(&self) -> Vec<i64> {
        match self {
            IntensionExpr::Const(c) => vec![*c],
            IntensionExpr::Var(_) | IntensionExpr::Placeholder(_) => Vec::new(),
            IntensionExpr::Unary(_, e) => e.constants(),
            IntensionExpr::Binary(_, l, r) => {
                let mut v = l.constants();
                v.extend(r.constants());
                v
            }
        }
    }
}

/// Prints the XCSP3 functional syntax, e.g. `eq(y0,dist(x0,x1))`.
impl fmt::Display for IntensionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensionExpr::Var(v) => f.write_str(v),
            IntensionExpr::Const(c) => write!(f, "{c}"),
            IntensionExpr::Placeholder(i) => write!(f, "%{i}"),
            IntensionExpr::Unary(op, e) => write!(f, "{}({e})", op.name()),
            IntensionExpr::Binary(op, l, r) => write!(f, "{}({l},{r})", op.name()),
        }
    }
}
