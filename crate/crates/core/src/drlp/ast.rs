//! Syntax tree for DRLP scripts.
//!
//! The tree is kept close to the surface syntax (loops, `with` blocks, call
//! statements, comparison chains) so that it can be pretty-printed and
//! re-parsed. Lowering to linear constraints happens in [`super::eval`].

use serde::{Deserialize, Serialize};

/// Relation domain of a loop or `with` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// `range`: segments are joined with And.
    Range,
    /// `orange`: segments are joined with Or.
    Orange,
}

impl Domain {
    pub fn keyword(self) -> &'static str {
        match self {
            Domain::Range => "range",
            Domain::Orange => "orange",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
    /// `~=` / `≈`: two-sided tolerance bound using the script's `y_eps`.
    Approx,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Approx => "~=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Which side of the network an io object refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Io {
    X,
    Y,
}

impl Io {
    pub fn name(self) -> &'static str {
        match self {
            Io::X => "x",
            Io::Y => "y",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Subscript {
    Index(Expr),
    Slice {
        start: Option<Expr>,
        stop: Option<Expr>,
        step: Option<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Ident(String),
    List(Vec<Expr>),
    IoRef {
        io: Io,
        subscripts: Vec<Subscript>,
    },
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

/// A chain `e0 op1 e1 op2 e2 ...`, meaning `(e0 op1 e1) and (e1 op2 e2) and ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: Expr,
    pub rest: Vec<(CmpOp, Expr)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallKind {
    Implies,
    And,
    Or,
}

impl CallKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CallKind::Implies => "Implies",
            CallKind::And => "And",
            CallKind::Or => "Or",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cond {
    Compare(Comparison),
    Call { kind: CallKind, args: Vec<Cond> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Cond(Cond),
    For {
        var: String,
        domain: Domain,
        /// One to three bounds, as in Python's `range`.
        args: Vec<Expr>,
        body: Vec<Stmt>,
    },
    With {
        domain: Domain,
        body: Vec<Stmt>,
    },
}

/// Literal values allowed in the variables segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    List(Vec<Value>),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::List(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub name: String,
    pub value: Value,
}

/// Walk every expression inside a statement list.
pub(crate) fn visit_exprs<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    fn cond<'a>(c: &'a Cond, f: &mut dyn FnMut(&'a Expr)) {
        match c {
            Cond::Compare(cmp) => {
                expr(&cmp.first, f);
                for (_, e) in &cmp.rest {
                    expr(e, f);
                }
            }
            Cond::Call { args, .. } => args.iter().for_each(|a| cond(a, f)),
        }
    }
    fn expr<'a>(e: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
        f(e);
        match e {
            Expr::List(items) => items.iter().for_each(|i| expr(i, f)),
            Expr::IoRef { subscripts, .. } => {
                for s in subscripts {
                    match s {
                        Subscript::Index(i) => expr(i, f),
                        Subscript::Slice { start, stop, step } => {
                            for part in [start, stop, step].into_iter().flatten() {
                                expr(part, f);
                            }
                        }
                    }
                }
            }
            Expr::Neg(inner) => expr(inner, f),
            Expr::Binary { lhs, rhs, .. } => {
                expr(lhs, f);
                expr(rhs, f);
            }
            Expr::Num(_) | Expr::Ident(_) => {}
        }
    }
    for s in stmts {
        match s {
            Stmt::Cond(c) => cond(c, f),
            Stmt::For { args, body, .. } => {
                args.iter().for_each(|a| expr(a, f));
                visit_exprs(body, f);
            }
            Stmt::With { body, .. } => visit_exprs(body, f),
        }
    }
}

/// Does any comparison in the statements use `op`?
pub(crate) fn uses_op(stmts: &[Stmt], op: CmpOp) -> bool {
    fn cond(c: &Cond, op: CmpOp) -> bool {
        match c {
            Cond::Compare(cmp) => cmp.rest.iter().any(|(o, _)| *o == op),
            Cond::Call { args, .. } => args.iter().any(|a| cond(a, op)),
        }
    }
    stmts.iter().any(|s| match s {
        Stmt::Cond(c) => cond(c, op),
        Stmt::For { body, .. } | Stmt::With { body, .. } => uses_op(body, op),
    })
}
