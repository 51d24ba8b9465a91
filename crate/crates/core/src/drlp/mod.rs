//! The DRLP property language.
//!
//! A script has three segments:
//!
//! ```text
//! a = 1, _b = [2, 3]        # variables; a leading `_` marks an iterable
//! @Pre
//! x_size = 2                # optional size declarations
//! for i in range(0, k):
//!     [-1]*2 <= x[i] <= [1]*2
//! @Exp
//! for i in range(0, k):
//!     y[i] >= z             # `z` is unassigned, so this is a template
//! ```
//!
//! [`parse`] returns a concrete [`DrlpScript`] or a [`DrlpTemplate`] when
//! iterables or unassigned identifiers remain.

pub mod ast;
mod classify;
mod eval;
mod lexer;
mod parser;
mod printer;

pub use classify::{classify_parts, Part, PartitionedProperty, PostKind};

use crate::formula::Formula;
use ast::{Assignment, Cond, Expr, Stmt, Subscript, Value};
use eval::Ctx;
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

/// Default gap used when splitting `!=` into two strict sides.
pub const DEFAULT_NE_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DrlpError {
    #[error("syntax error at line {line}, column {column}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("step index out of range: {0}")]
    StepOutOfRange(String),
    #[error("cannot expand iterables: {0}")]
    Expansion(String),
    #[error("`{0}` is not a free parameter")]
    UnknownParameter(String),
    #[error("script still has free parameters: {}", .0.join(", "))]
    NotConcrete(Vec<String>),
}

/// A script with every identifier bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrlpScript {
    pub variables: Vec<Assignment>,
    pub x_size_decl: Option<usize>,
    pub y_size_decl: Option<usize>,
    pub pre: Vec<Stmt>,
    pub post: Vec<Stmt>,
    /// Declared or inferred input width.
    pub x_size: usize,
    /// Declared or inferred output width.
    pub y_size: usize,
    #[serde(skip)]
    pub ne_delta: f64,
}

/// A script with iterables or unassigned identifiers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrlpTemplate {
    pub script: DrlpScript,
    /// Iterables (without `_`) in declaration order, then unassigned
    /// identifiers in order of first use.
    pub free_parameters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Parsed {
    Script(DrlpScript),
    Template(DrlpTemplate),
}

impl Parsed {
    pub fn into_script(self) -> Result<DrlpScript, DrlpError> {
        match self {
            Parsed::Script(s) => Ok(s),
            Parsed::Template(t) => Err(DrlpError::NotConcrete(t.free_parameters)),
        }
    }

    pub fn script(&self) -> &DrlpScript {
        match self {
            Parsed::Script(s) => s,
            Parsed::Template(t) => &t.script,
        }
    }

    pub fn free_parameters(&self) -> &[String] {
        match self {
            Parsed::Script(_) => &[],
            Parsed::Template(t) => &t.free_parameters,
        }
    }

    pub fn to_source(&self) -> String {
        self.script().to_source()
    }
}

/// Parse DRLP source text.
pub fn parse(source: &str) -> Result<Parsed, DrlpError> {
    let raw = parser::parse_source(source)?;
    let mut bound = HashMap::new();
    let mut variables = Vec::with_capacity(raw.variables.len());
    for a in &raw.variables {
        let value = eval::eval_constant(&a.expr, &bound).map_err(|e| at_line(e, a.line))?;
        if !a.name.starts_with('_') {
            bound.insert(a.name.clone(), value.clone());
        }
        variables.push(Assignment {
            name: a.name.clone(),
            value,
        });
    }
    let mut x_decl = None;
    let mut y_decl = None;
    for s in &raw.sizes {
        let size = match eval::eval_constant(&s.expr, &bound).map_err(|e| at_line(e, s.line))? {
            Value::Num(v) if v >= 1.0 && v.fract() == 0.0 => v as usize,
            other => {
                return Err(DrlpError::Semantic(format!(
                    "line {}: `{}` must be a positive integer, found {other:?}",
                    s.line, s.name
                )))
            }
        };
        if s.name == "x_size" {
            x_decl = Some(size);
        } else {
            y_decl = Some(size);
        }
    }
    build(
        variables,
        x_decl,
        y_decl,
        raw.pre,
        raw.post,
        DEFAULT_NE_DELTA,
    )
}

fn at_line(e: DrlpError, line: usize) -> DrlpError {
    match e {
        DrlpError::Semantic(m) => DrlpError::Semantic(format!("line {line}: {m}")),
        other => other,
    }
}

const RESERVED: [&str; 5] = ["x", "y", "k", "x_size", "y_size"];

fn iterable_name(name: &str) -> Option<&str> {
    name.strip_prefix('_').filter(|s| !s.is_empty())
}

fn build(
    variables: Vec<Assignment>,
    x_size_decl: Option<usize>,
    y_size_decl: Option<usize>,
    pre: Vec<Stmt>,
    post: Vec<Stmt>,
    ne_delta: f64,
) -> Result<Parsed, DrlpError> {
    if pre.is_empty() {
        return Err(DrlpError::Semantic("the precondition is empty".into()));
    }
    if post.is_empty() {
        return Err(DrlpError::Semantic("the postcondition is empty".into()));
    }
    let mut bound = HashMap::new();
    let mut iterables = Vec::new();
    let mut validation = HashMap::new();
    let mut tainted = HashSet::new();
    for a in &variables {
        let plain = iterable_name(&a.name).unwrap_or(&a.name);
        if RESERVED.contains(&plain) {
            return Err(DrlpError::Semantic(format!(
                "`{plain}` is reserved and cannot be assigned"
            )));
        }
        match iterable_name(&a.name) {
            Some(name) => {
                let Value::List(items) = &a.value else {
                    return Err(DrlpError::Semantic(format!(
                        "iterable `{}` must be a list",
                        a.name
                    )));
                };
                iterables.push(name.to_string());
                match items.first() {
                    Some(first) => {
                        validation.insert(name.to_string(), first.clone());
                    }
                    None => {
                        tainted.insert(name.to_string());
                    }
                }
            }
            None => {
                bound.insert(a.name.clone(), a.value.clone());
                validation.insert(a.name.clone(), a.value.clone());
            }
        }
    }

    let mut unbound = Vec::new();
    for stmts in [&pre, &post] {
        collect_unbound(stmts, &mut Vec::new(), &bound, &iterables, &mut unbound);
    }
    tainted.extend(unbound.iter().cloned());
    let mut free_parameters = iterables;
    free_parameters.extend(unbound);

    let (x_inf, y_inf) = eval::infer_sizes(&[&pre, &post], &validation, &tainted);
    let x_size = x_size_decl.or(x_inf).ok_or_else(|| {
        DrlpError::Semantic("cannot infer the input width; declare x_size=".into())
    })?;
    let y_size = y_size_decl.or(y_inf).ok_or_else(|| {
        DrlpError::Semantic("cannot infer the output width; declare y_size=".into())
    })?;

    for k in 1..=3 {
        let mut ctx = Ctx::new(x_size, y_size, Some(k), &validation, &tainted, ne_delta);
        for s in pre.iter().chain(post.iter()) {
            match ctx.lower_stmt(s) {
                Ok(_) | Err(DrlpError::StepOutOfRange(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }

    let script = DrlpScript {
        variables,
        x_size_decl,
        y_size_decl,
        pre,
        post,
        x_size,
        y_size,
        ne_delta,
    };
    Ok(if free_parameters.is_empty() {
        Parsed::Script(script)
    } else {
        Parsed::Template(DrlpTemplate {
            script,
            free_parameters,
        })
    })
}

fn collect_unbound(
    stmts: &[Stmt],
    scopes: &mut Vec<String>,
    bound: &HashMap<String, Value>,
    iterables: &[String],
    out: &mut Vec<String>,
) {
    fn note(
        name: &str,
        scopes: &[String],
        bound: &HashMap<String, Value>,
        iterables: &[String],
        out: &mut Vec<String>,
    ) {
        let known = RESERVED.contains(&name)
            || scopes.iter().any(|s| s == name)
            || bound.contains_key(name)
            || iterables.iter().any(|s| s == name)
            || out.iter().any(|s| s == name);
        if !known {
            out.push(name.to_string());
        }
    }
    for s in stmts {
        match s {
            Stmt::For {
                var, args, body, ..
            } => {
                for a in args {
                    ident_names(a, &mut |n| note(n, scopes, bound, iterables, out));
                }
                scopes.push(var.clone());
                collect_unbound(body, scopes, bound, iterables, out);
                scopes.pop();
            }
            Stmt::With { body, .. } => collect_unbound(body, scopes, bound, iterables, out),
            Stmt::Cond(_) => {
                ast::visit_exprs(std::slice::from_ref(s), &mut |e| {
                    if let Expr::Ident(n) = e {
                        note(n, scopes, bound, iterables, out);
                    }
                });
            }
        }
    }
}

fn ident_names(e: &Expr, f: &mut dyn FnMut(&str)) {
    let stmt = Stmt::Cond(Cond::Compare(ast::Comparison {
        first: e.clone(),
        rest: vec![],
    }));
    ast::visit_exprs(std::slice::from_ref(&stmt), &mut |sub| {
        if let Expr::Ident(n) = sub {
            f(n);
        }
    });
}

fn value_expr(v: &Value) -> Expr {
    match v {
        Value::Num(x) => Expr::Num(*x),
        Value::List(items) => Expr::List(items.iter().map(value_expr).collect()),
    }
}

fn subst_expr(e: &Expr, name: &str, with: &Expr) -> Expr {
    let rec = |x: &Expr| subst_expr(x, name, with);
    match e {
        Expr::Ident(n) if n == name => with.clone(),
        Expr::Num(_) | Expr::Ident(_) => e.clone(),
        Expr::List(items) => Expr::List(items.iter().map(rec).collect()),
        Expr::Neg(inner) => match rec(inner) {
            Expr::Num(v) => Expr::Num(-v),
            other => Expr::Neg(Box::new(other)),
        },
        Expr::Binary { op, lhs, rhs } => Expr::Binary {
            op: *op,
            lhs: Box::new(rec(lhs)),
            rhs: Box::new(rec(rhs)),
        },
        Expr::IoRef { io, subscripts } => Expr::IoRef {
            io: *io,
            subscripts: subscripts
                .iter()
                .map(|s| match s {
                    Subscript::Index(i) => Subscript::Index(rec(i)),
                    Subscript::Slice { start, stop, step } => Subscript::Slice {
                        start: start.as_ref().map(rec),
                        stop: stop.as_ref().map(rec),
                        step: step.as_ref().map(rec),
                    },
                })
                .collect(),
        },
    }
}

fn subst_cond(c: &Cond, name: &str, with: &Expr) -> Cond {
    match c {
        Cond::Compare(cmp) => Cond::Compare(ast::Comparison {
            first: subst_expr(&cmp.first, name, with),
            rest: cmp
                .rest
                .iter()
                .map(|(op, e)| (*op, subst_expr(e, name, with)))
                .collect(),
        }),
        Cond::Call { kind, args } => Cond::Call {
            kind: *kind,
            args: args.iter().map(|a| subst_cond(a, name, with)).collect(),
        },
    }
}

fn subst_stmts(stmts: &[Stmt], name: &str, with: &Expr) -> Vec<Stmt> {
    stmts
        .iter()
        .map(|s| match s {
            Stmt::Cond(c) => Stmt::Cond(subst_cond(c, name, with)),
            Stmt::With { domain, body } => Stmt::With {
                domain: *domain,
                body: subst_stmts(body, name, with),
            },
            Stmt::For {
                var,
                domain,
                args,
                body,
            } => Stmt::For {
                var: var.clone(),
                domain: *domain,
                args: args.iter().map(|a| subst_expr(a, name, with)).collect(),
                body: if var == name {
                    body.clone()
                } else {
                    subst_stmts(body, name, with)
                },
            },
        })
        .collect()
}

impl DrlpTemplate {
    /// Substitute a scalar for one free parameter.
    pub fn concretize(&self, var: &str, value: f64) -> Result<Parsed, DrlpError> {
        self.concretize_value(var, &Value::Num(value))
    }

    /// Substitute a scalar or list for one free parameter. Iterables become
    /// plain assignments; unassigned identifiers are replaced in place.
    pub fn concretize_value(&self, var: &str, value: &Value) -> Result<Parsed, DrlpError> {
        if !self.free_parameters.iter().any(|p| p == var) {
            return Err(DrlpError::UnknownParameter(var.to_string()));
        }
        let s = &self.script;
        let iterable_pos = s
            .variables
            .iter()
            .position(|a| iterable_name(&a.name) == Some(var));
        let (variables, pre, post) = match iterable_pos {
            Some(pos) => {
                let mut vars = s.variables.clone();
                vars[pos] = Assignment {
                    name: var.to_string(),
                    value: value.clone(),
                };
                (vars, s.pre.clone(), s.post.clone())
            }
            None => {
                let with = value_expr(value);
                (
                    s.variables.clone(),
                    subst_stmts(&s.pre, var, &with),
                    subst_stmts(&s.post, var, &with),
                )
            }
        };
        build(
            variables,
            s.x_size_decl,
            s.y_size_decl,
            pre,
            post,
            s.ne_delta,
        )
    }

    /// Names of the iterable parameters, in declaration order.
    pub fn iterables(&self) -> Vec<String> {
        self.script
            .variables
            .iter()
            .filter_map(|a| iterable_name(&a.name).map(str::to_string))
            .collect()
    }

    /// One script (or smaller template) per element of the Cartesian
    /// product of all iterables, last iterable varying fastest.
    pub fn expand_iterables(&self) -> Result<Vec<Parsed>, DrlpError> {
        let lists: Vec<(String, Vec<Value>)> = self
            .script
            .variables
            .iter()
            .filter_map(|a| match (iterable_name(&a.name), &a.value) {
                (Some(n), Value::List(items)) => Some((n.to_string(), items.clone())),
                _ => None,
            })
            .collect();
        if lists.is_empty() {
            return Ok(vec![Parsed::Template(self.clone())]);
        }
        if let Some((name, _)) = lists.iter().find(|(_, items)| items.is_empty()) {
            return Err(DrlpError::Expansion(format!("iterable `_{name}` is empty")));
        }
        let total: usize = lists.iter().map(|(_, items)| items.len()).product();
        let mut out = Vec::with_capacity(total);
        for mut flat in 0..total {
            let mut picks = vec![0; lists.len()];
            for (slot, (_, items)) in picks.iter_mut().zip(&lists).rev() {
                *slot = flat % items.len();
                flat /= items.len();
            }
            let mut current = Parsed::Template(self.clone());
            for ((name, items), pick) in lists.iter().zip(&picks) {
                current = match current {
                    Parsed::Template(t) => t.concretize_value(name, &items[*pick])?,
                    done => done,
                };
            }
            out.push(current);
        }
        Ok(out)
    }

    pub fn to_source(&self) -> String {
        self.script.to_source()
    }
}

/// [`DrlpTemplate::expand_iterables`] lifted to either parse result.
pub fn expand_iterables(parsed: &Parsed) -> Result<Vec<Parsed>, DrlpError> {
    match parsed {
        Parsed::Script(_) => Ok(vec![parsed.clone()]),
        Parsed::Template(t) => t.expand_iterables(),
    }
}

impl DrlpScript {
    pub fn with_ne_delta(mut self, delta: f64) -> Self {
        self.ne_delta = delta;
        self
    }

    pub fn to_source(&self) -> String {
        printer::print_script(self)
    }

    pub fn binding(&self, name: &str) -> Option<&Value> {
        self.variables
            .iter()
            .find(|a| a.name == name)
            .map(|a| &a.value)
    }

    fn bindings(&self) -> HashMap<String, Value> {
        self.variables
            .iter()
            .filter(|a| iterable_name(&a.name).is_none())
            .map(|a| (a.name.clone(), a.value.clone()))
            .collect()
    }

    fn ensure_concrete(&self) -> Result<(), DrlpError> {
        let iterables: Vec<String> = self
            .variables
            .iter()
            .filter_map(|a| iterable_name(&a.name).map(str::to_string))
            .collect();
        if iterables.is_empty() {
            Ok(())
        } else {
            Err(DrlpError::NotConcrete(iterables))
        }
    }

    /// Lower each statement of `stmts` at depth `k`.
    pub fn lower(&self, stmts: &[Stmt], k: usize) -> Result<Vec<Formula>, DrlpError> {
        self.ensure_concrete()?;
        let vars = self.bindings();
        let free = HashSet::new();
        let mut ctx = Ctx::new(
            self.x_size,
            self.y_size,
            Some(k),
            &vars,
            &free,
            self.ne_delta,
        );
        ctx.lower_stmts(stmts)
    }

    /// The whole precondition at depth `k`.
    pub fn precondition(&self, k: usize) -> Result<Formula, DrlpError> {
        Ok(Formula::And(self.lower(&self.pre, k)?))
    }

    /// The whole postcondition at depth `k`.
    pub fn postcondition(&self, k: usize) -> Result<Formula, DrlpError> {
        Ok(Formula::And(self.lower(&self.post, k)?))
    }

    /// Does any statement mention the depth symbol `k`?
    pub fn references_k(&self) -> bool {
        let mut found = false;
        for stmts in [&self.pre, &self.post] {
            ast::visit_exprs(stmts, &mut |e| {
                found |= matches!(e, Expr::Ident(n) if n == "k")
            });
        }
        found
    }

    /// Largest constant step index used in an `x`/`y` subscript, when every
    /// step subscript is a literal.
    pub fn literal_max_step(&self) -> Option<usize> {
        let mut max = Some(0usize);
        for stmts in [&self.pre, &self.post] {
            ast::visit_exprs(stmts, &mut |e| {
                if let Expr::IoRef { subscripts, .. } = e {
                    match subscripts.first() {
                        Some(Subscript::Index(Expr::Num(v))) if *v >= 0.0 && v.fract() == 0.0 => {
                            max = max.map(|m| m.max(*v as usize));
                        }
                        _ => max = None,
                    }
                }
            });
        }
        max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CARTESIAN: &str =
        "a=1,_b=[2,3],_c=[4,5]\n@Pre\nx[0][0] >= a\nx[0][0] <= b\n@Exp\ny[0][0] >= c\n";

    #[test]
    fn degenerate_interval_script() {
        let p = parse("@Pre\nx_size=1\ny_size=1\n[0] <= x[0] <= [0]\n@Exp\ny[0] >= [0]").unwrap();
        let s = p.into_script().unwrap();
        assert_eq!((s.x_size, s.y_size), (1, 1));
        assert_eq!(s.pre.len(), 1);
    }

    #[test]
    fn cartesian_expansion_is_row_major() {
        let t = match parse(CARTESIAN).unwrap() {
            Parsed::Template(t) => t,
            other => panic!("{other:?}"),
        };
        assert_eq!(t.free_parameters, vec!["b", "c"]);
        let scripts = t.expand_iterables().unwrap();
        let got: Vec<(f64, f64)> = scripts
            .iter()
            .map(|p| {
                let s = p.script();
                (
                    s.binding("b").unwrap().as_num().unwrap(),
                    s.binding("c").unwrap().as_num().unwrap(),
                )
            })
            .collect();
        assert_eq!(got, vec![(2.0, 4.0), (2.0, 5.0), (3.0, 4.0), (3.0, 5.0)]);
        assert!(scripts.iter().all(|p| matches!(p, Parsed::Script(_))));
    }

    #[test]
    fn singleton_and_empty_iterables() {
        let t = match parse("_b=[7]\n@Pre\nx[0][0] >= b\n@Exp\ny[0][0] >= 0\n").unwrap() {
            Parsed::Template(t) => t,
            other => panic!("{other:?}"),
        };
        let out = t.expand_iterables().unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].script().binding("b"), Some(&Value::Num(7.0)));

        let t = match parse("_b=[]\n@Pre\nx[0][0] >= b\n@Exp\ny[0][0] >= 0\n").unwrap() {
            Parsed::Template(t) => t,
            other => panic!("{other:?}"),
        };
        assert!(matches!(t.expand_iterables(), Err(DrlpError::Expansion(_))));
    }

    #[test]
    fn concretize_free_identifier() {
        let t = match parse("@Pre\n0 <= x[0][0] <= 1\n@Exp\ny[0][0] >= z\n").unwrap() {
            Parsed::Template(t) => t,
            other => panic!("{other:?}"),
        };
        assert_eq!(t.free_parameters, vec!["z"]);
        let s = t.concretize("z", -5.0).unwrap().into_script().unwrap();
        assert!(s.to_source().contains("y[0][0] >= -5"));
        assert!(matches!(
            t.concretize("w", 1.0),
            Err(DrlpError::UnknownParameter(_))
        ));
    }

    #[test]
    fn concretize_one_of_two() {
        let t = match parse("@Pre\nx[0][0] >= a\nx[0][0] <= b\n@Exp\ny[0][0] >= 0\n").unwrap() {
            Parsed::Template(t) => t,
            other => panic!("{other:?}"),
        };
        match t.concretize("a", 1.0).unwrap() {
            Parsed::Template(t2) => assert_eq!(t2.free_parameters, vec!["b"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn loop_variable_shadows_parameter() {
        let t = match parse("@Pre\nfor i in range(0, k):\n    x[i][0] >= i\n@Exp\ny[0][0] >= i\n")
            .unwrap()
        {
            Parsed::Template(t) => t,
            other => panic!("{other:?}"),
        };
        assert_eq!(t.free_parameters, vec!["i"]);
        let s = t.concretize("i", 2.0).unwrap().into_script().unwrap();
        assert!(s.to_source().contains("x[i][0] >= i"));
        assert!(s.to_source().contains("y[0][0] >= 2"));
    }

    #[test]
    fn semantic_errors() {
        let non_affine = parse("@Pre\nx[0][0] * x[0][1] <= 1\n@Exp\ny[0][0] >= 0\n");
        assert!(matches!(non_affine, Err(DrlpError::Semantic(_))));
        let dim = parse("@Pre\nx_size=1\nx[0][z] <= 1\n@Exp\ny[0][0] >= 0\n");
        assert!(matches!(dim, Err(DrlpError::Semantic(_))));
        let slice = parse("@Pre\nx_size=2\nx[0][0:3] <= [1]*3\n@Exp\ny[0][0] >= 0\n");
        assert!(matches!(slice, Err(DrlpError::Semantic(_))));
        let no_tol = parse("@Pre\nx[0][0] <= 1\n@Exp\ny[0][0] ~= 0\n");
        assert!(matches!(no_tol, Err(DrlpError::Semantic(_))));
        let no_size = parse("@Pre\nx[0] <= 1\n@Exp\ny[0][0] >= 0\n");
        assert!(matches!(no_size, Err(DrlpError::Semantic(m)) if m.contains("x_size")));
    }

    #[test]
    fn concrete_checks() {
        let s = parse("@Pre\nx[0][0] <= 1\n@Exp\ny[0][0] >= 0\n")
            .unwrap()
            .into_script()
            .unwrap();
        assert!(!s.references_k());
        assert_eq!(s.literal_max_step(), Some(0));
        let f = s.precondition(1).unwrap();
        assert!(f.holds(&[0.5, 0.0], 0.0));
        assert!(!f.holds(&[1.5, 0.0], 0.0));
    }
}
