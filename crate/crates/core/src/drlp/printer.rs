//! Source printer. Output re-parses to an identical syntax tree.

use super::ast::{Cond, Expr, Stmt, Subscript, Value};
use super::DrlpScript;
use std::fmt::Write as _;

const INDENT: &str = "    ";

pub(crate) fn print_script(s: &DrlpScript) -> String {
    let mut out = String::new();
    for a in &s.variables {
        let _ = writeln!(out, "{} = {}", a.name, value(&a.value));
    }
    out.push_str("@Pre\n");
    if let Some(n) = s.x_size_decl {
        let _ = writeln!(out, "x_size = {n}");
    }
    if let Some(m) = s.y_size_decl {
        let _ = writeln!(out, "y_size = {m}");
    }
    stmts(&s.pre, 0, &mut out);
    out.push_str("@Exp\n");
    stmts(&s.post, 0, &mut out);
    out
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn value(v: &Value) -> String {
    match v {
        Value::Num(x) => num(*x),
        Value::List(items) => format!(
            "[{}]",
            items.iter().map(value).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn stmts(list: &[Stmt], depth: usize, out: &mut String) {
    for s in list {
        let pad = INDENT.repeat(depth);
        match s {
            Stmt::Cond(c) => {
                let _ = writeln!(out, "{pad}{}", cond(c));
            }
            Stmt::For {
                var,
                domain,
                args,
                body,
            } => {
                let args = args.iter().map(expr).collect::<Vec<_>>().join(", ");
                let _ = writeln!(out, "{pad}for {var} in {}({args}):", domain.keyword());
                stmts(body, depth + 1, out);
            }
            Stmt::With { domain, body } => {
                let _ = writeln!(out, "{pad}with {}:", domain.keyword());
                stmts(body, depth + 1, out);
            }
        }
    }
}

fn cond(c: &Cond) -> String {
    match c {
        Cond::Compare(cmp) => {
            let mut s = expr(&cmp.first);
            for (op, e) in &cmp.rest {
                let _ = write!(s, " {} {}", op.symbol(), expr(e));
            }
            s
        }
        Cond::Call { kind, args } => {
            format!(
                "{}({})",
                kind.keyword(),
                args.iter().map(cond).collect::<Vec<_>>().join(", ")
            )
        }
    }
}

fn is_atomic(e: &Expr) -> bool {
    match e {
        Expr::Num(v) => *v >= 0.0 && !v.is_sign_negative(),
        Expr::Ident(_) | Expr::List(_) | Expr::IoRef { .. } => true,
        Expr::Neg(_) | Expr::Binary { .. } => false,
    }
}

pub(crate) fn expr(e: &Expr) -> String {
    match e {
        Expr::Num(v) => num(*v),
        Expr::Ident(n) => n.clone(),
        Expr::List(items) => format!(
            "[{}]",
            items.iter().map(expr).collect::<Vec<_>>().join(", ")
        ),
        Expr::IoRef { io, subscripts } => {
            let mut s = io.name().to_string();
            for sub in subscripts {
                match sub {
                    Subscript::Index(i) => {
                        let _ = write!(s, "[{}]", expr(i));
                    }
                    Subscript::Slice { start, stop, step } => {
                        let part = |p: &Option<Expr>| p.as_ref().map(expr).unwrap_or_default();
                        match step {
                            Some(_) => {
                                let _ =
                                    write!(s, "[{}:{}:{}]", part(start), part(stop), part(step));
                            }
                            None => {
                                let _ = write!(s, "[{}:{}]", part(start), part(stop));
                            }
                        }
                    }
                }
            }
            s
        }
        Expr::Neg(inner) => {
            if is_atomic(inner) {
                format!("-{}", expr(inner))
            } else {
                format!("-({})", expr(inner))
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let wrap = |child: &Expr, right: bool| match child {
                Expr::Binary { op: c, .. }
                    if c.precedence() < op.precedence()
                        || (right && c.precedence() == op.precedence()) =>
                {
                    format!("({})", expr(child))
                }
                _ => expr(child),
            };
            format!("{} {} {}", wrap(lhs, false), op.symbol(), wrap(rhs, true))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;

    #[test]
    fn round_trip_preserves_tree() {
        let src = "a = [0.5]*2, b = 3\n@Pre\nx_size = 2\ny_size = 1\nfor i in orange(0, k, 1):\n    with range:\n        x[i][0:2] >= -(a - 1)\n        Implies(y[i] > 0, x[i][0] - (b - 1) * 2 <= 1e-7)\n@Exp\ny[0] >= b - (1 - 2)\n";
        let first = parse(src).unwrap();
        let printed = first.to_source();
        let again = parse(&printed).unwrap();
        assert_eq!(first, again, "printed:\n{printed}");
    }
}
