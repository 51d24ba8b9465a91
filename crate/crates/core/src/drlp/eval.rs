//! Lowering of DRLP statements to [`Formula`]s over unrolled variable ids.

use super::ast::{
    BinOp, CallKind, CmpOp, Comparison, Cond, Domain, Expr, Io, Stmt, Subscript, Value,
};
use super::DrlpError;
use crate::formula::{Atom, Formula, LinExpr, STRICT_MARGIN};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Affine value over model variables. `tainted` marks dependence on an
/// unassigned template parameter (whose placeholder value is 1).
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Aff {
    pub terms: BTreeMap<usize, f64>,
    pub c: f64,
    pub tainted: bool,
}

impl Aff {
    fn constant(c: f64) -> Self {
        Aff {
            c,
            ..Default::default()
        }
    }

    fn var(id: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(id, 1.0);
        Aff {
            terms,
            c: 0.0,
            tainted: false,
        }
    }

    fn is_const(&self) -> bool {
        self.terms.is_empty()
    }

    fn add(&self, o: &Aff, sign: f64) -> Aff {
        let mut terms = self.terms.clone();
        for (id, c) in &o.terms {
            *terms.entry(*id).or_insert(0.0) += sign * c;
        }
        terms.retain(|_, c| *c != 0.0);
        Aff {
            terms,
            c: self.c + sign * o.c,
            tainted: self.tainted || o.tainted,
        }
    }

    fn scale(&self, s: f64, taint: bool) -> Aff {
        let mut terms: BTreeMap<usize, f64> =
            self.terms.iter().map(|(id, c)| (*id, c * s)).collect();
        terms.retain(|_, c| *c != 0.0);
        Aff {
            terms,
            c: self.c * s,
            tainted: self.tainted || taint,
        }
    }

    fn lin(&self) -> LinExpr {
        LinExpr::from_terms(self.terms.iter().map(|(a, b)| (*a, *b)), self.c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Val {
    S(Aff),
    L(Vec<Val>),
}

impl Val {
    fn flatten(&self, out: &mut Vec<Aff>) {
        match self {
            Val::S(a) => out.push(a.clone()),
            Val::L(items) => items.iter().for_each(|i| i.flatten(out)),
        }
    }

    fn flat(&self) -> Vec<Aff> {
        let mut v = Vec::new();
        self.flatten(&mut v);
        v
    }

    /// No model variables anywhere (taint allowed).
    fn is_const(&self) -> bool {
        match self {
            Val::S(a) => a.is_const(),
            Val::L(items) => items.iter().all(Val::is_const),
        }
    }

    fn map(&self, f: &impl Fn(&Aff) -> Aff) -> Val {
        match self {
            Val::S(a) => Val::S(f(a)),
            Val::L(items) => Val::L(items.iter().map(|i| i.map(f)).collect()),
        }
    }

    pub(crate) fn from_value(v: &Value) -> Val {
        match v {
            Value::Num(x) => Val::S(Aff::constant(*x)),
            Value::List(items) => Val::L(items.iter().map(Val::from_value).collect()),
        }
    }

    pub(crate) fn to_value(&self) -> Option<Value> {
        match self {
            Val::S(a) if a.is_const() && !a.tainted => Some(Value::Num(a.c)),
            Val::S(_) => None,
            Val::L(items) => items
                .iter()
                .map(Val::to_value)
                .collect::<Option<Vec<_>>>()
                .map(Value::List),
        }
    }
}

fn sem(msg: impl Into<String>) -> DrlpError {
    DrlpError::Semantic(msg.into())
}

/// Evaluation context for one lowering pass.
pub(crate) struct Ctx<'a> {
    pub n: usize,
    pub m: usize,
    /// `None` where `k` is unavailable (variables segment).
    pub k: Option<usize>,
    pub vars: &'a HashMap<String, Value>,
    pub free: &'a HashSet<String>,
    pub approx_eps: Option<f64>,
    pub ne_delta: f64,
    pub io_available: bool,
    scopes: Vec<(String, i64)>,
}

impl<'a> Ctx<'a> {
    pub fn new(
        n: usize,
        m: usize,
        k: Option<usize>,
        vars: &'a HashMap<String, Value>,
        free: &'a HashSet<String>,
        ne_delta: f64,
    ) -> Self {
        let approx_eps = ["y_eps", "eps"]
            .iter()
            .find_map(|name| vars.get(*name).and_then(Value::as_num));
        Self {
            n,
            m,
            k,
            vars,
            free,
            approx_eps,
            ne_delta,
            io_available: true,
            scopes: Vec::new(),
        }
    }

    fn block(&self) -> usize {
        self.n + self.m
    }

    pub fn eval(&self, e: &Expr) -> Result<Val, DrlpError> {
        match e {
            Expr::Num(v) => Ok(Val::S(Aff::constant(*v))),
            Expr::Ident(name) => self.lookup(name),
            Expr::List(items) => Ok(Val::L(
                items
                    .iter()
                    .map(|i| self.eval(i))
                    .collect::<Result<_, _>>()?,
            )),
            Expr::Neg(inner) => Ok(self.eval(inner)?.map(&|a| a.scale(-1.0, false))),
            Expr::IoRef { io, subscripts } => self.io_ref(*io, subscripts),
            Expr::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs)?;
                let r = self.eval(rhs)?;
                self.binary(*op, l, r)
            }
        }
    }

    fn lookup(&self, name: &str) -> Result<Val, DrlpError> {
        if let Some((_, v)) = self.scopes.iter().rev().find(|(n, _)| n == name) {
            return Ok(Val::S(Aff::constant(*v as f64)));
        }
        match name {
            "k" => {
                return self
                    .k
                    .map(|k| Val::S(Aff::constant(k as f64)))
                    .ok_or_else(|| {
                        sem("`k` is only available in the precondition and postcondition")
                    })
            }
            "x_size" if self.io_available => return Ok(Val::S(Aff::constant(self.n as f64))),
            "y_size" if self.io_available => return Ok(Val::S(Aff::constant(self.m as f64))),
            _ => {}
        }
        if let Some(v) = self.vars.get(name) {
            return Ok(Val::from_value(v));
        }
        if self.free.contains(name) {
            return Ok(Val::S(Aff {
                c: 1.0,
                tainted: true,
                ..Default::default()
            }));
        }
        Err(sem(format!("unbound identifier `{name}`")))
    }

    fn index(&self, e: &Expr, what: &str) -> Result<i64, DrlpError> {
        match self.eval(e)? {
            Val::S(a) if a.tainted => {
                Err(sem(format!("a free parameter cannot be used as {what}")))
            }
            Val::S(a) if a.is_const() && a.c.fract() == 0.0 && a.c.is_finite() => Ok(a.c as i64),
            Val::S(a) if a.is_const() => {
                Err(sem(format!("{what} must be an integer, found {}", a.c)))
            }
            _ => Err(sem(format!("{what} must be a constant integer"))),
        }
    }

    fn io_ref(&self, io: Io, subscripts: &[Subscript]) -> Result<Val, DrlpError> {
        if !self.io_available {
            return Err(sem(format!("`{}` cannot be used here", io.name())));
        }
        let k = self
            .k
            .ok_or_else(|| sem("model variables need a verification depth"))?;
        let (width, offset) = match io {
            Io::X => (self.n, 0),
            Io::Y => (self.m, self.n),
        };
        let rows = (0..k)
            .map(|i| {
                Val::L(
                    (0..width)
                        .map(|j| Val::S(Aff::var(i * self.block() + offset + j)))
                        .collect(),
                )
            })
            .collect();
        let mut cur = Val::L(rows);
        let mut dim = 0;
        for sub in subscripts {
            let items = match cur {
                Val::L(items) => items,
                Val::S(_) => return Err(sem(format!("too many subscripts on `{}`", io.name()))),
            };
            let len = items.len() as i64;
            let out_of_range = |msg: String| {
                if dim == 0 {
                    DrlpError::StepOutOfRange(msg)
                } else {
                    sem(msg)
                }
            };
            let dim_name = if dim == 0 { "step" } else { "feature" };
            match sub {
                Subscript::Index(e) => {
                    let i = self.index(e, "an index")?;
                    if i < 0 || i >= len {
                        return Err(out_of_range(format!(
                            "{} {dim_name} index {i} is outside 0..{len}",
                            io.name()
                        )));
                    }
                    cur = items.into_iter().nth(i as usize).expect("checked index");
                    dim += 1;
                }
                Subscript::Slice { start, stop, step } => {
                    let a = start
                        .as_ref()
                        .map(|e| self.index(e, "a slice bound"))
                        .transpose()?
                        .unwrap_or(0);
                    let b = stop
                        .as_ref()
                        .map(|e| self.index(e, "a slice bound"))
                        .transpose()?
                        .unwrap_or(len);
                    let c = step
                        .as_ref()
                        .map(|e| self.index(e, "a slice step"))
                        .transpose()?
                        .unwrap_or(1);
                    if c <= 0 {
                        return Err(sem(format!("slice step must be positive, found {c}")));
                    }
                    if a < 0 || b > len || a > b {
                        return Err(out_of_range(format!(
                            "{} {dim_name} slice {a}:{b} is outside 0..{len}",
                            io.name()
                        )));
                    }
                    let picked = items
                        .into_iter()
                        .skip(a as usize)
                        .take((b - a) as usize)
                        .step_by(c as usize);
                    cur = Val::L(picked.collect());
                }
            }
        }
        Ok(cur)
    }

    fn binary(&self, op: BinOp, l: Val, r: Val) -> Result<Val, DrlpError> {
        match (&l, &r) {
            (Val::S(a), Val::S(b)) => Ok(Val::S(scalar_op(op, a, b)?)),
            (Val::L(items), Val::S(s)) | (Val::S(s), Val::L(items))
                if op == BinOp::Mul && l.is_const() && r.is_const() =>
            {
                if s.tainted {
                    return Err(sem("a free parameter cannot be used as a repetition count"));
                }
                if s.c.fract() == 0.0 && s.c >= 0.0 {
                    let times = s.c as usize;
                    let mut out = Vec::with_capacity(items.len() * times);
                    for _ in 0..times {
                        out.extend(items.iter().cloned());
                    }
                    Ok(Val::L(out))
                } else {
                    self.elementwise(op, &l, &r)
                }
            }
            (Val::L(a), Val::L(b)) if op == BinOp::Add && l.is_const() && r.is_const() => {
                Ok(Val::L(a.iter().chain(b.iter()).cloned().collect()))
            }
            _ => self.elementwise(op, &l, &r),
        }
    }

    fn elementwise(&self, op: BinOp, l: &Val, r: &Val) -> Result<Val, DrlpError> {
        match (l, r) {
            (Val::S(a), Val::S(b)) => Ok(Val::S(scalar_op(op, a, b)?)),
            (Val::L(items), Val::S(_)) => Ok(Val::L(
                items
                    .iter()
                    .map(|i| self.elementwise(op, i, r))
                    .collect::<Result<_, _>>()?,
            )),
            (Val::S(_), Val::L(items)) => Ok(Val::L(
                items
                    .iter()
                    .map(|i| self.elementwise(op, l, i))
                    .collect::<Result<_, _>>()?,
            )),
            (Val::L(a), Val::L(b)) => {
                let pairs: Vec<(&Val, &Val)> = if a.len() == b.len() {
                    a.iter().zip(b.iter()).collect()
                } else if a.len() == 1 {
                    b.iter().map(|x| (&a[0], x)).collect()
                } else if b.len() == 1 {
                    a.iter().map(|x| (x, &b[0])).collect()
                } else {
                    return Err(sem(format!(
                        "length mismatch in `{}`: {} vs {}",
                        op.symbol(),
                        a.len(),
                        b.len()
                    )));
                };
                Ok(Val::L(
                    pairs
                        .into_iter()
                        .map(|(x, y)| self.elementwise(op, x, y))
                        .collect::<Result<_, _>>()?,
                ))
            }
        }
    }

    pub fn lower_stmts(&mut self, stmts: &[Stmt]) -> Result<Vec<Formula>, DrlpError> {
        stmts.iter().map(|s| self.lower_stmt(s)).collect()
    }

    pub fn lower_stmt(&mut self, stmt: &Stmt) -> Result<Formula, DrlpError> {
        match stmt {
            Stmt::Cond(c) => self.lower_cond(c),
            Stmt::With { domain, body } => {
                let children = self.lower_stmts(body)?;
                Ok(join(*domain, children))
            }
            Stmt::For {
                var,
                domain,
                args,
                body,
            } => {
                let vals: Vec<i64> = args
                    .iter()
                    .map(|a| self.index(a, "a loop bound"))
                    .collect::<Result<_, _>>()?;
                let (start, stop, step) = match vals.as_slice() {
                    [stop] => (0, *stop, 1),
                    [start, stop] => (*start, *stop, 1),
                    [start, stop, step] => (*start, *stop, *step),
                    _ => return Err(sem("range takes one to three arguments")),
                };
                if step == 0 {
                    return Err(sem("range step must not be zero"));
                }
                let mut segments = Vec::new();
                let mut i = start;
                while (step > 0 && i < stop) || (step < 0 && i > stop) {
                    self.scopes.push((var.clone(), i));
                    let seg = self.lower_stmts(body);
                    self.scopes.pop();
                    segments.push(Formula::And(seg?));
                    i += step;
                }
                Ok(join(*domain, segments))
            }
        }
    }

    fn lower_cond(&mut self, c: &Cond) -> Result<Formula, DrlpError> {
        match c {
            Cond::Compare(cmp) => self.lower_comparison(cmp),
            Cond::Call { kind, args } => {
                let parts: Vec<Formula> = args
                    .iter()
                    .map(|a| self.lower_cond(a))
                    .collect::<Result<_, _>>()?;
                Ok(match kind {
                    CallKind::And => Formula::And(parts),
                    CallKind::Or => Formula::Or(parts),
                    CallKind::Implies => {
                        let mut it = parts.into_iter();
                        let (a, b) = (it.next().expect("two args"), it.next().expect("two args"));
                        Formula::implies(a, b)
                    }
                })
            }
        }
    }

    fn lower_comparison(&self, cmp: &Comparison) -> Result<Formula, DrlpError> {
        let mut operands = vec![self.eval(&cmp.first)?];
        for (_, e) in &cmp.rest {
            operands.push(self.eval(e)?);
        }
        let mut links = Vec::with_capacity(cmp.rest.len());
        for (i, (op, _)) in cmp.rest.iter().enumerate() {
            links.push(self.compare(*op, &operands[i], &operands[i + 1])?);
        }
        Ok(if links.len() == 1 {
            links.pop().expect("one link")
        } else {
            Formula::And(links)
        })
    }

    fn compare(&self, op: CmpOp, l: &Val, r: &Val) -> Result<Formula, DrlpError> {
        let (a, b) = (l.flat(), r.flat());
        let pairs: Vec<(&Aff, &Aff)> = if a.len() == b.len() {
            a.iter().zip(b.iter()).collect()
        } else if a.len() == 1 {
            b.iter().map(|x| (&a[0], x)).collect()
        } else if b.len() == 1 {
            a.iter().map(|x| (x, &b[0])).collect()
        } else {
            return Err(sem(format!(
                "cannot compare {} values with {} values",
                a.len(),
                b.len()
            )));
        };
        if pairs.is_empty() {
            return Err(sem("comparison of empty values"));
        }
        let mut parts = Vec::new();
        for (x, y) in pairs {
            let d = x.add(y, -1.0); // x - y
            parts.push(self.compare_scalar(op, &d)?);
        }
        Ok(match (op, parts.len()) {
            (_, 1) => parts.pop().expect("one part"),
            (CmpOp::Ne, _) => Formula::Or(parts),
            _ => Formula::And(parts),
        })
    }

    /// Relation between `d = lhs - rhs` and zero.
    fn compare_scalar(&self, op: CmpOp, d: &Aff) -> Result<Formula, DrlpError> {
        let le = |shift: f64, neg: bool| {
            let mut e = if neg {
                d.scale(-1.0, false).lin()
            } else {
                d.lin()
            };
            e.constant += shift;
            if e.is_constant() && !d.tainted {
                if e.constant <= 0.0 {
                    Formula::True
                } else {
                    Formula::False
                }
            } else {
                Formula::Atom(Atom::le_zero(e))
            }
        };
        Ok(match op {
            CmpOp::Le => le(0.0, false),
            CmpOp::Lt => le(STRICT_MARGIN, false),
            CmpOp::Ge => le(0.0, true),
            CmpOp::Gt => le(STRICT_MARGIN, true),
            CmpOp::Eq => Formula::And(vec![le(0.0, false), le(0.0, true)]),
            CmpOp::Ne => Formula::Or(vec![le(self.ne_delta, false), le(self.ne_delta, true)]),
            CmpOp::Approx => {
                let eps = self
                    .approx_eps
                    .ok_or_else(|| sem("`~=` needs a tolerance variable `y_eps` (or `eps`) in the variables segment"))?;
                Formula::And(vec![le(-eps, false), le(-eps, true)])
            }
        })
    }
}

fn join(domain: Domain, children: Vec<Formula>) -> Formula {
    match domain {
        Domain::Range => Formula::And(children),
        Domain::Orange => Formula::Or(children),
    }
}

fn scalar_op(op: BinOp, a: &Aff, b: &Aff) -> Result<Aff, DrlpError> {
    match op {
        BinOp::Add => Ok(a.add(b, 1.0)),
        BinOp::Sub => Ok(a.add(b, -1.0)),
        BinOp::Mul => {
            if a.is_const() {
                Ok(b.scale(a.c, a.tainted))
            } else if b.is_const() {
                Ok(a.scale(b.c, b.tainted))
            } else {
                Err(sem("product of two model variables is not affine"))
            }
        }
        BinOp::Div => {
            if !b.is_const() {
                return Err(sem("division by a model variable is not affine"));
            }
            if b.c == 0.0 {
                return Err(sem("division by zero"));
            }
            Ok(a.scale(1.0 / b.c, b.tainted))
        }
    }
}

/// Evaluate a constant expression in the variables segment.
pub(crate) fn eval_constant(e: &Expr, vars: &HashMap<String, Value>) -> Result<Value, DrlpError> {
    let free = HashSet::new();
    let mut ctx = Ctx::new(0, 0, None, vars, &free, 0.0);
    ctx.io_available = false;
    ctx.eval(e)?
        .to_value()
        .ok_or_else(|| sem("variables segment values must be constants"))
}

/// Size candidates gathered from subscripts and constant vector comparisons.
pub(crate) fn infer_sizes(
    stmts: &[&[Stmt]],
    vars: &HashMap<String, Value>,
    free: &HashSet<String>,
) -> (Option<usize>, Option<usize>) {
    let mut ctx = Ctx::new(0, 0, Some(3), vars, free, 0.0);
    ctx.io_available = false;
    let mut sizes = [None::<usize>, None::<usize>];
    for list in stmts {
        for s in list.iter() {
            walk_sizes(&mut ctx, s, &mut sizes);
        }
    }
    (sizes[0], sizes[1])
}

fn bump(sizes: &mut [Option<usize>; 2], io: Io, v: usize) {
    let slot = &mut sizes[if io == Io::X { 0 } else { 1 }];
    *slot = Some(slot.map_or(v, |old| old.max(v)));
}

fn walk_sizes(ctx: &mut Ctx<'_>, stmt: &Stmt, sizes: &mut [Option<usize>; 2]) {
    match stmt {
        Stmt::Cond(c) => walk_cond_sizes(ctx, c, sizes),
        Stmt::With { body, .. } => body.iter().for_each(|s| walk_sizes(ctx, s, sizes)),
        Stmt::For {
            var, args, body, ..
        } => {
            let vals: Option<Vec<i64>> = args
                .iter()
                .map(|a| ctx.index(a, "a loop bound").ok())
                .collect();
            let iters: Vec<i64> = match vals.as_deref() {
                Some([stop]) => (0..*stop).collect(),
                Some([start, stop]) => (*start..*stop).collect(),
                Some([start, stop, step]) if *step > 0 => {
                    (*start..*stop).step_by(*step as usize).collect()
                }
                _ => Vec::new(),
            };
            if iters.is_empty() {
                body.iter().for_each(|s| walk_sizes(ctx, s, sizes));
            }
            for i in iters.into_iter().take(64) {
                ctx.scopes.push((var.clone(), i));
                body.iter().for_each(|s| walk_sizes(ctx, s, sizes));
                ctx.scopes.pop();
            }
        }
    }
}

fn walk_cond_sizes(ctx: &mut Ctx<'_>, c: &Cond, sizes: &mut [Option<usize>; 2]) {
    match c {
        Cond::Call { args, .. } => args.iter().for_each(|a| walk_cond_sizes(ctx, a, sizes)),
        Cond::Compare(cmp) => {
            let operands: Vec<&Expr> = std::iter::once(&cmp.first)
                .chain(cmp.rest.iter().map(|(_, e)| e))
                .collect();
            let mut whole_rows = HashSet::new();
            for e in &operands {
                super::ast::visit_exprs(
                    &[Stmt::Cond(Cond::Compare(Comparison {
                        first: (*e).clone(),
                        rest: vec![],
                    }))],
                    &mut |sub| {
                        if let Expr::IoRef { io, subscripts } = sub {
                            match subscripts.as_slice() {
                                [Subscript::Index(_)] => {
                                    whole_rows.insert(*io);
                                }
                                [Subscript::Index(_), second, ..] => match second {
                                    Subscript::Index(e) => {
                                        if let Ok(i) = ctx.index(e, "an index") {
                                            if i >= 0 {
                                                bump(sizes, *io, i as usize + 1);
                                            }
                                        }
                                    }
                                    Subscript::Slice { start, stop, .. } => {
                                        if let Some(Ok(b)) =
                                            stop.as_ref().map(|e| ctx.index(e, "a slice bound"))
                                        {
                                            if b >= 0 {
                                                bump(sizes, *io, b as usize);
                                            }
                                        } else if let Some(Ok(a)) =
                                            start.as_ref().map(|e| ctx.index(e, "a slice bound"))
                                        {
                                            if a >= 0 {
                                                bump(sizes, *io, a as usize + 1);
                                            }
                                        }
                                    }
                                },
                                _ => {}
                            }
                        }
                    },
                );
            }
            if whole_rows.len() == 1 {
                let io = *whole_rows.iter().next().expect("one io");
                for e in &operands {
                    if let Ok(Val::L(items)) = ctx.eval(e) {
                        let len = Val::L(items).flat().len();
                        if len > 0 {
                            bump(sizes, io, len);
                        }
                    }
                }
            }
        }
    }
}
