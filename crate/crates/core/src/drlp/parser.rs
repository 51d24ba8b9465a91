use super::ast::{BinOp, CallKind, CmpOp, Comparison, Cond, Domain, Expr, Io, Stmt, Subscript};
use super::lexer::{tokenize, Tok, Token};
use super::DrlpError;

/// Assignment as written in the source, before evaluation.
#[derive(Debug, Clone)]
pub(crate) struct RawAssign {
    pub name: String,
    pub expr: Expr,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct RawScript {
    pub variables: Vec<RawAssign>,
    pub sizes: Vec<RawAssign>,
    pub pre: Vec<Stmt>,
    pub post: Vec<Stmt>,
}

pub(crate) fn parse_source(src: &str) -> Result<RawScript, DrlpError> {
    let tokens = tokenize(src)?;
    Parser { tokens, pos: 0 }.script()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, DrlpError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.column)
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> DrlpError {
        let t = &self.tokens[self.pos];
        DrlpError::Syntax {
            line: t.line,
            column: t.column,
            expected: expected.into(),
            found: t.tok.describe(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name)
    }

    fn ident(&mut self, expected: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn skip_newlines(&mut self) {
        while *self.peek() == Tok::Newline {
            self.bump();
        }
    }

    fn script(&mut self) -> PResult<RawScript> {
        let mut variables = Vec::new();
        self.skip_newlines();
        while *self.peek() != Tok::Pre {
            if *self.peek() == Tok::Eof || *self.peek() == Tok::Exp {
                return Err(self.error("`@Pre`"));
            }
            loop {
                variables.push(self.assignment()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            self.expect(Tok::Newline, "end of line after assignment")?;
            self.skip_newlines();
        }
        self.bump();
        self.end_of_delimiter()?;

        let mut sizes = Vec::new();
        let mut pre = Vec::new();
        loop {
            self.skip_newlines();
            match self.peek() {
                Tok::Exp => break,
                Tok::Eof => return Err(self.error("`@Exp`")),
                Tok::Ident(s)
                    if (s == "x_size" || s == "y_size") && *self.peek_at(1) == Tok::Assign =>
                {
                    sizes.push(self.assignment()?);
                    self.expect(Tok::Newline, "end of line after size declaration")?;
                }
                _ => pre.push(self.statement()?),
            }
        }
        self.bump();
        self.end_of_delimiter()?;

        let mut post = Vec::new();
        loop {
            self.skip_newlines();
            if *self.peek() == Tok::Eof {
                break;
            }
            post.push(self.statement()?);
        }
        Ok(RawScript {
            variables,
            sizes,
            pre,
            post,
        })
    }

    fn end_of_delimiter(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.error("end of line after delimiter")),
        }
    }

    fn assignment(&mut self) -> PResult<RawAssign> {
        let (line, _) = self.here();
        let name = self.ident("variable name")?;
        self.expect(Tok::Assign, "`=`")?;
        let expr = self.expr()?;
        Ok(RawAssign { name, expr, line })
    }

    fn statement(&mut self) -> PResult<Stmt> {
        if self.is_ident("for") {
            self.bump();
            let var = self.ident("loop variable")?;
            if !self.is_ident("in") {
                return Err(self.error("`in`"));
            }
            self.bump();
            let domain = self.domain()?;
            self.expect(Tok::LParen, "`(`")?;
            let mut args = vec![self.expr()?];
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
            if args.len() > 3 {
                return Err(self.error("at most three range arguments"));
            }
            self.expect(Tok::RParen, "`)`")?;
            self.expect(Tok::Colon, "`:`")?;
            let body = self.block()?;
            return Ok(Stmt::For {
                var,
                domain,
                args,
                body,
            });
        }
        if self.is_ident("with") {
            self.bump();
            let domain = self.domain()?;
            self.expect(Tok::Colon, "`:`")?;
            let body = self.block()?;
            return Ok(Stmt::With { domain, body });
        }
        let cond = self.cond()?;
        match self.peek() {
            Tok::Newline => {
                self.bump();
            }
            Tok::Eof | Tok::Dedent => {}
            _ => return Err(self.error("end of line")),
        }
        Ok(Stmt::Cond(cond))
    }

    fn domain(&mut self) -> PResult<Domain> {
        if self.is_ident("range") {
            self.bump();
            Ok(Domain::Range)
        } else if self.is_ident("orange") {
            self.bump();
            Ok(Domain::Orange)
        } else {
            Err(self.error("`range` or `orange`"))
        }
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        if *self.peek() != Tok::Newline {
            return Ok(vec![self.statement()?]);
        }
        self.bump();
        self.skip_newlines();
        self.expect(Tok::Indent, "indented block")?;
        let mut body = Vec::new();
        loop {
            self.skip_newlines();
            match self.peek() {
                Tok::Dedent => {
                    self.bump();
                    break;
                }
                Tok::Eof => break,
                _ => body.push(self.statement()?),
            }
        }
        Ok(body)
    }

    fn cond(&mut self) -> PResult<Cond> {
        if let Tok::Ident(name) = self.peek().clone() {
            let kind = match name.as_str() {
                "Implies" | "Impiles" => Some(CallKind::Implies),
                "And" => Some(CallKind::And),
                "Or" => Some(CallKind::Or),
                _ => None,
            };
            if let (Some(kind), Tok::LParen) = (kind, self.peek_at(1)) {
                self.bump();
                self.bump();
                let mut args = vec![self.cond()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.cond()?);
                }
                if kind == CallKind::Implies && args.len() != 2 {
                    return Err(self.error("exactly two arguments to Implies"));
                }
                self.expect(Tok::RParen, "`)`")?;
                return Ok(Cond::Call { kind, args });
            }
        }
        let first = self.expr()?;
        let mut rest = Vec::new();
        while let Some(op) = cmp_op(self.peek()) {
            self.bump();
            rest.push((op, self.expr()?));
        }
        if rest.is_empty() {
            return Err(self.error("comparison operator"));
        }
        Ok(Cond::Compare(Comparison { first, rest }))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(match self.unary()? {
                    Expr::Num(v) => Expr::Num(-v),
                    other => Expr::Neg(Box::new(other)),
                })
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) => {
                self.bump();
                let io = match name.as_str() {
                    "x" => Some(Io::X),
                    "y" => Some(Io::Y),
                    _ => None,
                };
                match io {
                    Some(io) => {
                        let mut subscripts = Vec::new();
                        while *self.peek() == Tok::LBracket {
                            subscripts.push(self.subscript()?);
                        }
                        Ok(Expr::IoRef { io, subscripts })
                    }
                    None if *self.peek() == Tok::LBracket => {
                        Err(self.error("an operator (only x and y take subscripts)"))
                    }
                    None => Ok(Expr::Ident(name)),
                }
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                while *self.peek() != Tok::RBracket {
                    items.push(self.expr()?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::RBracket, "`]`")?;
                Ok(Expr::List(items))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => Err(self.error("expression")),
        }
    }

    fn subscript(&mut self) -> PResult<Subscript> {
        self.expect(Tok::LBracket, "`[`")?;
        let start = if *self.peek() == Tok::Colon {
            None
        } else {
            Some(self.expr()?)
        };
        if *self.peek() == Tok::RBracket {
            self.bump();
            return match start {
                Some(e) => Ok(Subscript::Index(e)),
                None => Err(self.error("index")),
            };
        }
        self.expect(Tok::Colon, "`:` or `]`")?;
        let stop = if matches!(self.peek(), Tok::Colon | Tok::RBracket) {
            None
        } else {
            Some(self.expr()?)
        };
        let mut step = None;
        if *self.peek() == Tok::Colon {
            self.bump();
            if *self.peek() != Tok::RBracket {
                step = Some(self.expr()?);
            }
        }
        self.expect(Tok::RBracket, "`]`")?;
        Ok(Subscript::Slice { start, stop, step })
    }
}

fn cmp_op(t: &Tok) -> Option<CmpOp> {
    Some(match t {
        Tok::Le => CmpOp::Le,
        Tok::Lt => CmpOp::Lt,
        Tok::Ge => CmpOp::Ge,
        Tok::Gt => CmpOp::Gt,
        Tok::EqEq => CmpOp::Eq,
        Tok::Ne => CmpOp::Ne,
        Tok::Approx => CmpOp::Approx,
        _ => return None,
    })
}
