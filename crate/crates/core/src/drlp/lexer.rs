use super::DrlpError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Num(f64),
    Ident(String),
    Pre,
    Exp,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Le,
    Lt,
    Ge,
    Gt,
    EqEq,
    Ne,
    Approx,
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Pre => "`@Pre`".into(),
            Tok::Exp => "`@Exp`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Indent => "indent".into(),
            Tok::Dedent => "dedent".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Assign => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Le => "<=",
            Tok::Lt => "<",
            Tok::Ge => ">=",
            Tok::Gt => ">",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::Approx => "~=",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn syntax(line: usize, column: usize, expected: &str, found: impl Into<String>) -> DrlpError {
    DrlpError::Syntax {
        line,
        column,
        expected: expected.into(),
        found: found.into(),
    }
}

/// Split source into tokens with Python-style indentation tokens.
///
/// Lines whose first non-blank character is `#` are skipped, as is any text
/// after a `#` elsewhere on a line. Newlines inside brackets are ignored.
pub fn tokenize(src: &str) -> Result<Vec<Token>, DrlpError> {
    let mut out = Vec::new();
    let mut indents = vec![0usize];
    let mut depth = 0usize;
    let mut last_line = 1;

    for (idx, raw_line) in src.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let chars: Vec<char> = raw_line.chars().collect();
        let mut col = 0;

        if depth == 0 {
            let mut width = 0;
            while col < chars.len() && (chars[col] == ' ' || chars[col] == '\t') {
                width = if chars[col] == '\t' {
                    (width / 4 + 1) * 4
                } else {
                    width + 1
                };
                col += 1;
            }
            if col == chars.len() || chars[col] == '#' {
                continue;
            }
            let current = *indents.last().expect("indent stack is never empty");
            if width > current {
                indents.push(width);
                out.push(Token {
                    tok: Tok::Indent,
                    line: line_no,
                    column: 1,
                });
            } else {
                while width < *indents.last().expect("indent stack is never empty") {
                    indents.pop();
                    out.push(Token {
                        tok: Tok::Dedent,
                        line: line_no,
                        column: 1,
                    });
                }
                if width != *indents.last().expect("indent stack is never empty") {
                    return Err(syntax(
                        line_no,
                        col + 1,
                        "consistent indentation",
                        "unindent to an unknown level",
                    ));
                }
            }
        }

        let mut produced = false;
        while col < chars.len() {
            let c = chars[col];
            let column = col + 1;
            let push = |out: &mut Vec<Token>, tok| {
                out.push(Token {
                    tok,
                    line: line_no,
                    column,
                })
            };
            if c == ' ' || c == '\t' || c == '\r' {
                col += 1;
                continue;
            }
            if c == '#' {
                break;
            }
            produced = true;
            if c.is_ascii_digit()
                || (c == '.' && chars.get(col + 1).is_some_and(char::is_ascii_digit))
            {
                let start = col;
                while col < chars.len() && (chars[col].is_ascii_digit() || chars[col] == '.') {
                    col += 1;
                }
                if col < chars.len() && (chars[col] == 'e' || chars[col] == 'E') {
                    let mut look = col + 1;
                    if look < chars.len() && (chars[look] == '+' || chars[look] == '-') {
                        look += 1;
                    }
                    if look < chars.len() && chars[look].is_ascii_digit() {
                        col = look;
                        while col < chars.len() && chars[col].is_ascii_digit() {
                            col += 1;
                        }
                    }
                }
                let text: String = chars[start..col].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| syntax(line_no, column, "number", text.clone()))?;
                push(&mut out, Tok::Num(v));
                continue;
            }
            if c.is_alphabetic() || c == '_' {
                let start = col;
                while col < chars.len() && (chars[col].is_alphanumeric() || chars[col] == '_') {
                    col += 1;
                }
                push(&mut out, Tok::Ident(chars[start..col].iter().collect()));
                continue;
            }
            if c == '@' {
                let start = col + 1;
                col += 1;
                while col < chars.len() && chars[col].is_alphanumeric() {
                    col += 1;
                }
                let word: String = chars[start..col].iter().collect();
                match word.as_str() {
                    "Pre" => push(&mut out, Tok::Pre),
                    "Exp" => push(&mut out, Tok::Exp),
                    _ => {
                        return Err(syntax(
                            line_no,
                            column,
                            "`@Pre` or `@Exp`",
                            format!("@{word}"),
                        ))
                    }
                }
                continue;
            }
            let next = chars.get(col + 1).copied();
            let (tok, len) = match (c, next) {
                ('<', Some('=')) => (Tok::Le, 2),
                ('>', Some('=')) => (Tok::Ge, 2),
                ('=', Some('=')) => (Tok::EqEq, 2),
                ('!', Some('=')) => (Tok::Ne, 2),
                ('~', Some('=')) => (Tok::Approx, 2),
                ('<', _) => (Tok::Lt, 1),
                ('>', _) => (Tok::Gt, 1),
                ('=', _) => (Tok::Assign, 1),
                ('≤', _) => (Tok::Le, 1),
                ('≥', _) => (Tok::Ge, 1),
                ('≠', _) => (Tok::Ne, 1),
                ('≈', _) => (Tok::Approx, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('[', _) => (Tok::LBracket, 1),
                (']', _) => (Tok::RBracket, 1),
                (',', _) => (Tok::Comma, 1),
                (':', _) => (Tok::Colon, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-' | '−', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('/', _) => (Tok::Slash, 1),
                _ => return Err(syntax(line_no, column, "a token", c.to_string())),
            };
            match tok {
                Tok::LParen | Tok::LBracket => depth += 1,
                Tok::RParen | Tok::RBracket => {
                    depth = depth.checked_sub(1).ok_or_else(|| {
                        syntax(line_no, column, "matching open bracket", c.to_string())
                    })?;
                }
                _ => {}
            }
            push(&mut out, tok);
            col += len;
        }
        if produced && depth == 0 {
            out.push(Token {
                tok: Tok::Newline,
                line: line_no,
                column: chars.len() + 1,
            });
        }
    }
    if depth > 0 {
        return Err(syntax(last_line, 1, "closing bracket", "end of input"));
    }
    let end = last_line + 1;
    while indents.len() > 1 {
        indents.pop();
        out.push(Token {
            tok: Tok::Dedent,
            line: end,
            column: 1,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line: end,
        column: 1,
    });
    Ok(out)
}
