use std::collections::HashSet;

use super::{Atom, ChannelDecl, CmpOp, Domain, LangError, Literal, Program, Rule, TargetDecl};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
    Dot,
    LArrow,
    RArrow,
    Cmp(CmpOp),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> LangError {
    LangError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, LangError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: tl,
                column: tc,
            })
        };
        match c {
            c if c.is_whitespace() => bump!(),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    bump!();
                }
            }
            '(' => {
                push(&mut out, Tok::LParen);
                bump!();
            }
            ')' => {
                push(&mut out, Tok::RParen);
                bump!();
            }
            ',' => {
                push(&mut out, Tok::Comma);
                bump!();
            }
            '.' => {
                push(&mut out, Tok::Dot);
                bump!();
            }
            '<' | '>' => {
                bump!();
                let next = chars.get(i).copied();
                let tok = match (c, next) {
                    ('<', Some('-')) => {
                        bump!();
                        Tok::LArrow
                    }
                    ('<', Some('=')) => {
                        bump!();
                        Tok::Cmp(CmpOp::Le)
                    }
                    ('>', Some('=')) => {
                        bump!();
                        Tok::Cmp(CmpOp::Ge)
                    }
                    ('<', _) => Tok::Cmp(CmpOp::Lt),
                    _ => Tok::Cmp(CmpOp::Gt),
                };
                push(&mut out, tok);
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                push(&mut out, Tok::RArrow);
                bump!();
                bump!();
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(syntax(tl, tc, "unterminated string")),
                        Some('"') => {
                            bump!();
                            break;
                        }
                        Some('\\') => {
                            bump!();
                            match chars.get(i) {
                                Some(&e @ ('"' | '\\')) => {
                                    s.push(e);
                                    bump!();
                                }
                                _ => return Err(syntax(line, col, "invalid escape in string")),
                            }
                        }
                        Some(&ch) => {
                            s.push(ch);
                            bump!();
                        }
                    }
                }
                push(&mut out, Tok::Str(s));
            }
            c if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                let start = i;
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
                // A '.' only belongs to the number when a digit follows; otherwise it ends the statement.
                if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                    bump!();
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        bump!();
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while i < j {
                            bump!();
                        }
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            bump!();
                        }
                    }
                }
                let lexeme: String = chars[start..i].iter().collect();
                let value: f64 = lexeme
                    .parse()
                    .map_err(|_| syntax(tl, tc, format!("invalid number {lexeme:?}")))?;
                if !value.is_finite() {
                    return Err(syntax(tl, tc, format!("constant {lexeme} is not finite")));
                }
                push(&mut out, Tok::Num(value));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    bump!();
                }
                push(&mut out, Tok::Ident(chars[start..i].iter().collect()));
            }
            '+' | '-' | '*' | '/' => {
                return Err(syntax(tl, tc, "arithmetic between atoms is not supported"));
            }
            '\\' | '~' | '!' => return Err(syntax(tl, tc, "negation is not supported")),
            '=' => {
                return Err(syntax(
                    tl,
                    tc,
                    "unexpected '='; comparisons use <, >, <=, >=",
                ))
            }
            other => return Err(syntax(tl, tc, format!("unexpected character {other:?}"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

enum Statement {
    Source(ChannelDecl),
    Target(TargetDecl),
    Rule(Rule),
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, message: impl Into<String>) -> LangError {
        let t = self.peek();
        syntax(t.line, t.column, message)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, LangError> {
        if self.peek().tok == want {
            Ok(self.next())
        } else {
            Err(self.err_here(format!(
                "expected {what}, found {}",
                describe(&self.peek().tok)
            )))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, LangError> {
        match &self.peek().tok {
            Tok::Ident(name) if name == "not" => Err(self.err_here("negation is not supported")),
            Tok::Ident(name) if is_keyword(name) => {
                Err(self.err_here(format!("expected {what}, found keyword {name:?}")))
            }
            Tok::Ident(name) => {
                let name = name.clone();
                self.next();
                Ok(name)
            }
            other => Err(self.err_here(format!("expected {what}, found {}", describe(other)))),
        }
    }

    fn string(&mut self) -> Result<String, LangError> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            other => Err(self.err_here(format!(
                "expected a quoted channel token, found {}",
                describe(other)
            ))),
        }
    }

    fn atom(&mut self) -> Result<Atom, LangError> {
        let name = self.ident("an atom")?;
        if self.peek().tok == Tok::LParen {
            self.next();
            let arg = self.ident("an atom argument")?;
            if self.peek().tok == Tok::Comma {
                return Err(self.err_here("atoms take at most one argument"));
            }
            self.expect(Tok::RParen, "')'")?;
            Ok(Atom::with_arg(name, arg))
        } else {
            Ok(Atom::new(name))
        }
    }

    fn literal(&mut self) -> Result<Literal, LangError> {
        let atom = self.atom()?;
        if let Tok::Cmp(op) = self.peek().tok {
            self.next();
            match self.peek().tok {
                Tok::Num(value) => {
                    self.next();
                    Ok(Literal::Compare { atom, op, value })
                }
                _ => Err(self.err_here("comparisons must be against a numeric constant")),
            }
        } else {
            Ok(Literal::Atom(atom))
        }
    }

    fn statement(&mut self) -> Result<(Statement, usize), LangError> {
        let line = self.peek().line;
        let head = self.atom()?;
        let stmt = match self.peek().tok.clone() {
            Tok::LArrow => {
                self.next();
                let kw = self.ident("'source'")?;
                if kw != "source" {
                    return Err(syntax(line, 0, format!("expected 'source', found {kw:?}")));
                }
                self.expect(Tok::LParen, "'('")?;
                let token = self.string()?;
                self.expect(Tok::Comma, "','")?;
                let domain = match self.ident("a domain")?.as_str() {
                    "Probability" => Domain::Probability,
                    "Density" => Domain::Density,
                    other => {
                        return Err(syntax(
                            line,
                            0,
                            format!("unknown domain {other:?}; expected Probability or Density"),
                        ))
                    }
                };
                self.expect(Tok::RParen, "')'")?;
                Statement::Source(ChannelDecl {
                    atom: head,
                    token,
                    domain,
                })
            }
            Tok::RArrow => {
                self.next();
                let kw = self.ident("'target'")?;
                if kw != "target" {
                    return Err(syntax(line, 0, format!("expected 'target', found {kw:?}")));
                }
                self.expect(Tok::LParen, "'('")?;
                let token = self.string()?;
                self.expect(Tok::RParen, "')'")?;
                Statement::Target(TargetDecl { atom: head, token })
            }
            Tok::Ident(kw) if kw == "if" => {
                self.next();
                let mut body = vec![self.literal()?];
                while matches!(&self.peek().tok, Tok::Ident(k) if k == "and") {
                    self.next();
                    body.push(self.literal()?);
                }
                if matches!(&self.peek().tok, Tok::Ident(k) if k == "or") {
                    return Err(
                        self.err_here("disjunction is written as several rules with the same head")
                    );
                }
                Statement::Rule(Rule { head, body })
            }
            Tok::Cmp(_) => return Err(self.err_here("a comparison cannot be a rule head")),
            other => {
                return Err(self.err_here(format!(
                    "expected '<-', '->' or 'if', found {}",
                    describe(&other)
                )))
            }
        };
        self.expect(Tok::Dot, "'.' ending the statement")?;
        Ok((stmt, line))
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "if" | "and" | "or" | "not")
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("{s:?}"),
        Tok::Str(s) => format!("string {s:?}"),
        Tok::Num(v) => format!("number {v}"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::Dot => "'.'".into(),
        Tok::LArrow => "'<-'".into(),
        Tok::RArrow => "'->'".into(),
        Tok::Cmp(op) => format!("'{}'", op.symbol()),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses program text. Structural checks that need the whole program
/// (duplicate channels, target count, undefined body atoms) are reported
/// here as errors; semantic checks live in [`super::validate`].
pub fn parse_program(text: &str) -> Result<Program, LangError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };

    let mut sources: Vec<ChannelDecl> = Vec::new();
    let mut rules = Vec::new();
    let mut target: Option<TargetDecl> = None;
    let mut tokens = HashSet::new();

    while p.peek().tok != Tok::Eof {
        let (stmt, line) = p.statement()?;
        match stmt {
            Statement::Source(decl) => {
                if !tokens.insert(decl.token.clone()) {
                    return Err(LangError::DuplicateChannel {
                        token: decl.token,
                        line,
                    });
                }
                if sources.iter().any(|s| s.atom == decl.atom) {
                    return Err(LangError::DuplicateSource {
                        atom: decl.atom.to_string(),
                        line,
                    });
                }
                sources.push(decl);
            }
            Statement::Target(t) => {
                if target.is_some() {
                    return Err(LangError::MultipleTargets { line });
                }
                target = Some(t);
            }
            Statement::Rule(r) => rules.push(r),
        }
    }

    // Undefined-atom check needs positions, so re-walk the token stream per body literal.
    let defined: HashSet<&Atom> = sources
        .iter()
        .map(|s| &s.atom)
        .chain(rules.iter().map(|r| &r.head))
        .collect();
    for rule in &rules {
        for lit in &rule.body {
            let atom = lit.atom();
            if !defined.contains(atom) {
                let (line, column) = locate_atom(&p.toks, atom);
                return Err(LangError::UnknownAtom {
                    atom: atom.to_string(),
                    line,
                    column,
                });
            }
        }
    }

    let target = target.ok_or(LangError::MissingTarget)?;
    if !defined.contains(&target.atom) {
        let (line, column) = locate_atom(&p.toks, &target.atom);
        return Err(LangError::UnknownAtom {
            atom: target.atom.to_string(),
            line,
            column,
        });
    }

    Ok(Program {
        sources,
        rules,
        target,
    })
}

/// Position of the first occurrence of `atom` in the token stream.
fn locate_atom(toks: &[Token], atom: &Atom) -> (usize, usize) {
    for (i, t) in toks.iter().enumerate() {
        if t.tok != Tok::Ident(atom.name.clone()) {
            continue;
        }
        let matches_arg = match &atom.arg {
            None => toks.get(i + 1).map(|n| &n.tok) != Some(&Tok::LParen),
            Some(arg) => {
                toks.get(i + 1).map(|n| &n.tok) == Some(&Tok::LParen)
                    && toks.get(i + 2).map(|n| &n.tok) == Some(&Tok::Ident(arg.clone()))
            }
        };
        if matches_arg {
            return (t.line, t.column);
        }
    }
    (0, 0)
}
