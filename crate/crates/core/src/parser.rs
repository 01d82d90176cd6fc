//! Lexer and recursive-descent parser for `.grm` programs.
//!
//! Top-level items (pragmas, signatures, definitions) start in column 1;
//! any continuation line of a type or term must be indented.

use std::fmt;

use thiserror::Error;

use crate::grades::{parse_grade, Grade, SemiringId};
use crate::syntax::{BaseType, Constructor, DeriveKind, PatKind, Pattern, Pos, Term, TermKind, Type};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Decl {
    pub name: String,
    pub pos: Pos,
    pub sig: Type,
    pub body: Term,
    pub semiring: SemiringId,
}

#[derive(Clone, Debug)]
pub struct SourceProgram {
    /// Semiring selected by the first pragma, or nat-exact.
    pub semiring: SemiringId,
    pub pragmas: Vec<(SemiringId, Pos)>,
    pub decls: Vec<Decl>,
}

impl SourceProgram {
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.decls.iter().find(|d| d.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    UIdent(String),
    Int(i64),
    Sym(&'static str),
    Pragma(String),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(x) | Tok::UIdent(x) => format!("`{x}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Pragma(p) => format!("`{p}`"),
            Tok::Eof => "end of declaration".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: Pos,
    text: String,
}

const SYMBOLS: [&str; 17] = [
    "-o", "->", "..", "\\", "*", "+", "(", ")", "[", "]", ",", ";", ":", "=", "@", ".", "_",
];

const KEYWORDS: [&str; 13] = [
    "case", "of", "letrec", "in", "unit", "inl", "inr", "push", "pull", "drop", "copyShape", "fmap", "mu",
];

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let ident_char = |c: char| c.is_ascii_alphanumeric() || c == '_' || c == '\'';
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos::new(line, col);
        let start = i;
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let tok = if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            Tok::Pragma(text.trim_end().to_string())
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n = text.parse::<i64>().map_err(|_| SyntaxError {
                pos,
                message: format!("integer literal `{text}` out of range"),
                expected: vec![],
            })?;
            Tok::Int(n)
        } else if c.is_ascii_alphabetic() || (c == '_' && chars.get(i + 1).is_some_and(|&d| ident_char(d))) {
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            if c.is_ascii_uppercase() {
                Tok::UIdent(text)
            } else {
                Tok::Ident(text)
            }
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    i += s.chars().count();
                    Tok::Sym(s)
                }
                None => {
                    return Err(SyntaxError {
                        pos,
                        message: format!("unexpected character `{c}`"),
                        expected: vec![],
                    })
                }
            }
        };
        col += (i - start) as u32;
        out.push(Token {
            tok,
            pos,
            text: chars[start..i].iter().collect(),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos::new(line, col),
        text: String::new(),
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    idx: usize,
    /// Tokens at or beyond this index are hidden (start of the next item).
    limit: usize,
    sr: SemiringId,
    depth: usize,
}

/// Deeper nesting is rejected rather than risking the stack.
const MAX_NESTING: usize = 200;

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn new(src: &str, sr: SemiringId) -> PResult<Parser> {
        let toks = lex(src)?;
        let limit = toks.len() - 1;
        Ok(Parser { toks, idx: 0, limit, sr, depth: 0 })
    }

    fn peek(&self) -> &Tok {
        self.peek_at(0)
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = self.idx + k;
        if i >= self.limit {
            &Tok::Eof
        } else {
            &self.toks[i].tok
        }
    }

    fn pos(&self) -> Pos {
        self.toks[self.idx.min(self.toks.len() - 1)].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.idx].clone();
        self.idx += 1;
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == kw)
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let found = self.peek().clone();
        // At a hidden boundary, blame the last token that was consumed.
        let pos = if found == Tok::Eof && self.idx > 0 {
            self.toks[self.idx - 1].pos
        } else {
            self.pos()
        };
        let message = if found == Tok::Eof && self.idx > 0 {
            format!("unexpected end after `{}`", self.toks[self.idx - 1].text)
        } else {
            format!("unexpected {}", found.describe())
        };
        Err(SyntaxError {
            pos,
            message,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect_sym(&mut self, s: &'static str) -> PResult<Pos> {
        if self.is_sym(s) {
            Ok(self.bump().pos)
        } else {
            self.error(&[&format!("`{s}`")])
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Pos> {
        if self.is_kw(kw) {
            Ok(self.bump().pos)
        } else {
            self.error(&[&format!("`{kw}`")])
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        match self.peek() {
            Tok::Ident(x) if !KEYWORDS.contains(&x.as_str()) => {
                let x = x.clone();
                let pos = self.bump().pos;
                Ok((x, pos))
            }
            _ => self.error(&["identifier"]),
        }
    }

    /// Hides everything from the next column-1 token on.
    fn enter_item(&mut self) {
        let next = (self.idx + 1..self.toks.len())
            .find(|&i| self.toks[i].pos.col == 1 || self.toks[i].tok == Tok::Eof)
            .unwrap_or(self.toks.len() - 1);
        self.limit = next;
    }

    fn leave_item(&mut self) -> PResult<()> {
        if self.peek() != &Tok::Eof {
            return self.error(&["end of declaration"]);
        }
        self.limit = self.toks.len() - 1;
        Ok(())
    }

    // ---- programs ----

    fn program(&mut self) -> PResult<SourceProgram> {
        let mut pragmas = Vec::new();
        let mut decls: Vec<Decl> = Vec::new();
        while self.peek() != &Tok::Eof {
            let tok = &self.toks[self.idx];
            if tok.pos.col != 1 {
                return Err(SyntaxError {
                    pos: tok.pos,
                    message: "top-level items must start in column 1".into(),
                    expected: vec![],
                });
            }
            if let Tok::Pragma(text) = &tok.tok {
                let pos = tok.pos;
                let mut words = text.split_whitespace();
                let sr = match (words.next(), words.next(), words.next()) {
                    (Some("#semiring"), Some(name), None) => name.parse::<SemiringId>().ok(),
                    _ => None,
                };
                let Some(sr) = sr else {
                    return Err(SyntaxError {
                        pos,
                        message: format!("malformed pragma `{text}`"),
                        expected: vec!["`#semiring nat-exact|nat-le|interval|zero-one-many`".into()],
                    });
                };
                self.bump();
                self.sr = sr;
                pragmas.push((sr, pos));
                continue;
            }
            decls.push(self.decl()?);
        }
        Ok(SourceProgram {
            semiring: pragmas.first().map_or(SemiringId::NatExact, |p| p.0),
            pragmas,
            decls,
        })
    }

    fn decl(&mut self) -> PResult<Decl> {
        self.enter_item();
        let (name, pos) = self.ident()?;
        self.expect_sym(":")?;
        let sig = self.ty()?;
        self.leave_item()?;
        self.enter_item();
        let (def_name, def_pos) = match self.peek() {
            Tok::Ident(_) => self.ident()?,
            _ => return self.error(&[&format!("definition of `{name}`")]),
        };
        if def_name != name {
            return Err(SyntaxError {
                pos: def_pos,
                message: format!("definition of `{def_name}` follows the signature of `{name}`"),
                expected: vec![format!("`{name}`")],
            });
        }
        self.expect_sym("=")?;
        let body = self.term()?;
        self.leave_item()?;
        Ok(Decl {
            name,
            pos,
            sig,
            body,
            semiring: self.sr,
        })
    }

    // ---- types ----

    fn nested<T>(&mut self, f: impl FnOnce(&mut Parser) -> PResult<T>) -> PResult<T> {
        self.widen(0)?;
        self.depth += 1;
        let r = f(self);
        self.depth -= 1;
        r
    }

    /// Chains build left- or right-nested trees of `extra` more levels.
    fn widen(&self, extra: usize) -> PResult<()> {
        if self.depth + extra >= MAX_NESTING {
            return Err(SyntaxError {
                pos: self.pos(),
                message: format!("nesting deeper than {MAX_NESTING} levels"),
                expected: vec![],
            });
        }
        Ok(())
    }

    fn ty(&mut self) -> PResult<Type> {
        self.nested(Parser::ty_inner)
    }

    fn ty_inner(&mut self) -> PResult<Type> {
        let lhs = self.btype()?;
        if self.is_sym("-o") {
            self.bump();
            let rhs = self.ty()?;
            return Ok(Type::fun(lhs, rhs));
        }
        Ok(lhs)
    }

    fn btype(&mut self) -> PResult<Type> {
        let mut items = vec![self.atype()?];
        let mut op: Option<&'static str> = None;
        while let Tok::Sym(s @ ("*" | "+")) = *self.peek() {
            if op.is_some_and(|o| o != s) {
                return self.error(&["parentheses when mixing `*` and `+`"]);
            }
            op = Some(s);
            self.bump();
            self.widen(items.len())?;
            items.push(self.atype()?);
        }
        let mut t = items.pop().unwrap();
        while let Some(l) = items.pop() {
            t = if op == Some("*") { Type::tensor(l, t) } else { Type::sum(l, t) };
        }
        Ok(t)
    }

    fn atype(&mut self) -> PResult<Type> {
        let mut t = self.bare_atype()?;
        let mut n = 0;
        while self.is_sym("[") {
            n += 1;
            self.widen(n)?;
            self.bump();
            let g = self.grade()?;
            self.expect_sym("]")?;
            t = Type::boxed(g, t);
        }
        Ok(t)
    }

    /// An atomic type without trailing grades; `push @T [x]` applies to a promotion.
    fn bare_atype(&mut self) -> PResult<Type> {
        self.nested(Parser::bare_atype_inner)
    }

    fn bare_atype_inner(&mut self) -> PResult<Type> {
        Ok(match self.peek().clone() {
            Tok::UIdent(x) => {
                self.bump();
                match x.as_str() {
                    "Unit" => Type::Unit,
                    "Int" => Type::Base(BaseType::Int),
                    "Res" => Type::Base(BaseType::Res),
                    _ => Type::RecVar(x),
                }
            }
            Tok::Ident(x) if x == "mu" => {
                self.bump();
                let x = match self.peek().clone() {
                    Tok::UIdent(x) if !["Unit", "Int", "Res"].contains(&x.as_str()) => {
                        self.bump();
                        x
                    }
                    _ => return self.error(&["recursion variable"]),
                };
                self.expect_sym(".")?;
                let body = self.ty()?;
                Type::Mu(x, Box::new(body))
            }
            Tok::Ident(x) if !KEYWORDS.contains(&x.as_str()) => {
                self.bump();
                Type::TyVar(x)
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.ty()?;
                self.expect_sym(")")?;
                t
            }
            _ => return self.error(&["type"]),
        })
    }

    fn grade(&mut self) -> PResult<Grade> {
        let pos = self.pos();
        let mut text = String::new();
        while !self.is_sym("]") && self.peek() != &Tok::Eof {
            text.push_str(&self.bump().text);
        }
        parse_grade(&text, self.sr).map_err(|e| SyntaxError {
            pos,
            message: e.to_string(),
            expected: vec![format!("{} grade", self.sr)],
        })
    }

    // ---- terms ----

    fn term(&mut self) -> PResult<Term> {
        self.nested(Parser::term_inner)
    }

    fn term_inner(&mut self) -> PResult<Term> {
        let pos = self.pos();
        if self.is_sym("\\") {
            self.bump();
            let (x, _) = self.ident()?;
            self.expect_sym("->")?;
            let body = self.term()?;
            return Ok(Term::lam(&x, body).at(pos));
        }
        if self.is_kw("letrec") {
            self.bump();
            let (x, _) = self.ident()?;
            self.expect_sym("=")?;
            let bound = self.term()?;
            self.expect_kw("in")?;
            let body = self.term()?;
            return Ok(Term::letrec(&x, bound, body).at(pos));
        }
        if self.is_kw("case") {
            self.bump();
            let scrutinee = self.term()?;
            self.expect_kw("of")?;
            let mut branches = vec![self.alt()?];
            while self.is_sym(";") {
                self.bump();
                branches.push(self.alt()?);
            }
            return Ok(Term::case(scrutinee, branches).at(pos));
        }
        self.app()
    }

    fn alt(&mut self) -> PResult<(Pattern, Term)> {
        let p = self.pattern()?;
        self.expect_sym("->")?;
        Ok((p, self.term()?))
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Ident(x) => !["case", "of", "letrec", "in", "mu"].contains(&x.as_str()),
            Tok::Int(_) => true,
            Tok::Sym(s) => matches!(*s, "(" | "["),
            _ => false,
        }
    }

    fn app(&mut self) -> PResult<Term> {
        let pos = self.pos();
        let mut t = self.atom()?;
        let mut n = 0;
        while self.starts_atom() {
            n += 1;
            self.widen(n)?;
            let a = self.atom()?;
            t = Term::app(t, a).at(pos);
        }
        Ok(t)
    }

    fn atom(&mut self) -> PResult<Term> {
        self.nested(Parser::atom_inner)
    }

    fn atom_inner(&mut self) -> PResult<Term> {
        let pos = self.pos();
        let t = match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Term::int(n)
            }
            Tok::Ident(x) => match x.as_str() {
                "unit" => {
                    self.bump();
                    Term::unit()
                }
                "inl" | "inr" => {
                    self.bump();
                    let a = self.atom()?;
                    if x == "inl" {
                        Term::inl(a)
                    } else {
                        Term::inr(a)
                    }
                }
                "push" | "pull" | "drop" | "copyShape" | "fmap" => {
                    self.bump();
                    self.expect_sym("@")?;
                    let ty = self.bare_atype()?;
                    let kind = DeriveKind::ALL.into_iter().find(|k| k.keyword() == x).unwrap();
                    Term::derive(kind, ty)
                }
                _ => {
                    let (x, _) = self.ident()?;
                    Term::var(&x)
                }
            },
            Tok::Sym("[") => {
                self.bump();
                let inner = self.term()?;
                self.expect_sym("]")?;
                Term::promote(inner)
            }
            Tok::Sym("(") => {
                self.bump();
                let first = self.term()?;
                if self.is_sym(",") {
                    self.bump();
                    let second = self.term()?;
                    self.expect_sym(")")?;
                    Term::pair(first, second)
                } else if self.is_sym(":") {
                    self.bump();
                    let ty = self.ty()?;
                    self.expect_sym(")")?;
                    Term::ann(first, ty)
                } else {
                    self.expect_sym(")")?;
                    return Ok(first);
                }
            }
            _ => return self.error(&["term"]),
        };
        Ok(t.at(pos))
    }

    // ---- patterns ----

    fn pattern(&mut self) -> PResult<Pattern> {
        self.nested(Parser::pattern_inner)
    }

    fn pattern_inner(&mut self) -> PResult<Pattern> {
        let pos = self.pos();
        let kind = match self.peek().clone() {
            Tok::Sym("_") => {
                self.bump();
                PatKind::Wild
            }
            Tok::Int(n) => {
                self.bump();
                PatKind::Int(n)
            }
            Tok::Ident(x) if x == "unit" => {
                self.bump();
                PatKind::Con(Constructor::Unit, vec![])
            }
            Tok::Ident(x) if x == "inl" || x == "inr" => {
                self.bump();
                let p = self.pattern()?;
                let c = if x == "inl" { Constructor::Inl } else { Constructor::Inr };
                PatKind::Con(c, vec![p])
            }
            Tok::Ident(_) => PatKind::Var(self.ident()?.0),
            Tok::Sym("[") => {
                self.bump();
                let p = self.pattern()?;
                self.expect_sym("]")?;
                PatKind::Box(Box::new(p))
            }
            Tok::Sym("(") => {
                self.bump();
                let first = self.pattern()?;
                if self.is_sym(",") {
                    self.bump();
                    let second = self.pattern()?;
                    self.expect_sym(")")?;
                    PatKind::Con(Constructor::Pair, vec![first, second])
                } else {
                    self.expect_sym(")")?;
                    return Ok(first);
                }
            }
            _ => return self.error(&["pattern"]),
        };
        Ok(Pattern { kind, pos })
    }

    fn finish(&self) -> PResult<()> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            self.error(&["end of input"])
        }
    }
}

pub fn parse_program(text: &str) -> Result<SourceProgram, SyntaxError> {
    Parser::new(text, SemiringId::NatExact)?.program()
}

pub fn parse_type(text: &str, sr: SemiringId) -> Result<Type, SyntaxError> {
    let mut p = Parser::new(text, sr)?;
    let t = p.ty()?;
    p.finish()?;
    Ok(t)
}

pub fn parse_term(text: &str, sr: SemiringId) -> Result<Term, SyntaxError> {
    let mut p = Parser::new(text, sr)?;
    let t = p.term()?;
    p.finish()?;
    Ok(t)
}

pub fn parse_pattern(text: &str) -> Result<Pattern, SyntaxError> {
    let mut p = Parser::new(text, SemiringId::NatExact)?;
    let pat = p.pattern()?;
    p.finish()?;
    Ok(pat)
}

/// Whether a term node came from source text rather than a derivation.
pub fn is_source(t: &Term) -> bool {
    !t.pos.is_synthetic() || matches!(t.kind, TermKind::Mark(..))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grades::Ext;

    #[test]
    fn parses_copy() {
        let prog = parse_program("copy : (a [2]) -o (a * a)\ncopy = \\y -> case y of [x] -> (x, x)").unwrap();
        assert_eq!(prog.decls.len(), 1);
        let d = &prog.decls[0];
        assert_eq!(
            d.sig,
            Type::fun(
                Type::boxed(Grade::nat_exact(2), Type::var("a")),
                Type::tensor(Type::var("a"), Type::var("a"))
            )
        );
        let expected = Term::lam(
            "y",
            Term::case(
                Term::var("y"),
                vec![(Pattern::boxed(Pattern::var("x")), Term::pair(Term::var("x"), Term::var("x")))],
            ),
        );
        assert_eq!(d.body, expected);
        assert_eq!(d.pos, Pos::new(1, 1));
        let TermKind::Lam(_, body) = &d.body.kind else { panic!() };
        assert_eq!(body.pos, Pos::new(2, 14));
    }

    #[test]
    fn empty_program() {
        let prog = parse_program("").unwrap();
        assert!(prog.decls.is_empty());
        assert_eq!(prog.semiring, SemiringId::NatExact);
        assert!(parse_program("-- only a comment\n\n").unwrap().decls.is_empty());
    }

    #[test]
    fn dangling_arrow_is_reported_at_the_arrow() {
        let err = parse_program("f : a -o\nf = \\x -> x").unwrap_err();
        assert_eq!(err.pos, Pos::new(1, 7));
        assert!(err.expected.contains(&"type".to_string()));
    }

    #[test]
    fn type_examples() {
        assert_eq!(
            parse_type("(a * a) -o b", SemiringId::NatExact).unwrap(),
            Type::fun(Type::tensor(Type::var("a"), Type::var("a")), Type::var("b"))
        );
        assert_eq!(parse_type("mu X . Unit + (a * X)", SemiringId::NatExact).unwrap(), Type::list(Type::var("a")));
        assert_eq!(
            parse_type("a [0..1]", SemiringId::Interval).unwrap(),
            Type::boxed(Grade::interval(Ext::Fin(0), Ext::Fin(1)), Type::var("a"))
        );
        assert_eq!(
            parse_type("a * b * c", SemiringId::NatExact).unwrap(),
            Type::tensor(Type::var("a"), Type::tensor(Type::var("b"), Type::var("c")))
        );
        assert!(parse_type("a * b + c", SemiringId::NatExact).is_err());
        assert!(parse_type("a [0..1]", SemiringId::NatExact).is_err());
    }

    #[test]
    fn deep_nesting_is_a_syntax_error() {
        let sr = SemiringId::NatExact;
        let deep = format!("{}1{}", "(".repeat(5000), ")".repeat(5000));
        assert!(parse_term(&deep, sr).unwrap_err().message.contains("nesting"));
        let spine = format!("f{}", " x".repeat(5000));
        assert!(parse_term(&spine, sr).is_err());
        let chain = vec!["Int"; 5000].join(" * ");
        assert!(parse_type(&chain, sr).is_err());
        assert!(parse_term(&format!("{}1{}", "(".repeat(50), ")".repeat(50)), sr).is_ok());
    }

    #[test]
    fn pragmas_select_semiring() {
        let prog = parse_program("#semiring interval\nf : a [0..Inf] -o Unit\nf = \\x -> case x of [_] -> unit\n").unwrap();
        assert_eq!(prog.semiring, SemiringId::Interval);
        assert_eq!(prog.decls[0].semiring, SemiringId::Interval);
        assert!(parse_program("#semiring reals\n").is_err());
    }

    #[test]
    fn multi_line_terms_need_indentation() {
        let src = "f : Unit -o Unit\nf = \\x ->\n  case x of\n    unit -> unit\ng : Unit\ng = f unit\n";
        let prog = parse_program(src).unwrap();
        assert_eq!(prog.decls.len(), 2);
        assert_eq!(prog.decls[1].body, Term::app(Term::var("f"), Term::unit()));
    }

    #[test]
    fn mismatched_definition_name() {
        let err = parse_program("f : Unit\ng = unit").unwrap_err();
        assert_eq!(err.pos, Pos::new(2, 1));
    }

    #[test]
    fn derive_and_annotation_atoms() {
        let t = parse_term("push @(mu X . Unit + (a * X)) (z : Int)", SemiringId::NatExact).unwrap();
        assert_eq!(
            t,
            Term::app(
                Term::derive(DeriveKind::Push, Type::list(Type::var("a"))),
                Term::ann(Term::var("z"), Type::int())
            )
        );
        assert!(parse_term("push a", SemiringId::NatExact).is_err());
    }

    #[test]
    fn errors_stay_in_bounds() {
        for src in ["(", "case x of", "\\", "f : (a", "x : a\nx = [", "#", "f : a\nf = (x : )"] {
            let err = parse_program(src).unwrap_err();
            let lines = src.lines().count().max(1) as u32;
            assert!(err.pos.line >= 1 && err.pos.line <= lines, "{src:?} -> {err:?}");
        }
    }
}
