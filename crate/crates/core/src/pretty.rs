//! Printing for types, terms and patterns. Output re-parses to the same tree.

use crate::grades::show_grade;
use crate::syntax::{Constructor, PatKind, Pattern, Term, TermKind, Type};

pub fn pretty_type(t: &Type) -> String {
    let mut out = String::new();
    ty(t, 0, &mut out);
    out
}

// Precedence: 0 = full type, 1 = operand chain, 2 = atom.
fn ty(t: &Type, prec: u8, out: &mut String) {
    match t {
        Type::Fun(a, b) => paren(prec > 0, out, |out| {
            ty(a, 2, out);
            out.push_str(" -o ");
            ty(b, 0, out);
        }),
        Type::Tensor(..) => chain(t, " * ", prec, out),
        Type::Sum(..) => chain(t, " + ", prec, out),
        Type::Unit => out.push_str("Unit"),
        Type::Base(b) => out.push_str(b.name()),
        Type::TyVar(x) | Type::RecVar(x) => out.push_str(x),
        Type::Box(r, a) => {
            ty(a, 2, out);
            out.push_str(" [");
            out.push_str(&show_grade(r));
            out.push(']');
        }
        Type::Mu(x, body) => paren(prec > 0, out, |out| {
            out.push_str("mu ");
            out.push_str(x);
            out.push_str(" . ");
            ty(body, 0, out);
        }),
    }
}

fn chain(t: &Type, op: &str, prec: u8, out: &mut String) {
    paren(prec > 1, out, |out| {
        let mut cur = t;
        loop {
            let (l, r) = match (cur, op) {
                (Type::Tensor(l, r), " * ") | (Type::Sum(l, r), " + ") => (l, r),
                _ => {
                    ty(cur, 2, out);
                    break;
                }
            };
            ty(l, 2, out);
            out.push_str(op);
            cur = r;
        }
    })
}

fn paren(on: bool, out: &mut String, f: impl FnOnce(&mut String)) {
    if on {
        out.push('(');
    }
    f(out);
    if on {
        out.push(')');
    }
}

pub fn pretty_pattern(p: &Pattern) -> String {
    let mut out = String::new();
    pat(p, &mut out);
    out
}

fn pat(p: &Pattern, out: &mut String) {
    match &p.kind {
        PatKind::Var(x) => out.push_str(x),
        PatKind::Wild => out.push('_'),
        PatKind::Int(n) => out.push_str(&n.to_string()),
        PatKind::Box(q) => {
            out.push('[');
            pat(q, out);
            out.push(']');
        }
        PatKind::Con(Constructor::Unit, _) => out.push_str("unit"),
        PatKind::Con(Constructor::Pair, ps) => {
            out.push('(');
            pat(&ps[0], out);
            out.push_str(", ");
            pat(&ps[1], out);
            out.push(')');
        }
        PatKind::Con(c, ps) => {
            out.push_str(c.name());
            out.push(' ');
            let nested = matches!(&ps[0].kind, PatKind::Con(Constructor::Inl | Constructor::Inr, _));
            paren(nested, out, |out| pat(&ps[0], out));
        }
    }
}

pub fn pretty_term(t: &Term) -> String {
    let mut out = String::new();
    term(t, 0, &mut out);
    out
}

/// Binding forms (lambda, letrec, case) extend as far right as possible.
fn is_open(t: &Term) -> bool {
    match &t.kind {
        TermKind::Lam(..) | TermKind::Case(..) | TermKind::LetRec(..) => true,
        TermKind::Mark(_, inner) => is_open(inner),
        _ => false,
    }
}

// Precedence: 0 = term, 1 = application, 2 = atom.
fn term(t: &Term, prec: u8, out: &mut String) {
    match &t.kind {
        TermKind::Var(x) => out.push_str(x),
        TermKind::IntLit(n) => out.push_str(&n.to_string()),
        TermKind::Mark(_, inner) => term(inner, prec, out),
        TermKind::Lam(x, body) => paren(prec > 0, out, |out| {
            out.push('\\');
            out.push_str(x);
            out.push_str(" -> ");
            term(body, 0, out);
        }),
        TermKind::LetRec(x, bound, body) => paren(prec > 0, out, |out| {
            out.push_str("letrec ");
            out.push_str(x);
            out.push_str(" = ");
            term(bound, 0, out);
            out.push_str(" in ");
            term(body, 0, out);
        }),
        TermKind::Case(s, branches) => paren(prec > 0, out, |out| {
            out.push_str("case ");
            term(s, if is_open(s) { 1 } else { 0 }, out);
            out.push_str(" of ");
            for (i, (p, body)) in branches.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                pat(p, out);
                out.push_str(" -> ");
                let last = i + 1 == branches.len();
                term(body, if !last && is_open(body) { 1 } else { 0 }, out);
            }
        }),
        TermKind::App(f, a) => paren(prec > 1, out, |out| {
            term(f, 1, out);
            out.push(' ');
            term(a, 2, out);
        }),
        TermKind::Promote(inner) => {
            out.push('[');
            term(inner, 0, out);
            out.push(']');
        }
        TermKind::Con(Constructor::Unit, _) => out.push_str("unit"),
        TermKind::Con(Constructor::Pair, args) => {
            out.push('(');
            term(&args[0], 0, out);
            out.push_str(", ");
            term(&args[1], 0, out);
            out.push(')');
        }
        TermKind::Con(c, args) => paren(prec > 1, out, |out| {
            out.push_str(c.name());
            out.push(' ');
            term(&args[0], 2, out);
        }),
        TermKind::Derive(k, a) => {
            out.push_str(k.keyword());
            out.push_str(" @");
            let boxed = matches!(a, Type::Box(..));
            paren(boxed, out, |out| ty(a, 2, out));
        }
        TermKind::Ann(inner, a) => {
            out.push('(');
            term(inner, 0, out);
            out.push_str(" : ");
            ty(a, 0, out);
            out.push(')');
        }
    }
}
