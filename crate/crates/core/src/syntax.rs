//! Abstract syntax of types, terms and patterns, plus the type-level
//! utilities the checker and the deriver share.

use std::collections::BTreeSet;
use std::fmt;

use crate::grades::{Grade, SemiringId};

/// Source position, 1-based. `Pos::default()` (line 0) marks synthesized
/// syntax such as derived combinators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Pos {
        Pos { line, col }
    }

    pub fn is_synthetic(&self) -> bool {
        self.line == 0
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseType {
    /// Weakenable: has a built-in `drop`.
    Int,
    /// Linear-only resource.
    Res,
}

impl BaseType {
    pub fn droppable(self) -> bool {
        matches!(self, BaseType::Int)
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseType::Int => "Int",
            BaseType::Res => "Res",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Fun(Box<Type>, Box<Type>),
    Tensor(Box<Type>, Box<Type>),
    Sum(Box<Type>, Box<Type>),
    Unit,
    Box(Grade, Box<Type>),
    TyVar(String),
    RecVar(String),
    Mu(String, Box<Type>),
    Base(BaseType),
}

impl Type {
    pub fn fun(a: Type, b: Type) -> Type {
        Type::Fun(Box::new(a), Box::new(b))
    }

    pub fn tensor(a: Type, b: Type) -> Type {
        Type::Tensor(Box::new(a), Box::new(b))
    }

    pub fn sum(a: Type, b: Type) -> Type {
        Type::Sum(Box::new(a), Box::new(b))
    }

    pub fn boxed(r: Grade, a: Type) -> Type {
        Type::Box(r, Box::new(a))
    }

    pub fn var(name: &str) -> Type {
        Type::TyVar(name.to_string())
    }

    pub fn rec(name: &str) -> Type {
        Type::RecVar(name.to_string())
    }

    pub fn mu(name: &str, body: Type) -> Type {
        Type::Mu(name.to_string(), Box::new(body))
    }

    pub fn int() -> Type {
        Type::Base(BaseType::Int)
    }

    /// `mu X . Unit + (elem * X)`
    pub fn list(elem: Type) -> Type {
        Type::mu("X", Type::sum(Type::Unit, Type::tensor(elem, Type::rec("X"))))
    }

    pub fn contains_box(&self) -> bool {
        self.any(&mut |t| matches!(t, Type::Box(..)))
    }

    pub fn contains_fun(&self) -> bool {
        self.any(&mut |t| matches!(t, Type::Fun(..)))
    }

    pub fn contains_base(&self, base: BaseType) -> bool {
        self.any(&mut |t| *t == Type::Base(base))
    }

    fn any(&self, pred: &mut impl FnMut(&Type) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Type::Fun(a, b) | Type::Tensor(a, b) | Type::Sum(a, b) => a.any(pred) || b.any(pred),
            Type::Box(_, a) | Type::Mu(_, a) => a.any(pred),
            Type::Unit | Type::TyVar(_) | Type::RecVar(_) | Type::Base(_) => false,
        }
    }

    pub fn type_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_type_vars(&mut out);
        out
    }

    fn collect_type_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Type::TyVar(a) => {
                out.insert(a.clone());
            }
            Type::Fun(a, b) | Type::Tensor(a, b) | Type::Sum(a, b) => {
                a.collect_type_vars(out);
                b.collect_type_vars(out);
            }
            Type::Box(_, a) | Type::Mu(_, a) => a.collect_type_vars(out),
            Type::Unit | Type::RecVar(_) | Type::Base(_) => {}
        }
    }

    pub fn free_rec_vars(&self) -> BTreeSet<String> {
        fn go(t: &Type, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match t {
                Type::RecVar(x) => {
                    if !bound.contains(x) {
                        out.insert(x.clone());
                    }
                }
                Type::Mu(x, body) => {
                    bound.push(x.clone());
                    go(body, bound, out);
                    bound.pop();
                }
                Type::Fun(a, b) | Type::Tensor(a, b) | Type::Sum(a, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                Type::Box(_, a) => go(a, bound, out),
                Type::Unit | Type::TyVar(_) | Type::Base(_) => {}
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    /// Replaces type variables. Type variables have no binders, so no
    /// renaming is needed.
    pub fn subst_tyvars(&self, f: &impl Fn(&str) -> Option<Type>) -> Type {
        self.map_leaves(&|t| match t {
            Type::TyVar(a) => f(a),
            _ => None,
        })
    }

    /// Rebuilds the type, replacing every leaf (type variable or base type)
    /// for which `f` returns `Some`.
    pub fn map_leaves(&self, f: &impl Fn(&Type) -> Option<Type>) -> Type {
        match self {
            Type::TyVar(_) | Type::Base(_) => f(self).unwrap_or_else(|| self.clone()),
            Type::Fun(a, b) => Type::fun(a.map_leaves(f), b.map_leaves(f)),
            Type::Tensor(a, b) => Type::tensor(a.map_leaves(f), b.map_leaves(f)),
            Type::Sum(a, b) => Type::sum(a.map_leaves(f), b.map_leaves(f)),
            Type::Box(r, a) => Type::boxed(*r, a.map_leaves(f)),
            Type::Mu(x, a) => Type::Mu(x.clone(), Box::new(a.map_leaves(f))),
            Type::Unit | Type::RecVar(_) => self.clone(),
        }
    }

    /// Capture-avoiding substitution of `replacement` for the recursion
    /// variable `name`.
    pub fn subst_rec(&self, name: &str, replacement: &Type) -> Type {
        let free = replacement.free_rec_vars();
        self.subst_rec_with(name, replacement, &free)
    }

    fn subst_rec_with(&self, name: &str, replacement: &Type, free: &BTreeSet<String>) -> Type {
        match self {
            Type::RecVar(x) if x == name => replacement.clone(),
            Type::Mu(x, _) if x == name => self.clone(),
            Type::Mu(x, body) => {
                if free.contains(x) {
                    let mut avoid = free.clone();
                    avoid.extend(body.free_rec_vars());
                    avoid.insert(name.to_string());
                    let fresh = fresh_name(x, &avoid);
                    let renamed = body.subst_rec(x, &Type::RecVar(fresh.clone()));
                    Type::Mu(fresh, Box::new(renamed.subst_rec_with(name, replacement, free)))
                } else {
                    Type::Mu(x.clone(), Box::new(body.subst_rec_with(name, replacement, free)))
                }
            }
            Type::Fun(a, b) => Type::fun(
                a.subst_rec_with(name, replacement, free),
                b.subst_rec_with(name, replacement, free),
            ),
            Type::Tensor(a, b) => Type::tensor(
                a.subst_rec_with(name, replacement, free),
                b.subst_rec_with(name, replacement, free),
            ),
            Type::Sum(a, b) => Type::sum(
                a.subst_rec_with(name, replacement, free),
                b.subst_rec_with(name, replacement, free),
            ),
            Type::Box(r, a) => Type::boxed(*r, a.subst_rec_with(name, replacement, free)),
            Type::Unit | Type::TyVar(_) | Type::RecVar(_) | Type::Base(_) => self.clone(),
        }
    }

    /// Structural equality up to renaming of `mu` binders.
    pub fn alpha_eq(&self, other: &Type) -> bool {
        fn go(a: &Type, b: &Type, env: &mut Vec<(String, String)>) -> bool {
            match (a, b) {
                (Type::RecVar(x), Type::RecVar(y)) => {
                    match env.iter().rev().find(|(l, r)| l == x || r == y) {
                        Some((l, r)) => l == x && r == y,
                        None => x == y,
                    }
                }
                (Type::Mu(x, s), Type::Mu(y, t)) => {
                    env.push((x.clone(), y.clone()));
                    let ok = go(s, t, env);
                    env.pop();
                    ok
                }
                (Type::Fun(a1, b1), Type::Fun(a2, b2))
                | (Type::Tensor(a1, b1), Type::Tensor(a2, b2))
                | (Type::Sum(a1, b1), Type::Sum(a2, b2)) => go(a1, a2, env) && go(b1, b2, env),
                (Type::Box(r, s), Type::Box(q, t)) => r == q && go(s, t, env),
                _ => a == b,
            }
        }
        go(self, other, &mut Vec::new())
    }

    /// Semirings of every grade occurring in the type.
    pub fn semirings(&self) -> BTreeSet<SemiringId> {
        let mut out = BTreeSet::new();
        self.any(&mut |t| {
            if let Type::Box(r, _) = t {
                out.insert(r.semiring());
            }
            false
        });
        out
    }
}

/// Equi-recursive type equality: a `mu` type equals its unrolling.
pub fn types_equal(a: &Type, b: &Type) -> bool {
    fn go(a: &Type, b: &Type, seen: &mut Vec<(Type, Type)>) -> bool {
        if a.alpha_eq(b) {
            return true;
        }
        if matches!(a, Type::Mu(..)) || matches!(b, Type::Mu(..)) {
            if seen.iter().any(|(x, y)| x.alpha_eq(a) && y.alpha_eq(b)) {
                return true;
            }
            seen.push((a.clone(), b.clone()));
            let a2 = if matches!(a, Type::Mu(..)) { unroll_mu(a).unwrap() } else { a.clone() };
            let b2 = if matches!(b, Type::Mu(..)) { unroll_mu(b).unwrap() } else { b.clone() };
            return go(&a2, &b2, seen);
        }
        match (a, b) {
            (Type::Fun(a1, b1), Type::Fun(a2, b2))
            | (Type::Tensor(a1, b1), Type::Tensor(a2, b2))
            | (Type::Sum(a1, b1), Type::Sum(a2, b2)) => go(a1, a2, seen) && go(b1, b2, seen),
            (Type::Box(r, s), Type::Box(q, t)) => r == q && go(s, t, seen),
            _ => false,
        }
    }
    go(a, b, &mut Vec::new())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expected a `mu` type, found {0}")]
pub struct NotAMu(pub String);

/// `mu X . A` to `A[mu X . A / X]`.
pub fn unroll_mu(t: &Type) -> Result<Type, NotAMu> {
    match t {
        Type::Mu(x, body) => Ok(body.subst_rec(x, t)),
        other => Err(NotAMu(crate::pretty::pretty_type(other))),
    }
}

/// Unrolls outer `mu` binders until the head is a proper constructor.
pub fn head_normal(t: &Type) -> Type {
    let mut t = t.clone();
    // A guarded type needs at most one unrolling per nested binder.
    for _ in 0..64 {
        match t {
            Type::Mu(..) => t = unroll_mu(&t).unwrap(),
            _ => break,
        }
    }
    t
}

/// Decides `|A| > 1`: the type has more than one data constructor.
///
/// Counts are computed as a least fixed point saturating at 2, with
/// recursion variables starting at 0.
pub fn multi_constructor(t: &Type) -> bool {
    fn count(t: &Type, env: &mut Vec<(String, u8)>) -> u8 {
        match t {
            Type::Unit | Type::Fun(..) | Type::TyVar(_) | Type::Base(BaseType::Res) => 1,
            Type::Base(BaseType::Int) => 2,
            Type::Box(_, a) => count(a, env),
            Type::Sum(a, b) => {
                let n = count(a, env) + count(b, env);
                (2 * n).min(2)
            }
            Type::Tensor(a, b) => (count(a, env) * count(b, env)).min(2),
            Type::RecVar(x) => env.iter().rev().find(|(y, _)| y == x).map_or(0, |(_, n)| *n),
            Type::Mu(x, body) => {
                let mut current = 0;
                loop {
                    env.push((x.clone(), current));
                    let next = count(body, env);
                    env.pop();
                    if next == current {
                        return current;
                    }
                    current = next;
                }
            }
        }
    }
    count(t, &mut Vec::new()) > 1
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WellFormedError {
    #[error("recursion variable `{0}` is not bound by an enclosing `mu`")]
    UnboundRecVar(String),
    #[error("grades from different semirings in one type: {0} and {1}")]
    MixedSemiring(SemiringId, SemiringId),
}

pub fn check_well_formed(t: &Type) -> Result<(), WellFormedError> {
    if let Some(x) = t.free_rec_vars().into_iter().next() {
        return Err(WellFormedError::UnboundRecVar(x));
    }
    let srs: Vec<SemiringId> = t.semirings().into_iter().collect();
    if srs.len() > 1 {
        return Err(WellFormedError::MixedSemiring(srs[0], srs[1]));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constructor {
    Unit,
    Pair,
    Inl,
    Inr,
}

impl Constructor {
    pub fn arity(self) -> usize {
        match self {
            Constructor::Unit => 0,
            Constructor::Pair => 2,
            Constructor::Inl | Constructor::Inr => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constructor::Unit => "unit",
            Constructor::Pair => "(,)",
            Constructor::Inl => "inl",
            Constructor::Inr => "inr",
        }
    }

    /// Argument types of the constructor at the (head-normal) result type,
    /// or `None` if the constructor does not build that type.
    pub fn instantiate(self, result: &Type) -> Option<Vec<Type>> {
        match (self, result) {
            (Constructor::Unit, Type::Unit) => Some(vec![]),
            (Constructor::Pair, Type::Tensor(a, b)) => Some(vec![(**a).clone(), (**b).clone()]),
            (Constructor::Inl, Type::Sum(a, _)) => Some(vec![(**a).clone()]),
            (Constructor::Inr, Type::Sum(_, b)) => Some(vec![(**b).clone()]),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeriveKind {
    Push,
    Pull,
    Drop,
    CopyShape,
    Fmap,
}

impl DeriveKind {
    pub const ALL: [DeriveKind; 5] = [
        DeriveKind::Push,
        DeriveKind::Pull,
        DeriveKind::Drop,
        DeriveKind::CopyShape,
        DeriveKind::Fmap,
    ];

    /// Surface keyword.
    pub fn keyword(self) -> &'static str {
        match self {
            DeriveKind::Push => "push",
            DeriveKind::Pull => "pull",
            DeriveKind::Drop => "drop",
            DeriveKind::CopyShape => "copyShape",
            DeriveKind::Fmap => "fmap",
        }
    }
}

impl fmt::Display for DeriveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Debug)]
pub struct Pattern {
    pub kind: PatKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatKind {
    Var(String),
    Wild,
    Box(Box<Pattern>),
    Con(Constructor, Vec<Pattern>),
    Int(i64),
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Pattern) -> bool {
        self.kind == other.kind
    }
}

impl Pattern {
    pub fn new(kind: PatKind) -> Pattern {
        Pattern {
            kind,
            pos: Pos::default(),
        }
    }

    pub fn at(mut self, pos: Pos) -> Pattern {
        self.pos = pos;
        self
    }

    pub fn var(x: &str) -> Pattern {
        Pattern::new(PatKind::Var(x.to_string()))
    }

    pub fn wild() -> Pattern {
        Pattern::new(PatKind::Wild)
    }

    pub fn boxed(p: Pattern) -> Pattern {
        Pattern::new(PatKind::Box(Box::new(p)))
    }

    pub fn con(c: Constructor, ps: Vec<Pattern>) -> Pattern {
        Pattern::new(PatKind::Con(c, ps))
    }

    pub fn unit() -> Pattern {
        Pattern::con(Constructor::Unit, vec![])
    }

    pub fn pair(a: Pattern, b: Pattern) -> Pattern {
        Pattern::con(Constructor::Pair, vec![a, b])
    }

    pub fn inl(p: Pattern) -> Pattern {
        Pattern::con(Constructor::Inl, vec![p])
    }

    pub fn inr(p: Pattern) -> Pattern {
        Pattern::con(Constructor::Inr, vec![p])
    }

    /// Bound variables, left to right, with their positions.
    pub fn binders(&self) -> Vec<(String, Pos)> {
        let mut out = Vec::new();
        self.collect_binders(&mut out);
        out
    }

    fn collect_binders(&self, out: &mut Vec<(String, Pos)>) {
        match &self.kind {
            PatKind::Var(x) => out.push((x.clone(), self.pos)),
            PatKind::Box(p) => p.collect_binders(out),
            PatKind::Con(_, ps) => ps.iter().for_each(|p| p.collect_binders(out)),
            PatKind::Wild | PatKind::Int(_) => {}
        }
    }

    /// Whether the pattern has no box sub-patterns.
    pub fn is_linear(&self) -> bool {
        match &self.kind {
            PatKind::Box(_) => false,
            PatKind::Con(_, ps) => ps.iter().all(Pattern::is_linear),
            PatKind::Var(_) | PatKind::Wild | PatKind::Int(_) => true,
        }
    }

    /// The term a wildcard-free pattern denotes.
    pub fn to_term(&self) -> Option<Term> {
        Some(match &self.kind {
            PatKind::Var(x) => Term::var(x),
            PatKind::Wild => return None,
            PatKind::Box(p) => Term::promote(p.to_term()?),
            PatKind::Con(c, ps) => Term::con(*c, ps.iter().map(Pattern::to_term).collect::<Option<_>>()?),
            PatKind::Int(n) => Term::int(*n),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Term {
    pub kind: TermKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TermKind {
    Var(String),
    App(Box<Term>, Box<Term>),
    Lam(String, Box<Term>),
    Promote(Box<Term>),
    Con(Constructor, Vec<Term>),
    Case(Box<Term>, Vec<(Pattern, Term)>),
    LetRec(String, Box<Term>, Box<Term>),
    Derive(DeriveKind, Type),
    IntLit(i64),
    /// Type ascription `(t : A)`; erased by evaluation.
    Ann(Box<Term>, Type),
    /// Evaluator bookkeeping: a substituted value whose uses are counted.
    #[doc(hidden)]
    Mark(u64, Box<Term>),
}

/// Structural equality ignoring positions.
impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        self.kind == other.kind
    }
}

impl Term {
    pub fn new(kind: TermKind) -> Term {
        Term {
            kind,
            pos: Pos::default(),
        }
    }

    pub fn at(mut self, pos: Pos) -> Term {
        self.pos = pos;
        self
    }

    pub fn var(x: &str) -> Term {
        Term::new(TermKind::Var(x.to_string()))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::new(TermKind::App(Box::new(f), Box::new(a)))
    }

    pub fn apps(f: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(f, Term::app)
    }

    pub fn lam(x: &str, body: Term) -> Term {
        Term::new(TermKind::Lam(x.to_string(), Box::new(body)))
    }

    pub fn promote(t: Term) -> Term {
        Term::new(TermKind::Promote(Box::new(t)))
    }

    pub fn con(c: Constructor, args: Vec<Term>) -> Term {
        Term::new(TermKind::Con(c, args))
    }

    pub fn unit() -> Term {
        Term::con(Constructor::Unit, vec![])
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::con(Constructor::Pair, vec![a, b])
    }

    pub fn inl(t: Term) -> Term {
        Term::con(Constructor::Inl, vec![t])
    }

    pub fn inr(t: Term) -> Term {
        Term::con(Constructor::Inr, vec![t])
    }

    pub fn case(scrutinee: Term, branches: Vec<(Pattern, Term)>) -> Term {
        Term::new(TermKind::Case(Box::new(scrutinee), branches))
    }

    pub fn letrec(x: &str, bound: Term, body: Term) -> Term {
        Term::new(TermKind::LetRec(x.to_string(), Box::new(bound), Box::new(body)))
    }

    pub fn derive(kind: DeriveKind, ty: Type) -> Term {
        Term::new(TermKind::Derive(kind, ty))
    }

    pub fn int(n: i64) -> Term {
        Term::new(TermKind::IntLit(n))
    }

    pub fn ann(t: Term, ty: Type) -> Term {
        Term::new(TermKind::Ann(Box::new(t), ty))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match &self.kind {
            TermKind::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            TermKind::App(f, a) => {
                f.collect_free(bound, out);
                a.collect_free(bound, out);
            }
            TermKind::Lam(x, body) => {
                bound.push(x.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            TermKind::Promote(t) | TermKind::Ann(t, _) | TermKind::Mark(_, t) => {
                t.collect_free(bound, out)
            }
            TermKind::Con(_, args) => args.iter().for_each(|a| a.collect_free(bound, out)),
            TermKind::Case(s, branches) => {
                s.collect_free(bound, out);
                for (p, body) in branches {
                    let n = bound.len();
                    bound.extend(p.binders().into_iter().map(|(x, _)| x));
                    body.collect_free(bound, out);
                    bound.truncate(n);
                }
            }
            TermKind::LetRec(x, t1, t2) => {
                bound.push(x.clone());
                t1.collect_free(bound, out);
                t2.collect_free(bound, out);
                bound.pop();
            }
            TermKind::Derive(..) | TermKind::IntLit(_) => {}
        }
    }

    /// Removes type ascriptions and evaluator marks.
    pub fn erase(&self) -> Term {
        let kind = match &self.kind {
            TermKind::Ann(t, _) | TermKind::Mark(_, t) => return t.erase(),
            TermKind::Var(_) | TermKind::Derive(..) | TermKind::IntLit(_) => self.kind.clone(),
            TermKind::App(f, a) => TermKind::App(Box::new(f.erase()), Box::new(a.erase())),
            TermKind::Lam(x, b) => TermKind::Lam(x.clone(), Box::new(b.erase())),
            TermKind::Promote(t) => TermKind::Promote(Box::new(t.erase())),
            TermKind::Con(c, args) => TermKind::Con(*c, args.iter().map(Term::erase).collect()),
            TermKind::Case(s, bs) => TermKind::Case(
                Box::new(s.erase()),
                bs.iter().map(|(p, b)| (p.clone(), b.erase())).collect(),
            ),
            TermKind::LetRec(x, t1, t2) => {
                TermKind::LetRec(x.clone(), Box::new(t1.erase()), Box::new(t2.erase()))
            }
        };
        Term { kind, pos: self.pos }
    }

    pub fn size(&self) -> usize {
        1 + match &self.kind {
            TermKind::Var(_) | TermKind::Derive(..) | TermKind::IntLit(_) => 0,
            TermKind::App(f, a) => f.size() + a.size(),
            TermKind::Lam(_, b) | TermKind::Promote(b) | TermKind::Ann(b, _) | TermKind::Mark(_, b) => {
                b.size()
            }
            TermKind::Con(_, args) => args.iter().map(Term::size).sum(),
            TermKind::Case(s, bs) => s.size() + bs.iter().map(|(_, b)| b.size()).sum::<usize>(),
            TermKind::LetRec(_, t1, t2) => t1.size() + t2.size(),
        }
    }

    /// Visits every sub-term, outermost first.
    pub fn walk(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match &self.kind {
            TermKind::Var(_) | TermKind::Derive(..) | TermKind::IntLit(_) => {}
            TermKind::App(a, b) | TermKind::LetRec(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            TermKind::Lam(_, b) | TermKind::Promote(b) | TermKind::Ann(b, _) | TermKind::Mark(_, b) => {
                b.walk(f)
            }
            TermKind::Con(_, args) => args.iter().for_each(|a| a.walk(f)),
            TermKind::Case(s, bs) => {
                s.walk(f);
                bs.iter().for_each(|(_, b)| b.walk(f));
            }
        }
    }
}

/// Equality up to consistent renaming of bound term variables.
pub fn alpha_eq(t1: &Term, t2: &Term) -> bool {
    AlphaEnv::default().terms(t1, t2)
}

#[derive(Default)]
struct AlphaEnv {
    pairs: Vec<(String, String)>,
}

impl AlphaEnv {
    fn vars(&self, x: &str, y: &str) -> bool {
        match self.pairs.iter().rev().find(|(l, r)| l == x || r == y) {
            Some((l, r)) => l == x && r == y,
            None => x == y,
        }
    }

    fn terms(&mut self, a: &Term, b: &Term) -> bool {
        use TermKind as K;
        match (&a.kind, &b.kind) {
            (K::Mark(_, a), _) => self.terms(a, b),
            (_, K::Mark(_, b)) => self.terms(a, b),
            (K::Var(x), K::Var(y)) => self.vars(x, y),
            (K::App(f1, a1), K::App(f2, a2)) => self.terms(f1, f2) && self.terms(a1, a2),
            (K::Lam(x, b1), K::Lam(y, b2)) => self.bind(vec![(x.clone(), y.clone())], b1, b2),
            (K::Promote(s), K::Promote(t)) => self.terms(s, t),
            (K::Con(c1, xs), K::Con(c2, ys)) => {
                c1 == c2 && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.terms(x, y))
            }
            (K::Case(s1, bs1), K::Case(s2, bs2)) => {
                self.terms(s1, s2)
                    && bs1.len() == bs2.len()
                    && bs1.iter().zip(bs2).all(|((p1, t1), (p2, t2))| {
                        let Some(pairs) = pattern_pairs(p1, p2) else {
                            return false;
                        };
                        self.bind(pairs, t1, t2)
                    })
            }
            (K::LetRec(x, s1, t1), K::LetRec(y, s2, t2)) => {
                self.pairs.push((x.clone(), y.clone()));
                let ok = self.terms(s1, s2) && self.terms(t1, t2);
                self.pairs.pop();
                ok
            }
            (K::Derive(k1, ty1), K::Derive(k2, ty2)) => k1 == k2 && ty1.alpha_eq(ty2),
            (K::IntLit(m), K::IntLit(n)) => m == n,
            (K::Ann(s, ty1), K::Ann(t, ty2)) => ty1.alpha_eq(ty2) && self.terms(s, t),
            _ => false,
        }
    }

    fn bind(&mut self, pairs: Vec<(String, String)>, a: &Term, b: &Term) -> bool {
        let n = self.pairs.len();
        self.pairs.extend(pairs);
        let ok = self.terms(a, b);
        self.pairs.truncate(n);
        ok
    }
}

/// Pairs up binders of two patterns of the same shape.
fn pattern_pairs(p: &Pattern, q: &Pattern) -> Option<Vec<(String, String)>> {
    fn go(p: &Pattern, q: &Pattern, out: &mut Vec<(String, String)>) -> bool {
        match (&p.kind, &q.kind) {
            (PatKind::Var(x), PatKind::Var(y)) => {
                out.push((x.clone(), y.clone()));
                true
            }
            (PatKind::Wild, PatKind::Wild) => true,
            (PatKind::Int(m), PatKind::Int(n)) => m == n,
            (PatKind::Box(a), PatKind::Box(b)) => go(a, b, out),
            (PatKind::Con(c1, ps), PatKind::Con(c2, qs)) => {
                c1 == c2 && ps.len() == qs.len() && ps.iter().zip(qs).all(|(a, b)| go(a, b, out))
            }
            _ => false,
        }
    }
    let mut out = Vec::new();
    go(p, q, &mut out).then_some(out)
}

/// Picks `base`, or `base` followed by a number, avoiding `avoid`.
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit() || c == '\'');
    let stem = if stem.is_empty() { "v" } else { stem };
    if !avoid.contains(stem) {
        return stem.to_string();
    }
    (0..)
        .map(|i| format!("{stem}{i}"))
        .find(|n| !avoid.contains(n))
        .unwrap()
}
