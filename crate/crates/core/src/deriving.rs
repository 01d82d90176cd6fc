//! Type-directed derivation of `push`, `pull`, `drop`, `copyShape` and
//! `fmap`, plus the graded comonad witnesses.
//!
//! Each builder is a meta-function: it takes the subject term `z` and
//! returns the term computing the combinator on it. Sub-terms that the
//! checker cannot synthesize (promotions or case expressions used as
//! scrutinees) are wrapped in an ascription when building typed output.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::diagnostics::Code;
use crate::grades::{show_grade, Grade, SemiringId};
use crate::pretty::pretty_type;
use crate::syntax::{multi_constructor, BaseType, DeriveKind, Pattern, Term, TermKind, Type};
use crate::typecheck;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DeriveError {
    #[error("no derivation for the graded modality {}", pretty_type(.0))]
    BoxInSubject(Type),
    #[error("cannot derive {} through the function type {}", .0.keyword(), pretty_type(.1))]
    FunInSubject(DeriveKind, Type),
    #[error("side condition fails: {0}")]
    SideCondition(String),
    #[error("grades {} and {} have no greatest lower bound", show_grade(.0), show_grade(.1))]
    MeetUndefined(Grade, Grade),
    #[error("cannot drop the type variable `{0}`: drop needs a closed type")]
    PolymorphicDrop(String),
    #[error("type {} cannot be dropped", pretty_type(.0))]
    NotDroppable(Type),
    #[error("{0}")]
    NeedsAnnotation(String),
    #[error("grade {} is not in semiring {}", show_grade(.0), .1)]
    MixedSemiring(Grade, SemiringId),
    #[error("derived term failed to check: {0}")]
    Internal(String),
}

impl DeriveError {
    pub fn code(&self) -> Code {
        match self {
            DeriveError::BoxInSubject(_) => Code::BoxInSubject,
            DeriveError::FunInSubject(..) => Code::FunInSubject,
            DeriveError::SideCondition(_) => Code::SideCondition,
            DeriveError::MeetUndefined(..) => Code::MeetUndefined,
            DeriveError::PolymorphicDrop(_) => Code::PolymorphicDrop,
            DeriveError::NotDroppable(_) => Code::NotDroppable,
            DeriveError::NeedsAnnotation(_) => Code::NeedsAnnotation,
            DeriveError::MixedSemiring(..) => Code::MixedSemiring,
            DeriveError::Internal(_) => Code::TypeMismatch,
        }
    }

    pub fn grades(&self) -> Option<(Grade, Grade)> {
        match self {
            DeriveError::MeetUndefined(a, b) => Some((*a, *b)),
            _ => None,
        }
    }
}

/// Result of a derivation: the elaborated term and the type it checks at.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedCombinator {
    pub kind: DeriveKind,
    pub subject: Type,
    pub semiring: SemiringId,
    pub grades: Vec<(String, Grade)>,
    pub term: Term,
    pub scheme: Type,
    pub side_conditions: Vec<String>,
    pub trace: Vec<String>,
}

impl DerivedCombinator {
    pub fn key(&self) -> String {
        memo_key(self.kind, &self.subject, self.semiring, &self.grades)
    }
}

fn memo_key(kind: DeriveKind, t: &Type, sr: SemiringId, grades: &[(String, Grade)]) -> String {
    let gs: Vec<String> = grades.iter().map(|(k, g)| format!("{k}={}", show_grade(g))).collect();
    format!("{}@{}@{}@{}", kind.keyword(), pretty_type(t), sr, gs.join(","))
}

type Memo = Mutex<HashMap<String, Arc<DerivedCombinator>>>;

fn memo() -> &'static Memo {
    static MEMO: OnceLock<Memo> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

fn memoized(
    key: String,
    build: impl FnOnce() -> Result<DerivedCombinator, DeriveError>,
) -> Result<Arc<DerivedCombinator>, DeriveError> {
    if let Some(hit) = memo().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let built = build()?;
    typecheck::check_closed(&built.term, &built.scheme, built.semiring)
        .map_err(|d| DeriveError::Internal(format!("{}: {}", d.code, d.message)))?;
    let mut table = memo().lock().unwrap();
    Ok(table.entry(key).or_insert_with(|| Arc::new(built)).clone())
}

/// Parameter key of a leaf: type variables by name, base types by their name.
pub fn param_key(t: &Type) -> Option<String> {
    match t {
        Type::TyVar(a) => Some(a.clone()),
        Type::Base(b) => Some(b.name().to_string()),
        _ => None,
    }
}

/// Parameter positions of `t`, in order of first occurrence.
pub fn params(t: &Type) -> Vec<String> {
    fn go(t: &Type, out: &mut Vec<String>) {
        if let Some(k) = param_key(t) {
            if !out.contains(&k) {
                out.push(k);
            }
            return;
        }
        match t {
            Type::Fun(a, b) | Type::Tensor(a, b) | Type::Sum(a, b) => {
                go(a, out);
                go(b, out);
            }
            Type::Box(_, a) | Type::Mu(_, a) => go(a, out),
            _ => {}
        }
    }
    let mut out = Vec::new();
    go(t, &mut out);
    out
}

/// `T` with every parameter `p` replaced by `p [grade(p)]`.
pub fn box_params(t: &Type, grade: &impl Fn(&str) -> Grade) -> Type {
    t.map_leaves(&|leaf| param_key(leaf).map(|k| Type::boxed(grade(&k), leaf.clone())))
}

/// The shape of `T`: every parameter replaced by `Unit`.
pub fn shape_type(t: &Type) -> Type {
    t.map_leaves(&|_| Some(Type::Unit))
}

fn check_semiring(g: &Grade, sr: SemiringId) -> Result<(), DeriveError> {
    if g.semiring() == sr {
        Ok(())
    } else {
        Err(DeriveError::MixedSemiring(*g, sr))
    }
}

fn leq(a: &Grade, b: &Grade) -> bool {
    a.leq(b).unwrap_or(false)
}

/// Whether the checker can infer the type of `t` without help.
fn synthesizable(t: &Term) -> bool {
    match &t.kind {
        TermKind::Var(_) | TermKind::IntLit(_) | TermKind::Ann(..) | TermKind::App(..) => true,
        TermKind::Con(crate::syntax::Constructor::Unit, _) => true,
        TermKind::Con(crate::syntax::Constructor::Pair, args) => args.iter().all(synthesizable),
        _ => false,
    }
}

struct Builder {
    typed: bool,
    /// Grade of `push`, or of the boxed function for `fmap`.
    r: Grade,
    /// Per-parameter grades of `pull`; missing keys fall back to `r`.
    rs: BTreeMap<String, Grade>,
    /// Result grade of `pull`.
    meet: Grade,
    /// Recursion variables in scope: (variable, combinator name, its `mu` type).
    sigma: Vec<(String, String, Type)>,
    used: BTreeSet<String>,
    trace: Vec<String>,
    depth: usize,
    side_conditions: Vec<String>,
    /// Parameters mapped by `fmap`.
    mapped: BTreeSet<String>,
    fmap_fn: Term,
}

impl Builder {
    fn new(typed: bool, r: Grade) -> Builder {
        Builder {
            typed,
            r,
            rs: BTreeMap::new(),
            meet: r,
            sigma: Vec::new(),
            used: BTreeSet::new(),
            trace: Vec::new(),
            depth: 0,
            side_conditions: Vec::new(),
            mapped: BTreeSet::new(),
            fmap_fn: Term::var("f"),
        }
    }

    fn fresh(&mut self, base: &str) -> String {
        let name = if self.used.contains(base) {
            (1..).map(|i| format!("{base}{i}")).find(|n| !self.used.contains(n)).unwrap()
        } else {
            base.to_string()
        };
        self.used.insert(name.clone());
        name
    }

    fn note(&mut self, kind: &str, t: &Type, rule: &str) {
        let indent = "  ".repeat(self.depth);
        self.trace.push(format!("{indent}{kind} {}: {rule}", pretty_type(t)));
    }

    /// Replaces the recursion variables in scope by their `mu` types.
    fn close(&self, t: &Type) -> Type {
        self.sigma.iter().rev().fold(t.clone(), |acc, (x, _, mu)| acc.subst_rec(x, mu))
    }

    fn lookup(&self, x: &str) -> Term {
        let f = self.sigma.iter().rev().find(|(y, _, _)| y == x).map(|(_, f, _)| f.clone());
        Term::var(&f.unwrap_or_else(|| x.to_string()))
    }

    fn scrut(&self, t: Term, ty: impl FnOnce() -> Type) -> Term {
        if !self.typed || synthesizable(&t) {
            t
        } else {
            Term::ann(t, ty())
        }
    }

    fn ann_fn(&self, lam: Term, ty: impl FnOnce() -> Type) -> Term {
        if self.typed {
            Term::ann(lam, ty())
        } else {
            lam
        }
    }

    fn pull_grade(&self, p: &str) -> Grade {
        self.rs.get(p).copied().unwrap_or(self.r)
    }

    /// The `[Pcon]` demand for matching a constructor under the push grade.
    fn need_one(&mut self, t: &Type) -> Result<(), DeriveError> {
        let closed = self.close(t);
        if !self.typed || !multi_constructor(&closed) {
            return Ok(());
        }
        let one = self.r.semiring().one();
        let cond = format!("1 <= {} (matching on {})", show_grade(&self.r), pretty_type(&closed));
        if leq(&one, &self.r) {
            if !self.side_conditions.contains(&cond) {
                self.side_conditions.push(cond);
            }
            Ok(())
        } else {
            Err(DeriveError::SideCondition(format!(
                "{} has several constructors, so the grade must approximate 1, but 1 <= {} is false",
                pretty_type(&closed),
                show_grade(&self.r)
            )))
        }
    }

    fn push_target(&self, t: &Type) -> Type {
        let r = self.r;
        box_params(t, &|_| r)
    }

    fn push(&mut self, t: &Type, z: Term) -> Result<Term, DeriveError> {
        self.depth += 1;
        let out = self.push_inner(t, z);
        self.depth -= 1;
        out
    }

    fn push_inner(&mut self, t: &Type, z: Term) -> Result<Term, DeriveError> {
        let r = self.r;
        let boxed_closed = |b: &Builder| Type::boxed(r, b.close(t));
        Ok(match t {
            Type::Unit => {
                self.note("push", t, "unbox the unit");
                self.need_one(t)?;
                let s = self.scrut(z, || boxed_closed(self));
                Term::case(s, vec![(Pattern::boxed(Pattern::unit()), Term::unit())])
            }
            Type::TyVar(_) | Type::Base(_) => {
                self.note("push", t, "identity");
                z
            }
            Type::RecVar(x) => {
                self.note("push", t, "recursive call");
                Term::app(self.lookup(x), z)
            }
            Type::Sum(a, b) => {
                self.note("push", t, "match [inl x] / [inr y], push the components");
                self.need_one(t)?;
                let (x, y) = (self.fresh("x"), self.fresh("y"));
                let l = self.push(a, Term::promote(Term::var(&x)))?;
                let rr = self.push(b, Term::promote(Term::var(&y)))?;
                let s = self.scrut(z, || boxed_closed(self));
                Term::case(
                    s,
                    vec![
                        (Pattern::boxed(Pattern::inl(Pattern::var(&x))), Term::inl(l)),
                        (Pattern::boxed(Pattern::inr(Pattern::var(&y))), Term::inr(rr)),
                    ],
                )
            }
            Type::Tensor(a, b) => {
                self.note("push", t, "match [(x, y)], push both components");
                self.need_one(t)?;
                let (x, y) = (self.fresh("x"), self.fresh("y"));
                let l = self.push(a, Term::promote(Term::var(&x)))?;
                let rr = self.push(b, Term::promote(Term::var(&y)))?;
                let s = self.scrut(z, || boxed_closed(self));
                Term::case(
                    s,
                    vec![(Pattern::boxed(Pattern::pair(Pattern::var(&x), Pattern::var(&y))), Term::pair(l, rr))],
                )
            }
            Type::Fun(a, b) => {
                self.note("push", t, "pull the argument, push the result");
                // The inner pull has no combinators for the enclosing recursion.
                if !a.free_rec_vars().is_empty() {
                    return Err(DeriveError::FunInSubject(DeriveKind::Pull, self.close(a)));
                }
                let (y, f, u) = (self.fresh("y"), self.fresh("f"), self.fresh("u"));
                // The argument is pulled at the push grade for every parameter.
                let saved_sigma = std::mem::take(&mut self.sigma);
                let saved_rs = std::mem::take(&mut self.rs);
                let saved_meet = std::mem::replace(&mut self.meet, r);
                self.depth += 1;
                let pulled = self.pull(a, Term::var(&y));
                self.depth -= 1;
                self.sigma = saved_sigma;
                self.rs = saved_rs;
                self.meet = saved_meet;
                let pulled = pulled?;
                let result = self.push(b, Term::promote(Term::app(Term::var(&f), Term::var(&u))))?;
                let a_closed = self.close(a);
                let inner = Term::case(
                    self.scrut(pulled, || Type::boxed(r, a_closed)),
                    vec![(Pattern::boxed(Pattern::var(&u)), result)],
                );
                let s = self.scrut(z, || boxed_closed(self));
                Term::lam(&y, Term::case(s, vec![(Pattern::boxed(Pattern::var(&f)), inner)]))
            }
            Type::Mu(x, body) => {
                self.note("push", t, "recursive combinator via letrec");
                let (f, w) = (self.fresh("f"), self.fresh("w"));
                let closed = self.close(t);
                self.sigma.push((x.clone(), f.clone(), t.clone()));
                let inner = self.push(body, Term::var(&w));
                self.sigma.pop();
                let bound = self.ann_fn(Term::lam(&w, inner?), || {
                    Type::fun(Type::boxed(r, closed.clone()), self.push_target(&closed))
                });
                Term::letrec(&f, bound, Term::app(Term::var(&f), z))
            }
            Type::Box(..) => return Err(DeriveError::BoxInSubject(self.close(t))),
        })
    }

    fn pull(&mut self, t: &Type, z: Term) -> Result<Term, DeriveError> {
        self.depth += 1;
        let out = self.pull_inner(t, z);
        self.depth -= 1;
        out
    }

    fn pull_inner(&mut self, t: &Type, z: Term) -> Result<Term, DeriveError> {
        let m = self.meet;
        Ok(match t {
            Type::Unit => {
                self.note("pull", t, "box the unit");
                Term::case(z, vec![(Pattern::unit(), Term::promote(Term::unit()))])
            }
            Type::TyVar(_) | Type::Base(_) => {
                self.note("pull", t, "identity");
                z
            }
            Type::RecVar(x) => {
                self.note("pull", t, "recursive call");
                Term::app(self.lookup(x), z)
            }
            Type::Sum(a, b) => {
                self.note("pull", t, "match inl x / inr y, pull and re-box");
                let (x, y, u, v) = (self.fresh("x"), self.fresh("y"), self.fresh("u"), self.fresh("v"));
                let pa = self.pull(a, Term::var(&x))?;
                let pb = self.pull(b, Term::var(&y))?;
                let (ca, cb) = (self.close(a), self.close(b));
                let left = Term::case(
                    self.scrut(pa, || Type::boxed(m, ca)),
                    vec![(Pattern::boxed(Pattern::var(&u)), Term::promote(Term::inl(Term::var(&u))))],
                );
                let right = Term::case(
                    self.scrut(pb, || Type::boxed(m, cb)),
                    vec![(Pattern::boxed(Pattern::var(&v)), Term::promote(Term::inr(Term::var(&v))))],
                );
                Term::case(
                    z,
                    vec![(Pattern::inl(Pattern::var(&x)), left), (Pattern::inr(Pattern::var(&y)), right)],
                )
            }
            Type::Tensor(a, b) => {
                self.note("pull", t, "match (x, y), pull both and re-box the pair");
                let (x, y) = (self.fresh("x'"), self.fresh("y'"));
                let (u, v) = (self.fresh("u"), self.fresh("v"));
                let pa = self.pull(a, Term::var(&x))?;
                let pb = self.pull(b, Term::var(&y))?;
                let (ca, cb) = (self.close(a), self.close(b));
                let pair = Term::pair(self.scrut(pa, || Type::boxed(m, ca)), self.scrut(pb, || Type::boxed(m, cb)));
                let inner = Term::case(
                    pair,
                    vec![(
                        Pattern::pair(Pattern::boxed(Pattern::var(&u)), Pattern::boxed(Pattern::var(&v))),
                        Term::promote(Term::pair(Term::var(&u), Term::var(&v))),
                    )],
                );
                Term::case(z, vec![(Pattern::pair(Pattern::var(&x), Pattern::var(&y)), inner)])
            }
            Type::Mu(x, body) => {
                self.note("pull", t, "recursive combinator via letrec");
                let (f, w) = (self.fresh("f"), self.fresh("w"));
                let closed = self.close(t);
                self.sigma.push((x.clone(), f.clone(), t.clone()));
                let inner = self.pull(body, Term::var(&w));
                self.sigma.pop();
                let bound = self.ann_fn(Term::lam(&w, inner?), || {
                    Type::fun(box_params(&closed, &|p| self.pull_grade(p)), Type::boxed(m, closed.clone()))
                });
                Term::letrec(&f, bound, Term::app(Term::var(&f), z))
            }
            Type::Fun(..) => return Err(DeriveError::FunInSubject(DeriveKind::Pull, self.close(t))),
            Type::Box(..) => return Err(DeriveError::BoxInSubject(self.close(t))),
        })
    }

    fn drop(&mut self, t: &Type, z: Term) -> Result<Term, DeriveError> {
        self.depth += 1;
        let out = self.drop_inner(t, z);
        self.depth -= 1;
        out
    }

    fn drop_inner(&mut self, t: &Type, z: Term) -> Result<Term, DeriveError> {
        Ok(match t {
            Type::Base(BaseType::Int) => {
                self.note("drop", t, "builtin drop");
                Term::app(Term::derive(DeriveKind::Drop, Type::int()), z)
            }
            Type::Unit => {
                self.note("drop", t, "match unit");
                Term::case(z, vec![(Pattern::unit(), Term::unit())])
            }
            Type::RecVar(x) => {
                self.note("drop", t, "recursive call");
                Term::app(self.lookup(x), z)
            }
            Type::Sum(a, b) => {
                self.note("drop", t, "match inl x / inr y, drop the component");
                let (x, y) = (self.fresh("x"), self.fresh("y"));
                let da = self.drop(a, Term::var(&x))?;
                let db = self.drop(b, Term::var(&y))?;
                Term::case(z, vec![(Pattern::inl(Pattern::var(&x)), da), (Pattern::inr(Pattern::var(&y)), db)])
            }
            Type::Tensor(a, b) => {
                self.note("drop", t, "match (x, y), drop both");
                let (x, y) = (self.fresh("x"), self.fresh("y"));
                let da = self.drop(a, Term::var(&x))?;
                let db = self.drop(b, Term::var(&y))?;
                let da = self.scrut(da, || Type::Unit);
                let db = self.scrut(db, || Type::Unit);
                let inner = Term::case(db, vec![(Pattern::unit(), Term::unit())]);
                Term::case(
                    z,
                    vec![(
                        Pattern::pair(Pattern::var(&x), Pattern::var(&y)),
                        Term::case(da, vec![(Pattern::unit(), inner)]),
                    )],
                )
            }
            Type::Mu(x, body) => {
                self.note("drop", t, "recursive combinator via letrec");
                let (f, w) = (self.fresh("f"), self.fresh("w"));
                let closed = self.close(t);
                self.sigma.push((x.clone(), f.clone(), t.clone()));
                let inner = self.drop(body, Term::var(&w));
                self.sigma.pop();
                let bound = self.ann_fn(Term::lam(&w, inner?), || Type::fun(closed, Type::Unit));
                Term::letrec(&f, bound, Term::app(Term::var(&f), z))
            }
            Type::TyVar(a) => return Err(DeriveError::PolymorphicDrop(a.clone())),
            Type::Base(BaseType::Res) | Type::Fun(..) | Type::Box(..) => {
                return Err(DeriveError::NotDroppable(self.close(t)))
            }
        })
    }

    fn copy_shape(&mut self, t: &Type, z: Term) -> Result<Term, DeriveError> {
        self.depth += 1;
        let out = self.copy_shape_inner(t, z);
        self.depth -= 1;
        out
    }

    fn copy_shape_inner(&mut self, t: &Type, z: Term) -> Result<Term, DeriveError> {
        let pair_ty = |b: &Builder, a: &Type| {
            let c = b.close(a);
            Type::tensor(shape_type(&c), c)
        };
        Ok(match t {
            Type::TyVar(_) | Type::Base(_) => {
                self.note("copyShape", t, "unit spine, keep the value");
                Term::pair(Term::unit(), z)
            }
            Type::Unit => {
                self.note("copyShape", t, "match unit");
                Term::case(z, vec![(Pattern::unit(), Term::pair(Term::unit(), Term::unit()))])
            }
            Type::RecVar(x) => {
                self.note("copyShape", t, "recursive call");
                Term::app(self.lookup(x), z)
            }
            Type::Sum(a, b) => {
                self.note("copyShape", t, "match inl x / inr y, rebuild both copies");
                let (x, y) = (self.fresh("x"), self.fresh("y"));
                let (s1, x1) = (self.fresh("s"), self.fresh("x'"));
                let (s2, y1) = (self.fresh("s"), self.fresh("y'"));
                let ca = self.copy_shape(a, Term::var(&x))?;
                let cb = self.copy_shape(b, Term::var(&y))?;
                let ca = self.scrut(ca, || pair_ty(self, a));
                let cb = self.scrut(cb, || pair_ty(self, b));
                let left = Term::case(
                    ca,
                    vec![(
                        Pattern::pair(Pattern::var(&s1), Pattern::var(&x1)),
                        Term::pair(Term::inl(Term::var(&s1)), Term::inl(Term::var(&x1))),
                    )],
                );
                let right = Term::case(
                    cb,
                    vec![(
                        Pattern::pair(Pattern::var(&s2), Pattern::var(&y1)),
                        Term::pair(Term::inr(Term::var(&s2)), Term::inr(Term::var(&y1))),
                    )],
                );
                Term::case(
                    z,
                    vec![(Pattern::inl(Pattern::var(&x)), left), (Pattern::inr(Pattern::var(&y)), right)],
                )
            }
            Type::Tensor(a, b) => {
                self.note("copyShape", t, "match (x, y), copy both");
                let (x, y) = (self.fresh("x"), self.fresh("y"));
                let (s1, x1) = (self.fresh("s"), self.fresh("x'"));
                let (s2, y1) = (self.fresh("s'"), self.fresh("y'"));
                let ca = self.copy_shape(a, Term::var(&x))?;
                let cb = self.copy_shape(b, Term::var(&y))?;
                let ca = self.scrut(ca, || pair_ty(self, a));
                let cb = self.scrut(cb, || pair_ty(self, b));
                let body = Term::pair(
                    Term::pair(Term::var(&s1), Term::var(&s2)),
                    Term::pair(Term::var(&x1), Term::var(&y1)),
                );
                let inner = Term::case(cb, vec![(Pattern::pair(Pattern::var(&s2), Pattern::var(&y1)), body)]);
                let outer = Term::case(ca, vec![(Pattern::pair(Pattern::var(&s1), Pattern::var(&x1)), inner)]);
                Term::case(z, vec![(Pattern::pair(Pattern::var(&x), Pattern::var(&y)), outer)])
            }
            Type::Mu(x, body) => {
                self.note("copyShape", t, "recursive combinator via letrec");
                let (f, w) = (self.fresh("f"), self.fresh("w"));
                let closed = self.close(t);
                self.sigma.push((x.clone(), f.clone(), t.clone()));
                let inner = self.copy_shape(body, Term::var(&w));
                self.sigma.pop();
                let bound = self.ann_fn(Term::lam(&w, inner?), || {
                    Type::fun(closed.clone(), Type::tensor(shape_type(&closed), closed.clone()))
                });
                Term::letrec(&f, bound, Term::app(Term::var(&f), z))
            }
            Type::Fun(..) => return Err(DeriveError::FunInSubject(DeriveKind::CopyShape, self.close(t))),
            Type::Box(..) => return Err(DeriveError::BoxInSubject(self.close(t))),
        })
    }

    fn fmap(&mut self, t: &Type, z: Term, target: &impl Fn(&Type) -> Type) -> Result<Term, DeriveError> {
        self.depth += 1;
        let out = self.fmap_inner(t, z, target);
        self.depth -= 1;
        out
    }

    fn fmap_inner(&mut self, t: &Type, z: Term, target: &impl Fn(&Type) -> Type) -> Result<Term, DeriveError> {
        Ok(match t {
            Type::TyVar(_) | Type::Base(_) if self.mapped.contains(&param_key(t).unwrap()) => {
                self.note("fmap", t, "apply the function");
                Term::app(self.fmap_fn.clone(), z)
            }
            Type::TyVar(_) | Type::Base(_) | Type::Unit => {
                self.note("fmap", t, "unchanged");
                z
            }
            Type::RecVar(x) => {
                self.note("fmap", t, "recursive call");
                Term::app(self.lookup(x), z)
            }
            Type::Sum(a, b) => {
                self.note("fmap", t, "match inl x / inr y, map the component");
                let (x, y) = (self.fresh("x"), self.fresh("y"));
                let ma = self.fmap(a, Term::var(&x), target)?;
                let mb = self.fmap(b, Term::var(&y), target)?;
                Term::case(
                    z,
                    vec![(Pattern::inl(Pattern::var(&x)), Term::inl(ma)), (Pattern::inr(Pattern::var(&y)), Term::inr(mb))],
                )
            }
            Type::Tensor(a, b) => {
                self.note("fmap", t, "match (x, y), map both");
                let (x, y) = (self.fresh("x"), self.fresh("y"));
                let ma = self.fmap(a, Term::var(&x), target)?;
                let mb = self.fmap(b, Term::var(&y), target)?;
                Term::case(z, vec![(Pattern::pair(Pattern::var(&x), Pattern::var(&y)), Term::pair(ma, mb))])
            }
            Type::Mu(x, body) => {
                self.note("fmap", t, "recursive combinator via letrec");
                let (g, w) = (self.fresh("g"), self.fresh("w"));
                let closed = self.close(t);
                self.sigma.push((x.clone(), g.clone(), t.clone()));
                let inner = self.fmap(body, Term::var(&w), target);
                self.sigma.pop();
                let bound = self.ann_fn(Term::lam(&w, inner?), || Type::fun(closed.clone(), target(&closed)));
                Term::letrec(&g, bound, Term::app(Term::var(&g), z))
            }
            Type::Fun(..) => return Err(DeriveError::FunInSubject(DeriveKind::Fmap, self.close(t))),
            Type::Box(..) => return Err(DeriveError::BoxInSubject(self.close(t))),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: DeriveKind,
    subject: &Type,
    sr: SemiringId,
    grades: Vec<(String, Grade)>,
    b: Builder,
    body: Term,
    z: &str,
    scheme: Type,
) -> DerivedCombinator {
    DerivedCombinator {
        kind,
        subject: subject.clone(),
        semiring: sr,
        grades,
        term: Term::lam(z, body),
        scheme,
        side_conditions: b.side_conditions,
        trace: b.trace,
    }
}

fn well_formed(t: &Type) -> Result<(), DeriveError> {
    if t.contains_box() {
        let mut found = None;
        find_box(t, &mut found);
        return Err(DeriveError::BoxInSubject(found.unwrap_or_else(|| t.clone())));
    }
    if let Some(x) = t.free_rec_vars().into_iter().next() {
        return Err(DeriveError::NeedsAnnotation(format!("recursion variable `{x}` is not bound by `mu`")));
    }
    Ok(())
}

fn find_box(t: &Type, out: &mut Option<Type>) {
    match t {
        Type::Box(..) => *out = Some(t.clone()),
        Type::Fun(a, b) | Type::Tensor(a, b) | Type::Sum(a, b) => {
            find_box(a, out);
            if out.is_none() {
                find_box(b, out);
            }
        }
        Type::Mu(_, a) => find_box(a, out),
        _ => {}
    }
}

/// `push @T` at grade `r`: `T [r] -o T` with each parameter boxed at `r`.
pub fn derive_push(t: &Type, r: &Grade) -> Result<Arc<DerivedCombinator>, DeriveError> {
    let sr = r.semiring();
    let grades = vec![("r".to_string(), *r)];
    memoized(memo_key(DeriveKind::Push, t, sr, &grades), || {
        well_formed(t)?;
        let mut b = Builder::new(true, *r);
        let z = b.fresh("z");
        let body = b.push(t, Term::var(&z))?;
        let scheme = Type::fun(Type::boxed(*r, t.clone()), b.push_target(t));
        Ok(finish(DeriveKind::Push, t, sr, grades, b, body, &z, scheme))
    })
}

/// Greatest lower bound of the grades of the parameters occurring in `t`.
pub fn pull_meet(t: &Type, rs: &BTreeMap<String, Grade>, fallback: Option<&Grade>) -> Result<Grade, DeriveError> {
    let ps = params(t);
    let mut acc: Option<Grade> = None;
    for p in &ps {
        let g = *rs.get(p).ok_or_else(|| DeriveError::NeedsAnnotation(format!("no grade given for parameter `{p}`")))?;
        acc = Some(match acc {
            None => g,
            Some(a) => match a.meet(&g) {
                Ok(Some(m)) => m,
                Ok(None) => return Err(DeriveError::MeetUndefined(a, g)),
                Err(_) => return Err(DeriveError::MixedSemiring(g, a.semiring())),
            },
        });
    }
    match (acc, fallback) {
        (Some(m), _) => Ok(m),
        (None, Some(g)) => Ok(*g),
        (None, None) => Err(DeriveError::NeedsAnnotation(format!(
            "{} has no parameters, so the result grade of pull must be given",
            pretty_type(t)
        ))),
    }
}

/// `pull @T`: each parameter `p` boxed at `rs[p]`, result boxed at their meet.
/// `fallback` gives the result grade when `T` has no parameters.
pub fn derive_pull(
    t: &Type,
    rs: &BTreeMap<String, Grade>,
    fallback: Option<&Grade>,
) -> Result<Arc<DerivedCombinator>, DeriveError> {
    let ps = params(t);
    let mut grades: Vec<(String, Grade)> =
        ps.iter().filter_map(|p| rs.get(p).map(|g| (p.clone(), *g))).collect();
    if ps.is_empty() {
        if let Some(g) = fallback {
            grades.push(("result".into(), *g));
        }
    }
    let sr = grades.first().map(|(_, g)| g.semiring()).unwrap_or(SemiringId::NatExact);
    memoized(memo_key(DeriveKind::Pull, t, sr, &grades), || {
        well_formed(t)?;
        for (_, g) in &grades {
            check_semiring(g, sr)?;
        }
        if t.contains_fun() {
            return Err(DeriveError::FunInSubject(DeriveKind::Pull, t.clone()));
        }
        let m = pull_meet(t, rs, fallback)?;
        let mut b = Builder::new(true, m);
        b.rs = rs.clone();
        b.meet = m;
        let z = b.fresh("z");
        let body = b.pull(t, Term::var(&z))?;
        let scheme = Type::fun(box_params(t, &|p| b.pull_grade(p)), Type::boxed(m, t.clone()));
        b.side_conditions.push(format!("result grade {} is the meet of the parameter grades", show_grade(&m)));
        Ok(finish(DeriveKind::Pull, t, sr, grades, b, body, &z, scheme))
    })
}

/// `drop @T : T -o Unit` for closed, droppable `T`.
pub fn derive_drop(t: &Type, sr: SemiringId) -> Result<Arc<DerivedCombinator>, DeriveError> {
    memoized(memo_key(DeriveKind::Drop, t, sr, &[]), || {
        well_formed(t)?;
        let mut b = Builder::new(true, sr.one());
        let z = b.fresh("z");
        let body = b.drop(t, Term::var(&z))?;
        let scheme = Type::fun(t.clone(), Type::Unit);
        Ok(finish(DeriveKind::Drop, t, sr, vec![], b, body, &z, scheme))
    })
}

/// `copyShape @T : T -o (shape T) * T`.
pub fn derive_copyshape(t: &Type, sr: SemiringId) -> Result<Arc<DerivedCombinator>, DeriveError> {
    memoized(memo_key(DeriveKind::CopyShape, t, sr, &[]), || {
        well_formed(t)?;
        let mut b = Builder::new(true, sr.one());
        let z = b.fresh("z");
        let body = b.copy_shape(t, Term::var(&z))?;
        let scheme = Type::fun(t.clone(), Type::tensor(shape_type(t), t.clone()));
        Ok(finish(DeriveKind::CopyShape, t, sr, vec![], b, body, &z, scheme))
    })
}

/// The grade at which the checker charges the mapped function in the
/// derived `fmap`: one use per occurrence, branches joined, and uses inside
/// a recursive type scaled to the semiring's unbounded grade.
pub fn fmap_usage(t: &Type, mapped: &str, sr: SemiringId) -> Result<Grade, DeriveError> {
    let fail = |why: String| DeriveError::SideCondition(why);
    match t {
        Type::TyVar(_) | Type::Base(_) => {
            Ok(if param_key(t).as_deref() == Some(mapped) { sr.one() } else { sr.zero() })
        }
        Type::Unit | Type::RecVar(_) => Ok(sr.zero()),
        Type::Tensor(a, b) => {
            let (x, y) = (fmap_usage(a, mapped, sr)?, fmap_usage(b, mapped, sr)?);
            Ok(x.add(&y).expect("same semiring"))
        }
        Type::Sum(a, b) => {
            let (x, y) = (fmap_usage(a, mapped, sr)?, fmap_usage(b, mapped, sr)?);
            x.join(&y).expect("same semiring").ok_or_else(|| {
                fail(format!(
                    "the branches of {} use the function {} and {} times, and {sr} has no grade covering both",
                    pretty_type(t),
                    show_grade(&x),
                    show_grade(&y)
                ))
            })
        }
        Type::Mu(_, body) => {
            let inner = fmap_usage(body, mapped, sr)?;
            if inner.is_zero() {
                return Ok(inner);
            }
            let unbounded = sr.unbounded().ok_or_else(|| {
                fail(format!("{sr} has no grade for an unbounded number of uses in {}", pretty_type(t)))
            })?;
            Ok(unbounded.mul(&inner).expect("same semiring"))
        }
        Type::Fun(..) => Err(DeriveError::FunInSubject(DeriveKind::Fmap, t.clone())),
        Type::Box(..) => Err(DeriveError::BoxInSubject(t.clone())),
    }
}

/// Name of the result type variable that `fmap` maps `alpha` to.
pub fn fmap_target_var(t: &Type, alpha: &str) -> String {
    let taken: BTreeSet<String> = t.type_vars();
    let base = if alpha == "a" { "b".to_string() } else { format!("{alpha}'") };
    if !taken.contains(&base) {
        return base;
    }
    (1..).map(|i| format!("{base}{i}")).find(|n| !taken.contains(n)).unwrap()
}

/// `fmap @T` over the parameter `alpha` with the function boxed at `g`:
/// `(alpha -o beta) [g] -o T -o T[beta/alpha]`.
pub fn derive_fmap(t: &Type, alpha: &str, g: &Grade) -> Result<Arc<DerivedCombinator>, DeriveError> {
    let sr = g.semiring();
    let grades = vec![(alpha.to_string(), *g)];
    memoized(memo_key(DeriveKind::Fmap, t, sr, &grades), || {
        well_formed(t)?;
        if t.contains_fun() {
            return Err(DeriveError::FunInSubject(DeriveKind::Fmap, t.clone()));
        }
        let usage = fmap_usage(t, alpha, sr)?;
        if !leq(&usage, g) {
            return Err(DeriveError::SideCondition(format!(
                "the function is used {} times in fmap @{}, which {} does not cover",
                show_grade(&usage),
                pretty_type(t),
                show_grade(g)
            )));
        }
        let beta = fmap_target_var(t, alpha);
        let a_ty = param_type(alpha);
        let b_ty = Type::var(&beta);
        let target = |ty: &Type| ty.map_leaves(&|leaf| (param_key(leaf).as_deref() == Some(alpha)).then(|| b_ty.clone()));
        let mut b = Builder::new(true, *g);
        b.side_conditions.push(format!("{} <= {}", show_grade(&usage), show_grade(g)));
        b.mapped.insert(alpha.to_string());
        let bf = b.fresh("bf");
        let f = b.fresh("f");
        b.fmap_fn = Term::var(&f);
        let z = b.fresh("z");
        let mapped = b.fmap(t, Term::var(&z), &target)?;
        let body = Term::lam(&z, Term::case(Term::var(&bf), vec![(Pattern::boxed(Pattern::var(&f)), mapped)]));
        let scheme = Type::fun(Type::boxed(*g, Type::fun(a_ty, b_ty.clone())), Type::fun(t.clone(), target(t)));
        Ok(finish(DeriveKind::Fmap, t, sr, grades, b, body, &bf, scheme))
    })
}

pub fn param_type(p: &str) -> Type {
    match p {
        "Int" => Type::Base(BaseType::Int),
        "Res" => Type::Base(BaseType::Res),
        _ => Type::var(p),
    }
}

/// Untyped term mapping `f` over every parameter position of `t`.
pub fn fmap_all(t: &Type, f: &Term) -> Result<Term, DeriveError> {
    let mut b = Builder::new(false, SemiringId::NatExact.one());
    b.mapped = params(t).into_iter().collect();
    b.used.extend(f.free_vars());
    b.fmap_fn = f.clone();
    let z = b.fresh("z");
    let body = b.fmap(t, Term::var(&z), &|ty| ty.clone())?;
    Ok(Term::lam(&z, body))
}

/// Untyped elaboration of a derive node, as used by the evaluator. The
/// result does not depend on grades.
pub fn elaborate(kind: DeriveKind, t: &Type) -> Result<Term, DeriveError> {
    let mut b = Builder::new(false, SemiringId::NatExact.one());
    match kind {
        DeriveKind::Drop if matches!(t, Type::Base(BaseType::Int)) => {
            // The builtin itself; the evaluator reduces it directly.
            Ok(Term::derive(DeriveKind::Drop, t.clone()))
        }
        DeriveKind::Fmap => {
            let alpha = params(t).into_iter().next().unwrap_or_else(|| "a".into());
            b.mapped.insert(alpha);
            let bf = b.fresh("bf");
            let f = b.fresh("f");
            b.fmap_fn = Term::var(&f);
            let z = b.fresh("z");
            let mapped = b.fmap(t, Term::var(&z), &|ty| ty.clone())?;
            let body = Term::lam(&z, Term::case(Term::var(&bf), vec![(Pattern::boxed(Pattern::var(&f)), mapped)]));
            Ok(Term::lam(&bf, body))
        }
        _ => {
            let z = b.fresh("z");
            let zt = Term::var(&z);
            let body = match kind {
                DeriveKind::Push => b.push(t, zt)?,
                DeriveKind::Pull => b.pull(t, zt)?,
                DeriveKind::Drop => b.drop(t, zt)?,
                DeriveKind::CopyShape => b.copy_shape(t, zt)?,
                DeriveKind::Fmap => unreachable!(),
            };
            Ok(Term::lam(&z, body))
        }
    }
}

/// `eps : A [1] -o A`.
pub fn comonad_eps(a: &Type, sr: SemiringId) -> (Term, Type) {
    let term = Term::lam("x", Term::case(Term::var("x"), vec![(Pattern::boxed(Pattern::var("z")), Term::var("z"))]));
    (term, Type::fun(Type::boxed(sr.one(), a.clone()), a.clone()))
}

/// `delta : A [r * s] -o A [s] [r]`.
pub fn comonad_delta(a: &Type, r: &Grade, s: &Grade) -> Result<(Term, Type), DeriveError> {
    let rs = r.mul(s).map_err(|_| DeriveError::MixedSemiring(*s, r.semiring()))?;
    let term = Term::lam(
        "x",
        Term::case(
            Term::var("x"),
            vec![(Pattern::boxed(Pattern::var("z")), Term::promote(Term::promote(Term::var("z"))))],
        ),
    );
    let ty = Type::fun(Type::boxed(rs, a.clone()), Type::boxed(*r, Type::boxed(*s, a.clone())));
    Ok((term, ty))
}

/// Number of entries currently memoized.
pub fn memo_len() -> usize {
    memo().lock().unwrap().len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grades::Ext;
    use crate::parser::{parse_term, parse_type};
    use crate::pretty::pretty_term;
    use crate::syntax::alpha_eq;

    fn ty(s: &str, sr: SemiringId) -> Type {
        parse_type(s, sr).unwrap()
    }

    fn iv(lo: u64, hi: u64) -> Grade {
        Grade::interval(Ext::Fin(lo), Ext::Fin(hi))
    }

    #[test]
    fn push_through_a_function_golden() {
        let sr = SemiringId::NatExact;
        let d = derive_push(&ty("(a * a) -o b", sr), &Grade::nat_exact(2)).unwrap();
        let expected = parse_term(
            "\\z -> \\y -> case z of [f] -> case (case y of (x', y') -> case (x', y') of ([u], [v]) -> [(u, v)]) of [u] -> [f u]",
            sr,
        )
        .unwrap();
        assert!(alpha_eq(&d.term.erase(), &expected), "{}", pretty_term(&d.term.erase()));
        assert_eq!(pretty_type(&d.scheme), "((a * a) -o b) [2] -o (a [2] * a [2]) -o b [2]");
    }

    #[test]
    fn push_on_a_variable_is_the_identity() {
        let d = derive_push(&Type::var("a"), &Grade::nat_exact(3)).unwrap();
        assert!(alpha_eq(&d.term.erase(), &Term::lam("z", Term::var("z"))));
    }

    #[test]
    fn push_on_a_sum_needs_one() {
        let sum = Type::sum(Type::var("a"), Type::var("b"));
        assert!(matches!(derive_push(&sum, &Grade::nat_exact(0)), Err(DeriveError::SideCondition(_))));
        assert!(derive_push(&sum, &Grade::nat_exact(1)).is_ok());
    }

    #[test]
    fn boxed_subjects_are_rejected() {
        let t = Type::boxed(Grade::nat_exact(1), Type::var("a"));
        assert!(matches!(derive_push(&t, &Grade::nat_exact(1)), Err(DeriveError::BoxInSubject(_))));
    }

    #[test]
    fn interval_pull_meets_at_two() {
        let sr = SemiringId::Interval;
        let rs = BTreeMap::from([("a".to_string(), iv(0, 2)), ("b".to_string(), iv(2, 4))]);
        let d = derive_pull(&ty("a * b", sr), &rs, None).unwrap();
        assert_eq!(pretty_type(&d.scheme), "(a [0..2] * b [2..4]) -o (a * b) [2..2]");
    }

    #[test]
    fn nat_exact_pull_with_unequal_grades() {
        let rs = BTreeMap::from([("a".to_string(), Grade::nat_exact(2)), ("b".to_string(), Grade::nat_exact(3))]);
        let e = derive_pull(&ty("a * b", SemiringId::NatExact), &rs, None).unwrap_err();
        assert_eq!(e, DeriveError::MeetUndefined(Grade::nat_exact(2), Grade::nat_exact(3)));
        assert_eq!(e.code(), Code::MeetUndefined);
    }

    #[test]
    fn pull_on_a_function_is_impossible() {
        let rs = BTreeMap::from([("a".to_string(), Grade::nat_exact(1))]);
        let e = derive_pull(&ty("a -o a", SemiringId::NatExact), &rs, None).unwrap_err();
        assert_eq!(e.code(), Code::FunInSubject);
    }

    #[test]
    fn drop_rules() {
        let sr = SemiringId::NatExact;
        assert_eq!(derive_drop(&Type::var("a"), sr).unwrap_err().code(), Code::PolymorphicDrop);
        assert_eq!(derive_drop(&Type::Base(BaseType::Res), sr).unwrap_err().code(), Code::NotDroppable);
        let d = derive_drop(&ty("Int * Int", sr), sr).unwrap();
        let expected = parse_term(
            "\\z -> case z of (x, y) -> case drop @Int x of unit -> case drop @Int y of unit -> unit",
            sr,
        )
        .unwrap();
        assert!(alpha_eq(&d.term.erase(), &expected), "{}", pretty_term(&d.term.erase()));
    }

    #[test]
    fn copyshape_scheme() {
        let sr = SemiringId::NatExact;
        let d = derive_copyshape(&ty("Int * Int", sr), sr).unwrap();
        assert_eq!(pretty_type(&d.scheme), "(Int * Int) -o (Unit * Unit) * Int * Int");
    }

    #[test]
    fn fmap_on_a_pair() {
        let sr = SemiringId::NatExact;
        let d = derive_fmap(&ty("a * a", sr), "a", &Grade::nat_exact(2)).unwrap();
        assert_eq!(pretty_type(&d.scheme), "(a -o b) [2] -o (a * a) -o b * b");
        assert_eq!(
            derive_fmap(&ty("a * a", sr), "a", &Grade::nat_exact(1)).unwrap_err().code(),
            Code::SideCondition
        );
        let list = Type::list(Type::var("a"));
        let inf = Grade::interval(Ext::Fin(0), Ext::Inf);
        assert!(derive_fmap(&list, "a", &inf).is_ok());
        assert!(derive_fmap(&list, "a", &Grade::nat_exact(3)).is_err());
    }

    #[test]
    fn comonad_witnesses() {
        let (_, t) = comonad_delta(&Type::int(), &Grade::nat_exact(2), &Grade::nat_exact(3)).unwrap();
        assert_eq!(pretty_type(&t), "Int [6] -o Int [3] [2]");
        let (_, t) = comonad_delta(&Type::int(), &iv(0, 1), &iv(0, 2)).unwrap();
        assert_eq!(pretty_type(&t), "Int [0..2] -o Int [0..2] [0..1]");
        let (term, t) = comonad_eps(&Type::int(), SemiringId::NatExact);
        assert!(typecheck::check_closed(&term, &t, SemiringId::NatExact).is_ok());
    }

    #[test]
    fn memoization_returns_the_same_term() {
        let t = Type::list(Type::var("a"));
        let r = Grade::interval(Ext::Fin(1), Ext::Inf);
        let d1 = derive_push(&t, &r).unwrap();
        let d2 = derive_push(&t, &r).unwrap();
        assert!(Arc::ptr_eq(&d1, &d2));
        assert_eq!(d1.key(), d2.key());
    }

    #[test]
    fn push_without_functions_emits_no_pull() {
        let t = Type::list(Type::tensor(Type::var("a"), Type::var("b")));
        let d = derive_push(&t, &Grade::interval(Ext::Fin(1), Ext::Inf)).unwrap();
        assert!(!d.trace.iter().any(|l| l.trim_start().starts_with("pull")));
    }
}
