//! Bidirectional checking with usage accounting.
//!
//! Checking a term returns how often each variable in scope was used:
//! a count for linear binders and a grade for graded ones. Binders are
//! identified by a unique id, so shadowing never mixes up their usages.
//! Graded binders are compared against their declared grade once, when
//! they leave scope.

use std::collections::{BTreeMap, BTreeSet};

use crate::deriving::{self, params, param_key, DeriveError};
use crate::diagnostics::{Code, Diagnostic};
use crate::grades::{show_grade, Grade, GradeError, SemiringId};
use crate::parser::SourceProgram;
use crate::pretty::pretty_type;
use crate::syntax::{
    check_well_formed, head_normal, multi_constructor, unroll_mu, BaseType, Constructor, DeriveKind, PatKind,
    Pattern, Pos, Term, TermKind, Type, WellFormedError,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Assumption {
    Linear(Type),
    Graded(Type, Grade),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Usage {
    Linear(u32),
    Graded(Grade),
}

pub type UsageMap = BTreeMap<String, Usage>;
type IdUsage = BTreeMap<u32, Usage>;

#[derive(Clone, Debug)]
enum BinderKind {
    Linear(Type),
    Graded(Type, Grade),
    /// A `letrec` binder inside its own definition; uses are not counted.
    Rec(Type),
}

#[derive(Clone, Debug)]
struct Binder {
    name: String,
    id: u32,
    kind: BinderKind,
}

/// A graded pattern variable of an accepted declaration.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedSite {
    pub decl: String,
    pub name: String,
    pub pos: Pos,
    pub grade: Grade,
}

#[derive(Clone, Debug, Default)]
pub struct CheckReport {
    pub diagnostics: Vec<Diagnostic>,
    pub graded_sites: Vec<GradedSite>,
}

type CResult<T> = Result<T, Diagnostic>;

struct Checker<'g> {
    sr: SemiringId,
    globals: &'g BTreeMap<String, Type>,
    scope: Vec<Binder>,
    next_id: u32,
    pos: Pos,
    sites: Vec<(String, Pos, Grade)>,
}

fn add_usage(a: &Usage, b: &Usage) -> Result<Usage, GradeError> {
    Ok(match (a, b) {
        (Usage::Linear(m), Usage::Linear(n)) => Usage::Linear(m + n),
        (Usage::Graded(g), Usage::Graded(h)) => Usage::Graded(g.add(h)?),
        // A binder is either linear or graded; the checker never mixes them.
        (Usage::Linear(_), u) | (u, Usage::Linear(_)) => u.clone(),
    })
}

fn add_maps<K: Ord + Clone>(mut a: BTreeMap<K, Usage>, b: BTreeMap<K, Usage>) -> Result<BTreeMap<K, Usage>, GradeError> {
    for (k, u) in b {
        let merged = match a.get(&k) {
            Some(prev) => add_usage(prev, &u)?,
            None => u,
        };
        a.insert(k, merged);
    }
    Ok(a)
}

/// Why branch usages could not be merged.
#[derive(Clone, Debug, PartialEq)]
pub enum MergeError {
    /// A linear variable is used a different number of times across branches.
    Linear(Vec<u32>),
    NoUpperBound(Grade, Grade),
    Mixed(GradeError),
}

fn merge_keyed<K: Ord + Clone>(
    maps: &[BTreeMap<K, Usage>],
    sr: SemiringId,
) -> Result<BTreeMap<K, Usage>, (K, MergeError)> {
    let keys: BTreeSet<K> = maps.iter().flat_map(|m| m.keys().cloned()).collect();
    let mut out = BTreeMap::new();
    for k in keys {
        let linear = maps.iter().any(|m| matches!(m.get(&k), Some(Usage::Linear(_))));
        if linear {
            let counts: Vec<u32> = maps
                .iter()
                .map(|m| match m.get(&k) {
                    Some(Usage::Linear(n)) => *n,
                    _ => 0,
                })
                .collect();
            if counts.iter().any(|c| *c != counts[0]) {
                return Err((k, MergeError::Linear(counts)));
            }
            out.insert(k, Usage::Linear(counts[0]));
        } else {
            let mut acc: Option<Grade> = None;
            for m in maps {
                let g = match m.get(&k) {
                    Some(Usage::Graded(g)) => *g,
                    _ => sr.zero(),
                };
                acc = Some(match acc {
                    None => g,
                    Some(a) => match a.join(&g) {
                        Ok(Some(j)) => j,
                        Ok(None) => return Err((k, MergeError::NoUpperBound(a, g))),
                        Err(e) => return Err((k, MergeError::Mixed(e))),
                    },
                });
            }
            out.insert(k, Usage::Graded(acc.unwrap()));
        }
    }
    Ok(out)
}

/// Joins the usages of the branches of a case: linear variables must be
/// used equally often in every branch, graded usages are joined.
pub fn merge_branch_usages(us: &[UsageMap], sr: SemiringId) -> Result<UsageMap, (String, MergeError)> {
    merge_keyed(us, sr)
}

fn mismatch(pos: Pos, expected: &str, found: &Type) -> Diagnostic {
    Diagnostic::new(Code::TypeMismatch, pos, format!("expected {expected}, found {}", pretty_type(found)))
}

fn grade_err(pos: Pos, e: GradeError) -> Diagnostic {
    Diagnostic::new(Code::MixedSemiring, pos, e.to_string())
}

fn derive_err(pos: Pos, e: DeriveError) -> Diagnostic {
    let d = Diagnostic::new(e.code(), pos, e.to_string());
    match e.grades() {
        Some((a, b)) => d.with_grades(a, b),
        None => d,
    }
}

/// First-order matching of `pat` against `actual`. `leaf` decides the
/// parameter positions of `pat`.
fn match_type(
    pat: &Type,
    actual: &Type,
    leaf: &mut dyn FnMut(&Type, &Type) -> bool,
    depth: u32,
) -> bool {
    if depth > 64 {
        return false;
    }
    if param_key(pat).is_some() {
        return leaf(pat, actual);
    }
    match (pat, actual) {
        (Type::Mu(x, b1), Type::Mu(y, b2)) => {
            let renamed = b1.subst_rec(x, &Type::RecVar(y.clone()));
            match_type(&renamed, b2, leaf, depth + 1)
        }
        (Type::Mu(..), _) => match_type(&unroll_mu(pat).unwrap(), actual, leaf, depth + 1),
        (_, Type::Mu(..)) => match_type(pat, &unroll_mu(actual).unwrap(), leaf, depth + 1),
        (Type::Fun(a1, b1), Type::Fun(a2, b2))
        | (Type::Tensor(a1, b1), Type::Tensor(a2, b2))
        | (Type::Sum(a1, b1), Type::Sum(a2, b2)) => {
            match_type(a1, a2, leaf, depth + 1) && match_type(b1, b2, leaf, depth + 1)
        }
        (Type::Box(r, a1), Type::Box(s, a2)) => r == s && match_type(a1, a2, leaf, depth + 1),
        (Type::Unit, Type::Unit) => true,
        (Type::RecVar(x), Type::RecVar(y)) => x == y,
        _ => false,
    }
}

fn bind_param(subst: &mut BTreeMap<String, Type>, pat: &Type, actual: &Type) -> bool {
    match pat {
        Type::TyVar(a) => match subst.get(a) {
            Some(prev) => crate::syntax::types_equal(prev, actual),
            None => {
                subst.insert(a.clone(), actual.clone());
                true
            }
        },
        _ => crate::syntax::types_equal(pat, actual),
    }
}

fn instantiate(t: &Type, subst: &BTreeMap<String, Type>) -> Type {
    t.subst_tyvars(&|a| subst.get(a).cloned())
}

impl<'g> Checker<'g> {
    fn new(sr: SemiringId, globals: &'g BTreeMap<String, Type>) -> Checker<'g> {
        Checker {
            sr,
            globals,
            scope: Vec::new(),
            next_id: 0,
            pos: Pos::default(),
            sites: Vec::new(),
        }
    }

    fn touch(&mut self, pos: Pos) {
        if !pos.is_synthetic() {
            self.pos = pos;
        }
    }

    fn err(&self, code: Code, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::new(code, self.pos, msg)
    }

    fn bind(&mut self, name: &str, kind: BinderKind) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.scope.push(Binder {
            name: name.to_string(),
            id,
            kind,
        });
        id
    }

    fn name_of(&self, id: u32) -> String {
        self.scope.iter().find(|b| b.id == id).map_or_else(|| format!("#{id}"), |b| b.name.clone())
    }

    /// Pops the innermost binder and checks its usage against its assumption.
    fn exit(&mut self, id: u32, u: &mut IdUsage) -> CResult<()> {
        let b = self.scope.pop().expect("binder in scope");
        debug_assert_eq!(b.id, id);
        let used = u.remove(&id);
        match b.kind {
            BinderKind::Linear(_) => {
                let n = match used {
                    Some(Usage::Linear(n)) => n,
                    _ => 0,
                };
                if n != 1 {
                    return Err(self.err(
                        Code::Linearity,
                        format!("linear variable `{}` is used {n} times, expected exactly once", b.name),
                    ));
                }
            }
            BinderKind::Graded(_, r) => {
                let g = match used {
                    Some(Usage::Graded(g)) => g,
                    _ => self.sr.zero(),
                };
                if !g.leq(&r).map_err(|e| grade_err(self.pos, e))? {
                    return Err(self
                        .err(
                            Code::GradeExceeded,
                            format!(
                                "variable `{}` is used at grade {}, which does not approximate its grade {}",
                                b.name,
                                show_grade(&g),
                                show_grade(&r)
                            ),
                        )
                        .with_grades(g, r));
                }
            }
            BinderKind::Rec(_) => {}
        }
        Ok(())
    }

    fn bind_pattern(&mut self, binders: Vec<(String, Pos, BinderKind)>) -> Vec<u32> {
        binders
            .into_iter()
            .map(|(name, pos, kind)| {
                if let BinderKind::Graded(_, r) = &kind {
                    if !pos.is_synthetic() {
                        self.sites.push((name.clone(), pos, *r));
                    }
                }
                self.bind(&name, kind)
            })
            .collect()
    }

    fn exit_all(&mut self, ids: Vec<u32>, u: &mut IdUsage) -> CResult<()> {
        for id in ids.into_iter().rev() {
            self.exit(id, u)?;
        }
        Ok(())
    }

    fn add(&self, a: IdUsage, b: IdUsage) -> CResult<IdUsage> {
        add_maps(a, b).map_err(|e| grade_err(self.pos, e))
    }

    fn merge(&self, us: Vec<IdUsage>) -> CResult<IdUsage> {
        merge_keyed(&us, self.sr).map_err(|(id, e)| {
            let name = self.name_of(id);
            match e {
                MergeError::Linear(counts) => self.err(
                    Code::Linearity,
                    format!("linear variable `{name}` is used {counts:?} times across the branches"),
                ),
                MergeError::NoUpperBound(a, b) => self
                    .err(
                        Code::NoUpperBound,
                        format!(
                            "branches use `{name}` at grades {} and {}, which have no upper bound",
                            show_grade(&a),
                            show_grade(&b)
                        ),
                    )
                    .with_grades(a, b),
                MergeError::Mixed(e) => grade_err(self.pos, e),
            }
        })
    }

    /// Scales the usages of a promoted term by `r`.
    fn promote_usage(&self, u: IdUsage, r: &Grade) -> CResult<IdUsage> {
        let mut out = IdUsage::new();
        for (id, usage) in u {
            match usage {
                Usage::Linear(0) => {}
                Usage::Linear(_) => {
                    return Err(self.err(
                        Code::PromoteLinear,
                        format!("linear variable `{}` cannot be used inside a promotion", self.name_of(id)),
                    ))
                }
                Usage::Graded(g) => {
                    out.insert(id, Usage::Graded(r.mul(&g).map_err(|e| grade_err(self.pos, e))?));
                }
            }
        }
        Ok(out)
    }

    fn well_formed(&self, t: &Type) -> CResult<()> {
        check_well_formed(t).map_err(|e| match e {
            WellFormedError::UnboundRecVar(_) => self.err(Code::TypeMismatch, e.to_string()),
            WellFormedError::MixedSemiring(..) => self.err(Code::MixedSemiring, e.to_string()),
        })?;
        if let Some(other) = t.semirings().into_iter().find(|s| *s != self.sr) {
            return Err(self.err(
                Code::MixedSemiring,
                format!("type {} uses {other} grades in a {} program", pretty_type(t), self.sr),
            ));
        }
        Ok(())
    }

    fn expect_eq(&self, expected: &Type, actual: &Type) -> CResult<()> {
        if crate::syntax::types_equal(expected, actual) {
            Ok(())
        } else {
            Err(mismatch(self.pos, &pretty_type(expected), actual))
        }
    }

    fn check(&mut self, t: &Term, expected: &Type) -> CResult<IdUsage> {
        self.touch(t.pos);
        match &t.kind {
            TermKind::Lam(x, body) => match head_normal(expected) {
                Type::Fun(a, b) => {
                    let id = self.bind(x, BinderKind::Linear(*a));
                    let mut u = self.check(body, &b)?;
                    self.exit(id, &mut u)?;
                    Ok(u)
                }
                other => Err(mismatch(self.pos, "a non-function type", &other).tap_msg("a lambda")),
            },
            TermKind::Promote(inner) => match head_normal(expected) {
                Type::Box(r, a) => {
                    let u = self.check(inner, &a)?;
                    self.promote_usage(u, &r)
                }
                other => Err(self.err(
                    Code::TypeMismatch,
                    format!("a promotion has a graded type, but {} was expected", pretty_type(&other)),
                )),
            },
            TermKind::Con(c, args) => {
                let hn = head_normal(expected);
                let tys = c.instantiate(&hn).filter(|tys| tys.len() == args.len()).ok_or_else(|| {
                    self.err(
                        Code::TypeMismatch,
                        format!("constructor {} does not build {}", c.name(), pretty_type(expected)),
                    )
                })?;
                let mut u = IdUsage::new();
                for (a, ty) in args.iter().zip(&tys) {
                    let ua = self.check(a, ty)?;
                    u = self.add(u, ua)?;
                }
                Ok(u)
            }
            TermKind::Case(s, branches) => {
                let (st, us) = self.synth(s)?;
                let mut per_branch = Vec::new();
                for (p, body) in branches {
                    let binders = self.check_pattern(None, p, &st)?;
                    let ids = self.bind_pattern(binders);
                    let mut u = self.check(body, expected)?;
                    self.exit_all(ids, &mut u)?;
                    per_branch.push(u);
                }
                self.touch(t.pos);
                let merged = self.merge(per_branch)?;
                self.add(us, merged)
            }
            TermKind::LetRec(x, bound, body) => {
                let (ty, u1) = self.letrec_bound(x, bound)?;
                let id = self.bind(x, BinderKind::Linear(ty));
                let mut u2 = self.check(body, expected)?;
                self.exit(id, &mut u2)?;
                self.add(u1, u2)
            }
            TermKind::Mark(_, inner) => self.check(inner, expected),
            TermKind::Derive(kind, subject) => {
                let (dom, cod) = match head_normal(expected) {
                    Type::Fun(a, b) => (Some(*a), Some(*b)),
                    _ => (None, None),
                };
                let ty = self.synth_derive(*kind, subject, dom, cod)?;
                self.expect_eq(expected, &ty)?;
                Ok(IdUsage::new())
            }
            TermKind::App(f, a) if matches!(f.kind, TermKind::Derive(..)) => {
                let (ty, u) = self.synth_derive_app(f, a, Some(expected))?;
                self.expect_eq(expected, &ty)?;
                Ok(u)
            }
            _ => {
                let (ty, u) = self.synth(t)?;
                self.touch(t.pos);
                self.expect_eq(expected, &ty)?;
                Ok(u)
            }
        }
    }

    fn synth(&mut self, t: &Term) -> CResult<(Type, IdUsage)> {
        self.touch(t.pos);
        match &t.kind {
            TermKind::Var(x) => {
                if let Some(b) = self.scope.iter().rev().find(|b| &b.name == x) {
                    let mut u = IdUsage::new();
                    let ty = match &b.kind {
                        BinderKind::Linear(ty) => {
                            u.insert(b.id, Usage::Linear(1));
                            ty.clone()
                        }
                        BinderKind::Graded(ty, _) => {
                            u.insert(b.id, Usage::Graded(self.sr.one()));
                            ty.clone()
                        }
                        BinderKind::Rec(ty) => ty.clone(),
                    };
                    return Ok((ty, u));
                }
                match self.globals.get(x) {
                    Some(ty) => Ok((ty.clone(), IdUsage::new())),
                    None => Err(self.err(Code::UnknownVar, format!("unknown variable `{x}`"))),
                }
            }
            TermKind::IntLit(_) => Ok((Type::int(), IdUsage::new())),
            TermKind::App(f, a) => {
                if matches!(f.kind, TermKind::Derive(..)) {
                    return self.synth_derive_app(f, a, None);
                }
                let (ft, uf) = self.synth(f)?;
                match head_normal(&ft) {
                    Type::Fun(dom, cod) => {
                        let ua = self.check(a, &dom)?;
                        Ok((*cod, self.add(uf, ua)?))
                    }
                    other => {
                        self.touch(t.pos);
                        Err(mismatch(self.pos, "a function", &other))
                    }
                }
            }
            TermKind::Con(Constructor::Unit, _) => Ok((Type::Unit, IdUsage::new())),
            TermKind::Con(Constructor::Pair, args) => {
                let (a, ua) = self.synth(&args[0])?;
                let (b, ub) = self.synth(&args[1])?;
                Ok((Type::tensor(a, b), self.add(ua, ub)?))
            }
            TermKind::Con(c, _) => Err(self.err(
                Code::NeedsAnnotation,
                format!("cannot infer the other summand of `{}`; add an annotation", c.name()),
            )),
            TermKind::Lam(..) => Err(self.err(Code::NeedsAnnotation, "cannot infer the type of a lambda; add an annotation")),
            TermKind::Promote(_) => {
                Err(self.err(Code::NeedsAnnotation, "cannot infer the grade of a promotion; add an annotation"))
            }
            TermKind::Ann(inner, ty) => {
                self.well_formed(ty)?;
                let u = self.check(inner, ty)?;
                Ok((ty.clone(), u))
            }
            TermKind::Mark(_, inner) => self.synth(inner),
            TermKind::Case(s, branches) => {
                let (st, us) = self.synth(s)?;
                let mut result: Option<Type> = None;
                let mut per_branch = Vec::new();
                for (p, body) in branches {
                    let binders = self.check_pattern(None, p, &st)?;
                    let ids = self.bind_pattern(binders);
                    let mut u = match &result {
                        None => {
                            let (ty, u) = self.synth(body)?;
                            result = Some(ty);
                            u
                        }
                        Some(ty) => {
                            let ty = ty.clone();
                            self.check(body, &ty)?
                        }
                    };
                    self.exit_all(ids, &mut u)?;
                    per_branch.push(u);
                }
                self.touch(t.pos);
                let merged = self.merge(per_branch)?;
                Ok((result.expect("case has a branch"), self.add(us, merged)?))
            }
            TermKind::LetRec(x, bound, body) => {
                let (ty, u1) = self.letrec_bound(x, bound)?;
                let id = self.bind(x, BinderKind::Linear(ty));
                let (rt, mut u2) = self.synth(body)?;
                self.exit(id, &mut u2)?;
                Ok((rt, self.add(u1, u2)?))
            }
            TermKind::Derive(kind, subject) => Ok((self.synth_derive(*kind, subject, None, None)?, IdUsage::new())),
        }
    }

    /// Checks the definition of a `letrec`. The recursive name is free to
    /// use inside its own definition; in exchange, the definition may not
    /// consume linear variables and its graded uses count as unbounded.
    fn letrec_bound(&mut self, x: &str, bound: &Term) -> CResult<(Type, IdUsage)> {
        let TermKind::Ann(_, ty) = &bound.kind else {
            self.touch(bound.pos);
            return Err(self.err(
                Code::NeedsAnnotation,
                format!("the definition of `{x}` needs a type annotation `(t : A)`"),
            ));
        };
        self.well_formed(ty)?;
        let depth = self.scope.len();
        self.bind(x, BinderKind::Rec(ty.clone()));
        let u = self.check(bound, ty);
        self.scope.truncate(depth);
        let u = u?;
        let mut out = IdUsage::new();
        for (id, usage) in u {
            match usage {
                Usage::Linear(0) => {}
                Usage::Linear(_) => {
                    return Err(self.err(
                        Code::Linearity,
                        format!("linear variable `{}` is used inside the recursive definition of `{x}`", self.name_of(id)),
                    ))
                }
                Usage::Graded(g) if g.is_zero() => {}
                Usage::Graded(g) => match self.sr.unbounded() {
                    Some(w) => {
                        out.insert(id, Usage::Graded(w.mul(&g).map_err(|e| grade_err(self.pos, e))?));
                    }
                    None => {
                        return Err(self.err(
                            Code::GradeExceeded,
                            format!(
                                "`{}` is used inside the recursive definition of `{x}`, and {} has no grade for unboundedly many uses",
                                self.name_of(id),
                                self.sr
                            ),
                        ))
                    }
                },
            }
        }
        Ok((ty.clone(), out))
    }

    fn synth_derive_app(&mut self, f: &Term, a: &Term, expected: Option<&Type>) -> CResult<(Type, IdUsage)> {
        let TermKind::Derive(kind, subject) = &f.kind else { unreachable!() };
        self.touch(f.pos);
        let pos = self.pos;
        // Closed drop and copyShape need nothing from the argument.
        if let Ok(Type::Fun(dom, cod)) = self.synth_derive(*kind, subject, None, expected.cloned()) {
            let ua = self.check(a, &dom)?;
            return Ok((*cod, ua));
        }
        self.pos = pos;
        let (depth, sites) = (self.scope.len(), self.sites.len());
        match self.synth(a) {
            Ok((at, ua)) => {
                self.pos = pos;
                let ty = self.synth_derive(*kind, subject, Some(at.clone()), expected.cloned())?;
                let Type::Fun(dom, cod) = ty else { unreachable!() };
                self.expect_eq(&dom, &at)?;
                Ok((*cod, ua))
            }
            Err(e) if e.code == Code::NeedsAnnotation => {
                self.scope.truncate(depth);
                self.sites.truncate(sites);
                self.pos = pos;
                Err(self.err(
                    Code::NeedsAnnotation,
                    format!("cannot determine the instance of {} @{}; annotate its argument", kind, pretty_type(subject)),
                ))
            }
            Err(e) => Err(e),
        }
    }

    /// The type of a derive node, instantiated from the argument type `dom`
    /// (or the result type `cod`) where the subject has parameters.
    fn synth_derive(&mut self, kind: DeriveKind, subject: &Type, dom: Option<Type>, cod: Option<Type>) -> CResult<Type> {
        let pos = self.pos;
        let derr = |e| derive_err(pos, e);
        let needs = |what: &str| {
            Diagnostic::new(
                Code::NeedsAnnotation,
                pos,
                format!("cannot determine {what} for {kind} @{}; annotate the argument", pretty_type(subject)),
            )
        };
        self.well_formed(subject)?;
        match kind {
            DeriveKind::Drop => {
                if matches!(subject, Type::Base(BaseType::Int)) {
                    return Ok(Type::fun(Type::int(), Type::Unit));
                }
                Ok(deriving::derive_drop(subject, self.sr).map_err(derr)?.scheme.clone())
            }
            DeriveKind::CopyShape => {
                let scheme = deriving::derive_copyshape(subject, self.sr).map_err(derr)?.scheme.clone();
                if subject.type_vars().is_empty() {
                    return Ok(scheme);
                }
                let dom = dom.ok_or_else(|| needs("the type parameters"))?;
                let mut subst = BTreeMap::new();
                if !match_type(subject, &dom, &mut |p, a| bind_param(&mut subst, p, a), 0) {
                    return Err(mismatch(pos, &format!("an instance of {}", pretty_type(subject)), &dom));
                }
                Ok(instantiate(&scheme, &subst))
            }
            DeriveKind::Push => {
                let dom = dom.ok_or_else(|| needs("the grade"))?;
                let Type::Box(r, inner) = &dom else {
                    return Err(mismatch(pos, &format!("a graded {}", pretty_type(subject)), &dom));
                };
                let mut subst = BTreeMap::new();
                if !match_type(subject, inner, &mut |p, a| bind_param(&mut subst, p, a), 0) {
                    return Err(mismatch(pos, &format!("an instance of {}", pretty_type(subject)), inner));
                }
                let d = deriving::derive_push(subject, r).map_err(derr)?;
                Ok(instantiate(&d.scheme, &subst))
            }
            DeriveKind::Pull => {
                let fallback = match &cod {
                    Some(Type::Box(m, _)) => Some(*m),
                    _ => None,
                };
                let mut subst = BTreeMap::new();
                let mut rs: BTreeMap<String, Grade> = BTreeMap::new();
                if !params(subject).is_empty() {
                    let dom = dom.ok_or_else(|| needs("the grades"))?;
                    let ok = match_type(
                        subject,
                        &dom,
                        &mut |p, a| {
                            let Type::Box(g, inner) = a else { return false };
                            let key = param_key(p).unwrap();
                            if rs.get(&key).is_some_and(|prev| prev != g) {
                                return false;
                            }
                            rs.insert(key, *g);
                            bind_param(&mut subst, p, inner)
                        },
                        0,
                    );
                    if !ok {
                        return Err(mismatch(
                            pos,
                            &format!("an instance of {} with graded parameters", pretty_type(subject)),
                            &dom,
                        ));
                    }
                } else if fallback.is_none() {
                    return Err(needs("the result grade"));
                }
                let d = deriving::derive_pull(subject, &rs, fallback.as_ref()).map_err(derr)?;
                Ok(instantiate(&d.scheme, &subst))
            }
            DeriveKind::Fmap => {
                let dom = dom.ok_or_else(|| needs("the mapped function"))?;
                let Type::Box(g, f) = &dom else {
                    return Err(mismatch(pos, "a graded function", &dom));
                };
                let Type::Fun(a, b) = &**f else {
                    return Err(mismatch(pos, "a graded function", &dom));
                };
                let alpha = params(subject).into_iter().next().unwrap_or_else(|| "a".to_string());
                let d = deriving::derive_fmap(subject, &alpha, g).map_err(derr)?;
                let beta = deriving::fmap_target_var(subject, &alpha);
                let mut subst = BTreeMap::new();
                if subject.type_vars().contains(&alpha) {
                    subst.insert(alpha, (**a).clone());
                } else if !crate::syntax::types_equal(&deriving::param_type(&alpha), a) {
                    return Err(mismatch(pos, &pretty_type(&deriving::param_type(&alpha)), a));
                }
                subst.insert(beta, (**b).clone());
                Ok(instantiate(&d.scheme, &subst))
            }
        }
    }

    /// Pattern typing: the binders a pattern introduces at type `ty`,
    /// under the grade of the enclosing box pattern, if any.
    fn check_pattern(&mut self, enc: Option<Grade>, p: &Pattern, ty: &Type) -> CResult<Vec<(String, Pos, BinderKind)>> {
        let names = p.binders();
        let mut seen = BTreeSet::new();
        for (x, pos) in &names {
            if !seen.insert(x.clone()) {
                return Err(Diagnostic::new(
                    Code::Linearity,
                    if pos.is_synthetic() { self.pos } else { *pos },
                    format!("variable `{x}` is bound twice in one pattern"),
                ));
            }
        }
        let mut out = Vec::new();
        self.pattern(enc, p, ty, &mut out)?;
        Ok(out)
    }

    fn pattern(
        &mut self,
        enc: Option<Grade>,
        p: &Pattern,
        ty: &Type,
        out: &mut Vec<(String, Pos, BinderKind)>,
    ) -> CResult<()> {
        let pos = if p.pos.is_synthetic() { self.pos } else { p.pos };
        let at = |code: Code, msg: String| Diagnostic::new(code, pos, msg);
        match &p.kind {
            PatKind::Var(x) => {
                let kind = match enc {
                    None => BinderKind::Linear(ty.clone()),
                    Some(r) => BinderKind::Graded(ty.clone(), r),
                };
                out.push((x.clone(), p.pos, kind));
            }
            PatKind::Wild => match enc {
                None => {
                    return Err(at(
                        Code::WildcardWeaken,
                        format!("a wildcard would discard a linear value of type {}", pretty_type(ty)),
                    ))
                }
                Some(r) => {
                    let zero = self.sr.zero();
                    if !zero.leq(&r).map_err(|e| grade_err(pos, e))? {
                        return Err(at(
                            Code::WildcardWeaken,
                            format!("a wildcard under grade {} needs 0 <= {}", show_grade(&r), show_grade(&r)),
                        )
                        .with_grades(zero, r));
                    }
                }
            },
            PatKind::Box(q) => match head_normal(ty) {
                Type::Box(s, inner) => {
                    let grade = match enc {
                        None => s,
                        Some(r) => r.mul(&s).map_err(|e| grade_err(pos, e))?,
                    };
                    self.pattern(Some(grade), q, &inner, out)?;
                }
                other => return Err(at(Code::TypeMismatch, format!("box pattern against {}", pretty_type(&other)))),
            },
            PatKind::Con(c, ps) => {
                let hn = head_normal(ty);
                let tys = c.instantiate(&hn).filter(|tys| tys.len() == ps.len()).ok_or_else(|| {
                    at(
                        Code::TypeMismatch,
                        format!("pattern {} does not match type {}", c.name(), pretty_type(ty)),
                    )
                })?;
                if let Some(r) = enc {
                    self.need_one(&r, ty, pos)?;
                }
                for (q, t) in ps.iter().zip(&tys) {
                    self.pattern(enc, q, t, out)?;
                }
            }
            PatKind::Int(_) => {
                if !matches!(head_normal(ty), Type::Base(BaseType::Int)) {
                    return Err(at(Code::TypeMismatch, format!("integer pattern against {}", pretty_type(ty))));
                }
                if let Some(r) = enc {
                    self.need_one(&r, ty, pos)?;
                }
            }
        }
        Ok(())
    }

    fn need_one(&self, r: &Grade, ty: &Type, pos: Pos) -> CResult<()> {
        if !multi_constructor(ty) {
            return Ok(());
        }
        let one = self.sr.one();
        if one.leq(r).map_err(|e| grade_err(pos, e))? {
            return Ok(());
        }
        Err(Diagnostic::new(
            Code::MatchUsage,
            pos,
            format!(
                "matching on {} under grade {} inspects the value, which needs 1 <= {}",
                pretty_type(ty),
                show_grade(r),
                show_grade(r)
            ),
        )
        .with_grades(one, *r))
    }
}

trait TapMsg {
    fn tap_msg(self, what: &str) -> Self;
}

impl TapMsg for Diagnostic {
    fn tap_msg(mut self, what: &str) -> Diagnostic {
        self.message = format!("{what} needs a function type, found {}", self.message.trim_start_matches("expected a non-function type, found "));
        self
    }
}

fn to_kind(a: &Assumption) -> BinderKind {
    match a {
        Assumption::Linear(t) => BinderKind::Linear(t.clone()),
        Assumption::Graded(t, r) => BinderKind::Graded(t.clone(), *r),
    }
}

fn by_name(ids: &[(u32, String)], u: IdUsage) -> UsageMap {
    u.into_iter()
        .filter_map(|(id, usage)| ids.iter().find(|(i, _)| *i == id).map(|(_, n)| (n.clone(), usage)))
        .collect()
}

/// Checks `t` against `expected` in context `ctx` and reports the usage of
/// each context variable. Context binders are not checked on exit.
pub fn check_term(ctx: &[(String, Assumption)], t: &Term, expected: &Type, sr: SemiringId) -> Result<UsageMap, Diagnostic> {
    let globals = BTreeMap::new();
    let mut c = Checker::new(sr, &globals);
    let ids: Vec<(u32, String)> = ctx.iter().map(|(x, a)| (c.bind(x, to_kind(a)), x.clone())).collect();
    let u = c.check(t, expected)?;
    Ok(by_name(&ids, u))
}

/// Infers the type of `t` in context `ctx`, with the usage of each context variable.
pub fn synth_term(ctx: &[(String, Assumption)], t: &Term, sr: SemiringId) -> Result<(Type, UsageMap), Diagnostic> {
    let globals = BTreeMap::new();
    let mut c = Checker::new(sr, &globals);
    let ids: Vec<(u32, String)> = ctx.iter().map(|(x, a)| (c.bind(x, to_kind(a)), x.clone())).collect();
    let (ty, u) = c.synth(t)?;
    Ok((ty, by_name(&ids, u)))
}

/// Pattern typing on its own: the context a pattern binds.
pub fn check_pattern(
    enc: Option<Grade>,
    p: &Pattern,
    ty: &Type,
    sr: SemiringId,
) -> Result<Vec<(String, Assumption)>, Diagnostic> {
    let globals = BTreeMap::new();
    let mut c = Checker::new(sr, &globals);
    Ok(c.check_pattern(enc, p, ty)?
        .into_iter()
        .map(|(x, _, k)| {
            let a = match k {
                BinderKind::Linear(t) | BinderKind::Rec(t) => Assumption::Linear(t),
                BinderKind::Graded(t, r) => Assumption::Graded(t, r),
            };
            (x, a)
        })
        .collect())
}

/// Checks a closed term at a type.
pub fn check_closed(t: &Term, ty: &Type, sr: SemiringId) -> Result<(), Diagnostic> {
    check_term(&[], t, ty, sr).map(|_| ())
}

/// Checks a closed term against a type, with top-level definitions in scope.
pub fn check_with_globals(
    globals: &BTreeMap<String, Type>,
    t: &Term,
    ty: &Type,
    sr: SemiringId,
) -> Result<(), Diagnostic> {
    Checker::new(sr, globals).check(t, ty).map(|_| ())
}

pub fn check_program(p: &SourceProgram) -> Vec<Diagnostic> {
    check_program_report(p).diagnostics
}

pub fn check_program_report(p: &SourceProgram) -> CheckReport {
    let mut report = CheckReport::default();
    let sr = p.semiring;
    for (other, pos) in p.pragmas.iter().skip(1) {
        if *other != sr {
            report.diagnostics.push(Diagnostic::new(
                Code::MixedSemiring,
                *pos,
                format!("semiring {other} conflicts with the earlier choice of {sr}"),
            ));
        }
    }
    let mut globals = BTreeMap::new();
    let mut unique = Vec::new();
    for d in &p.decls {
        if globals.contains_key(&d.name) {
            report
                .diagnostics
                .push(Diagnostic::new(Code::DuplicateDef, d.pos, format!("`{}` is defined more than once", d.name)));
        } else {
            globals.insert(d.name.clone(), d.sig.clone());
            unique.push(d);
        }
    }
    for d in unique {
        let mut c = Checker::new(sr, &globals);
        c.pos = d.pos;
        let result = c.well_formed(&d.sig).and_then(|_| c.check(&d.body, &d.sig));
        match result {
            Ok(_) => report.graded_sites.extend(c.sites.into_iter().map(|(name, pos, grade)| GradedSite {
                decl: d.name.clone(),
                name,
                pos,
                grade,
            })),
            Err(diag) => report.diagnostics.push(diag),
        }
    }
    report.diagnostics.sort_by_key(|d| (d.pos.line, d.pos.col));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grades::{Ext, Zom};
    use crate::parser::{parse_program, parse_term, parse_type};

    fn codes(src: &str) -> Vec<Code> {
        check_program(&parse_program(src).unwrap()).into_iter().map(|d| d.code).collect()
    }

    const COPY: &str = "\\y -> case y of [x] -> (x, x)";

    #[test]
    fn copy_at_two_and_one() {
        assert!(codes(&format!("copy : (a [2]) -o (a * a)\ncopy = {COPY}")).is_empty());
        assert_eq!(codes(&format!("copy : (a [1]) -o (a * a)\ncopy = {COPY}")), vec![Code::GradeExceeded]);
    }

    #[test]
    fn usage_of_box_bound_variable() {
        let sr = SemiringId::NatExact;
        let t = parse_term("case y of [x] -> (x, x)", sr).unwrap();
        let ty = parse_type("a * a", sr).unwrap();
        let ctx = vec![("y".to_string(), Assumption::Linear(parse_type("a [2]", sr).unwrap()))];
        let u = check_term(&ctx, &t, &ty, sr).unwrap();
        assert_eq!(u.get("y"), Some(&Usage::Linear(1)));
        let ctx = vec![("x".to_string(), Assumption::Graded(Type::var("a"), Grade::nat_exact(2)))];
        let u = check_term(&ctx, &parse_term("(x, x)", sr).unwrap(), &ty, sr).unwrap();
        assert_eq!(u.get("x"), Some(&Usage::Graded(Grade::nat_exact(2))));
    }

    #[test]
    fn identity_is_linear() {
        let sr = SemiringId::NatExact;
        let ctx = vec![("x".to_string(), Assumption::Linear(Type::var("a")))];
        let u = check_term(&ctx, &Term::var("x"), &Type::var("a"), sr).unwrap();
        assert_eq!(u.get("x"), Some(&Usage::Linear(1)));
        assert!(check_closed(&Term::lam("x", Term::var("x")), &parse_type("a -o a", sr).unwrap(), sr).is_ok());
    }

    #[test]
    fn synthesis_needs_annotations() {
        let sr = SemiringId::NatExact;
        let err = synth_term(&[], &Term::promote(Term::int(3)), sr).unwrap_err();
        assert_eq!(err.code, Code::NeedsAnnotation);
        let err = synth_term(&[], &Term::inl(Term::unit()), sr).unwrap_err();
        assert_eq!(err.code, Code::NeedsAnnotation);
        let (ty, _) = synth_term(&[("x".into(), Assumption::Linear(Type::int()))], &Term::var("x"), sr).unwrap();
        assert_eq!(ty, Type::int());
    }

    #[test]
    fn pattern_rules() {
        let iv = |lo, hi| Grade::interval(Ext::Fin(lo), Ext::Fin(hi));
        let sum = Type::sum(Type::var("a"), Type::var("b"));
        let sr = SemiringId::Interval;
        let ctx = check_pattern(Some(iv(0, 1)), &Pattern::inl(Pattern::var("x")), &sum, sr).unwrap();
        assert_eq!(ctx, vec![("x".to_string(), Assumption::Graded(Type::var("a"), iv(0, 1)))]);
        let err = check_pattern(Some(iv(0, 0)), &Pattern::inl(Pattern::var("x")), &sum, sr).unwrap_err();
        assert_eq!(err.code, Code::MatchUsage);
        let pair = Type::tensor(Type::var("a"), Type::var("b"));
        let p = Pattern::pair(Pattern::var("x"), Pattern::wild());
        let err = check_pattern(Some(Grade::nat_exact(2)), &p, &pair, SemiringId::NatExact).unwrap_err();
        assert_eq!(err.code, Code::WildcardWeaken);
        let err = check_pattern(None, &p, &pair, SemiringId::NatExact).unwrap_err();
        assert_eq!(err.code, Code::WildcardWeaken);
    }

    #[test]
    fn branch_merging() {
        let x = |g: Grade| UsageMap::from([("x".to_string(), Usage::Graded(g))]);
        let m = merge_branch_usages(&[x(Grade::nat_le(1)), x(Grade::nat_le(3))], SemiringId::NatLe).unwrap();
        assert_eq!(m["x"], Usage::Graded(Grade::nat_le(3)));
        let e = merge_branch_usages(&[x(Grade::nat_exact(1)), x(Grade::nat_exact(2))], SemiringId::NatExact);
        assert!(matches!(e, Err((_, MergeError::NoUpperBound(..)))));
        let single = x(Grade::nat_exact(2));
        assert_eq!(merge_branch_usages(std::slice::from_ref(&single), SemiringId::NatExact).unwrap(), single);
        let zom = |z| x(Grade::zom(z));
        let m = merge_branch_usages(&[zom(Zom::One), zom(Zom::Zero)], SemiringId::ZeroOneMany).unwrap();
        assert_eq!(m["x"], Usage::Graded(Grade::zom(Zom::Many)));
    }

    #[test]
    fn fst_in_nat_le() {
        let src = "#semiring nat-le\nfst : (a * (b [0])) -o a\nfst = \\p -> case p of (x, [_]) -> x";
        assert!(codes(src).is_empty());
    }

    #[test]
    fn duplicate_definitions() {
        assert_eq!(codes("u : Unit\nu = unit\nu : Unit\nu = unit"), vec![Code::DuplicateDef]);
    }

    #[test]
    fn promotion_rejects_linear_variables() {
        assert_eq!(codes("f : a -o a [1]\nf = \\x -> [x]"), vec![Code::PromoteLinear]);
    }

    #[test]
    fn linear_branch_mismatch() {
        let src = "f : (Unit + Unit) -o a -o a * Unit\nf = \\s -> \\x -> case s of inl u -> (x, u); inr v -> (x, v)";
        assert!(codes(src).is_empty());
        let src = "f : (Unit + Unit) -o Unit -o Unit\nf = \\s -> \\x -> case s of inl u -> (case x of unit -> u); inr v -> v";
        assert_eq!(codes(src), vec![Code::Linearity]);
    }

    #[test]
    fn letrec_needs_annotation() {
        let src = "f : Unit\nf = letrec g = \\x -> x in g unit";
        assert_eq!(codes(src), vec![Code::NeedsAnnotation]);
        let src = "f : Unit\nf = letrec g = (\\x -> x : Unit -o Unit) in g unit";
        assert!(codes(src).is_empty());
    }

    #[test]
    fn derive_nodes_in_programs() {
        let src = "#semiring interval\nmyPair : (Int * Int) [0..1]\nmyPair = [(7, 42)]\np : Int [0..1] * Int [0..1]\np = push @(a * b) myPair";
        assert!(codes(src).is_empty(), "{:?}", check_program(&parse_program(src).unwrap()));
        let src = "d : Unit\nd = drop @(Int * Int) (1, 2)";
        assert!(codes(src).is_empty());
        let src = "d : a -o Unit\nd = \\x -> drop @a x";
        assert_eq!(codes(src), vec![Code::PolymorphicDrop]);
    }
}
