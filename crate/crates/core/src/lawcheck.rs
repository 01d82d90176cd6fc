//! Randomized checks of the algebraic laws of the derived combinators.
//!
//! Each case draws its own generator from `(seed, suite, case)`, so a case
//! can be re-run on its own and the report does not depend on how cases are
//! spread over threads. Two terms are equal when their full normal forms are
//! alpha-equivalent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::deriving::{self, box_params, params, DeriveError};
use crate::evaluator::{EvalError, Machine};
use crate::grades::{sample, show_grade, Grade, SemiringId};
use crate::pretty::{pretty_term, pretty_type};
use crate::syntax::{alpha_eq, head_normal, multi_constructor, unroll_mu, DeriveKind, Pattern, Term, Type};
use crate::typecheck::check_closed;

pub const LAW_FUEL: u64 = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Inverses,
    Naturality,
    Comonad,
    Equational,
    Soundness,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Inverses, Suite::Naturality, Suite::Comonad, Suite::Equational, Suite::Soundness];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Inverses => "inverses",
            Suite::Naturality => "naturality",
            Suite::Comonad => "comonad",
            Suite::Equational => "equational",
            Suite::Soundness => "soundness",
        }
    }

    pub fn default_cases(self) -> u64 {
        match self {
            Suite::Inverses => 500,
            Suite::Soundness => 300,
            _ => 200,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Suite, String> {
        match s {
            "preservation" => Ok(Suite::Comonad),
            _ => Suite::ALL
                .into_iter()
                .find(|x| x.name() == s)
                .ok_or_else(|| format!("unknown suite `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub case: u64,
    pub law: String,
    pub detail: String,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LawReport {
    pub suite: Suite,
    pub seed: u64,
    pub cases: u64,
    pub failures: Vec<Failure>,
}

#[derive(Clone, Debug)]
pub struct TypeGenConfig {
    pub max_depth: u32,
    pub allow_fun: bool,
    pub allow_mu: bool,
    pub tyvar_budget: usize,
    pub allow_int: bool,
}

impl TypeGenConfig {
    pub fn new(max_depth: u32) -> TypeGenConfig {
        TypeGenConfig {
            max_depth,
            allow_fun: false,
            allow_mu: true,
            tyvar_budget: 2,
            allow_int: true,
        }
    }
}

const TYVARS: [&str; 3] = ["a", "b", "c"];

pub fn case_rng(suite: Suite, seed: u64, case: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((suite as u64) << 40) | case);
    rng
}

pub fn gen_type(cfg: &TypeGenConfig, rng: &mut impl Rng) -> Type {
    gen_ty(cfg, rng, cfg.max_depth, true)
}

fn gen_leaf(cfg: &TypeGenConfig, rng: &mut impl Rng) -> Type {
    let mut opts = vec![Type::Unit];
    for v in TYVARS.iter().take(cfg.tyvar_budget) {
        opts.push(Type::var(v));
        opts.push(Type::var(v));
    }
    if cfg.allow_int {
        opts.push(Type::int());
    }
    opts.choose(rng).unwrap().clone()
}

fn gen_ty(cfg: &TypeGenConfig, rng: &mut impl Rng, depth: u32, mu_ok: bool) -> Type {
    if depth == 0 || rng.gen_bool(0.3) {
        return gen_leaf(cfg, rng);
    }
    let d = depth - 1;
    loop {
        match rng.gen_range(0..6) {
            0 | 1 => return Type::tensor(gen_ty(cfg, rng, d, mu_ok), gen_ty(cfg, rng, d, mu_ok)),
            2 | 3 => return Type::sum(gen_ty(cfg, rng, d, mu_ok), gen_ty(cfg, rng, d, mu_ok)),
            4 if cfg.allow_mu && mu_ok => {
                let elem = gen_ty(cfg, rng, d, false);
                return if rng.gen_bool(0.7) {
                    Type::list(elem)
                } else {
                    let x = Type::rec("T");
                    Type::mu("T", Type::sum(elem, Type::tensor(x.clone(), x)))
                };
            }
            5 if cfg.allow_fun => return Type::fun(gen_ty(cfg, rng, d, false), gen_ty(cfg, rng, d, false)),
            _ => {}
        }
    }
}

fn needs_unroll(t: &Type) -> bool {
    match t {
        Type::Mu(..) => true,
        Type::Tensor(a, b) => needs_unroll(a) || needs_unroll(b),
        Type::Sum(a, b) => needs_unroll(a) && needs_unroll(b),
        Type::Box(_, a) => needs_unroll(a),
        _ => false,
    }
}

/// A closed value of `t`; recursive types are unrolled at most `budget`
/// times along any path. Type variables are inhabited by integers.
pub fn gen_value(t: &Type, rng: &mut impl Rng, budget: u32) -> Option<Term> {
    Some(match t {
        Type::Unit => Term::unit(),
        Type::TyVar(_) | Type::Base(crate::syntax::BaseType::Int) => Term::int(rng.gen_range(0..10)),
        Type::Base(_) | Type::Fun(..) | Type::RecVar(_) => return None,
        Type::Tensor(a, b) => Term::pair(gen_value(a, rng, budget)?, gen_value(b, rng, budget)?),
        Type::Sum(a, b) => {
            let left = if budget == 0 {
                match (needs_unroll(a), needs_unroll(b)) {
                    (false, true) => true,
                    (true, false) => false,
                    _ => rng.gen_bool(0.5),
                }
            } else {
                rng.gen_bool(0.5)
            };
            if left {
                Term::inl(gen_value(a, rng, budget)?)
            } else {
                Term::inr(gen_value(b, rng, budget)?)
            }
        }
        Type::Box(_, a) => Term::promote(gen_value(a, rng, budget)?),
        Type::Mu(..) => {
            let unrolled = unroll_mu(t).ok()?;
            gen_value(&unrolled, rng, budget.saturating_sub(1))?
        }
    })
}

fn at_int(t: &Type) -> Type {
    t.subst_tyvars(&|_| Some(Type::int()))
}

fn value_at(t: &Type, rng: &mut impl Rng, sr: SemiringId) -> Result<Term, String> {
    let v = gen_value(t, rng, 3).ok_or_else(|| format!("no value of {}", pretty_type(t)))?;
    check_closed(&v, t, sr).map_err(|d| format!("generated value {} fails to check: {d}", pretty_term(&v)))?;
    Ok(v)
}

fn normal(t: &Term) -> Result<Term, EvalError> {
    Machine::new(LAW_FUEL).normalize(t.clone()).map(|t| t.erase())
}

fn show(r: &Result<Term, EvalError>) -> String {
    match r {
        Ok(t) => pretty_term(t),
        Err(e) => format!("<{e}>"),
    }
}

fn compare(case: u64, law: &str, detail: &str, lhs: &Term, rhs: &Term) -> Result<(), Failure> {
    let (l, r) = (normal(lhs), normal(rhs));
    match (&l, &r) {
        (Ok(a), Ok(b)) if alpha_eq(a, b) => Ok(()),
        _ => Err(Failure {
            case,
            law: law.to_string(),
            detail: detail.to_string(),
            lhs: show(&l),
            rhs: show(&r),
        }),
    }
}

fn fail(case: u64, law: &str, detail: String) -> Failure {
    Failure {
        case,
        law: law.to_string(),
        detail,
        lhs: String::new(),
        rhs: String::new(),
    }
}

fn app(f: &Term, a: Term) -> Term {
    Term::app(f.clone(), a)
}

/// `\x -> case x of [y] -> [h y]`, the graded lifting of `h`.
fn box_map(h: &Term) -> Term {
    Term::lam(
        "bx",
        Term::case(Term::var("bx"), vec![(Pattern::boxed(Pattern::var("by")), Term::promote(app(h, Term::var("by"))))]),
    )
}

/// A total function on the integers 0..10 given by a table.
fn int_table(rng: &mut impl Rng) -> Term {
    let branches = (0..10)
        .map(|k| (Pattern::new(crate::syntax::PatKind::Int(k)), Term::int(rng.gen_range(0..10))))
        .collect();
    Term::lam("tx", Term::case(Term::var("tx"), branches))
}

fn one_below(sr: SemiringId, g: &Grade) -> bool {
    sr.one().leq(g).unwrap_or(false)
}

fn grade_for(t: &Type, sr: SemiringId, rng: &mut impl Rng) -> Grade {
    let mut gs = sample(sr, 3);
    if multi_constructor(t) {
        gs.retain(|g| one_below(sr, g));
    }
    *gs.choose(rng).unwrap()
}

fn uniform(t: &Type, r: &Grade) -> BTreeMap<String, Grade> {
    params(t).into_iter().map(|p| (p, *r)).collect()
}

/// A derivation that the generator expected to succeed.
fn derived(case: u64, law: &str, r: Result<std::sync::Arc<deriving::DerivedCombinator>, DeriveError>) -> Result<Term, Failure> {
    r.map(|d| d.term.clone()).map_err(|e| fail(case, law, format!("derivation failed: {e}")))
}

fn push_of(case: u64, t: &Type, r: &Grade) -> Result<Term, Failure> {
    derived(case, "push", deriving::derive_push(t, r))
}

fn pull_of(case: u64, t: &Type, r: &Grade) -> Result<Term, Failure> {
    derived(case, "pull", deriving::derive_pull(t, &uniform(t, r), Some(r)))
}

fn subject(rng: &mut ChaCha8Rng, max_depth: u32) -> (Type, SemiringId) {
    let t = gen_type(&TypeGenConfig::new(max_depth), rng);
    (t, *SemiringId::ALL.choose(rng).unwrap())
}

fn unary_subject(rng: &mut ChaCha8Rng, max_depth: u32) -> (Type, SemiringId) {
    let cfg = TypeGenConfig {
        tyvar_budget: 1,
        allow_int: false,
        ..TypeGenConfig::new(max_depth)
    };
    (gen_type(&cfg, rng), *SemiringId::ALL.choose(rng).unwrap())
}

fn case_inverses(seed: u64, case: u64, max_depth: u32) -> Result<(), Failure> {
    let rng = &mut case_rng(Suite::Inverses, seed, case);
    let (t, sr) = subject(rng, max_depth);
    let r = grade_for(&t, sr, rng);
    let detail = format!("T = {}, {sr}, r = {}", pretty_type(&t), show_grade(&r));
    let push = push_of(case, &t, &r)?;
    let pull = pull_of(case, &t, &r)?;
    let boxed = Type::boxed(r, at_int(&t));
    let v = value_at(&boxed, rng, sr).map_err(|e| fail(case, "generate", e))?;
    compare(case, "pull . push = id", &format!("{detail}, v = {}", pretty_term(&v)), &app(&pull, app(&push, v.clone())), &v)?;
    let spread = at_int(&box_params(&t, &|_| r));
    let w = value_at(&spread, rng, sr).map_err(|e| fail(case, "generate", e))?;
    compare(case, "push . pull = id", &format!("{detail}, w = {}", pretty_term(&w)), &app(&push, app(&pull, w.clone())), &w)
}

fn case_naturality(seed: u64, case: u64, max_depth: u32) -> Result<(), Failure> {
    let rng = &mut case_rng(Suite::Naturality, seed, case);
    let (t, sr) = unary_subject(rng, max_depth);
    let r = grade_for(&t, sr, rng);
    let f = int_table(rng);
    let detail = format!("T = {}, {sr}, r = {}, f = {}", pretty_type(&t), show_grade(&r), pretty_term(&f));
    let push = push_of(case, &t, &r)?;
    let pull = pull_of(case, &t, &r)?;
    let fmap = |g: &Term| deriving::fmap_all(&t, g).map_err(|e| fail(case, "fmap", e.to_string()));
    let (fmap_f, fmap_boxf) = (fmap(&f)?, fmap(&box_map(&f))?);
    let v = value_at(&Type::boxed(r, at_int(&t)), rng, sr).map_err(|e| fail(case, "generate", e))?;
    compare(
        case,
        "fmap [f] . push = push . [fmap f]",
        &format!("{detail}, v = {}", pretty_term(&v)),
        &app(&fmap_boxf, app(&push, v.clone())),
        &app(&push, app(&box_map(&fmap_f), v)),
    )?;
    let w = value_at(&at_int(&box_params(&t, &|_| r)), rng, sr).map_err(|e| fail(case, "generate", e))?;
    compare(
        case,
        "[fmap f] . pull = pull . fmap [f]",
        &format!("{detail}, w = {}", pretty_term(&w)),
        &app(&box_map(&fmap_f), app(&pull, w.clone())),
        &app(&pull, app(&fmap_boxf, w)),
    )
}

fn case_comonad(seed: u64, case: u64, max_depth: u32) -> Result<(), Failure> {
    let rng = &mut case_rng(Suite::Comonad, seed, case);
    let (t, sr) = subject(rng, max_depth);
    let one = sr.one();
    let (eps, _) = deriving::comonad_eps(&Type::int(), sr);
    let fmap = |g: &Term| deriving::fmap_all(&t, g).map_err(|e| fail(case, "fmap", e.to_string()));
    let gen = |ty: &Type, rng: &mut ChaCha8Rng| value_at(&at_int(ty), rng, sr).map_err(|e| fail(case, "generate", e));

    let detail = format!("T = {}, {sr}", pretty_type(&t));
    let v = gen(&Type::boxed(one, t.clone()), rng)?;
    let (push1, pull1) = (push_of(case, &t, &one)?, pull_of(case, &t, &one)?);
    compare(case, "fmap eps . push = eps", &detail, &app(&fmap(&eps)?, app(&push1, v.clone())), &app(&eps, v))?;
    let w = gen(&box_params(&t, &|_| one), rng)?;
    compare(case, "eps . pull = fmap eps", &detail, &app(&eps, app(&pull1, w.clone())), &app(&fmap(&eps)?, w))?;

    // Grades for delta: with a multi-constructor subject, r, s and r * s all
    // have to admit a single use.
    let multi = multi_constructor(&t);
    let gs = sample(sr, 3);
    let pairs: Vec<(Grade, Grade, Grade)> = gs
        .iter()
        .flat_map(|r| gs.iter().map(move |s| (*r, *s, r.mul(s).unwrap())))
        .filter(|(r, s, rs)| !multi || (one_below(sr, r) && one_below(sr, s) && one_below(sr, rs)))
        .collect();
    let (r, s, rs) = *pairs.choose(rng).unwrap();
    let detail = format!("{detail}, r = {}, s = {}", show_grade(&r), show_grade(&s));
    let (delta, _) = deriving::comonad_delta(&Type::int(), &r, &s).map_err(|e| fail(case, "delta", e.to_string()))?;
    let (push_rs, push_r, push_s) = (push_of(case, &t, &rs)?, push_of(case, &t, &r)?, push_of(case, &t, &s)?);
    let v = gen(&Type::boxed(rs, t.clone()), rng)?;
    compare(
        case,
        "fmap delta . push = push . [push] . delta",
        &format!("{detail}, v = {}", pretty_term(&v)),
        &app(&fmap(&delta)?, app(&push_rs, v.clone())),
        &app(&push_r, app(&box_map(&push_s), app(&delta, v))),
    )?;
    let (pull_rs, pull_r, pull_s) = (pull_of(case, &t, &rs)?, pull_of(case, &t, &r)?, pull_of(case, &t, &s)?);
    let w = gen(&box_params(&t, &|_| rs), rng)?;
    compare(
        case,
        "delta . pull = [pull] . pull . fmap delta",
        &format!("{detail}, w = {}", pretty_term(&w)),
        &app(&delta, app(&pull_rs, w.clone())),
        &app(&box_map(&pull_s), app(&pull_r, app(&fmap(&delta)?, w))),
    )
}

/// Patterns covering every value of `t`, one constructor layer deep, with
/// their binders.
fn covering(t: &Type, names: &mut impl FnMut() -> String) -> Vec<(Pattern, Vec<(String, Type)>)> {
    let mut var = |ty: &Type| {
        let x = names();
        (Pattern::var(&x), (x, ty.clone()))
    };
    match head_normal(t) {
        Type::Unit => vec![(Pattern::unit(), vec![])],
        Type::Sum(a, b) => {
            let (pa, ba) = var(&a);
            let (pb, bb) = var(&b);
            vec![(Pattern::inl(pa), vec![ba]), (Pattern::inr(pb), vec![bb])]
        }
        Type::Tensor(a, b) => {
            let (pa, ba) = var(&a);
            let (pb, bb) = var(&b);
            vec![(Pattern::pair(pa, pb), vec![ba, bb])]
        }
        other => {
            let (p, b) = var(&other);
            vec![(p, vec![b])]
        }
    }
}

/// A term built from the given variables, each used once, plus constants.
fn observe(rng: &mut impl Rng, vars: &[String]) -> Term {
    let mut items: Vec<Term> = vars.iter().map(|x| Term::var(x)).collect();
    items.shuffle(rng);
    if items.is_empty() || rng.gen_bool(0.3) {
        items.push(Term::int(rng.gen_range(0..10)));
    }
    let mut t = items.pop().unwrap();
    while let Some(x) = items.pop() {
        t = if rng.gen_bool(0.5) { Term::pair(x, t) } else { Term::pair(t, x) };
    }
    match rng.gen_range(0..4) {
        0 => Term::inl(t),
        1 => Term::inr(t),
        2 => Term::promote(t),
        _ => t,
    }
}

fn observer(rng: &mut impl Rng) -> Term {
    Term::lam("ov", observe(rng, &["ov".to_string()]))
}

fn namer(prefix: &'static str) -> impl FnMut() -> String {
    let mut n = 0;
    move || {
        n += 1;
        format!("{prefix}{n}")
    }
}

fn case_equational(seed: u64, case: u64, max_depth: u32) -> Result<(), Failure> {
    let rng = &mut case_rng(Suite::Equational, seed, case);
    let sr = SemiringId::NatExact;
    let (a, _) = subject(rng, max_depth.min(3));
    let a = at_int(&a);
    let gen = |ty: &Type, rng: &mut ChaCha8Rng| value_at(ty, rng, sr).map_err(|e| fail(case, "generate", e));
    let v = gen(&a, rng)?;
    let detail = format!("A = {}, v = {}", pretty_type(&a), pretty_term(&v));
    let mut xs = namer("x");
    let pats = covering(&a, &mut xs);
    match case % 7 {
        0 => {
            let t = observer(rng);
            let lhs = Term::lam("e", app(&t, Term::var("e")));
            for _ in 0..8 {
                let arg = gen(&a, rng)?;
                compare(case, "eta", &format!("{detail}, t = {}", pretty_term(&t)), &app(&lhs, arg.clone()), &app(&t, arg))?;
            }
            Ok(())
        }
        1 => {
            let list = Type::list(Type::int());
            let l = gen(&list, rng)?;
            let copy = crate::parser::parse_term(
                "\\l -> case l of inl u -> inl u; inr p -> case p of (h, t) -> inr ((h, h), go t)",
                sr,
            )
            .expect("fixed term parses");
            let f = observer(rng);
            let lhs = app(&f, Term::letrec("go", copy.clone(), app(&Term::var("go"), l.clone())));
            let rhs = Term::letrec("go", copy, app(&f, app(&Term::var("go"), l.clone())));
            compare(case, "LetRecDistrib", &format!("l = {}, f = {}", pretty_term(&l), pretty_term(&f)), &lhs, &rhs)
        }
        2 => {
            let t2 = observe(rng, &["z".to_string()]);
            let branches = pats
                .iter()
                .map(|(p, _)| (p.clone(), crate::evaluator::substitute(&t2, "z", &p.to_term().unwrap())))
                .collect();
            let lhs = Term::case(v.clone(), branches);
            let rhs = crate::evaluator::substitute(&t2, "z", &v);
            compare(case, "eta_case", &format!("{detail}, t2 = {}", pretty_term(&t2)), &lhs, &rhs)
        }
        3 => {
            let (b, _) = subject(rng, 2);
            let b = at_int(&b);
            let mut ys = namer("y");
            let outer = covering(&b, &mut ys);
            let mut inner = Vec::new();
            for (p, binders) in &pats {
                let ti = match binders.iter().find(|(_, ty)| crate::syntax::types_equal(ty, &b)) {
                    Some((x, _)) => Term::var(x),
                    None => gen(&b, rng)?,
                };
                inner.push((p.clone(), ti));
            }
            let outer_branches: Vec<(Pattern, Term)> = outer
                .iter()
                .map(|(p, bs)| (p.clone(), observe(rng, &bs.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>())))
                .collect();
            let lhs = Term::case(Term::case(v.clone(), inner.clone()), outer_branches.clone());
            let rhs = Term::case(
                v.clone(),
                inner.into_iter().map(|(p, ti)| (p, Term::case(ti, outer_branches.clone()))).collect(),
            );
            compare(case, "CaseAssoc", &format!("{detail}, B = {}", pretty_type(&b)), &lhs, &rhs)
        }
        4 => {
            let f = observer(rng);
            let branches: Vec<(Pattern, Term)> = pats
                .iter()
                .map(|(p, bs)| (p.clone(), observe(rng, &bs.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>())))
                .collect();
            let lhs = app(&f, Term::case(v.clone(), branches.clone()));
            let rhs = Term::case(v.clone(), branches.into_iter().map(|(p, ti)| (p, app(&f, ti))).collect());
            compare(case, "CaseDistrib", &format!("{detail}, f = {}", pretty_term(&f)), &lhs, &rhs)
        }
        5 => {
            // Linear inner patterns: integer constants, then a variable.
            let n = Term::int(rng.gen_range(0..4));
            let (b, _) = subject(rng, 2);
            let b = at_int(&b);
            let mut inner: Vec<(Pattern, Term)> = Vec::new();
            for k in 0..rng.gen_range(0..3) {
                inner.push((Pattern::new(crate::syntax::PatKind::Int(k)), gen(&b, rng)?));
            }
            let last = if crate::syntax::types_equal(&b, &Type::int()) { Term::var("n") } else { gen(&b, rng)? };
            inner.push((Pattern::var("n"), last));
            let mut ys = namer("y");
            let outer: Vec<(Pattern, Term)> = covering(&b, &mut ys)
                .into_iter()
                .map(|(p, bs)| {
                    let body = observe(rng, &bs.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>());
                    (Pattern::boxed(p), body)
                })
                .collect();
            let lhs = Term::case(Term::promote(Term::case(n.clone(), inner.clone())), outer.clone());
            let rhs = Term::case(
                Term::promote(n.clone()),
                inner
                    .into_iter()
                    .map(|(p, ti)| (Pattern::boxed(p), Term::case(Term::promote(ti), outer.clone())))
                    .collect(),
            );
            compare(case, "[CaseAssoc]", &format!("n = {}, B = {}", pretty_term(&n), pretty_type(&b)), &lhs, &rhs)
        }
        _ => {
            let branches = pats
                .iter()
                .map(|(p, _)| (Pattern::boxed(p.clone()), Term::promote(p.to_term().unwrap())))
                .collect();
            let lhs = Term::case(Term::promote(v.clone()), branches);
            compare(case, "CaseGen", &detail, &lhs, &Term::promote(v))
        }
    }
}

/// One random derivation that meets its preconditions, re-checked at its scheme.
fn case_soundness(seed: u64, case: u64, max_depth: u32) -> Result<(), Failure> {
    let rng = &mut case_rng(Suite::Soundness, seed, case);
    for _ in 0..100 {
        let kind = *DeriveKind::ALL.choose(rng).unwrap();
        let cfg = TypeGenConfig {
            allow_fun: kind == DeriveKind::Push,
            ..TypeGenConfig::new(max_depth)
        };
        let mut t = gen_type(&cfg, rng);
        let sr = *SemiringId::ALL.choose(rng).unwrap();
        let gs = sample(sr, 3);
        let result = match kind {
            DeriveKind::Push => deriving::derive_push(&t, &grade_for(&t, sr, rng)),
            DeriveKind::Pull => {
                let rs: BTreeMap<String, Grade> = params(&t).into_iter().map(|p| (p, *gs.choose(rng).unwrap())).collect();
                deriving::derive_pull(&t, &rs, gs.choose(rng))
            }
            DeriveKind::Drop => {
                t = at_int(&t);
                deriving::derive_drop(&t, sr)
            }
            DeriveKind::CopyShape => deriving::derive_copyshape(&t, sr),
            DeriveKind::Fmap => {
                let Some(alpha) = params(&t).into_iter().next() else { continue };
                let Ok(usage) = deriving::fmap_usage(&t, &alpha, sr) else { continue };
                let ok: Vec<Grade> = gs.into_iter().filter(|g| usage.leq(g).unwrap_or(false)).collect();
                let Some(g) = ok.choose(rng) else { continue };
                deriving::derive_fmap(&t, &alpha, g)
            }
        };
        let detail = format!("{} @{} in {sr}", kind.keyword(), pretty_type(&t));
        return match result {
            Ok(d) => check_closed(&d.term, &d.scheme, sr).map_err(|e| Failure {
                case,
                law: "derived term checks".into(),
                detail: format!("{detail}: {e}"),
                lhs: pretty_term(&d.term),
                rhs: pretty_type(&d.scheme),
            }),
            Err(DeriveError::Internal(e)) => Err(fail(case, "derived term checks", format!("{detail}: {e}"))),
            // A precondition does not hold; draw another instance.
            Err(_) => continue,
        };
    }
    Err(fail(case, "generate", "no derivable instance found in 100 attempts".into()))
}

/// Runs one case of a suite.
pub fn run_case(suite: Suite, seed: u64, case: u64, max_depth: u32) -> Result<(), Failure> {
    match suite {
        Suite::Inverses => case_inverses(seed, case, max_depth),
        Suite::Naturality => case_naturality(seed, case, max_depth),
        Suite::Comonad => case_comonad(seed, case, max_depth),
        Suite::Equational => case_equational(seed, case, max_depth),
        Suite::Soundness => case_soundness(seed, case, max_depth),
    }
}

pub const DEFAULT_MAX_DEPTH: u32 = 3;

/// Runs `cases` cases on all cores; the result does not depend on scheduling.
pub fn run_suite(suite: Suite, cases: u64, seed: u64, max_depth: u32) -> LawReport {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16) as u64;
    let mut failures: Vec<Failure> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                std::thread::Builder::new()
                    .stack_size(64 << 20)
                    .spawn_scoped(scope, move || {
                        (w..cases)
                            .step_by(workers as usize)
                            .filter_map(|k| run_case(suite, seed, k, max_depth).err())
                            .collect::<Vec<_>>()
                    })
                    .expect("spawn law worker")
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("law worker panicked")).collect()
    });
    failures.sort_by_key(|f| f.case);
    LawReport {
        suite,
        seed,
        cases,
        failures,
    }
}

pub fn render_reports(reports: &[LawReport], max_depth: u32) -> String {
    let mut out = String::new();
    out.push_str("# delta laws on multi-constructor subjects use grades with 1 <= r, 1 <= s and 1 <= r * s\n");
    out.push_str(&format!("{:<12} {:>6} {:>9}\n", "suite", "cases", "failures"));
    for r in reports {
        out.push_str(&format!("{:<12} {:>6} {:>9}\n", r.suite.name(), r.cases, r.failures.len()));
    }
    for r in reports {
        for f in &r.failures {
            out.push_str(&format!("FAIL {} case {}: {}\n  {}\n", r.suite, f.case, f.law, f.detail));
            if !f.lhs.is_empty() || !f.rhs.is_empty() {
                out.push_str(&format!("  lhs: {}\n  rhs: {}\n", f.lhs, f.rhs));
            }
            out.push_str(&format!(
                "  repro: grlin laws --suite {} --seed {} --case {} --max-depth {max_depth}\n",
                r.suite, r.seed, f.case
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::Constructor;

    #[test]
    fn shallow_types_are_leaves() {
        let cfg = TypeGenConfig {
            allow_mu: false,
            ..TypeGenConfig::new(0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = gen_type(&cfg, &mut rng);
            assert!(matches!(t, Type::Unit | Type::TyVar(_) | Type::Base(_)), "{t:?}");
        }
    }

    #[test]
    fn values_check_and_lists_are_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let list = Type::list(Type::int());
        for _ in 0..50 {
            let v = gen_value(&list, &mut rng, 3).unwrap();
            assert!(check_closed(&v, &list, SemiringId::NatExact).is_ok());
            assert!(pretty_term(&v).matches("inr").count() <= 3);
        }
        let sum = Type::sum(Type::int(), Type::Unit);
        let v = gen_value(&sum, &mut rng, 3).unwrap();
        assert!(matches!(v.kind, crate::syntax::TermKind::Con(Constructor::Inl | Constructor::Inr, _)));
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run_suite(Suite::Equational, 14, 3, 3);
        let b = run_suite(Suite::Equational, 14, 3, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn small_runs_pass() {
        for s in Suite::ALL {
            let r = run_suite(s, 20, 11, DEFAULT_MAX_DEPTH);
            assert!(r.failures.is_empty(), "{}", render_reports(&[r], DEFAULT_MAX_DEPTH));
        }
    }
}
