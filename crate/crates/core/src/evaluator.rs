//! Normal-order evaluation by substitution, with a step budget.
//!
//! Boxes suspend: the payload of a promotion is only reduced when the final
//! result is printed. Case branches are tried in order and the first that
//! matches wins. Matching forces the scrutinee only as far as the pattern
//! needs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::deriving::{self, DeriveError};
use crate::parser::SourceProgram;
use crate::pretty::pretty_term;
use crate::syntax::{fresh_name, BaseType, DeriveKind, PatKind, Pattern, Pos, Term, TermKind, Type};

pub const DEFAULT_FUEL: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("ran out of fuel after {steps} steps")]
    FuelExhausted { steps: u64 },
    #[error("evaluation is stuck: {0}")]
    Stuck(String),
    #[error("the program has no `main`")]
    NoMain,
    #[error("cannot elaborate derived combinator: {0}")]
    Derive(#[from] DeriveError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatchResult {
    Matched(Vec<(String, Term)>),
    NoMatch,
    /// The scrutinee is a neutral term, so the match cannot be decided.
    Blocked,
}

/// How often one instance of a pattern variable was consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct UseCount {
    pub site: Pos,
    pub name: String,
    pub count: u64,
}

#[derive(Clone, Copy, PartialEq)]
enum M {
    Matched,
    NoMatch,
    Blocked,
}

pub struct Machine {
    globals: BTreeMap<String, Term>,
    fuel: u64,
    steps: u64,
    instrument: bool,
    instances: Vec<(Pos, String)>,
    counts: Vec<u64>,
    locals: Vec<String>,
    elaborated: HashMap<(DeriveKind, String), Term>,
}

fn names_in(t: &Term, out: &mut BTreeSet<String>) {
    t.walk(&mut |s| match &s.kind {
        TermKind::Var(x) | TermKind::Lam(x, _) | TermKind::LetRec(x, ..) => {
            out.insert(x.clone());
        }
        TermKind::Case(_, bs) => {
            for (p, _) in bs {
                out.extend(p.binders().into_iter().map(|(x, _)| x));
            }
        }
        _ => {}
    });
}

fn rename_pattern(p: &Pattern, map: &BTreeMap<String, String>) -> Pattern {
    let kind = match &p.kind {
        PatKind::Var(x) => PatKind::Var(map.get(x).cloned().unwrap_or_else(|| x.clone())),
        PatKind::Box(q) => PatKind::Box(Box::new(rename_pattern(q, map))),
        PatKind::Con(c, ps) => PatKind::Con(*c, ps.iter().map(|q| rename_pattern(q, map)).collect()),
        k => k.clone(),
    };
    Pattern { kind, pos: p.pos }
}

type Subst = BTreeMap<String, Term>;

/// Capture-avoiding simultaneous substitution. `fv` holds the free
/// variables of the replacements.
fn subst(t: &Term, s: &Subst, fv: &BTreeSet<String>) -> Term {
    if s.is_empty() {
        return t.clone();
    }
    let kind = match &t.kind {
        TermKind::Var(x) => match s.get(x) {
            Some(v) => return v.clone(),
            None => return t.clone(),
        },
        TermKind::IntLit(_) | TermKind::Derive(..) => return t.clone(),
        TermKind::App(f, a) => TermKind::App(Box::new(subst(f, s, fv)), Box::new(subst(a, s, fv))),
        TermKind::Promote(b) => TermKind::Promote(Box::new(subst(b, s, fv))),
        TermKind::Ann(b, ty) => TermKind::Ann(Box::new(subst(b, s, fv)), ty.clone()),
        TermKind::Mark(id, b) => TermKind::Mark(*id, Box::new(subst(b, s, fv))),
        TermKind::Con(c, args) => TermKind::Con(*c, args.iter().map(|a| subst(a, s, fv)).collect()),
        TermKind::Lam(x, b) => {
            let (names, s2, fv2) = under(std::slice::from_ref(x), &[b], s, fv);
            TermKind::Lam(names[0].clone(), Box::new(subst(b, &s2, &fv2)))
        }
        TermKind::LetRec(x, t1, t2) => {
            let (names, s2, fv2) = under(std::slice::from_ref(x), &[t1, t2], s, fv);
            TermKind::LetRec(names[0].clone(), Box::new(subst(t1, &s2, &fv2)), Box::new(subst(t2, &s2, &fv2)))
        }
        TermKind::Case(scrut, bs) => TermKind::Case(
            Box::new(subst(scrut, s, fv)),
            bs.iter()
                .map(|(p, b)| {
                    let binders: Vec<String> = p.binders().into_iter().map(|(x, _)| x).collect();
                    let (names, s2, fv2) = under(&binders, &[b], s, fv);
                    let map: BTreeMap<String, String> =
                        binders.into_iter().zip(names).filter(|(a, b)| a != b).collect();
                    let p = if map.is_empty() { p.clone() } else { rename_pattern(p, &map) };
                    (p, subst(b, &s2, &fv2))
                })
                .collect(),
        ),
    };
    Term { kind, pos: t.pos }
}

/// Adjusts a substitution for going under `binders`: shadowed entries are
/// dropped and binders that would capture are renamed.
fn under(binders: &[String], bodies: &[&Term], s: &Subst, fv: &BTreeSet<String>) -> (Vec<String>, Subst, BTreeSet<String>) {
    let mut s2 = s.clone();
    for x in binders {
        s2.remove(x);
    }
    let mut fv2 = fv.clone();
    let mut names = Vec::new();
    let mut avoid: Option<BTreeSet<String>> = None;
    for x in binders {
        if !s2.is_empty() && fv.contains(x) {
            let avoid = avoid.get_or_insert_with(|| {
                let mut a = fv.clone();
                for b in bodies {
                    names_in(b, &mut a);
                }
                a.extend(s.keys().cloned());
                a
            });
            let y = fresh_name(x, avoid);
            avoid.insert(y.clone());
            fv2.insert(y.clone());
            s2.insert(x.clone(), Term::var(&y));
            names.push(y);
        } else {
            names.push(x.clone());
        }
    }
    (names, s2, fv2)
}

/// Substitutes `v` for `x` in `t`.
pub fn substitute(t: &Term, x: &str, v: &Term) -> Term {
    subst(t, &Subst::from([(x.to_string(), v.clone())]), &v.free_vars())
}

impl Machine {
    pub fn new(fuel: u64) -> Machine {
        Machine {
            globals: BTreeMap::new(),
            fuel,
            steps: 0,
            instrument: false,
            instances: Vec::new(),
            counts: Vec::new(),
            locals: Vec::new(),
            elaborated: HashMap::new(),
        }
    }

    /// Top-level definitions, unfolded on demand.
    pub fn with_globals(mut self, globals: BTreeMap<String, Term>) -> Machine {
        self.globals = globals;
        self
    }

    pub fn instrumented(mut self) -> Machine {
        self.instrument = true;
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn use_counts(&self) -> Vec<UseCount> {
        self.instances
            .iter()
            .zip(&self.counts)
            .map(|((site, name), count)| UseCount {
                site: *site,
                name: name.clone(),
                count: *count,
            })
            .collect()
    }

    fn tick(&mut self) -> Result<(), EvalError> {
        if self.steps >= self.fuel {
            return Err(EvalError::FuelExhausted { steps: self.steps });
        }
        self.steps += 1;
        Ok(())
    }

    fn elaborate(&mut self, kind: DeriveKind, ty: &Type) -> Result<Term, EvalError> {
        let key = (kind, crate::pretty::pretty_type(ty));
        if let Some(t) = self.elaborated.get(&key) {
            return Ok(t.clone());
        }
        let t = deriving::elaborate(kind, ty)?;
        self.elaborated.insert(key, t.clone());
        Ok(t)
    }

    /// Reduces to weak head normal form.
    pub fn whnf(&mut self, mut t: Term) -> Result<Term, EvalError> {
        loop {
            match t.kind {
                TermKind::Mark(id, inner) => {
                    self.counts[id as usize] += 1;
                    t = *inner;
                }
                TermKind::Ann(inner, _) => t = *inner,
                TermKind::Var(ref x) => {
                    if self.locals.contains(x) {
                        return Ok(t);
                    }
                    match self.globals.get(x) {
                        Some(body) => {
                            let body = body.clone();
                            self.tick()?;
                            t = body;
                        }
                        None => return Ok(t),
                    }
                }
                TermKind::App(f, a) => {
                    let f = self.whnf(*f)?;
                    match f.kind {
                        TermKind::Lam(x, body) => {
                            self.tick()?;
                            t = substitute(&body, &x, &a);
                        }
                        TermKind::Derive(DeriveKind::Drop, Type::Base(BaseType::Int)) => {
                            let v = self.whnf(*a)?;
                            if matches!(v.kind, TermKind::IntLit(_)) {
                                self.tick()?;
                                return Ok(Term::unit());
                            }
                            return Ok(Term::app(f, v));
                        }
                        TermKind::Derive(kind, ref ty) => {
                            self.tick()?;
                            let e = self.elaborate(kind, ty)?;
                            t = Term::app(e, *a);
                        }
                        _ => return Ok(Term::app(f, *a)),
                    }
                }
                TermKind::Case(s, bs) => {
                    let mut s = *s;
                    let mut chosen = None;
                    for (i, (p, _)) in bs.iter().enumerate() {
                        let mut out = Vec::new();
                        match self.match_in_place(&mut s, p, &mut out)? {
                            M::Matched => {
                                chosen = Some((i, out));
                                break;
                            }
                            M::NoMatch => {}
                            M::Blocked => return Ok(Term::case(s, bs)),
                        }
                    }
                    let Some((i, out)) = chosen else {
                        return Err(EvalError::Stuck(format!("no branch matches {}", pretty_term(&s.erase()))));
                    };
                    self.tick()?;
                    let mut map = Subst::new();
                    let mut fv = BTreeSet::new();
                    for (x, pos, v) in out {
                        fv.extend(v.free_vars());
                        let v = if self.instrument && !pos.is_synthetic() {
                            self.instances.push((pos, x.clone()));
                            self.counts.push(0);
                            Term::new(TermKind::Mark(self.counts.len() as u64 - 1, Box::new(v)))
                        } else {
                            v
                        };
                        map.insert(x, v);
                    }
                    t = subst(&bs[i].1, &map, &fv);
                }
                TermKind::LetRec(x, t1, t2) => {
                    self.tick()?;
                    let unrolled = Term::letrec(&x, (*t1).clone(), *t1);
                    t = substitute(&t2, &x, &unrolled);
                }
                _ => return Ok(t),
            }
        }
    }

    fn force(&mut self, t: &mut Term) -> Result<(), EvalError> {
        let owned = std::mem::replace(t, Term::unit());
        *t = self.whnf(owned)?;
        Ok(())
    }

    fn is_neutral(t: &Term) -> bool {
        matches!(t.kind, TermKind::Var(_) | TermKind::App(..) | TermKind::Case(..))
    }

    fn match_in_place(
        &mut self,
        t: &mut Term,
        p: &Pattern,
        out: &mut Vec<(String, Pos, Term)>,
    ) -> Result<M, EvalError> {
        let ill = |t: &Term| EvalError::Stuck(format!("pattern does not fit {}", pretty_term(&t.erase())));
        match &p.kind {
            PatKind::Var(x) => {
                out.push((x.clone(), p.pos, t.clone()));
                Ok(M::Matched)
            }
            PatKind::Wild => Ok(M::Matched),
            PatKind::Box(q) => {
                self.force(t)?;
                if Self::is_neutral(t) {
                    return Ok(M::Blocked);
                }
                match &mut t.kind {
                    TermKind::Promote(inner) => self.match_in_place(inner, q, out),
                    _ => Err(ill(t)),
                }
            }
            PatKind::Con(c, ps) => {
                self.force(t)?;
                if Self::is_neutral(t) {
                    return Ok(M::Blocked);
                }
                let TermKind::Con(c2, args) = &mut t.kind else { return Err(ill(t)) };
                if c2 != c {
                    return Ok(M::NoMatch);
                }
                for (a, q) in args.iter_mut().zip(ps) {
                    match self.match_in_place(a, q, out)? {
                        M::Matched => {}
                        other => return Ok(other),
                    }
                }
                Ok(M::Matched)
            }
            PatKind::Int(n) => {
                self.force(t)?;
                match t.kind {
                    TermKind::IntLit(m) => Ok(if m == *n { M::Matched } else { M::NoMatch }),
                    _ if Self::is_neutral(t) => Ok(M::Blocked),
                    _ => Err(ill(t)),
                }
            }
        }
    }

    /// Matches a value against a pattern, forcing it as needed.
    pub fn match_pattern(&mut self, v: &Term, p: &Pattern) -> Result<MatchResult, EvalError> {
        let mut v = v.clone();
        let mut out = Vec::new();
        Ok(match self.match_in_place(&mut v, p, &mut out)? {
            M::Matched => MatchResult::Matched(out.into_iter().map(|(x, _, t)| (x, t)).collect()),
            M::NoMatch => MatchResult::NoMatch,
            M::Blocked => MatchResult::Blocked,
        })
    }

    fn under_binders<T>(&mut self, xs: impl IntoIterator<Item = String>, f: impl FnOnce(&mut Self) -> T) -> T {
        let depth = self.locals.len();
        self.locals.extend(xs);
        let r = f(self);
        self.locals.truncate(depth);
        r
    }

    /// Full normal form, reducing inside boxes and under binders.
    pub fn normalize(&mut self, t: Term) -> Result<Term, EvalError> {
        let t = self.whnf(t)?;
        let pos = t.pos;
        let kind = match t.kind {
            TermKind::Lam(x, b) => {
                let b = self.under_binders([x.clone()], |m| m.normalize(*b))?;
                TermKind::Lam(x, Box::new(b))
            }
            TermKind::Promote(b) => TermKind::Promote(Box::new(self.normalize(*b)?)),
            TermKind::Con(c, args) => {
                TermKind::Con(c, args.into_iter().map(|a| self.normalize(a)).collect::<Result<_, _>>()?)
            }
            TermKind::App(f, a) => TermKind::App(Box::new(self.normalize(*f)?), Box::new(self.normalize(*a)?)),
            TermKind::Case(s, bs) => {
                let s = self.normalize(*s)?;
                let mut out = Vec::new();
                for (p, b) in bs {
                    let xs: Vec<String> = p.binders().into_iter().map(|(x, _)| x).collect();
                    let b = self.under_binders(xs, |m| m.normalize(b))?;
                    out.push((p, b));
                }
                TermKind::Case(Box::new(s), out)
            }
            k => k,
        };
        Ok(Term { kind, pos })
    }
}

pub fn whnf(t: &Term, fuel: u64) -> Result<Term, EvalError> {
    Machine::new(fuel).whnf(t.clone())
}

pub fn normalize(t: &Term, fuel: u64) -> Result<Term, EvalError> {
    Machine::new(fuel).normalize(t.clone())
}

pub fn match_pattern(v: &Term, p: &Pattern) -> Result<MatchResult, EvalError> {
    Machine::new(DEFAULT_FUEL).match_pattern(v, p)
}

/// Prints a normal form in the term syntax.
pub fn show_value(t: &Term) -> String {
    pretty_term(&t.erase())
}

fn globals_of(p: &SourceProgram) -> BTreeMap<String, Term> {
    let mut g = BTreeMap::new();
    for d in &p.decls {
        g.entry(d.name.clone()).or_insert_with(|| d.body.clone());
    }
    g
}

/// Normalizes `main` with the other definitions in scope.
pub fn run_main(p: &SourceProgram, fuel: u64) -> Result<Term, EvalError> {
    let globals = globals_of(p);
    let main = globals.get("main").cloned().ok_or(EvalError::NoMain)?;
    Machine::new(fuel).with_globals(globals).normalize(main)
}

/// Counts, per pattern-variable instance, how many times the bound value is consumed.
pub fn count_uses(t: &Term, fuel: u64) -> Result<Vec<UseCount>, EvalError> {
    let mut m = Machine::new(fuel).instrumented();
    m.normalize(t.clone())?;
    Ok(m.use_counts())
}

/// `count_uses` for the `main` of a program.
pub fn count_uses_program(p: &SourceProgram, fuel: u64) -> Result<(Term, Vec<UseCount>), EvalError> {
    let globals = globals_of(p);
    let main = globals.get("main").cloned().ok_or(EvalError::NoMain)?;
    let mut m = Machine::new(fuel).with_globals(globals).instrumented();
    let v = m.normalize(main)?;
    Ok((v, m.use_counts()))
}

/// Fuel from `GRLIN_FUEL`, falling back to the default.
pub fn fuel_from_env() -> u64 {
    std::env::var("GRLIN_FUEL").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_FUEL)
}

/// Runs `f` on a thread with a large stack; deep data makes the
/// recursive normalizer hungry.
pub fn with_stack<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    std::thread::Builder::new()
        .stack_size(256 << 20)
        .spawn(f)
        .expect("spawn evaluator thread")
        .join()
        .unwrap_or_else(|e| std::panic::resume_unwind(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grades::SemiringId;
    use crate::parser::{parse_program, parse_term};

    fn term(s: &str) -> Term {
        parse_term(s, SemiringId::NatExact).unwrap()
    }

    fn run(s: &str) -> String {
        show_value(&normalize(&term(s), DEFAULT_FUEL).unwrap())
    }

    #[test]
    fn beta() {
        assert_eq!(run("(\\x -> x) unit"), "unit");
    }

    #[test]
    fn copy_duplicates() {
        assert_eq!(run("(\\y -> case y of [x] -> (x, x)) [5]"), "(5, 5)");
        let counts = count_uses(&term("(\\y -> case y of [x] -> (x, x)) [5]"), DEFAULT_FUEL).unwrap();
        let x: Vec<_> = counts.iter().filter(|c| c.name == "x").collect();
        assert_eq!(x.len(), 1);
        assert_eq!(x[0].count, 2);
    }

    #[test]
    fn unused_graded_binder() {
        let counts = count_uses(&term("(\\y -> case y of [x] -> unit) [5]"), DEFAULT_FUEL).unwrap();
        assert_eq!(counts[0].count, 0);
    }

    #[test]
    fn divergence_runs_out_of_fuel() {
        let e = normalize(&term("letrec f = \\x -> f x in f unit"), 100).unwrap_err();
        assert_eq!(e, EvalError::FuelExhausted { steps: 100 });
    }

    #[test]
    fn matcher_examples() {
        let m = match_pattern(&term("[(1, 2)]"), &Pattern::boxed(Pattern::pair(Pattern::var("x"), Pattern::var("y"))));
        assert_eq!(m.unwrap(), MatchResult::Matched(vec![("x".into(), Term::int(1)), ("y".into(), Term::int(2))]));
        assert_eq!(match_pattern(&term("inl unit"), &Pattern::inr(Pattern::var("y"))).unwrap(), MatchResult::NoMatch);
        assert_eq!(match_pattern(&term("(1, 2)"), &Pattern::wild()).unwrap(), MatchResult::Matched(vec![]));
        assert_eq!(match_pattern(&term("x"), &Pattern::unit()).unwrap(), MatchResult::Blocked);
    }

    #[test]
    fn first_matching_branch_wins() {
        assert_eq!(run("case 3 of x -> 1; 3 -> 2"), "1");
        assert_eq!(run("case 3 of 3 -> 2; x -> 1"), "2");
        assert_eq!(run("case inl 1 of inr x -> x; inl y -> y"), run("case inl 1 of inl y -> y; inr x -> x"));
    }

    #[test]
    fn boxes_are_forced_when_printed() {
        assert_eq!(run("[(\\x -> x) 4]"), "[4]");
    }

    #[test]
    fn substitution_avoids_capture() {
        let t = substitute(&term("\\y -> x y"), "x", &Term::var("y"));
        assert!(crate::syntax::alpha_eq(&t, &term("\\z -> y z")));
    }

    #[test]
    fn derived_combinators_run() {
        assert_eq!(run("copyShape @(Int * Int) (1, 2)"), "((unit, unit), (1, 2))");
        assert_eq!(run("drop @(mu X . Unit + (Int * X)) (inr (7, inr (9, inl unit)))"), "unit");
        assert_eq!(run("copyShape @Unit unit"), "(unit, unit)");
        assert_eq!(run("push @(a * b) [(1, 2)]"), "([1], [2])");
        assert_eq!(run("pull @(a * b) ([1], [2])"), "[(1, 2)]");
    }

    #[test]
    fn comonad_witnesses_run() {
        let (eps, _) = deriving::comonad_eps(&Type::int(), SemiringId::NatExact);
        assert_eq!(show_value(&normalize(&Term::app(eps, term("[5]")), DEFAULT_FUEL).unwrap()), "5");
    }

    #[test]
    fn programs_run_main() {
        let p = parse_program("main : Unit\nmain = unit").unwrap();
        assert_eq!(show_value(&run_main(&p, DEFAULT_FUEL).unwrap()), "unit");
        let p = parse_program("x : Unit\nx = unit").unwrap();
        assert_eq!(run_main(&p, DEFAULT_FUEL).unwrap_err(), EvalError::NoMain);
    }
}
