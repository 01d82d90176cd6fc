//! Printing then parsing gives back the same syntax tree.

use grlin::grades::{Grade, SemiringId};
use grlin::parser::{parse_pattern, parse_term, parse_type};
use grlin::pretty::{pretty_pattern, pretty_term, pretty_type};
use grlin::syntax::{BaseType, Constructor, DeriveKind, Pattern, Term, TermKind, Type};
use proptest::prelude::*;

const SR: SemiringId = SemiringId::NatExact;

fn name() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["x", "y", "z", "f", "x'", "acc"]).prop_map(str::to_string)
}

fn leaf_type() -> impl Strategy<Value = Type> {
    prop_oneof![
        Just(Type::Unit),
        Just(Type::Base(BaseType::Int)),
        Just(Type::Base(BaseType::Res)),
        prop::sample::select(vec!["a", "b"]).prop_map(Type::var),
    ]
}

fn any_type() -> impl Strategy<Value = Type> {
    leaf_type().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Type::fun(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Type::tensor(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Type::sum(a, b)),
            (0u64..5, inner.clone()).prop_map(|(r, a)| Type::boxed(Grade::nat_exact(r), a)),
            inner.prop_map(|a| Type::mu("L", Type::sum(Type::Unit, Type::tensor(a, Type::rec("L"))))),
        ]
    })
}

fn any_pattern() -> impl Strategy<Value = Pattern> {
    let leaf = prop_oneof![name().prop_map(|x| Pattern::var(&x)), Just(Pattern::wild()), Just(Pattern::unit()),];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Pattern::boxed),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Pattern::pair(a, b)),
            inner.clone().prop_map(Pattern::inl),
            inner.prop_map(Pattern::inr),
        ]
    })
}

fn any_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        name().prop_map(|x| Term::var(&x)),
        Just(Term::unit()),
        (0i64..1000).prop_map(Term::int),
        (prop::sample::select(DeriveKind::ALL.to_vec()), any_type()).prop_map(|(k, t)| Term::derive(k, t)),
    ];
    leaf.prop_recursive(4, 32, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(f, a)| Term::app(f, a)),
            (name(), inner.clone()).prop_map(|(x, b)| Term::lam(&x, b)),
            inner.clone().prop_map(Term::promote),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::pair(a, b)),
            inner.clone().prop_map(Term::inl),
            inner.clone().prop_map(Term::inr),
            (inner.clone(), prop::collection::vec((any_pattern(), inner.clone()), 1..3))
                .prop_map(|(s, bs)| Term::case(s, bs)),
            (name(), inner.clone(), inner.clone()).prop_map(|(x, a, b)| Term::letrec(&x, a, b)),
            (inner, any_type()).prop_map(|(t, a)| Term::ann(t, a)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn types_round_trip(t in any_type()) {
        let text = pretty_type(&t);
        let back = parse_type(&text, SR).map_err(|e| TestCaseError::fail(format!("{text}: {e:?}")))?;
        prop_assert_eq!(back, t, "{}", text);
    }

    #[test]
    fn patterns_round_trip(p in any_pattern()) {
        let text = pretty_pattern(&p);
        let back = parse_pattern(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e:?}")))?;
        prop_assert_eq!(back, p, "{}", text);
    }

    #[test]
    fn terms_round_trip(t in any_term()) {
        let text = pretty_term(&t);
        let back = parse_term(&text, SR).map_err(|e| TestCaseError::fail(format!("{text}: {e:?}")))?;
        prop_assert_eq!(back, t, "{}", text);
    }

    #[test]
    fn printing_is_stable(t in any_term()) {
        let once = pretty_term(&t);
        let twice = pretty_term(&parse_term(&once, SR).unwrap());
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn pairs_print_as_tuples() {
    let t = Term::con(Constructor::Pair, vec![Term::unit(), Term::int(1)]);
    assert!(matches!(t.kind, TermKind::Con(Constructor::Pair, _)));
    assert_eq!(pretty_term(&t), "(unit, 1)");
}
