//! Preordered semirings used to grade the `[r]` modality.
//!
//! Four carriers are shipped: exact naturals (preorder is equality),
//! naturals under `<=`, intervals of extended naturals, and the
//! three-point `{0, 1, w}` semiring. Every [`Grade`] carries the tag of
//! the semiring it lives in; combining grades from different semirings
//! is an error.

use std::cmp::{max, min};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemiringId {
    NatExact,
    NatLe,
    Interval,
    ZeroOneMany,
}

impl SemiringId {
    pub const ALL: [SemiringId; 4] = [
        SemiringId::NatExact,
        SemiringId::NatLe,
        SemiringId::Interval,
        SemiringId::ZeroOneMany,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SemiringId::NatExact => "nat-exact",
            SemiringId::NatLe => "nat-le",
            SemiringId::Interval => "interval",
            SemiringId::ZeroOneMany => "zero-one-many",
        }
    }

    pub fn zero(self) -> Grade {
        self.from_nat(0)
    }

    pub fn one(self) -> Grade {
        self.from_nat(1)
    }

    /// Embeds a natural number: `n` is `1 + ... + 1`.
    pub fn from_nat(self, n: u64) -> Grade {
        let value = match self {
            SemiringId::NatExact | SemiringId::NatLe => GradeValue::Nat(n),
            SemiringId::Interval => GradeValue::Interval(Ext::Fin(n), Ext::Fin(n)),
            SemiringId::ZeroOneMany => GradeValue::Zom(match n {
                0 => Zom::Zero,
                1 => Zom::One,
                _ => Zom::Many,
            }),
        };
        Grade {
            semiring: self,
            value,
        }
    }

    /// An element that absorbs any finite number of repetitions, if the
    /// carrier has one (`0..Inf` for intervals, `w` for zero-one-many).
    pub fn unbounded(self) -> Option<Grade> {
        match self {
            SemiringId::Interval => Some(Grade::interval(Ext::Fin(0), Ext::Inf)),
            SemiringId::ZeroOneMany => Some(Grade::zom(Zom::Many)),
            SemiringId::NatExact | SemiringId::NatLe => None,
        }
    }
}

impl fmt::Display for SemiringId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SemiringId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SemiringId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown semiring `{s}`"))
    }
}

/// Extended naturals, `Inf` on top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ext {
    Fin(u64),
    Inf,
}

impl Ext {
    fn add(self, other: Ext) -> Ext {
        match (self, other) {
            (Ext::Fin(a), Ext::Fin(b)) => a.checked_add(b).map_or(Ext::Inf, Ext::Fin),
            _ => Ext::Inf,
        }
    }

    // 0 annihilates, including 0 * Inf.
    fn mul(self, other: Ext) -> Ext {
        match (self, other) {
            (Ext::Fin(0), _) | (_, Ext::Fin(0)) => Ext::Fin(0),
            (Ext::Fin(a), Ext::Fin(b)) => a.checked_mul(b).map_or(Ext::Inf, Ext::Fin),
            _ => Ext::Inf,
        }
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::Fin(n) => write!(f, "{n}"),
            Ext::Inf => f.write_str("Inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Zom {
    Zero,
    One,
    Many,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GradeValue {
    Nat(u64),
    Interval(Ext, Ext),
    Zom(Zom),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Grade {
    semiring: SemiringId,
    value: GradeValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GradeError {
    #[error("grades from different semirings: {0} and {1}")]
    MixedSemiring(SemiringId, SemiringId),
    #[error("invalid {semiring} grade `{text}` at offset {offset}: {reason}")]
    Syntax {
        semiring: SemiringId,
        text: String,
        offset: usize,
        reason: String,
    },
}

impl Grade {
    pub fn nat_exact(n: u64) -> Grade {
        SemiringId::NatExact.from_nat(n)
    }

    pub fn nat_le(n: u64) -> Grade {
        SemiringId::NatLe.from_nat(n)
    }

    /// Panics if `lo > hi`.
    pub fn interval(lo: Ext, hi: Ext) -> Grade {
        assert!(lo <= hi, "interval lower bound exceeds upper bound");
        Grade {
            semiring: SemiringId::Interval,
            value: GradeValue::Interval(lo, hi),
        }
    }

    pub fn zom(z: Zom) -> Grade {
        Grade {
            semiring: SemiringId::ZeroOneMany,
            value: GradeValue::Zom(z),
        }
    }

    pub fn semiring(&self) -> SemiringId {
        self.semiring
    }

    pub fn value(&self) -> GradeValue {
        self.value
    }

    fn same(&self, other: &Grade) -> Result<(), GradeError> {
        if self.semiring == other.semiring {
            Ok(())
        } else {
            Err(GradeError::MixedSemiring(self.semiring, other.semiring))
        }
    }

    pub fn add(&self, other: &Grade) -> Result<Grade, GradeError> {
        self.same(other)?;
        let value = match (self.value, other.value) {
            (GradeValue::Nat(a), GradeValue::Nat(b)) => GradeValue::Nat(a.saturating_add(b)),
            (GradeValue::Interval(a, b), GradeValue::Interval(c, d)) => {
                GradeValue::Interval(a.add(c), b.add(d))
            }
            (GradeValue::Zom(a), GradeValue::Zom(b)) => GradeValue::Zom(match (a, b) {
                (Zom::Zero, x) | (x, Zom::Zero) => x,
                _ => Zom::Many,
            }),
            _ => unreachable!("grade value does not match its semiring tag"),
        };
        Ok(Grade { value, ..*self })
    }

    pub fn mul(&self, other: &Grade) -> Result<Grade, GradeError> {
        self.same(other)?;
        let value = match (self.value, other.value) {
            (GradeValue::Nat(a), GradeValue::Nat(b)) => GradeValue::Nat(a.saturating_mul(b)),
            (GradeValue::Interval(a, b), GradeValue::Interval(c, d)) => {
                GradeValue::Interval(a.mul(c), b.mul(d))
            }
            (GradeValue::Zom(a), GradeValue::Zom(b)) => GradeValue::Zom(match (a, b) {
                (Zom::Zero, _) | (_, Zom::Zero) => Zom::Zero,
                (Zom::One, x) | (x, Zom::One) => x,
                (Zom::Many, Zom::Many) => Zom::Many,
            }),
            _ => unreachable!("grade value does not match its semiring tag"),
        };
        Ok(Grade { value, ..*self })
    }

    /// `self ⊑ other`: `self` is approximated by `other`.
    pub fn leq(&self, other: &Grade) -> Result<bool, GradeError> {
        self.same(other)?;
        Ok(match (self.value, other.value) {
            (GradeValue::Nat(a), GradeValue::Nat(b)) => match self.semiring {
                SemiringId::NatExact => a == b,
                _ => a <= b,
            },
            (GradeValue::Interval(a, b), GradeValue::Interval(c, d)) => c <= a && b <= d,
            (GradeValue::Zom(a), GradeValue::Zom(b)) => a == b || b == Zom::Many,
            _ => unreachable!("grade value does not match its semiring tag"),
        })
    }

    /// Greatest lower bound under `⊑`, `None` when it does not exist.
    pub fn meet(&self, other: &Grade) -> Result<Option<Grade>, GradeError> {
        self.same(other)?;
        let value = match (self.value, other.value) {
            (GradeValue::Nat(a), GradeValue::Nat(b)) => match self.semiring {
                SemiringId::NatExact => (a == b).then_some(GradeValue::Nat(a)),
                _ => Some(GradeValue::Nat(min(a, b))),
            },
            // Elements below an interval are the intervals it contains.
            (GradeValue::Interval(a, b), GradeValue::Interval(c, d)) => {
                let (lo, hi) = (max(a, c), min(b, d));
                (lo <= hi).then_some(GradeValue::Interval(lo, hi))
            }
            (GradeValue::Zom(a), GradeValue::Zom(b)) => match (a, b) {
                _ if a == b => Some(GradeValue::Zom(a)),
                (Zom::Many, x) | (x, Zom::Many) => Some(GradeValue::Zom(x)),
                _ => None,
            },
            _ => unreachable!("grade value does not match its semiring tag"),
        };
        Ok(value.map(|value| Grade { value, ..*self }))
    }

    /// Least upper bound under `⊑`, `None` when it does not exist.
    pub fn join(&self, other: &Grade) -> Result<Option<Grade>, GradeError> {
        self.same(other)?;
        let value = match (self.value, other.value) {
            (GradeValue::Nat(a), GradeValue::Nat(b)) => match self.semiring {
                SemiringId::NatExact => (a == b).then_some(GradeValue::Nat(a)),
                _ => Some(GradeValue::Nat(max(a, b))),
            },
            (GradeValue::Interval(a, b), GradeValue::Interval(c, d)) => {
                Some(GradeValue::Interval(min(a, c), max(b, d)))
            }
            (GradeValue::Zom(a), GradeValue::Zom(b)) => {
                Some(GradeValue::Zom(if a == b { a } else { Zom::Many }))
            }
            _ => unreachable!("grade value does not match its semiring tag"),
        };
        Ok(value.map(|value| Grade { value, ..*self }))
    }

    pub fn is_zero(&self) -> bool {
        *self == self.semiring.zero()
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            GradeValue::Nat(n) => write!(f, "{n}"),
            GradeValue::Interval(lo, hi) => write!(f, "{lo}..{hi}"),
            GradeValue::Zom(Zom::Zero) => f.write_str("0"),
            GradeValue::Zom(Zom::One) => f.write_str("1"),
            GradeValue::Zom(Zom::Many) => f.write_str("w"),
        }
    }
}

pub fn sr_add(a: &Grade, b: &Grade) -> Result<Grade, GradeError> {
    a.add(b)
}

pub fn sr_mul(a: &Grade, b: &Grade) -> Result<Grade, GradeError> {
    a.mul(b)
}

pub fn sr_leq(a: &Grade, b: &Grade) -> Result<bool, GradeError> {
    a.leq(b)
}

pub fn sr_meet(a: &Grade, b: &Grade) -> Result<Option<Grade>, GradeError> {
    a.meet(b)
}

pub fn show_grade(g: &Grade) -> String {
    g.to_string()
}

pub fn parse_grade(text: &str, sr: SemiringId) -> Result<Grade, GradeError> {
    let err = |offset: usize, reason: &str| GradeError::Syntax {
        semiring: sr,
        text: text.to_string(),
        offset,
        reason: reason.to_string(),
    };
    let nat = |s: &str, offset: usize| -> Result<u64, GradeError> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(offset, "expected a natural number"));
        }
        s.parse::<u64>().map_err(|_| err(offset, "number out of range"))
    };
    let ext = |s: &str, offset: usize| -> Result<Ext, GradeError> {
        if s == "Inf" {
            Ok(Ext::Inf)
        } else {
            nat(s, offset).map(Ext::Fin)
        }
    };
    match sr {
        SemiringId::NatExact | SemiringId::NatLe => Ok(sr.from_nat(nat(text, 0)?)),
        SemiringId::Interval => {
            let Some(split) = text.find("..") else {
                return Err(err(text.len(), "expected `..`"));
            };
            let lo = ext(&text[..split], 0)?;
            let hi = ext(&text[split + 2..], split + 2)?;
            if lo == Ext::Inf {
                return Err(err(0, "lower bound cannot be Inf"));
            }
            if lo > hi {
                return Err(err(0, "lower bound exceeds upper bound"));
            }
            Ok(Grade::interval(lo, hi))
        }
        SemiringId::ZeroOneMany => match text {
            "0" => Ok(Grade::zom(Zom::Zero)),
            "1" => Ok(Grade::zom(Zom::One)),
            "w" => Ok(Grade::zom(Zom::Many)),
            _ => Err(err(0, "expected `0`, `1` or `w`")),
        },
    }
}

/// A finite sample of each carrier, used by exhaustive law checks and
/// random generators. Intervals have components `<= bound` plus `Inf`
/// upper bounds.
pub fn sample(sr: SemiringId, bound: u64) -> Vec<Grade> {
    match sr {
        SemiringId::NatExact | SemiringId::NatLe => (0..=bound).map(|n| sr.from_nat(n)).collect(),
        SemiringId::Interval => {
            let mut out = Vec::new();
            for lo in 0..=bound {
                for hi in lo..=bound {
                    out.push(Grade::interval(Ext::Fin(lo), Ext::Fin(hi)));
                }
                out.push(Grade::interval(Ext::Fin(lo), Ext::Inf));
            }
            out
        }
        SemiringId::ZeroOneMany => vec![
            Grade::zom(Zom::Zero),
            Grade::zom(Zom::One),
            Grade::zom(Zom::Many),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: u64, hi: u64) -> Grade {
        Grade::interval(Ext::Fin(lo), Ext::Fin(hi))
    }

    fn iv_inf(lo: u64) -> Grade {
        Grade::interval(Ext::Fin(lo), Ext::Inf)
    }

    #[test]
    fn addition_examples() {
        assert_eq!(Grade::nat_exact(1).add(&Grade::nat_exact(1)).unwrap(), Grade::nat_exact(2));
        assert_eq!(iv(0, 1).add(&iv(1, 1)).unwrap(), iv(1, 2));
        assert_eq!(
            Grade::zom(Zom::One).add(&Grade::zom(Zom::One)).unwrap(),
            Grade::zom(Zom::Many)
        );
    }

    #[test]
    fn multiplication_examples() {
        assert_eq!(Grade::nat_exact(2).mul(&Grade::nat_exact(3)).unwrap(), Grade::nat_exact(6));
        assert_eq!(iv(0, 2).mul(&iv(2, 4)).unwrap(), iv(0, 8));
        assert_eq!(iv(0, 0).mul(&iv_inf(0)).unwrap(), iv(0, 0));
    }

    #[test]
    fn order_examples() {
        assert!(Grade::nat_exact(2).leq(&Grade::nat_exact(2)).unwrap());
        assert!(!Grade::nat_exact(1).leq(&Grade::nat_exact(2)).unwrap());
        assert!(iv(2, 2).leq(&iv(0, 4)).unwrap());
        assert!(Grade::zom(Zom::One).leq(&Grade::zom(Zom::Many)).unwrap());
        assert!(!Grade::zom(Zom::Zero).leq(&Grade::zom(Zom::One)).unwrap());
    }

    #[test]
    fn meet_examples() {
        assert_eq!(iv(0, 2).meet(&iv(2, 4)).unwrap(), Some(iv(2, 2)));
        assert_eq!(Grade::nat_exact(3).meet(&Grade::nat_exact(3)).unwrap(), Some(Grade::nat_exact(3)));
        assert_eq!(Grade::nat_exact(2).meet(&Grade::nat_exact(3)).unwrap(), None);
        assert_eq!(Grade::nat_le(2).meet(&Grade::nat_le(5)).unwrap(), Some(Grade::nat_le(2)));
        assert_eq!(iv(0, 1).meet(&iv(2, 3)).unwrap(), None);
        assert_eq!(
            Grade::zom(Zom::Zero).meet(&Grade::zom(Zom::One)).unwrap(),
            None
        );
    }

    #[test]
    fn mixing_semirings_is_rejected() {
        let err = Grade::nat_exact(1).add(&Grade::nat_le(1)).unwrap_err();
        assert_eq!(err, GradeError::MixedSemiring(SemiringId::NatExact, SemiringId::NatLe));
        assert!(Grade::nat_exact(1).meet(&iv(0, 1)).is_err());
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_grade("0..Inf", SemiringId::Interval).unwrap(), iv_inf(0));
        assert_eq!(parse_grade("2", SemiringId::NatExact).unwrap(), Grade::nat_exact(2));
        assert_eq!(parse_grade("w", SemiringId::ZeroOneMany).unwrap(), Grade::zom(Zom::Many));
        for bad in ["", "2..1", "Inf..Inf", "1..", "x", "..3", "1...2"] {
            assert!(parse_grade(bad, SemiringId::Interval).is_err(), "{bad}");
        }
        assert!(parse_grade("-1", SemiringId::NatLe).is_err());
        assert!(parse_grade("2", SemiringId::ZeroOneMany).is_err());
    }

    #[test]
    fn show_round_trips() {
        for sr in SemiringId::ALL {
            for g in sample(sr, 4) {
                assert_eq!(parse_grade(&show_grade(&g), sr).unwrap(), g);
            }
        }
    }

    // Brute-force monotonicity of pointwise interval operations over
    // bounds <= 4, independent of the order implementation.
    #[test]
    fn interval_ops_monotone_by_enumeration() {
        let contains = |outer: (u64, u64), inner: (u64, u64)| outer.0 <= inner.0 && inner.1 <= outer.1;
        let pairs: Vec<(u64, u64)> = (0..=4).flat_map(|a| (a..=4).map(move |b| (a, b))).collect();
        for &a in &pairs {
            for &a2 in &pairs {
                if !contains(a2, a) {
                    continue;
                }
                for &b in &pairs {
                    for &b2 in &pairs {
                        if !contains(b2, b) {
                            continue;
                        }
                        assert!(contains((a2.0 + b2.0, a2.1 + b2.1), (a.0 + b.0, a.1 + b.1)));
                        assert!(contains((a2.0 * b2.0, a2.1 * b2.1), (a.0 * b.0, a.1 * b.1)));
                    }
                }
            }
        }
    }

    #[test]
    fn nat_le_meet_is_maximal_lower_bound() {
        for a in 0..=10u64 {
            for b in 0..=10u64 {
                let m = Grade::nat_le(a).meet(&Grade::nat_le(b)).unwrap().unwrap();
                let lower: Vec<u64> = (0..=10).filter(|c| *c <= a && *c <= b).collect();
                assert_eq!(m, Grade::nat_le(*lower.iter().max().unwrap()));
            }
        }
    }
}
