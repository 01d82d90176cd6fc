//! Stable diagnostic codes shared by the checker, the deriver and the CLI.

use std::fmt;

use crate::grades::Grade;
use crate::parser::SyntaxError;
use crate::syntax::Pos;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Code {
    TypeMismatch,
    Linearity,
    GradeExceeded,
    PromoteLinear,
    WildcardWeaken,
    MatchUsage,
    NoUpperBound,
    MeetUndefined,
    NeedsAnnotation,
    MixedSemiring,
    UnknownVar,
    DuplicateDef,
    Syntax,
    PolymorphicDrop,
    NotDroppable,
    BoxInSubject,
    FunInSubject,
    SideCondition,
}

impl Code {
    pub const ALL: [Code; 18] = [
        Code::TypeMismatch,
        Code::Linearity,
        Code::GradeExceeded,
        Code::PromoteLinear,
        Code::WildcardWeaken,
        Code::MatchUsage,
        Code::NoUpperBound,
        Code::MeetUndefined,
        Code::NeedsAnnotation,
        Code::MixedSemiring,
        Code::UnknownVar,
        Code::DuplicateDef,
        Code::Syntax,
        Code::PolymorphicDrop,
        Code::NotDroppable,
        Code::BoxInSubject,
        Code::FunInSubject,
        Code::SideCondition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Code::TypeMismatch => "TYPE_MISMATCH",
            Code::Linearity => "LINEARITY",
            Code::GradeExceeded => "GRADE_EXCEEDED",
            Code::PromoteLinear => "PROMOTE_LINEAR",
            Code::WildcardWeaken => "WILDCARD_WEAKEN",
            Code::MatchUsage => "MATCH_USAGE",
            Code::NoUpperBound => "NO_UPPER_BOUND",
            Code::MeetUndefined => "MEET_UNDEFINED",
            Code::NeedsAnnotation => "NEEDS_ANNOTATION",
            Code::MixedSemiring => "MIXED_SEMIRING",
            Code::UnknownVar => "UNKNOWN_VAR",
            Code::DuplicateDef => "DUPLICATE_DEF",
            Code::Syntax => "SYNTAX",
            Code::PolymorphicDrop => "POLYMORPHIC_DROP",
            Code::NotDroppable => "NOT_DROPPABLE",
            Code::BoxInSubject => "BOX_IN_SUBJECT",
            Code::FunInSubject => "FUN_IN_SUBJECT",
            Code::SideCondition => "SIDE_CONDITION",
        }
    }

    pub fn parse(s: &str) -> Option<Code> {
        Code::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub code: Code,
    pub message: String,
    pub pos: Pos,
    pub grades: Option<(Grade, Grade)>,
}

impl Diagnostic {
    pub fn new(code: Code, pos: Pos, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            code,
            message: message.into(),
            pos,
            grades: None,
        }
    }

    pub fn with_grades(mut self, a: Grade, b: Grade) -> Diagnostic {
        self.grades = Some((a, b));
        self
    }

    /// Renders as `file:line:col: CODE: message`.
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: {}: {}", self.pos.line, self.pos.col, self.code, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.pos, self.code, self.message)
    }
}

impl std::error::Error for Diagnostic {}

impl From<SyntaxError> for Diagnostic {
    fn from(e: SyntaxError) -> Diagnostic {
        Diagnostic::new(Code::Syntax, e.pos, e.to_string())
    }
}
