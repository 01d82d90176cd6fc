//! A small graded linear calculus with derived distributive laws.

pub mod cli;
pub mod deriving;
pub mod diagnostics;
pub mod evaluator;
pub mod grades;
pub mod lawcheck;
pub mod parser;
pub mod pretty;
pub mod syntax;
pub mod typecheck;
