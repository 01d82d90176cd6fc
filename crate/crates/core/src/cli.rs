//! The `grlin` command line: check, run, derive, laws.
//!
//! Exit codes: 0 on success, 1 when the input is rejected or a law fails,
//! 2 on usage and I/O errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::deriving::{self, params, DerivedCombinator};
use crate::diagnostics::Diagnostic;
use crate::evaluator::{self, show_value};
use crate::grades::{parse_grade, Grade, SemiringId};
use crate::lawcheck::{self, Suite};
use crate::parser::{parse_program, parse_type, SourceProgram};
use crate::pretty::{pretty_term, pretty_type};
use crate::syntax::DeriveKind;
use crate::typecheck::check_program;

#[derive(Parser, Debug)]
#[command(name = "grlin", version, about = "Graded linear calculus with derived distributive laws")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Type-check a program.
    Check { file: PathBuf },
    /// Check a program and print the normal form of `main`.
    Run {
        file: PathBuf,
        /// Step budget (default: GRLIN_FUEL or 100000).
        #[arg(long)]
        fuel: Option<u64>,
    },
    /// Derive a combinator at a type and print its term and type.
    Derive {
        /// push, pull, drop, copyshape or fmap
        kind: String,
        /// The subject type, e.g. "a * b".
        ty: String,
        #[arg(long, default_value = "nat-exact")]
        semiring: SemiringId,
        /// Grade for push and fmap; for pull, the grade of every parameter.
        #[arg(long, conflicts_with = "grades")]
        grade: Option<String>,
        /// Per-parameter grades for pull: `a=G,b=H`.
        #[arg(long)]
        grades: Option<String>,
        /// Parameter mapped by fmap (default: the first).
        #[arg(long)]
        alpha: Option<String>,
        /// Print the derivation trace.
        #[arg(long)]
        explain: bool,
    },
    /// Run the randomized law suites.
    Laws {
        /// inverses, naturality, comonad, equational, soundness or all
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cases per suite (default: the suite's own size).
        #[arg(long)]
        cases: Option<u64>,
        #[arg(long, default_value_t = lawcheck::DEFAULT_MAX_DEPTH)]
        max_depth: u32,
        /// Re-run a single case.
        #[arg(long)]
        case: Option<u64>,
    },
}

/// Captured output of one invocation.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Outcome {
        Outcome { code: 0, stdout, stderr: String::new() }
    }

    fn fail(code: i32, stderr: String) -> Outcome {
        Outcome { code, stdout: String::new(), stderr }
    }
}

fn read(file: &PathBuf) -> Result<(String, String), Outcome> {
    let name = file.display().to_string();
    std::fs::read_to_string(file)
        .map(|text| (name.clone(), text))
        .map_err(|e| Outcome::fail(2, format!("{name}: cannot read: {e}\n")))
}

fn render_all(name: &str, ds: &[Diagnostic]) -> String {
    ds.iter().map(|d| d.render(name) + "\n").collect()
}

fn load(file: &PathBuf) -> Result<(String, SourceProgram), Outcome> {
    let (name, text) = read(file)?;
    let program = parse_program(&text).map_err(|e| Outcome::fail(1, render_all(&name, &[e.into()])))?;
    let ds = check_program(&program);
    if !ds.is_empty() {
        return Err(Outcome::fail(1, render_all(&name, &ds)));
    }
    Ok((name, program))
}

fn cmd_check(file: &PathBuf) -> Outcome {
    match load(file) {
        Ok(_) => Outcome::ok(String::new()),
        Err(o) => o,
    }
}

fn cmd_run(file: &PathBuf, fuel: Option<u64>) -> Outcome {
    let (name, program) = match load(file) {
        Ok(x) => x,
        Err(o) => return o,
    };
    let fuel = fuel.unwrap_or_else(evaluator::fuel_from_env);
    match evaluator::with_stack(move || evaluator::run_main(&program, fuel)) {
        Ok(v) => Outcome::ok(show_value(&v) + "\n"),
        Err(e) => Outcome::fail(1, format!("{name}: error: {e}\n")),
    }
}

fn parse_kind(s: &str) -> Option<DeriveKind> {
    DeriveKind::ALL.into_iter().find(|k| k.keyword().eq_ignore_ascii_case(s))
}

fn usage(msg: String) -> Outcome {
    Outcome::fail(2, format!("error: {msg}\n"))
}

struct DeriveArgs<'a> {
    kind: &'a str,
    ty: &'a str,
    semiring: SemiringId,
    grade: Option<&'a str>,
    grades: Option<&'a str>,
    alpha: Option<&'a str>,
    explain: bool,
}

fn cmd_derive(a: DeriveArgs) -> Outcome {
    let Some(kind) = parse_kind(a.kind) else {
        return usage(format!("unknown combinator `{}`; expected push, pull, drop, copyshape or fmap", a.kind));
    };
    let sr = a.semiring;
    let t = match parse_type(a.ty, sr) {
        Ok(t) => t,
        Err(e) => return Outcome::fail(1, render_all("<type>", &[e.into()])),
    };
    let grade = match a.grade.map(|g| parse_grade(g, sr)).transpose() {
        Ok(g) => g,
        Err(e) => return usage(format!("--grade: {e}")),
    };
    let mut rs: BTreeMap<String, Grade> = BTreeMap::new();
    if let Some(list) = a.grades {
        for item in list.split(',').filter(|s| !s.trim().is_empty()) {
            let Some((v, g)) = item.split_once('=') else {
                return usage(format!("--grades expects `var=grade` pairs, got `{item}`"));
            };
            match parse_grade(g.trim(), sr) {
                Ok(g) => rs.insert(v.trim().to_string(), g),
                Err(e) => return usage(format!("--grades: {e}")),
            };
        }
    }
    let need = |g: Option<Grade>| g.ok_or_else(|| usage(format!("{} needs --grade", kind.keyword())));
    let result: Result<std::sync::Arc<DerivedCombinator>, _> = match kind {
        DeriveKind::Push => match need(grade) {
            Ok(r) => deriving::derive_push(&t, &r),
            Err(o) => return o,
        },
        DeriveKind::Pull => {
            if let Some(r) = grade {
                rs = params(&t).into_iter().map(|p| (p, r)).collect();
            }
            deriving::derive_pull(&t, &rs, grade.as_ref())
        }
        DeriveKind::Drop => deriving::derive_drop(&t, sr),
        DeriveKind::CopyShape => deriving::derive_copyshape(&t, sr),
        DeriveKind::Fmap => {
            let g = match need(grade) {
                Ok(g) => g,
                Err(o) => return o,
            };
            let alpha = match a.alpha {
                Some(x) => x.to_string(),
                None => match params(&t).into_iter().next() {
                    Some(x) => x,
                    None => return usage(format!("{} has no parameter to map", pretty_type(&t))),
                },
            };
            deriving::derive_fmap(&t, &alpha, &g)
        }
    };
    match result {
        Ok(d) => {
            let mut out = format!("{}\n: {}\n", pretty_term(&d.term), pretty_type(&d.scheme));
            if a.explain {
                out.push_str(&format!("-- key: {}\n", d.key()));
                for line in &d.trace {
                    out.push_str(&format!("-- {line}\n"));
                }
                for c in &d.side_conditions {
                    out.push_str(&format!("-- side condition: {c}\n"));
                }
            }
            Outcome::ok(out)
        }
        Err(e) => Outcome::fail(1, format!("derive: {}: {e}\n", e.code())),
    }
}

fn cmd_laws(suite: &str, seed: u64, cases: Option<u64>, max_depth: u32, case: Option<u64>) -> Outcome {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        match suite.parse() {
            Ok(s) => vec![s],
            Err(e) => return usage(e),
        }
    };
    if let Some(k) = case {
        let mut out = String::new();
        let mut failed = false;
        for s in suites {
            match lawcheck::run_case(s, seed, k, max_depth) {
                Ok(()) => out.push_str(&format!("{s} case {k}: ok\n")),
                Err(f) => {
                    failed = true;
                    let report = lawcheck::LawReport { suite: s, seed, cases: 1, failures: vec![f] };
                    out.push_str(&lawcheck::render_reports(&[report], max_depth));
                }
            }
        }
        return Outcome { code: i32::from(failed), stdout: out, stderr: String::new() };
    }
    let reports: Vec<_> = suites
        .into_iter()
        .map(|s| lawcheck::run_suite(s, cases.unwrap_or(s.default_cases()), seed, max_depth))
        .collect();
    let failed = reports.iter().any(|r| !r.failures.is_empty());
    Outcome {
        code: i32::from(failed),
        stdout: lawcheck::render_reports(&reports, max_depth),
        stderr: String::new(),
    }
}

pub fn execute(cli: Cli) -> Outcome {
    match cli.command {
        Command::Check { file } => cmd_check(&file),
        Command::Run { file, fuel } => cmd_run(&file, fuel),
        Command::Derive { kind, ty, semiring, grade, grades, alpha, explain } => cmd_derive(DeriveArgs {
            kind: &kind,
            ty: &ty,
            semiring,
            grade: grade.as_deref(),
            grades: grades.as_deref(),
            alpha: alpha.as_deref(),
            explain,
        }),
        Command::Laws { suite, seed, cases, max_depth, case } => cmd_laws(&suite, seed, cases, max_depth, case),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                Outcome::ok(text)
            } else {
                Outcome::fail(2, text)
            }
        }
    }
}

pub fn main() -> i32 {
    let args: Vec<_> = std::env::args_os().collect();
    let o = evaluator::with_stack(move || run_args(args));
    print!("{}", o.stdout);
    eprint!("{}", o.stderr);
    o.code
}
