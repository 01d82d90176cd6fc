use grlin::cli::run_args;

fn grlin(args: &[&str]) -> grlin::cli::Outcome {
    run_args(std::iter::once("grlin").chain(args.iter().copied()))
}

fn program(name: &str) -> String {
    format!("{}/programs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn check_is_silent_on_success() {
    let o = grlin(&["check", &program("motivating.grm")]);
    assert_eq!((o.code, o.stdout.as_str(), o.stderr.as_str()), (0, "", ""));
}

#[test]
fn diagnostics_carry_file_line_and_column() {
    let path = program("bad/grade_exceeded.grm");
    let o = grlin(&["check", &path]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.starts_with(&format!("{path}:3:")), "{}", o.stderr);
    assert!(o.stderr.contains(": GRADE_EXCEEDED: "), "{}", o.stderr);
}

#[test]
fn missing_files_are_usage_errors() {
    let o = grlin(&["run", "/nonexistent/x.grm"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("cannot read"));
}

#[test]
fn fuel_exhaustion_is_reported() {
    let o = grlin(&["run", "--fuel", "3", &program("ok/count.grm")]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("fuel"), "{}", o.stderr);
}

#[test]
fn derive_prints_term_and_scheme() {
    let o = grlin(&["derive", "push", "a * b", "--grade", "2"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], ": (a * b) [2] -o a [2] * b [2]");
}

#[test]
fn derive_explain_adds_commented_trace() {
    let o = grlin(&["derive", "fmap", "mu L . Unit + (a * L)", "--grade", "0..Inf", "--semiring", "interval", "--explain"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.lines().skip(2).all(|l| l.starts_with("-- ")), "{}", o.stdout);
    assert!(o.stdout.contains("-- key: "));
}

#[test]
fn derive_errors_name_their_code() {
    for (args, code) in [
        (vec!["derive", "drop", "a"], "POLYMORPHIC_DROP"),
        (vec!["derive", "drop", "Res"], "NOT_DROPPABLE"),
        (vec!["derive", "pull", "a * b", "--grades", "a=2,b=3"], "MEET_UNDEFINED"),
        (vec!["derive", "push", "a + b", "--grade", "0"], "SIDE_CONDITION"),
        (vec!["derive", "copyshape", "a -o a"], "FUN_IN_SUBJECT"),
        (vec!["derive", "push", "a [2]", "--grade", "2"], "BOX_IN_SUBJECT"),
    ] {
        let o = grlin(&args);
        assert_eq!(o.code, 1, "{args:?}");
        assert!(o.stderr.starts_with(&format!("derive: {code}: ")), "{args:?}: {}", o.stderr);
    }
}

#[test]
fn derive_argument_errors_are_usage_errors() {
    assert_eq!(grlin(&["derive", "frobnicate", "a"]).code, 2);
    assert_eq!(grlin(&["derive", "push", "a"]).code, 2);
    assert_eq!(grlin(&["derive", "pull", "a * b", "--grades", "a"]).code, 2);
    assert_eq!(grlin(&["derive", "push", "a", "--grade", "x", "--semiring", "interval"]).code, 2);
    assert_eq!(grlin(&["derive", "push", "a", "--semiring", "tropical"]).code, 2);
}

#[test]
fn laws_single_case_and_unknown_suite() {
    let o = grlin(&["laws", "--suite", "inverses", "--seed", "3", "--case", "5"]);
    assert_eq!(o.code, 0, "{}", o.stdout);
    assert_eq!(o.stdout, "inverses case 5: ok\n");
    assert_eq!(grlin(&["laws", "--suite", "nope"]).code, 2);
}

#[test]
fn laws_small_run_reports_zero_failures() {
    let o = grlin(&["laws", "--suite", "naturality", "--cases", "20", "--seed", "11"]);
    assert_eq!(o.code, 0, "{}", o.stdout);
    assert!(o.stdout.contains("naturality"));
}
