//! Every program under `programs/` behaves as its header says.
//!
//! `-- expect: ok` programs must check; with `-- output:` they must also
//! print that value. `-- expect: CODE` programs must be rejected with
//! exactly that one code.

use std::path::{Path, PathBuf};

use grlin::cli::run_args;

fn files() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("programs");
    let mut out = Vec::new();
    let mut dirs = vec![root];
    while let Some(d) = dirs.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                dirs.push(p);
            } else if p.extension().is_some_and(|x| x == "grm") {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn header(text: &str, key: &str) -> Option<String> {
    let prefix = format!("-- {key}: ");
    text.lines().find_map(|l| l.strip_prefix(&prefix).map(|s| s.trim().to_string()))
}

#[test]
fn corpus_matches_headers() {
    let files = files();
    assert!(files.len() >= 40, "corpus shrank to {}", files.len());
    let mut problems = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        let name = f.to_str().unwrap();
        let expect = header(&text, "expect").unwrap_or_else(|| panic!("{name}: missing expect header"));
        if expect == "ok" {
            let o = match header(&text, "output") {
                Some(want) => {
                    let o = run_args(["grlin", "run", name]);
                    if o.stdout.trim_end() != want {
                        problems.push(format!("{name}: printed {:?}, want {want:?}", o.stdout));
                    }
                    o
                }
                None => run_args(["grlin", "check", name]),
            };
            if o.code != 0 {
                problems.push(format!("{name}: exit {}: {}", o.code, o.stderr));
            }
        } else {
            let o = run_args(["grlin", "check", name]);
            let codes: Vec<&str> = o.stderr.lines().filter_map(|l| l.split(": ").nth(1)).collect();
            if o.code != 1 || codes != [expect.as_str()] {
                problems.push(format!("{name}: want {expect}, got exit {} {:?}", o.code, o.stderr));
            }
        }
    }
    assert!(problems.is_empty(), "{}", problems.join("\n"));
}
