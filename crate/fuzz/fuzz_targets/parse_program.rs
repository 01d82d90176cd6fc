#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = grlin::parser::parse_program(text) {
            // Whatever parses must print and parse back.
            for d in &p.decls {
                let printed = grlin::pretty::pretty_term(&d.body);
                grlin::parser::parse_term(&printed, p.semiring).expect("printed term reparses");
            }
        }
    }
});
