#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = grlin::parser::parse_pattern(text) {
            let printed = grlin::pretty::pretty_pattern(&p);
            assert_eq!(grlin::parser::parse_pattern(&printed).expect("reparses"), p);
        }
    }
});
