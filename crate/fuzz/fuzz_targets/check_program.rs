#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(p) = grlin::parser::parse_program(text) {
            let _ = grlin::typecheck::check_program(&p);
        }
    }
});
