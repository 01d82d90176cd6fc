#![no_main]
use grlin::grades::SemiringId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&tag, rest)) = data.split_first() else { return };
    let sr = [SemiringId::NatExact, SemiringId::NatLe, SemiringId::Interval, SemiringId::ZeroOneMany][tag as usize % 4];
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(x) = grlin::parser::parse_term(text, sr) {
            let printed = grlin::pretty::pretty_term(&x);
            assert_eq!(grlin::parser::parse_term(&printed, sr).expect("reparses"), x);
        }
    }
});
