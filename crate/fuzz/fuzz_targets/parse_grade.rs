#![no_main]
use grlin::grades::{parse_grade, SemiringId};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&tag, rest)) = data.split_first() else { return };
    let sr = [SemiringId::NatExact, SemiringId::NatLe, SemiringId::Interval, SemiringId::ZeroOneMany][tag as usize % 4];
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(g) = parse_grade(text, sr) {
            assert_eq!(parse_grade(&g.to_string(), sr), Ok(g));
        }
    }
});
