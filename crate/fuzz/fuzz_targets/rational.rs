#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = hypermod::hd_core::parse_rational(s);
        let _ = hypermod::hd_core::parse_rational_list(s);
    }
});
