#![no_main]
use libfuzzer_sys::fuzz_target;

// "alpha|beta"
fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let (a, b) = s.split_once('|').unwrap_or((s, "1"));
        let _ = hypermod::hd_core::HyperDatum::parse(a, b);
    }
});
