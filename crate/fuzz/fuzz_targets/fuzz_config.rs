#![no_main]

use libfuzzer_sys::fuzz_target;

// Arbitrary bytes must never panic the config parser; valid configs come out
// fully validated (shapes, distributions, coverage) or not at all.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = etd_lab::config::parse_config(text);
    }
});
