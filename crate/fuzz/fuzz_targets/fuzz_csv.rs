#![no_main]

use libfuzzer_sys::fuzz_target;

use etd_lab::csv;

// The record parser must never panic, and anything it accepts must survive a
// render/parse/render cycle byte-identically.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(records) = csv::parse_csv(text) else {
        return;
    };
    let rendered = csv::render_csv(&records);
    let reparsed = csv::parse_csv(&rendered).expect("rendered output must parse");
    assert_eq!(csv::render_csv(&reparsed), rendered);
});
