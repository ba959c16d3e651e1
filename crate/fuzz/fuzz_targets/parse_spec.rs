#![no_main]

use battery_privacy::format;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = format::parse_spec(text) {
        // an accepted spec must serialize and parse back
        let again = format::spec_to_json(&spec).unwrap();
        format::parse_spec(&again).unwrap();
    }
});
