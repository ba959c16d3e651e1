#![no_main]

use battery_privacy_cli::parse_range;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_range::<usize>(text);
    let _ = parse_range::<f64>(text);
});
