#![no_main]

use battery_privacy::{format, Pmf};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for demand in [Pmf::binomial(1, 0.5).unwrap(), Pmf::binomial(6, 0.5).unwrap()] {
        if let Ok(sol) = format::parse_solution(text, &demand) {
            assert!(sol.j_star.is_finite());
        }
    }
});
