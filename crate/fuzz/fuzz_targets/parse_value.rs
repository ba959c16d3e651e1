#![no_main]

use battery_privacy::format;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = format::parse_value(text) {
        // evaluation at a vertex must not panic on a validated function
        let mut z = vec![0.0; v.grid.dimension()];
        z[0] = 1.0;
        assert!(v.evaluate(&z).is_finite());
    }
});
