#![no_main]

use battery_privacy::format;
use battery_privacy::SystemSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let specs = [SystemSpec::binary_uniform(), SystemSpec::binomial(3, 0.5, 2).unwrap()];
    for spec in &specs {
        if let Ok(policy) = format::parse_policy(text, spec) {
            policy.check_compatible(spec.geometry()).unwrap();
        }
    }
});
