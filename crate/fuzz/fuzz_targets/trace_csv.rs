#![no_main]

use battery_privacy::simulate::Trace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = Trace::read_csv(data) {
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        let back = Trace::read_csv(out.as_slice()).unwrap();
        assert_eq!(back.len(), trace.len());
    }
});
