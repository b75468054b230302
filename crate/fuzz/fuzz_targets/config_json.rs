#![no_main]

use libfuzzer_sys::fuzz_target;
use spinlimit::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        // Accepted configs must survive a round trip.
        let again = RunConfig::from_json(&cfg.to_json()).expect("re-encoded config parses");
        assert_eq!(cfg, again);
    }
});
