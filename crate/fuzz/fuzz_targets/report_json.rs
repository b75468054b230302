#![no_main]

use libfuzzer_sys::fuzz_target;
use spinlimit::harness::RunSummary;
use spinlimit::identities::IdentitySuiteReport;
use spinlimit::pde::ConvergenceReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = serde_json::from_str::<IdentitySuiteReport>(text) {
        let _ = serde_json::to_string(&r).expect("report serializes");
    }
    if let Ok(r) = serde_json::from_str::<ConvergenceReport>(text) {
        let _ = serde_json::to_string(&r).expect("report serializes");
    }
    if let Ok(r) = serde_json::from_str::<RunSummary>(text) {
        let _ = serde_json::to_string(&r).expect("summary serializes");
    }
});
