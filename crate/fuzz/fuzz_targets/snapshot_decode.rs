#![no_main]

use libfuzzer_sys::fuzz_target;
use spinlimit::snapshot::Snapshot;

fuzz_target!(|data: &[u8]| {
    if let Ok(snap) = Snapshot::decode(data) {
        let bytes = snap.encode();
        assert_eq!(bytes, data, "decode then encode must be the identity");
    }
});
