//! The fuzz corpus seeds stay in sync with the decoders.

use std::path::PathBuf;

use spinlimit::config::RunConfig;
use spinlimit::harness::RunSummary;
use spinlimit::identities::IdentitySuiteReport;
use spinlimit::pde::ConvergenceReport;
use spinlimit::snapshot::Snapshot;

fn corpus(name: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(name);
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .iter()
        .map(|f| {
            (
                f.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(f).unwrap(),
            )
        })
        .collect()
}

#[test]
fn config_seeds() {
    for (name, bytes) in corpus("config_json") {
        let parsed = RunConfig::from_json(std::str::from_utf8(&bytes).unwrap());
        assert_eq!(parsed.is_err(), name == "missing_fields.json", "{name}: {parsed:?}");
        if let Ok(cfg) = parsed {
            assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
    }
}

#[test]
fn snapshot_seeds() {
    for (name, bytes) in corpus("snapshot_decode") {
        match Snapshot::decode(&bytes) {
            Ok(s) => assert_eq!(s.encode(), bytes, "{name}"),
            Err(_) => assert_eq!(name, "truncated.bin"),
        }
    }
}

#[test]
fn report_seeds() {
    let files = corpus("report_json");
    let text = |n: &str| String::from_utf8(files.iter().find(|f| f.0 == n).unwrap().1.clone()).unwrap();
    serde_json::from_str::<IdentitySuiteReport>(&text("identities.json")).unwrap();
    serde_json::from_str::<ConvergenceReport>(&text("convergence.json")).unwrap();
    serde_json::from_str::<RunSummary>(&text("run_summary.json")).unwrap();
}
