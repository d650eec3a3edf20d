//! The full acceptance run through the binary; alone in its test target so
//! the timed criteria do not share the machine with other tests.

use std::process::Command;

use serde_json::Value;

#[test]
fn repro_writes_a_complete_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = Command::new(env!("CARGO_BIN_EXE_speakerkit"))
        .args([
            "repro",
            "--seed",
            "20190124",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    print!("{text}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let criteria = report["criteria"].as_array().unwrap();
    let ids: Vec<u64> = criteria.iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, (1..=10).collect::<Vec<_>>());
    let all = criteria.iter().all(|c| c["passed"] == true);
    assert_eq!(o.status.success(), all);
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]"))
            .count(),
        10
    );
    assert!(all, "{text}");
}
