mod common;

use std::process::Command;

fn envrepair() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_envrepair"));
    c.env_remove("ENVREPAIR_BACKEND_URL").env_remove("ENVREPAIR_REGISTRY_URL");
    c
}

#[test]
fn repair_listing_world_writes_the_golden_dockerfile() {
    let fx = common::fixtures();
    let out = tempfile::tempdir().unwrap();
    let status = envrepair()
        .arg("repair")
        .arg(fx.join("listing5/snippet.py"))
        .args(["--rag=true", "--loop=10", "--range=1", "--validator", "simulated", "--backend-url", "stub:"])
        .arg("--fixtures")
        .arg(fx.join("listing5"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let written = std::fs::read_to_string(out.path().join("Dockerfile")).unwrap();
    let golden = std::fs::read_to_string(fx.join("golden/listing.Dockerfile")).unwrap();
    assert_eq!(written, golden);
    assert!(out.path().join("snippet.trace.json").is_file());
}

#[test]
fn usage_errors_exit_two() {
    let fx = common::fixtures();
    let snippet = fx.join("listing5/snippet.py");
    let zero = envrepair().arg("repair").arg(&snippet).arg("--loop=0").output().unwrap();
    assert_eq!(zero.status.code(), Some(2));

    let missing = envrepair().args(["repair", "/nonexistent/missing.py"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.py"));

    let no_world = envrepair().arg("repair").arg(&snippet).args(["--validator", "simulated"]).output().unwrap();
    assert_eq!(no_world.status.code(), Some(2));

    let empty = tempfile::tempdir().unwrap();
    let bench = envrepair().arg("bench").arg(empty.path()).output().unwrap();
    assert_eq!(bench.status.code(), Some(2));
}

#[test]
fn unsolvable_file_exits_one() {
    let fx = common::fixtures().join("corpus20");
    let out = tempfile::tempdir().unwrap();
    let r = envrepair()
        .arg("repair")
        .arg(fx.join("u06_conflict.py"))
        .args(["--validator", "simulated", "--backend-url", "stub:"])
        .arg("--fixtures")
        .arg(&fx)
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(1));
    assert!(!out.path().join("Dockerfile").exists());
}

#[test]
fn unreachable_backend_aborts_with_three() {
    let fx = common::fixtures();
    let out = tempfile::tempdir().unwrap();
    let r = envrepair()
        .arg("repair")
        .arg(fx.join("listing5/snippet.py"))
        .args(["--validator", "simulated", "--backend-url", "http://127.0.0.1:9"])
        .arg("--fixtures")
        .arg(fx.join("listing5"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stdout));
}

#[test]
fn bench_writes_the_report_layout() {
    let fx = common::fixtures().join("corpus20");
    let out = tempfile::tempdir().unwrap();
    let r = envrepair()
        .arg("bench")
        .arg(&fx)
        .args(["--runs", "2", "--validator", "simulated", "--backend-url", "stub:stochastic", "--seed", "5"])
        .arg("--fixtures")
        .arg(&fx)
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["records.jsonl", "reports.jsonl", "cumulative.json", "summary.txt"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    assert!(out.path().join("run-0/s01_requests.trace.json").is_file());
    assert!(out.path().join("run-1").is_dir());
}
