use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dlfuzz::bridge::{spawn_shim, BridgeError, ExecRequest, Executor, ShimConfig, ShimHandle};
use dlfuzz::campaign::{Campaign, Deps, FrozenClock};
use dlfuzz::config::{CampaignConfig, ExecutorConfig};
use dlfuzz::oracle::{classify, BackendKind, Classification, ExecStatus, ToleranceConfig};

const SHIM: &str = env!("CARGO_BIN_EXE_dlfuzz-scripted-shim");

fn config(extra: &[&str]) -> ShimConfig {
    let mut command = vec![SHIM.to_string()];
    command.extend(extra.iter().map(|s| s.to_string()));
    let mut c = ShimConfig::new(command, "toy");
    c.handshake_timeout = Duration::from_secs(10);
    c
}

fn shim(extra: &[&str]) -> ShimHandle {
    spawn_shim(config(extra)).unwrap()
}

fn request(id: u64, source: &str, timeout_s: f64) -> ExecRequest {
    ExecRequest {
        test_id: id,
        source: source.into(),
        backends: vec![BackendKind::Eager, BackendKind::Compiled],
        timeout_s,
        want_coverage: true,
        seed: 11,
    }
}

const CLEAN: &str = "class Model:\n    def forward(self, x):\n        return toy.relu(toy.add(x, x))\n";

#[test]
fn round_trip_through_a_process() {
    let mut s = shim(&[]);
    assert!(s.supports_coverage());
    let resp = s.execute(&request(1, CLEAN, 5.0)).unwrap();
    assert_eq!(resp.test_id, 1);
    assert!(resp.covered.as_ref().unwrap().contains("sut/toy/add.py:1"));
    let outcome = classify(&resp.results[0], &resp.results[1], &ToleranceConfig::default());
    assert_eq!(outcome.classification, Classification::Pass);

    // same request, same answer
    let again = s.execute(&request(1, CLEAN, 5.0)).unwrap();
    assert_eq!(again, resp);
}

#[test]
fn planted_faults_across_the_process_boundary() {
    let mut s = shim(&[]);
    let numeric = s.execute(&request(2, "y = toy.chunk(x, 2)", 5.0)).unwrap();
    let o = classify(&numeric.results[0], &numeric.results[1], &ToleranceConfig::default());
    assert_eq!(o.classification, Classification::BugNumerical);
    let behavioral = s.execute(&request(3, "y = toy.pad(x, 1)", 5.0)).unwrap();
    assert!(behavioral.results[0].is_ok());
    assert!(matches!(behavioral.results[1].status, ExecStatus::Exception { .. }));
}

#[test]
fn handshake_mismatches_are_hard_errors() {
    let mut wrong_profile = config(&["--profile", "pytorch"]);
    wrong_profile.profile = "toy".into();
    assert!(matches!(
        spawn_shim(wrong_profile),
        Err(BridgeError::ProfileMismatch { .. })
    ));
    assert!(matches!(
        spawn_shim(config(&["--protocol-version", "9"])),
        Err(BridgeError::VersionMismatch { expected: 1, found: 9 })
    ));
    let dead = spawn_shim(config(&["--die-at-start"]));
    assert!(matches!(dead, Err(BridgeError::Handshake(_))));
    assert!(dead.unwrap_err().is_fatal());
    let missing = ShimConfig::new(vec!["/nonexistent/shim".into()], "toy");
    assert!(matches!(spawn_shim(missing), Err(BridgeError::Spawn(_))));
}

#[test]
fn sleeping_test_times_out_within_grace() {
    let mut s = shim(&[]);
    let started = Instant::now();
    let resp = s.execute(&request(4, "#@ shim sleep 1000\ny = toy.add(x, x)", 1.0)).unwrap();
    let elapsed = started.elapsed();
    assert!(resp.results.iter().all(|r| r.status == ExecStatus::Timeout));
    assert!(elapsed < Duration::from_secs(3), "took {elapsed:?}");
    println!("timeout containment: Timeout after {elapsed:?} (limit 1 s + 2 s grace)");
}

#[test]
fn hung_shim_is_killed_at_the_outer_deadline_and_respawned() {
    let mut s = shim(&[]);
    let started = Instant::now();
    let resp = s.execute(&request(5, "#@ shim hang", 0.5)).unwrap();
    let elapsed = started.elapsed();
    assert!(resp.results.iter().all(|r| r.status == ExecStatus::Timeout));
    // two backends at 0.5 s each plus 2 s grace
    assert!(elapsed >= Duration::from_secs(3) && elapsed < Duration::from_secs(5), "{elapsed:?}");
    assert!(!s.is_alive());

    let o = classify(&resp.results[0], &resp.results[1], &ToleranceConfig::default());
    assert_eq!(o.classification, Classification::Invalid);

    let resp = s.execute(&request(6, CLEAN, 5.0)).unwrap();
    assert!(resp.results.iter().all(|r| r.is_ok()));
    assert_eq!(s.respawns(), 1);
}

#[test]
fn crash_is_retried_once() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("crashed");
    let mut s = shim(&[]);
    let src = format!("#@ shim exit-once {}\n{CLEAN}", marker.display());
    let resp = s.execute(&request(7, &src, 5.0)).unwrap();
    assert!(resp.results.iter().all(|r| r.is_ok()));
    assert!(marker.exists());
    assert_eq!(s.respawns(), 1);
}

#[test]
fn repeated_crash_is_fatal() {
    let mut s = shim(&[]);
    let err = s.execute(&request(8, "#@ shim exit", 5.0)).unwrap_err();
    assert!(matches!(err, BridgeError::ShimDied(_)), "{err}");
    assert!(err.is_fatal());
}

#[test]
fn garbage_frame_is_a_recoverable_protocol_error() {
    let mut s = shim(&[]);
    let err = s.execute(&request(9, "#@ shim garbage", 5.0)).unwrap_err();
    assert!(matches!(err, BridgeError::Protocol(_)), "{err}");
    assert!(!err.is_fatal());
    let resp = s.execute(&request(10, CLEAN, 5.0)).unwrap();
    assert_eq!(resp.test_id, 10);
}

#[test]
fn shim_without_coverage() {
    let mut s = shim(&["--no-coverage"]);
    assert!(!s.supports_coverage());
    let mut req = request(11, CLEAN, 5.0);
    req.want_coverage = false;
    assert!(s.execute(&req).unwrap().covered.is_none());
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn campaign_over_the_shim_matches_the_in_process_executor() {
    let dir = tempfile::tempdir().unwrap();
    let base = CampaignConfig::load(&repo().join("campaigns/toy/campaign.toml")).unwrap();
    let run = |config: CampaignConfig, name: &str| {
        let deps = Deps::from_config(&config).unwrap();
        let mut c = Campaign::create(config, &dir.path().join(name), deps, Box::new(FrozenClock)).unwrap();
        c.run_until(30).unwrap();
        std::fs::read_dir(dir.path().join(name).join("oplog"))
            .unwrap()
            .map(|e| std::fs::read(e.unwrap().path()).unwrap())
            .collect::<std::collections::BTreeSet<_>>()
    };
    let local = run(base.clone(), "local");
    let mut remote = base;
    remote.executor = ExecutorConfig::Shim {
        command: vec![SHIM.to_string(), "--profile".into(), "toy".into()],
    };
    let over_shim = run(remote, "shim");
    assert_eq!(local.len(), 30);
    assert_eq!(local, over_shim);
}
