use std::path::{Path, PathBuf};

use tokenpeg_cli::{run_cli, EXIT_DIVERGENCE, EXIT_INVALID, EXIT_INVARIANT, EXIT_PASS};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

struct Run {
    code: u8,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("tokenpeg").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_the_shipped_fixtures() {
    for name in ["happy-path.json", "lossy.json", "desk-scale.json", "genesis/alpha-native.json"] {
        let r = cli(&["validate", path(&fixture(name))]);
        assert_eq!(r.code, EXIT_PASS, "{name}: {}", r.err);
        assert!(r.out.starts_with("ok:"));
    }
    let r = cli(&["validate", path(&fixture("genesis/alpha.json")), "--total-supply", "1000000"]);
    assert_eq!(r.code, EXIT_PASS, "{}", r.err);
}

#[test]
fn missing_witness_list_names_the_field() {
    let r = cli(&["validate", path(&fixture("genesis/missing-wit-addr-list.json")), "--total-supply", "1000000"]);
    assert_eq!(r.code, EXIT_INVALID);
    assert!(r.err.contains("Wit_Addr_List"), "{}", r.err);
    assert!(r.err.contains("required-field"));
}

#[test]
fn off_by_one_balance_names_the_rule() {
    let r = cli(&["validate", path(&fixture("genesis/bal-off-by-one.json")), "--total-supply", "1000000"]);
    assert_eq!(r.code, EXIT_INVALID);
    assert!(r.err.contains("Bal_Resv+Bal_Bank"), "{}", r.err);
    assert!(r.err.contains("reserve-plus-bank-equals-total-supply"));
}

#[test]
fn bare_gasless_genesis_needs_a_supply() {
    let r = cli(&["validate", path(&fixture("genesis/alpha.json"))]);
    assert_eq!(r.code, EXIT_INVALID);
    assert!(r.err.contains("--total-supply"));
}

#[test]
fn validate_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("s.json");
    std::fs::copy(fixture("happy-path.json"), &copy).unwrap();
    let before = std::fs::read(&copy).unwrap();
    assert_eq!(cli(&["validate", path(&copy)]).code, EXIT_PASS);
    assert_eq!(std::fs::read(&copy).unwrap(), before);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn malformed_inputs_exit_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(cli(&["validate", path(&bad)]).code, EXIT_INVALID);
    assert_eq!(cli(&["run", path(&bad)]).code, EXIT_INVALID);
    assert_eq!(cli(&["validate", path(&dir.path().join("absent.json"))]).code, EXIT_INVALID);
    assert_eq!(cli(&["run"]).code, EXIT_INVALID);
    assert_eq!(cli(&["frobnicate"]).code, EXIT_INVALID);
    assert_eq!(cli(&["--help"]).code, EXIT_PASS);
}

#[test]
fn happy_path_passes() {
    let r = cli(&["run", path(&fixture("happy-path.json")), "--seed", "3"]);
    assert_eq!(r.code, EXIT_PASS, "{}", r.out);
    assert!(r.out.contains("result PASS"));
    let last = r.out.lines().last().unwrap();
    let summary: serde_json::Value = serde_json::from_str(last.strip_prefix("summary ").unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["seed"], 3);
}

#[test]
fn byzantine_majority_reverts_cleanly() {
    let r = cli(&["run", path(&fixture("byzantine-majority.json"))]);
    assert_eq!(r.code, EXIT_PASS, "{}", r.out);
    assert!(r.out.contains("registered no"), "{}", r.out);
    assert!(r.out.contains("revert"), "{}", r.out);
}

#[test]
fn half_threshold_breaks_the_peg() {
    let f = fixture("colluding-pair.json");
    assert_eq!(cli(&["run", path(&f)]).code, EXIT_PASS);
    let r = cli(&["run", path(&f), "--threshold-override", "2"]);
    assert_eq!(r.code, EXIT_INVARIANT);
    assert!(r.out.contains("FAIL peg["), "{}", r.out);
}

#[test]
fn deep_reorg_exits_with_a_violation() {
    let r = cli(&["run", path(&fixture("reorg-deep.json"))]);
    assert_eq!(r.code, EXIT_INVARIANT);
}

#[test]
fn replay_round_trip_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    assert_eq!(cli(&["run", path(&fixture("lossy.json")), "--seed", "4", "--trace-out", path(&trace)]).code, EXIT_PASS);
    let r = cli(&["replay", path(&trace)]);
    assert_eq!(r.code, EXIT_PASS, "{}", r.err);

    let mut bytes = std::fs::read(&trace).unwrap();
    // Flip one digit somewhere in the middle of the trace.
    let mid = bytes.len() / 2;
    let at = (mid..bytes.len()).find(|&i| bytes[i].is_ascii_digit()).unwrap();
    bytes[at] = if bytes[at] == b'9' { b'8' } else { bytes[at] + 1 };
    let tampered = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered, bytes).unwrap();
    let r = cli(&["replay", path(&tampered)]);
    assert_eq!(r.code, EXIT_DIVERGENCE);
    assert!(r.out.contains("divergence at line") || r.err.contains("divergence"), "{}{}", r.out, r.err);
}

#[test]
fn replay_under_the_other_gate_mode() {
    let dir = tempfile::tempdir().unwrap();
    let gate = dir.path().join("gate.jsonl");
    assert_eq!(cli(&["run", path(&fixture("gate-modes.json")), "--trace-out", path(&gate)]).code, EXIT_PASS);
    assert_eq!(cli(&["replay", path(&gate), "--mode", "strict"]).code, EXIT_DIVERGENCE);
    assert_eq!(cli(&["replay", path(&gate), "--mode", "conservation"]).code, EXIT_PASS);

    // A single deposit never trips the literal gate, so both modes agree.
    let happy = dir.path().join("happy.jsonl");
    assert_eq!(cli(&["run", path(&fixture("happy-path.json")), "--trace-out", path(&happy)]).code, EXIT_PASS);
    assert_eq!(cli(&["replay", path(&happy), "--mode", "strict"]).code, EXIT_PASS);
}

#[test]
fn replay_rejects_non_traces() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(cli(&["replay", path(&empty)]).code, EXIT_INVALID);
    let junk = dir.path().join("junk.jsonl");
    std::fs::write(&junk, "{\"tick\":0}\n").unwrap();
    assert_eq!(cli(&["replay", path(&junk)]).code, EXIT_DIVERGENCE);
}

#[test]
fn seed_fan_out_writes_one_trace_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let template = dir.path().join("run-{seed}.jsonl");
    let r = cli(&["run", path(&fixture("random-workload.json")), "--seeds", "1..4", "--trace-out", path(&template)]);
    assert_eq!(r.code, EXIT_PASS, "{}", r.out);
    assert_eq!(r.out.lines().filter(|l| l.starts_with("seed ")).count(), 4);
    for seed in 1..=4 {
        let t = dir.path().join(format!("run-{seed}.jsonl"));
        assert_eq!(cli(&["replay", path(&t)]).code, EXIT_PASS);
    }
}

#[test]
fn max_ticks_cuts_a_run_short() {
    let r = cli(&["run", path(&fixture("happy-path.json")), "--max-ticks", "5"]);
    assert_eq!(r.code, EXIT_INVARIANT);
    assert!(r.out.contains("FAIL liveness"), "{}", r.out);
}
