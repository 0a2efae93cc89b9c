//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use proptest::test_runner::{Config, TestRunner};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use tokenpeg_cli::{run_cli, EXIT_DIVERGENCE, EXIT_INVALID, EXIT_PASS};
use tokenpeg_core::chain::{ChainState, EventPayload};
use tokenpeg_core::contracts::RegistryState;
use tokenpeg_core::genesis::{genesis_hash, GaslessGenesis, GenesisSpec, SideVariant};
use tokenpeg_core::simnet::presets::{
    self, BAL_RESV, COMPENSATION_FEE, ENTRANCE_FEE_MINIMUM, SIDE_NAMES, TOTAL_SUPPLY,
};
use tokenpeg_core::simnet::{run, Outcome, ScenarioConfig, Sim};
use tokenpeg_core::witness::validate::{
    registration_conditions, validate_registration, validate_registration_nativegas, RegistrationClaim,
};
use tokenpeg_core::{Address, ChainId, Digest, TokenAmount};

#[path = "../../core/tests/noise/mod.rs"]
mod noise;

type Verdict = Result<String, String>;
type Property = fn(&noise::Case) -> Result<(), proptest::test_runner::TestCaseError>;
type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn failures(o: &Outcome) -> String {
    let names: Vec<String> = o.failures.iter().map(|f| format!("{}@{}", f.check.name, f.tick)).collect();
    names.join(", ")
}

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn cli(args: &[&str]) -> (u8, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_cli(std::iter::once("tokenpeg").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

fn side_balance(state: &ChainState, who: Address) -> TokenAmount {
    match state.native() {
        Some(n) => n.consensus.ledger.balance(&who),
        None => state.balance(&who),
    }
}

/// Token chain payloads of one topic, with the height of the block that
/// emitted them.
fn token_events(o: &Outcome, topic: &str) -> Vec<(u64, Value)> {
    o.trace
        .records()
        .filter(|r| r.kind == "block" && r.chain.as_deref() == Some("token"))
        .flat_map(|r| {
            let height = r.payload["height"].as_u64().unwrap_or(0);
            let events = r.payload["events"].as_array().cloned().unwrap_or_default();
            events.into_iter().filter(|e| e["payload"]["topic"] == topic).map(move |e| (height, e["payload"].clone()))
        })
        .collect()
}

/// Gas the creator paid: one flat fee per transaction of theirs that made it
/// into a token block.
fn creator_gas(o: &Outcome, creator: Address, gasprice: u64) -> u64 {
    let creator = creator.to_string();
    let mut theirs = BTreeSet::new();
    let mut included = 0;
    for r in o.trace.records() {
        if r.chain.as_deref() != Some("token") {
            continue;
        }
        match r.kind.as_str() {
            "send" if r.payload["tx"]["from"] == creator.as_str() => {
                theirs.insert(r.payload["hash"].as_str().unwrap_or_default().to_string());
            }
            "block" => {
                for h in r.payload["transactions"].as_array().into_iter().flatten() {
                    if theirs.contains(h.as_str().unwrap_or_default()) {
                        included += 1;
                    }
                }
            }
            _ => {}
        }
    }
    included * gasprice
}

// ---------------------------------------------------------------- AC1

fn ac1() -> Verdict {
    let g = GenesisSpec::Gasless(GaslessGenesis {
        chain_id: ChainId::from_label("iot/ac1"),
        sc_register: Address::from_label("ac1/register"),
        bal_resv: TokenAmount(BAL_RESV),
        sc_inter: Address::from_label("ac1/inter"),
        sc_bank: Address::from_label("ac1/bank"),
        bal_bank: TokenAmount(TOTAL_SUPPLY - BAL_RESV),
        wit_addr_list: (0..4).map(|k| Address::from_label(&format!("ac1/w{k}"))).collect(),
    });
    let text = g.to_canonical();
    let mut accepted = 0;
    for mask in 0u32..64 {
        let bit = |i: u32| mask & (1 << i) != 0;
        let claim_id = if bit(3) { g.chain_id() } else { ChainId::from_label("iot/other") };
        let claim = RegistrationClaim {
            chain_id: claim_id,
            amount: TokenAmount(if bit(2) { BAL_RESV } else { BAL_RESV + 1 }),
            genesis_hash: if bit(0) { genesis_hash(&g) } else { Digest::of(b"forged genesis") },
        };
        let height = if bit(1) { 0 } else { 1 + u64::from(mask % 5) };
        let token_id = if bit(4) { ChainId::from_label("token") } else { claim_id };
        let registry = RegistryState { chain_ids: if bit(5) { Vec::new() } else { vec![claim_id] } };

        let conditions = registration_conditions(Some(&text), &claim, &registry, token_id, height)
            .map_err(|e| format!("mask {mask:06b}: {e}"))?;
        let bits: Vec<bool> = (0..6).map(bit).collect();
        ensure(conditions.as_array().to_vec() == bits, || format!("mask {mask:06b}: conditions {conditions:?}"))?;

        let verdict = validate_registration(Some(&text), &claim, &registry, token_id, height);
        ensure(verdict == Ok(mask == 63), || format!("mask {mask:06b}: gasless verdict {verdict:?}"))?;
        let native = validate_registration_nativegas(Some(&text), &claim, &registry, token_id);
        let expect_native = bit(3) && bit(4) && bit(5);
        ensure(native == Ok(expect_native), || format!("mask {mask:06b}: native verdict {native:?}"))?;
        if verdict == Ok(true) {
            accepted += 1;
        }
        let unfetched = validate_registration(None, &claim, &registry, token_id, height);
        ensure(unfetched.is_err(), || format!("mask {mask:06b}: missing genesis did not abstain"))?;
    }
    Ok(format!("64/64 condition combinations agree, {accepted} accepted"))
}

// ---------------------------------------------------------------- AC2

const GASLESS_FIELDS: [&str; 7] =
    ["Chain_ID", "SC_Register", "Bal_Resv", "SC_Inter", "SC_Bank", "Bal_Bank", "Wit_Addr_List"];
const NATIVE_FIELDS: [&str; 4] = ["Chain_ID", "SC_Register", "SC_Trading", "Wit_Addr_List"];

fn is_addr(v: &Value) -> bool {
    v.as_str().is_some_and(|s| {
        s.strip_prefix("0x")
            .is_some_and(|h| h.len() == 40 && h.chars().all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c)))
    })
}

/// Independent judgement of a genesis document: `None` when valid,
/// otherwise the field names a correct rejection must mention.
fn oracle(doc: &Value, native: bool) -> Option<Vec<String>> {
    let obj = doc.as_object()?;
    let fields: &[&str] = if native { &NATIVE_FIELDS } else { &GASLESS_FIELDS };
    let mut shape: Vec<String> = fields.iter().filter(|f| !obj.contains_key(**f)).map(|f| f.to_string()).collect();
    shape.extend(obj.keys().filter(|k| !fields.contains(&k.as_str())).cloned());
    if !shape.is_empty() {
        return Some(shape);
    }
    let addr_fields: &[&str] = if native {
        &["Chain_ID", "SC_Register", "SC_Trading"]
    } else {
        &["Chain_ID", "SC_Register", "SC_Inter", "SC_Bank"]
    };
    let list = obj["Wit_Addr_List"].as_array();
    let typed = addr_fields.iter().all(|f| is_addr(&obj[*f]))
        && list.is_some_and(|l| l.iter().all(is_addr))
        && (native || (obj["Bal_Resv"].is_u64() && obj["Bal_Bank"].is_u64()));
    if !typed {
        return Some(vec!["genesis".into()]);
    }
    let list: Vec<&str> = list.unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let mut bad = Vec::new();
    if list.is_empty() || list.iter().collect::<BTreeSet<_>>().len() != list.len() {
        bad.push("Wit_Addr_List".to_string());
    }
    if native {
        if obj["SC_Register"] == obj["SC_Trading"] {
            bad.push("SC_Register/SC_Trading".into());
        }
    } else {
        let resv = obj["Bal_Resv"].as_u64().unwrap();
        let bank = obj["Bal_Bank"].as_u64().unwrap();
        if u128::from(resv) + u128::from(bank) != u128::from(TOTAL_SUPPLY) {
            bad.push("Bal_Resv+Bal_Bank".into());
        }
        if resv < ENTRANCE_FEE_MINIMUM {
            bad.push("Bal_Resv".into());
        }
        let contracts: Vec<&str> =
            ["SC_Register", "SC_Inter", "SC_Bank"].iter().map(|f| obj[*f].as_str().unwrap()).collect();
        if contracts.iter().collect::<BTreeSet<_>>().len() != 3 {
            bad.push("SC_Register/SC_Inter/SC_Bank".into());
        }
        if list.iter().any(|w| contracts.contains(w)) && !bad.contains(&"Wit_Addr_List".to_string()) {
            bad.push("Wit_Addr_List".into());
        }
    }
    if bad.is_empty() {
        None
    } else {
        Some(bad)
    }
}

fn fresh_addr(rng: &mut ChaCha8Rng) -> Value {
    Value::String(Address::from_label(&format!("ac2/{}", rng.random::<u64>())).to_string())
}

/// Apply mutation `kind`, returning a short label for the report.
fn mutate(doc: &mut Value, native: bool, kind: usize, rng: &mut ChaCha8Rng) -> &'static str {
    let obj = doc.as_object_mut().unwrap();
    let fields: &[&str] = if native { &NATIVE_FIELDS } else { &GASLESS_FIELDS };
    match (kind, native) {
        (0, _) => {
            obj.remove(*fields.choose(rng).unwrap());
            "missing field"
        }
        (1, _) => {
            obj.insert("Bal_Total".into(), json!(rng.random_range(0..10)));
            "unknown field"
        }
        (2, _) => {
            obj.insert("Chain_ID".into(), fresh_addr(rng));
            "new chain id"
        }
        (3, _) => {
            let list = obj["Wit_Addr_List"].as_array_mut().unwrap();
            list.shuffle(rng);
            if rng.random_bool(0.5) {
                list.push(fresh_addr(rng));
            }
            "reshuffled witnesses"
        }
        (4, _) => {
            let list = obj["Wit_Addr_List"].as_array_mut().unwrap();
            let dup = list.choose(rng).unwrap().clone();
            list.push(dup);
            "duplicate witness"
        }
        (5, _) => {
            obj.insert("Wit_Addr_List".into(), json!([]));
            "empty witness list"
        }
        (6, true) => {
            let r = obj["SC_Register"].clone();
            obj.insert("SC_Trading".into(), r);
            "shared contract address"
        }
        (7, true) => {
            obj.insert("SC_Trading".into(), json!("0xABC"));
            "malformed address"
        }
        (6, false) => {
            let d = rng.random_range(1..=5) as u64;
            let field = if rng.random_bool(0.5) { "Bal_Resv" } else { "Bal_Bank" };
            let v = obj[field].as_u64().unwrap();
            let v = if rng.random_bool(0.5) { v + d } else { v - d };
            obj.insert(field.into(), json!(v));
            "sum off by a few"
        }
        (7, false) => {
            let resv = obj["Bal_Resv"].as_u64().unwrap();
            let shift = rng.random_range(1..5_000);
            let bank = obj["Bal_Bank"].as_u64().unwrap();
            obj.insert("Bal_Resv".into(), json!(resv + shift));
            obj.insert("Bal_Bank".into(), json!(bank - shift));
            "rebalanced reserve"
        }
        (8, false) => {
            let resv = rng.random_range(0..ENTRANCE_FEE_MINIMUM);
            obj.insert("Bal_Resv".into(), json!(resv));
            obj.insert("Bal_Bank".into(), json!(TOTAL_SUPPLY - resv));
            "reserve below minimum"
        }
        (9, false) => {
            let b = obj["SC_Bank"].clone();
            obj.insert("SC_Inter".into(), b);
            "shared contract address"
        }
        (10, false) => {
            let r = obj["SC_Register"].clone();
            obj["Wit_Addr_List"].as_array_mut().unwrap().push(r);
            "witness is a contract"
        }
        (11, false) => {
            let v = obj["Bal_Resv"].as_u64().unwrap();
            obj.insert("Bal_Resv".into(), json!(v.to_string()));
            "amount as string"
        }
        _ => "untouched",
    }
}

fn ac2() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let read = |name: &str| -> Result<Value, String> {
        let text = std::fs::read_to_string(fixtures_dir().join("genesis").join(name)).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    let bases = [(read("alpha.json")?, false), (read("alpha-native.json")?, true)];
    let mut rng = ChaCha8Rng::seed_from_u64(0xac2);
    let supply = TOTAL_SUPPLY.to_string();
    let minimum = ENTRANCE_FEE_MINIMUM.to_string();
    let (mut valid, mut invalid) = (0, 0);
    let mut seen = BTreeSet::new();
    for i in 0..100 {
        let native = i % 4 == 3;
        let mut doc = bases[usize::from(native)].0.clone();
        let kinds = if native { 8 } else { 12 };
        // Walk through every mutation kind first, then mix one or two.
        let mut labels = vec![mutate(&mut doc, native, i % kinds, &mut rng)];
        if i >= 2 * kinds && rng.random_bool(0.4) {
            labels.push(mutate(&mut doc, native, rng.random_range(0..kinds), &mut rng));
        }
        for l in &labels {
            seen.insert(*l);
        }
        let path = dir.path().join(format!("g{i:03}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).map_err(|e| e.to_string())?;
        let variant = if native { "native-gas" } else { "gasless" };
        let (code, _, err) = cli(&[
            "validate",
            path.to_str().unwrap(),
            "--variant",
            variant,
            "--total-supply",
            &supply,
            "--entrance-fee-minimum",
            &minimum,
        ]);
        match oracle(&doc, native) {
            None => {
                ensure(code == EXIT_PASS, || format!("fixture {i} ({labels:?}) falsely rejected: {err}"))?;
                valid += 1;
            }
            Some(fields) => {
                ensure(code == EXIT_INVALID, || format!("fixture {i} ({labels:?}) falsely accepted"))?;
                for f in &fields {
                    ensure(err.contains(f.as_str()), || format!("fixture {i} ({labels:?}): {f} not named in {err}"))?;
                }
                invalid += 1;
            }
        }
    }
    for needed in ["missing field", "sum off by a few"] {
        ensure(seen.contains(needed), || format!("no '{needed}' mutation generated"))?;
    }
    Ok(format!("100 mutated genesis files, {valid} valid, {invalid} invalid, {} mutation kinds", seen.len()))
}

// ---------------------------------------------------------------- AC3

fn ac3() -> Verdict {
    let mut lines = Vec::new();
    for (file, variant) in
        [("happy-path.json", SideVariant::Gasless), ("happy-path-native.json", SideVariant::NativeGas)]
    {
        let text = std::fs::read_to_string(fixtures_dir().join(file)).map_err(|e| e.to_string())?;
        let scenario = ScenarioConfig::parse(&text).map_err(|d| format!("{file}: {d:?}"))?;
        ensure(scenario.witnesses.len() == 4 && scenario.threshold_for(0) == 3, || {
            format!("{file}: expected 4 witnesses with threshold 3")
        })?;
        let attached = scenario.side_chains[0].registration.attached.0;
        let mut sim = Sim::new(scenario).map_err(|d| format!("{file}: {d:?}"))?;

        // Step through, watching the register contract drain before it is
        // destroyed.
        let (mut drained_at, mut suicided_at) = (None, None);
        while sim.step() {
            if let Some(bank) = sim.sides[0].chain.state.gasless() {
                if bank.register_balance.is_zero() && bank.registration_paid && drained_at.is_none() {
                    drained_at = Some(sim.tick);
                }
                if bank.suicided && suicided_at.is_none() {
                    ensure(bank.register_balance.is_zero(), || format!("{file}: suicided holding a balance"))?;
                    suicided_at = Some(sim.tick);
                }
            }
        }
        let o = sim.run();
        ensure(o.passed(), || format!("{file}: {}", failures(&o)))?;

        let side = &sim.sides[0];
        let id = side.spec.genesis.chain_id();
        let token = sim.token.state.token().ok_or("token state")?;
        ensure(token.id.registry.contains(&id), || format!("{file}: SC_ID lacks {id}"))?;
        let exist = sim
            .token
            .events_in(0, sim.token.height())
            .any(|e| matches!(e.payload, EventPayload::ExistOrNot { chain_id, exists: true } if chain_id == id));
        ensure(exist, || format!("{file}: no ExistOrNot(true)"))?;
        let locked = token.heads[&side.spec.sc_a].locked.0;
        ensure(locked == attached - COMPENSATION_FEE, || {
            format!("{file}: SC_A.locked {locked}, request {attached} minus fee {COMPENSATION_FEE}")
        })?;
        let paid = side_balance(&side.chain.state, presets::beneficiary(SIDE_NAMES[0])).0;
        ensure(paid == BAL_RESV, || format!("{file}: creator holds {paid} on the side chain, Bal_Resv {BAL_RESV}"))?;
        if variant == SideVariant::Gasless {
            let (Some(d), Some(s)) = (drained_at, suicided_at) else {
                return Err(format!("{file}: register drained {drained_at:?}, suicided {suicided_at:?}"));
            };
            ensure(d <= s, || format!("{file}: suicided at tick {s} before draining at {d}"))?;
            lines.push(format!("gasless drained@{d} suicided@{s}"));
        } else {
            lines.push("native credited".into());
        }
    }
    Ok(format!("N=4 k=3, SC_A.locked={}, {}", BAL_RESV, lines.join(", ")))
}

// ---------------------------------------------------------------- AC4

fn ac4() -> Verdict {
    let mut points = 0;
    let mut moved = 0;
    for variant in [SideVariant::Gasless, SideVariant::NativeGas] {
        for seed in 1..=100 {
            let o = run(presets::random_workload(seed, variant)).map_err(|d| format!("{d:?}"))?;
            ensure(o.passed(), || format!("{variant} seed {seed}: {}", failures(&o)))?;
            let mut here = 0;
            for r in o.trace.records().filter(|r| r.kind == "invariants") {
                let results = r.payload["results"].as_object().ok_or("invariants without results")?;
                let pegs: Vec<&Value> = results.iter().filter(|(k, _)| k.starts_with("peg[")).map(|(_, v)| v).collect();
                ensure(!pegs.is_empty(), || format!("{variant} seed {seed}: no peg check at tick {}", r.tick))?;
                ensure(pegs.iter().all(|v| **v == Value::Bool(true)), || {
                    format!("{variant} seed {seed}: peg broken at tick {}", r.tick)
                })?;
                here += 1;
            }
            ensure(here > 0, || format!("{variant} seed {seed}: never quiescent"))?;
            points += here;
            if o.summary.sides.iter().any(|s| s.sc_a_locked.0 > BAL_RESV) {
                moved += 1;
            }
        }
    }
    Ok(format!("200 runs, peg held at {points} quiescent points, {moved} runs moved value across"))
}

// ---------------------------------------------------------------- AC5

fn ac5() -> Verdict {
    let creator = presets::creator(SIDE_NAMES[0]);
    let mut reverts = 0;
    for variant in [SideVariant::Gasless, SideVariant::NativeGas] {
        for seed in 1..=50 {
            // f = k - 1 colluders approve a forged registration.
            let s = presets::quorum_approve_all(seed, variant, 2);
            ensure(s.threshold_for(0) == 3, || "approve-all threshold".into())?;
            let initial = s.token_chain.allocations[&creator].0;
            let gasprice = s.token_chain.min_gasprice;
            let (sim, o) = finish(s)?;
            ensure(o.passed(), || format!("approve-all {variant} seed {seed}: {}", failures(&o)))?;
            let results = token_events(&o, "registration_result");
            ensure(results.iter().all(|(_, e)| e["success"] == false), || {
                format!("approve-all {variant} seed {seed}: forged registration succeeded")
            })?;
            ensure(sim.token.state.token().unwrap().id.registry.chain_ids.is_empty(), || {
                format!("approve-all {variant} seed {seed}: registry not empty")
            })?;
            let expected = initial - COMPENSATION_FEE - creator_gas(&o, creator, gasprice);
            let got = sim.token.state.balance(&creator).0;
            ensure(got == expected, || {
                format!("approve-all {variant} seed {seed}: creator {got}, expected {expected}")
            })?;

            // N - f = 2 honest witnesses cannot reach k = 3.
            let s = presets::quorum_reject_all(seed, variant, 2);
            let initial = s.token_chain.allocations[&creator].0;
            let timeout = s.contracts.registration_timeout_blocks;
            let (sim, o) = finish(s)?;
            ensure(o.passed(), || format!("reject-all {variant} seed {seed}: {}", failures(&o)))?;
            let requested = token_events(&o, "cross_chain_arrived");
            let (asked, _) = requested.iter().find(|(_, e)| e["kind"] == "registration").ok_or("no registration")?;
            let results = token_events(&o, "registration_result");
            let [(at, e)] = results.as_slice() else {
                return Err(format!("reject-all {variant} seed {seed}: {} registration results", results.len()));
            };
            ensure(e["success"] == false && *at > asked + timeout, || {
                format!("reject-all {variant} seed {seed}: result at {at}, requested at {asked}, timeout {timeout}")
            })?;
            ensure(e["refund"] == json!(BAL_RESV), || {
                format!("reject-all {variant} seed {seed}: refund {}", e["refund"])
            })?;
            let expected = initial - COMPENSATION_FEE - creator_gas(&o, creator, gasprice);
            let got = sim.token.state.balance(&creator).0;
            ensure(got == expected, || {
                format!("reject-all {variant} seed {seed}: creator {got}, expected {expected}")
            })?;
            ensure(o.summary.sides[0].sc_a_locked.is_zero(), || {
                format!("reject-all {variant} seed {seed}: SC_A still locked")
            })?;
            reverts += 1;
        }
    }
    Ok(format!("100 forged registrations refused, {reverts} deadline reverts refunded"))
}

fn finish(s: ScenarioConfig) -> Result<(Sim, Outcome), String> {
    let mut sim = Sim::new(s).map_err(|d| format!("{d:?}"))?;
    let o = sim.run();
    Ok((sim, o))
}

// ---------------------------------------------------------------- AC6

fn ac6() -> Verdict {
    let (mut reorgs, mut displaced) = (0, 0);
    for seed in 1..=50 {
        let o = run(presets::reorg_immunity(seed)).map_err(|d| format!("{d:?}"))?;
        ensure(o.passed(), || format!("seed {seed}: {}", failures(&o)))?;
        // No double unlock at any quiescent point, nothing lost at the end.
        let mut unique = 0;
        for r in o.trace.records().filter(|r| r.kind == "invariants") {
            for (k, v) in r.payload["results"].as_object().into_iter().flatten() {
                if k.starts_with("relay_uniqueness") {
                    ensure(*v == true, || format!("seed {seed}: {k} broken at tick {}", r.tick))?;
                    unique += 1;
                }
            }
        }
        ensure(unique > 0, || format!("seed {seed}: relay_uniqueness never checked"))?;
        for name in ["relay_complete_inbound", "relay_complete_outbound"] {
            ensure(o.final_checks.iter().any(|c| c.name.starts_with(name) && c.ok), || {
                format!("seed {seed}: {name} not confirmed")
            })?;
        }
        reorgs += o.summary.stats.reorgs;
        displaced += o
            .trace
            .records()
            .filter(|r| r.kind == "reorg")
            .map(|r| r.payload["displaced"].as_u64().unwrap_or(0))
            .sum::<u64>();
    }
    ensure(displaced > 0, || "no reorg displaced a transaction".into())?;
    let mut caught = 0;
    for seed in 1..=50 {
        let o = run(presets::reorg_negative(seed)).map_err(|d| format!("{d:?}"))?;
        ensure(!o.passed(), || format!("2ω reorg seed {seed} went unnoticed"))?;
        caught += 1;
    }
    Ok(format!(
        "{reorgs} reorgs ≤ ω over 50 seeds ({displaced} txs displaced) harmless, {caught}/50 2ω reorgs detected"
    ))
}

// ---------------------------------------------------------------- AC7

fn ac7() -> Verdict {
    let (mut drops, mut gated) = (0, 0);
    for seed in 1..=25 {
        let s = presets::lossy(seed);
        let budget = s.fault_plan.max_drops;
        let token_omega = s.token_chain.omega;
        let omegas: Vec<(String, u64)> = s.side_chains.iter().map(|c| (c.name.clone(), c.omega)).collect();
        let o = run(s).map_err(|d| format!("{d:?}"))?;
        ensure(o.passed(), || format!("seed {seed}: {}", failures(&o)))?;
        let st = &o.summary.stats;
        ensure(st.drops > 0 && st.drops <= budget, || format!("seed {seed}: {} drops, budget {budget}", st.drops))?;
        let mut resends = 0;
        for r in o.trace.records().filter(|r| r.kind == "note" && r.payload["note"] == "gate_pass") {
            if r.payload["resend"] != true {
                continue;
            }
            let stream = r.payload["stream"].as_str().unwrap_or_default();
            let omega = if stream == "token" {
                token_omega
            } else {
                let side = r.chain.as_deref().unwrap_or_default();
                omegas.iter().find(|(n, _)| n == side).map_or(0, |(_, w)| *w)
            };
            let (h_l, h_l2) = (r.payload["h_l"].as_u64().unwrap_or(0), r.payload["h_l2"].as_u64().unwrap_or(0));
            ensure(h_l2 >= h_l + omega, || format!("seed {seed}: resend with h_l2 {h_l2} < h_l {h_l} + ω {omega}"))?;
            resends += 1;
        }
        ensure(resends > 0, || format!("seed {seed}: no gated resend"))?;
        drops += st.drops;
        gated += resends;
    }
    Ok(format!("25 lossy seeds complete, {drops} drops, {gated} resends through the h_l2 ≥ h_l+ω gate"))
}

// ---------------------------------------------------------------- AC8

fn ac8() -> Verdict {
    let cases = 256;
    let properties: [(&str, Property); 3] = [
        ("SC_A unlock", noise::sc_a_unlocks),
        ("SC_Bank release", noise::bank_releases),
        ("native ledger credit", noise::ledger_credits),
    ];
    for (name, property) in properties {
        let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
        runner.run(&noise::case(), |c| property(&c)).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{cases} schedules x 3 contracts, stale and replayed votes change nothing"))
}

// ---------------------------------------------------------------- AC9

fn ac9() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut names = Vec::new();
    for entry in std::fs::read_dir(fixtures_dir()).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|x| x == "json") {
            names.push(path);
        }
    }
    names.sort();
    let mut records = 0;
    for (i, fixture) in names.iter().enumerate() {
        let f = fixture.to_str().unwrap();
        let a = dir.path().join(format!("{i}-a.jsonl"));
        let b = dir.path().join(format!("{i}-b.jsonl"));
        cli(&["run", f, "--trace-out", a.to_str().unwrap()]);
        cli(&["run", f, "--trace-out", b.to_str().unwrap()]);
        let (ta, tb) = (std::fs::read(&a).map_err(|e| e.to_string())?, std::fs::read(&b).map_err(|e| e.to_string())?);
        ensure(ta == tb, || format!("{f}: traces differ"))?;
        let (code, _, err) = cli(&["replay", a.to_str().unwrap()]);
        ensure(code == EXIT_PASS, || format!("{f}: replay exited {code}: {err}"))?;
        records += ta.iter().filter(|c| **c == b'\n').count();

        // A single flipped byte must not replay.
        let mut bad = ta.clone();
        let at = (bad.len() / 3..bad.len()).find(|&k| bad[k].is_ascii_digit()).ok_or("no digit")?;
        bad[at] = if bad[at] == b'0' { b'1' } else { b'0' };
        std::fs::write(&b, bad).map_err(|e| e.to_string())?;
        let (code, _, _) = cli(&["replay", b.to_str().unwrap()]);
        ensure(code == EXIT_DIVERGENCE, || format!("{f}: tampered trace replayed with {code}"))?;
    }
    Ok(format!("{} fixtures, {records} records byte-identical across runs, replays exit 0", names.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("AC1", "registration conditions", ac1),
        ("AC2", "genesis validation", ac2),
        ("AC3", "happy path state", ac3),
        ("AC4", "peg under random workload", ac4),
        ("AC5", "quorum safety", ac5),
        ("AC6", "reorg immunity", ac6),
        ("AC7", "lossy delivery", ac7),
        ("AC8", "vote noise", ac8),
        ("AC9", "deterministic replay", ac9),
    ];
    // Panics are reported as failures, not dumped.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {id} {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
