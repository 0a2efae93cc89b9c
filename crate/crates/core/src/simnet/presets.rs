//! Ready-made scenarios used by the fixtures, tests and benches.
//!
//! All of them share one layout: a token chain holding [`TOTAL_SUPPLY`],
//! up to three side chains named [`SIDE_NAMES`], and `n` witnesses per side
//! chain. Addresses are derived from readable labels.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contracts::{BankApproval, GateMode};
use crate::genesis::{GaslessGenesis, GenesisSpec, NativeGasGenesis, SideVariant};
use crate::simnet::scenario::{
    ContractParams, FaultPlan, RegistrationSpec, ReorgSpec, ScenarioConfig, SideChainSpec, TokenChainSpec,
    TriggeredReorg, UserAction, WitnessSpec, WorkloadItem,
};
use crate::types::{Address, ChainId, Digest, TokenAmount};
use crate::witness::Behavior;

pub const TOTAL_SUPPLY: u64 = 1_000_000;
pub const BAL_RESV: u64 = 1_000;
pub const COMPENSATION_FEE: u64 = 50;
pub const ENTRANCE_FEE_MINIMUM: u64 = 100;
pub const SIDE_NAMES: [&str; 3] = ["alpha", "beta", "gamma"];
pub const TOKEN_USERS: [&str; 3] = ["alice", "bob", "carol"];

pub fn addr(label: &str) -> Address {
    Address::from_label(label)
}

pub fn side_addr(side: &str, label: &str) -> Address {
    addr(&format!("{side}/{label}"))
}

pub fn creator(side: &str) -> Address {
    side_addr(side, "creator")
}

pub fn beneficiary(side: &str) -> Address {
    side_addr(side, "beneficiary")
}

pub fn side_user(side: &str, k: usize) -> Address {
    side_addr(side, &format!("user-{k}"))
}

pub fn witness_label(side: &str, k: usize) -> String {
    format!("{side}-w{k}")
}

fn genesis(side: &str, variant: SideVariant, witnesses: Vec<Address>) -> GenesisSpec {
    let chain_id = ChainId::from_label(&format!("chain/{side}"));
    match variant {
        SideVariant::Gasless => GenesisSpec::Gasless(GaslessGenesis {
            chain_id,
            sc_register: side_addr(side, "sc-register"),
            bal_resv: TokenAmount(BAL_RESV),
            sc_inter: side_addr(side, "sc-inter"),
            sc_bank: side_addr(side, "sc-bank"),
            bal_bank: TokenAmount(TOTAL_SUPPLY - BAL_RESV),
            wit_addr_list: witnesses,
        }),
        SideVariant::NativeGas => GenesisSpec::NativeGas(NativeGasGenesis {
            chain_id,
            sc_register: side_addr(side, "sc-consensus"),
            sc_trading: side_addr(side, "sc-trading"),
            wit_addr_list: witnesses,
        }),
    }
}

/// A fault-free scenario with one side chain per entry of `variants` and
/// `n` witnesses on each. No workload.
pub fn base(name: &str, seed: u64, variants: &[SideVariant], n: usize) -> ScenarioConfig {
    assert!(variants.len() <= SIDE_NAMES.len(), "at most {} side chains", SIDE_NAMES.len());
    let mut allocations = BTreeMap::new();
    let mut rest = TOTAL_SUPPLY;
    for side in SIDE_NAMES.iter().take(variants.len()) {
        allocations.insert(creator(side), TokenAmount(20_000));
        rest -= 20_000;
    }
    for (i, user) in TOKEN_USERS.iter().enumerate() {
        let share = if i + 1 == TOKEN_USERS.len() { rest } else { TOTAL_SUPPLY * 3 / 10 };
        allocations.insert(addr(user), TokenAmount(share));
        rest -= share;
    }
    let mut side_chains = Vec::new();
    let mut witnesses = Vec::new();
    for (side, variant) in SIDE_NAMES.iter().zip(variants) {
        let ws: Vec<WitnessSpec> = (0..n)
            .map(|k| WitnessSpec {
                label: witness_label(side, k),
                token_address: side_addr(side, &format!("w{k}/token")),
                side_address: side_addr(side, &format!("w{k}/side")),
                side_chain: side.to_string(),
            })
            .collect();
        let owners: Vec<Address> = (0..3).map(|k| side_addr(side, &format!("owner-{k}"))).collect();
        let gasless = *variant == SideVariant::Gasless;
        side_chains.push(SideChainSpec {
            name: side.to_string(),
            variant: *variant,
            genesis: genesis(side, *variant, ws.iter().map(|w| w.side_address).collect()),
            block_interval: 2,
            omega: 2,
            sc_a: side_addr(side, "sc-a"),
            threshold: None,
            register_owners: if gasless { owners.clone() } else { Vec::new() },
            bank_owners: if gasless { owners } else { Vec::new() },
            owners_required: 2,
            bank_approval: BankApproval::Standing,
            registration: RegistrationSpec {
                creator: creator(side),
                beneficiary: beneficiary(side),
                attached: TokenAmount(BAL_RESV + COMPENSATION_FEE),
                at_tick: 1,
                max_attempts: 1,
                claimed_chain_id: None,
                claimed_genesis_hash: None,
            },
        });
        witnesses.extend(ws);
    }
    ScenarioConfig {
        name: name.to_string(),
        seed,
        max_ticks: 3_000,
        mode: GateMode::Conservation,
        token_chain: TokenChainSpec {
            chain_id: ChainId::from_label("chain/token"),
            total_supply: TokenAmount(TOTAL_SUPPLY),
            block_interval: 5,
            omega: 3,
            min_gasprice: 1,
            fee_sink: addr("fee-sink"),
            allocations,
            id_contract: addr("sc-id"),
            id_owners: (0..3).map(|k| addr(&format!("id-owner-{k}"))).collect(),
            id_required: 2,
        },
        side_chains,
        witnesses,
        contracts: ContractParams {
            compensation_fee: TokenAmount(COMPENSATION_FEE),
            entrance_fee_minimum: TokenAmount(ENTRANCE_FEE_MINIMUM),
            timeout_ticks: 50,
            sleep_ticks: 10,
            registration_timeout_blocks: 40,
            poll_interval: 1,
        },
        fault_plan: FaultPlan { max_delay: 1, ..FaultPlan::default() },
        workload: Vec::new(),
        threshold_override: None,
    }
}

fn deposit(side: &str, tick: u64, from: &str, to: Address, value: u64) -> WorkloadItem {
    WorkloadItem {
        tick,
        action: UserAction::Deposit { chain: side.into(), from: addr(from), to, value: TokenAmount(value) },
    }
}

fn withdraw(side: &str, tick: u64, from: Address, to: &str, value: u64) -> WorkloadItem {
    WorkloadItem {
        tick,
        action: UserAction::Withdraw { chain: side.into(), from, to: addr(to), value: TokenAmount(value) },
    }
}

/// Registration of one side chain, N=4 witnesses, threshold 3.
pub fn happy_path(variant: SideVariant) -> ScenarioConfig {
    base(&format!("happy-path-{variant}"), 7, &[variant], 4)
}

/// Registration followed by a deposit and a withdrawal.
pub fn round_trip(variant: SideVariant) -> ScenarioConfig {
    let mut s = base(&format!("round-trip-{variant}"), 11, &[variant], 4);
    let side = SIDE_NAMES[0];
    s.workload = vec![
        deposit(side, 150, "alice", side_user(side, 0), 5_000),
        withdraw(side, 400, side_user(side, 0), "bob", 2_000),
    ];
    s
}

/// A seeded mix of deposits, withdrawals, side chain trades and records.
/// Values are sized from a running estimate of balances so most actions
/// are feasible, though some may still be rejected on chain.
pub fn random_workload_items(rng: &mut ChaCha8Rng, sides: &[&str], count: usize, start: u64) -> Vec<WorkloadItem> {
    let mut items = Vec::new();
    let mut side_balance: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut tick = start;
    for _ in 0..count {
        tick += rng.random_range(5..40);
        let si = rng.random_range(0..sides.len());
        let side = sides[si];
        let user = rng.random_range(0..3);
        let have = side_balance.get(&(si, user)).copied().unwrap_or(0);
        let roll = rng.random_range(0..10);
        let item = if have < 200 || roll < 4 {
            let value = rng.random_range(100..5_000);
            *side_balance.entry((si, user)).or_default() += value;
            let from = TOKEN_USERS[rng.random_range(0..TOKEN_USERS.len())];
            deposit(side, tick, from, side_user(side, user), value)
        } else if roll < 7 {
            let value = rng.random_range(1..=have / 2);
            side_balance.insert((si, user), have - value);
            let to = TOKEN_USERS[rng.random_range(0..TOKEN_USERS.len())];
            // Withdrawals trail the deposits they spend by enough ticks to
            // let those land.
            withdraw(side, tick + 150, side_user(side, user), to, value)
        } else if roll < 9 {
            let other = (user + 1) % 3;
            let value = rng.random_range(1..=have / 2);
            side_balance.insert((si, user), have - value);
            *side_balance.entry((si, other)).or_default() += value;
            WorkloadItem {
                tick: tick + 150,
                action: UserAction::Trade {
                    chain: side.into(),
                    from: side_user(side, user),
                    to: side_user(side, other),
                    value: TokenAmount(value),
                },
            }
        } else {
            WorkloadItem {
                tick,
                action: UserAction::Record {
                    chain: side.into(),
                    from: beneficiary(side),
                    data: format!("sensor-{}:{}", rng.random_range(0..16), rng.random_range(0..1_000)),
                },
            }
        };
        items.push(item);
    }
    items.sort_by_key(|i| i.tick);
    items
}

/// Random workload over one side chain of the given variant, light delays
/// and duplicates.
pub fn random_workload(seed: u64, variant: SideVariant) -> ScenarioConfig {
    let mut s = base(&format!("random-workload-{variant}"), seed, &[variant], 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    s.workload = random_workload_items(&mut rng, &[SIDE_NAMES[0]], 16, 120);
    s.fault_plan.max_delay = 3;
    s.fault_plan.dup_rate = 0.1;
    s
}

/// `f` witnesses approve everything, and the registration makes a claim
/// honest witnesses refuse: a genesis hash that does not match the file on
/// gasless chains (native-gas checks only chain ids), a chain id other than
/// the genesis one on native-gas chains. It must never be accepted.
pub fn quorum_approve_all(seed: u64, variant: SideVariant, f: usize) -> ScenarioConfig {
    let mut s = base(&format!("quorum-approve-all-{variant}"), seed, &[variant], 4);
    let side = SIDE_NAMES[0];
    let registration = &mut s.side_chains[0].registration;
    match variant {
        SideVariant::Gasless => registration.claimed_genesis_hash = Some(Digest::of(b"forged genesis")),
        SideVariant::NativeGas => registration.claimed_chain_id = Some(ChainId::from_label("chain/forged")),
    }
    for k in 0..f {
        s.fault_plan.witness_behaviors.insert(witness_label(side, k), Behavior::ByzantineApproveAll);
    }
    s.fault_plan.max_delay = 3;
    s.fault_plan.dup_rate = 0.1;
    s
}

/// `f` witnesses reject everything, leaving fewer than the threshold of
/// honest votes. The registration must revert at its deadline.
pub fn quorum_reject_all(seed: u64, variant: SideVariant, f: usize) -> ScenarioConfig {
    let mut s = base(&format!("quorum-reject-all-{variant}"), seed, &[variant], 4);
    let side = SIDE_NAMES[0];
    for k in 0..f {
        s.fault_plan.witness_behaviors.insert(witness_label(side, k), Behavior::ByzantineRejectAll);
    }
    s.fault_plan.max_delay = 3;
    s.fault_plan.dup_rate = 0.1;
    s
}

/// Five witnesses, two of which relay every batch with its first value
/// raised by one. A majority threshold of three shuts them out; forcing the
/// threshold down to two lets them unlock more than was locked.
pub fn colluding_pair(seed: u64) -> ScenarioConfig {
    let mut s = base("colluding-pair", seed, &[SideVariant::Gasless], 5);
    let side = SIDE_NAMES[0];
    for k in 0..2 {
        s.fault_plan.witness_behaviors.insert(witness_label(side, k), Behavior::Equivocating);
    }
    s.workload = vec![
        deposit(side, 120, "alice", side_user(side, 0), 4_000),
        withdraw(side, 300, side_user(side, 0), "bob", 1_500),
        withdraw(side, 420, side_user(side, 0), "carol", 500),
    ];
    s
}

/// Reorgs no deeper than each chain's ω, scattered over a random workload
/// on a gasless and a native-gas side chain.
pub fn reorg_immunity(seed: u64) -> ScenarioConfig {
    let mut s = base("reorg-immunity", seed, &[SideVariant::Gasless, SideVariant::NativeGas], 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0e0e);
    let sides = [SIDE_NAMES[0], SIDE_NAMES[1]];
    s.workload = random_workload_items(&mut rng, &sides, 14, 120);
    // Aim each reorg a little after a user action so the removed blocks
    // tend to carry the action or the relays it triggers.
    let mut reorgs = Vec::new();
    for _ in 0..10 {
        let item = &s.workload[rng.random_range(0..s.workload.len())];
        let (chain, omega) = match rng.random_range(0..3) {
            0 => ("token".to_string(), s.token_chain.omega),
            _ => {
                let name = item.action.chain().unwrap_or(sides[0]);
                let i = s.side_index(name).expect("workload chain");
                (name.to_string(), s.side_chains[i].omega)
            }
        };
        let depth = rng.random_range(1..=omega);
        let tick = item.tick + rng.random_range(2..40);
        reorgs.push(ReorgSpec { tick, chain, depth, delay: rng.random_range(0..=depth) });
    }
    reorgs.sort_by_key(|r| r.tick);
    s.fault_plan.reorgs = reorgs;
    s.fault_plan.max_delay = 2;
    s
}

/// A side chain reorg of depth 2ω right after SC_A unlocks a withdrawal.
/// The removed lock is re-included ω blocks later, which the witnesses
/// cannot tell from a new lock. Expected to violate an invariant.
pub fn reorg_negative(seed: u64) -> ScenarioConfig {
    let mut s = base("reorg-negative", seed, &[SideVariant::Gasless], 4);
    let side = SIDE_NAMES[0];
    s.token_chain.block_interval = 1;
    s.token_chain.omega = 1;
    s.side_chains[0].block_interval = 6;
    let omega = s.side_chains[0].omega;
    s.fault_plan.triggered_reorg = Some(TriggeredReorg { chain: side.into(), depth: 2 * omega, delay: omega });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let value = rng.random_range(1_000..5_000);
    s.workload = vec![
        deposit(side, 60, "alice", side_user(side, 0), value),
        withdraw(side, 200, side_user(side, 0), "bob", value / 2),
    ];
    s
}

/// Lossy network: 30% drops with a bounded drop budget, on a gasless and a
/// native-gas side chain.
pub fn lossy(seed: u64) -> ScenarioConfig {
    let mut s = base("lossy", seed, &[SideVariant::Gasless, SideVariant::NativeGas], 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1055);
    s.workload = random_workload_items(&mut rng, &[SIDE_NAMES[0], SIDE_NAMES[1]], 12, 120);
    s.fault_plan.drop_rate = 0.3;
    s.fault_plan.max_drops = 60;
    s.fault_plan.dup_rate = 0.05;
    s.fault_plan.max_delay = 3;
    s.max_ticks = 6_000;
    s
}

/// The literal bank-balance gate on two deposits. Only the first deposit
/// can satisfy it.
pub fn strict_gate(variant_mode: GateMode) -> ScenarioConfig {
    let mut s = base(&format!("gate-{}", mode_name(variant_mode)), 3, &[SideVariant::Gasless], 4);
    let side = SIDE_NAMES[0];
    s.mode = variant_mode;
    s.workload = vec![
        deposit(side, 150, "alice", side_user(side, 0), 2_000),
        deposit(side, 300, "bob", side_user(side, 1), 3_000),
    ];
    s
}

fn mode_name(mode: GateMode) -> &'static str {
    match mode {
        GateMode::Conservation => "conservation",
        GateMode::Strict => "strict",
    }
}

/// Three side chains of mixed variants, seven witnesses each, with light
/// faults. The largest scenario at desk scale.
pub fn desk_scale(seed: u64) -> ScenarioConfig {
    let variants = [SideVariant::Gasless, SideVariant::NativeGas, SideVariant::Gasless];
    let mut s = base("desk-scale", seed, &variants, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdec);
    s.workload = random_workload_items(&mut rng, &SIDE_NAMES, 30, 120);
    s.fault_plan.drop_rate = 0.05;
    s.fault_plan.max_drops = 20;
    s.fault_plan.dup_rate = 0.05;
    s.fault_plan.max_delay = 3;
    s
}
