//! Vote schedules with stale-round and replayed votes mixed in, and the
//! three quorum contracts they are checked against.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use tokenpeg_core::chain::{Direction, EventOrigin, TransferBatch, TransferItem};
use tokenpeg_core::contracts::{
    default_threshold, BankApproval, BridgeHeadConfig, BridgeHeadState, ConsensusState, ContractError, GateMode,
    Multisig, SideBankConfig, SideBankState, VoteOutcome,
};
use tokenpeg_core::genesis::SideVariant;
use tokenpeg_core::{Address, ChainId, Digest, TokenAmount};

#[derive(Debug, Clone)]
pub struct Vote {
    witness: usize,
    round: u64,
    batch: usize,
}

#[derive(Debug, Clone)]
pub struct Case {
    n: usize,
    values: Vec<u64>,
    /// For each batch, the order in which witnesses vote for it.
    orders: Vec<Vec<usize>>,
    /// (position in the clean schedule, kind, seed) for each injected vote.
    noise: Vec<(usize, bool, u64)>,
}

fn witnesses(n: usize) -> Vec<Address> {
    (0..n).map(|i| Address::from_label(&format!("witness-{i}"))).collect()
}

pub fn case() -> impl Strategy<Value = Case> {
    (3usize..=7, proptest::collection::vec(1u64..500, 1..6)).prop_flat_map(|(n, values)| {
        let k = values.len();
        let orders = proptest::collection::vec(Just((0..n).collect::<Vec<_>>()).prop_shuffle(), k);
        let noise = proptest::collection::vec((0usize..64, any::<bool>(), any::<u64>()), 0..24);
        (Just(n), Just(values), orders, noise).prop_map(|(n, values, orders, noise)| Case { n, values, orders, noise })
    })
}

/// Every witness votes for batch `j` in round `j`. Votes arriving after the
/// batch executed are part of the clean schedule too.
pub fn clean(case: &Case) -> Vec<Vote> {
    let mut out = Vec::new();
    for (j, order) in case.orders.iter().enumerate() {
        for w in order {
            out.push(Vote { witness: *w, round: j as u64, batch: j });
        }
    }
    out
}

/// Interleave noise into the clean schedule. A replay copies an earlier
/// vote verbatim. A stale vote carries a round that is not current at the
/// point it arrives.
pub fn noisy(case: &Case) -> Vec<Vote> {
    let base = clean(case);
    let threshold = default_threshold(case.n);
    let k = case.values.len();
    // Round current just before position p of the clean schedule.
    let round_at = |p: usize| -> u64 {
        let mut executed = 0u64;
        for (j, _) in case.orders.iter().enumerate() {
            let reach = j * case.n + threshold;
            if p >= reach {
                executed += 1;
            }
        }
        executed.min(k as u64)
    };
    let mut inserts: Vec<(usize, Vote)> = Vec::new();
    for (pos, replay, seed) in &case.noise {
        let p = pos % (base.len() + 1);
        if *replay {
            if p == 0 {
                continue;
            }
            let original = base[(*seed as usize) % p].clone();
            inserts.push((p, original));
        } else {
            let current = round_at(p);
            let offset = 1 + seed % 3;
            let round = if seed % 2 == 0 || current < offset { current + offset } else { current - offset };
            let batch = (*seed as usize / 7) % k;
            inserts.push((p, Vote { witness: (*seed as usize / 3) % case.n, round, batch }));
        }
    }
    inserts.sort_by_key(|(p, _)| *p);
    let mut out = Vec::new();
    let mut it = inserts.into_iter().peekable();
    for (i, v) in base.into_iter().enumerate() {
        while let Some((_, extra)) = it.next_if(|(p, _)| *p == i) {
            out.push(extra);
        }
        out.push(v);
    }
    out.extend(it.map(|(_, v)| v));
    out
}

fn item(j: usize, value: u64, cumulative: u64, to: Address) -> TransferItem {
    TransferItem {
        to,
        value: TokenAmount(value),
        origin: EventOrigin { height: j as u64 + 1, tx_index: 0, tx_hash: Digest::of(&(j as u64).to_le_bytes()) },
        cumulative: Some(TokenAmount(cumulative)),
        from: None,
        request: None,
    }
}

fn batches(case: &Case, direction: Direction, target: Address) -> Vec<TransferBatch> {
    let mut running = 0;
    case.values
        .iter()
        .enumerate()
        .map(|(j, v)| {
            running += v;
            let to = Address::from_label(&format!("user-{}", j % 3));
            let w = j as u64;
            TransferBatch::new(ChainId::from_label("iot"), (w, w), direction, target, vec![item(j, *v, running, to)])
        })
        .collect()
}

/// Run a schedule, reducing each call to whether it changed anything.
fn drive<S, T>(
    state: &mut S,
    votes: &[Vote],
    ws: &[Address],
    batches: &[TransferBatch],
    mut call: impl FnMut(&mut S, Address, u64, &TransferBatch) -> Result<VoteOutcome<T>, ContractError>,
) -> usize {
    let mut executed = 0;
    for v in votes {
        if let Ok(VoteOutcome::Executed(_)) = call(state, ws[v.witness], v.round, &batches[v.batch]) {
            executed += 1;
        }
    }
    executed
}

fn sc_a(n: usize, locked: u64) -> BridgeHeadState {
    let mut s = BridgeHeadState::new(BridgeHeadConfig {
        side_variant: SideVariant::Gasless,
        witnesses: witnesses(n),
        threshold: default_threshold(n),
        compensation_fee: TokenAmount(10),
        entrance_fee_minimum: TokenAmount(100),
        timeout_blocks: 10,
    });
    s.registered = true;
    s.locked = TokenAmount(locked);
    s
}

fn bank(n: usize) -> SideBankState {
    let config = SideBankConfig {
        register: Address::from_label("register"),
        inter: Address::from_label("inter"),
        bank: Address::from_label("bank"),
        witnesses: witnesses(n),
        threshold: default_threshold(n),
        total_supply: TokenAmount(1_000_000),
        bal_resv: TokenAmount(1_000),
        bal_bank: TokenAmount(999_000),
        gate: GateMode::Conservation,
        approval: BankApproval::Standing,
    };
    let owners = Multisig::new(vec![Address::from_label("owner")], 1);
    let mut s = SideBankState::new(config, owners.clone(), owners);
    s.inter_authorized = true;
    s
}

type Outcome = Result<(), TestCaseError>;

pub fn sc_a_unlocks(case: &Case) -> Outcome {
    let ws = witnesses(case.n);
    let bs = batches(case, Direction::Outbound, Address::from_label("sc_a"));
    let total: u64 = case.values.iter().sum();
    let mut a = sc_a(case.n, total);
    let mut b = a.clone();
    let ea = drive(&mut a, &clean(case), &ws, &bs, |s, w, r, batch| s.unlock_vote(w, r, batch));
    let eb = drive(&mut b, &noisy(case), &ws, &bs, |s, w, r, batch| s.unlock_vote(w, r, batch));
    prop_assert_eq!(ea, case.values.len());
    prop_assert_eq!(ea, eb);
    prop_assert_eq!(a, b);
    Ok(())
}

pub fn bank_releases(case: &Case) -> Outcome {
    let ws = witnesses(case.n);
    let bs = batches(case, Direction::Inbound, Address::from_label("inter"));
    let mut a = bank(case.n);
    let mut b = a.clone();
    let ea = drive(&mut a, &clean(case), &ws, &bs, |s, w, r, batch| s.inter_inbound(w, r, batch));
    let eb = drive(&mut b, &noisy(case), &ws, &bs, |s, w, r, batch| s.inter_inbound(w, r, batch));
    prop_assert_eq!(ea, case.values.len());
    prop_assert_eq!(ea, eb);
    prop_assert_eq!(a, b);
    Ok(())
}

pub fn ledger_credits(case: &Case) -> Outcome {
    let ws = witnesses(case.n);
    let bs = batches(case, Direction::Inbound, Address::from_label("consensus"));
    let mut a = ConsensusState::new(ChainId::from_label("iot"), ws.clone(), default_threshold(case.n));
    let mut b = a.clone();
    let ea = drive(&mut a, &clean(case), &ws, &bs, |s, w, r, batch| s.handle(w, r, batch));
    let eb = drive(&mut b, &noisy(case), &ws, &bs, |s, w, r, batch| s.handle(w, r, batch));
    prop_assert_eq!(ea, case.values.len());
    prop_assert_eq!(ea, eb);
    prop_assert_eq!(a, b);
    Ok(())
}
