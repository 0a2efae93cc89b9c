//! Global invariants evaluated at quiescent points and after the run.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::chain::{Arrival, Chain, ContractSet, EventPayload, SourceRef};
use crate::contracts::quorum::is_safe_threshold;
use crate::contracts::{BridgeHeadState, ExecutedBatch};
use crate::simnet::SideRuntime;
use crate::types::{Address, ChainId, TokenAmount};
use crate::witness::{plan_side_window, plan_token_window, Behavior, SideTargets, StreamKind, WitnessNode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
        Check { name: name.into(), ok, detail: detail.into() }
    }
}

pub(crate) fn sc_a<'a>(token: &'a Chain, side: &SideRuntime) -> &'a BridgeHeadState {
    &token.state.token().expect("token chain").heads[&side.spec.sc_a]
}

fn quorum_log_ok(log: &[ExecutedBatch], witnesses: &[Address]) -> Result<(), String> {
    for b in log.iter().filter(|b| b.success) {
        if b.voters.len() < b.threshold {
            return Err(format!("batch {} executed with {} of {} votes", b.subject, b.voters.len(), b.threshold));
        }
        if let Some(v) = b.voters.iter().find(|v| !witnesses.contains(v)) {
            return Err(format!("batch {} counted non-witness {v}", b.subject));
        }
        if !is_safe_threshold(b.threshold, witnesses.len()) {
            return Err(format!("threshold {} is not a majority of {}", b.threshold, witnesses.len()));
        }
    }
    Ok(())
}

fn duplicates(sources: impl IntoIterator<Item = SourceRef>) -> Vec<SourceRef> {
    let mut seen = BTreeSet::new();
    sources.into_iter().filter(|s| !seen.insert(*s)).collect()
}

fn success_sources(log: &[ExecutedBatch]) -> Vec<SourceRef> {
    log.iter().filter(|b| b.success).flat_map(|b| b.sources.iter().copied()).collect()
}

fn side_log(side: &Chain) -> &[ExecutedBatch] {
    match &side.state.contracts {
        ContractSet::Gasless(s) => &s.log,
        ContractSet::Native(n) => &n.consensus.log,
        ContractSet::Token(_) => &[],
    }
}

/// Invariants that must hold at every quiescent point.
pub fn state_checks(token: &Chain, sides: &[SideRuntime], total: TokenAmount, prev_registry: &[ChainId]) -> Vec<Check> {
    let mut out = Vec::new();
    let supply = token.state.supply();
    out.push(Check::new("token_supply", supply == total, format!("token chain holds {supply} of {total}")));

    let registry = &token.state.token().expect("token chain").id.registry.chain_ids;
    let monotone = registry.len() >= prev_registry.len() && registry[..prev_registry.len()] == *prev_registry;
    out.push(Check::new(
        "registry_monotonic",
        monotone,
        format!("{} registered, previously {}", registry.len(), prev_registry.len()),
    ));

    for side in sides {
        let name = &side.spec.name;
        let head = sc_a(token, side);
        let state = &side.chain.state;
        let (peg_ok, peg_detail) = match &state.contracts {
            ContractSet::Gasless(s) => {
                let circulating = s.circulating();
                (head.locked == circulating, format!("SC_A.locked {} vs circulating {}", head.locked, circulating))
            }
            ContractSet::Native(n) => {
                let sum = n.consensus.ledger.total();
                (head.locked == sum, format!("SC_A.locked {} vs trading ledger {}", head.locked, sum))
            }
            ContractSet::Token(_) => (false, "side chain holds token contracts".into()),
        };
        out.push(Check::new(format!("peg[{name}]"), peg_ok, peg_detail));

        let mut quorum = quorum_log_ok(&head.log, &head.config.witnesses);
        for t in [&head.tally_registration, &head.tally_outbound] {
            if !is_safe_threshold(t.threshold, head.config.witnesses.len()) {
                quorum = Err(format!("SC_A threshold {} of {}", t.threshold, head.config.witnesses.len()));
            }
        }
        match &state.contracts {
            ContractSet::Gasless(s) => {
                let side_supply = state.supply();
                out.push(Check::new(
                    format!("side_supply[{name}]"),
                    side_supply == s.config.total_supply,
                    format!("side chain holds {side_supply} of {}", s.config.total_supply),
                ));
                quorum = quorum.and(quorum_log_ok(&s.log, &s.config.witnesses));
                if !is_safe_threshold(s.config.threshold, s.config.witnesses.len()) {
                    quorum = Err(format!("side threshold {} of {}", s.config.threshold, s.config.witnesses.len()));
                }
                let stray: Vec<_> = s.bank_moves.iter().filter(|m| m.caller != s.config.inter).collect();
                out.push(Check::new(
                    format!("bank_caller[{name}]"),
                    stray.is_empty(),
                    format!("{} SC_Bank moves, {} not made by SC_Inter", s.bank_moves.len(), stray.len()),
                ));
                let register_ok = (!s.suicided && !s.registration_paid) || s.register_balance.is_zero();
                out.push(Check::new(
                    format!("register_zero[{name}]"),
                    register_ok,
                    format!(
                        "SC_Register balance {}, paid {}, suicided {}",
                        s.register_balance, s.registration_paid, s.suicided
                    ),
                ));
            }
            ContractSet::Native(n) => {
                let c = &n.consensus;
                quorum = quorum.and(quorum_log_ok(&c.log, &c.witnesses));
                for t in [&c.inbound_tally, &c.outbound_tally] {
                    if !is_safe_threshold(t.threshold, c.witnesses.len()) {
                        quorum = Err(format!("SC_Consensus threshold {} of {}", t.threshold, c.witnesses.len()));
                    }
                }
            }
            ContractSet::Token(_) => {}
        }
        let (ok, detail) = match quorum {
            Ok(()) => (true, "every executed batch met a majority threshold".to_string()),
            Err(e) => (false, e),
        };
        out.push(Check::new(format!("quorum_safety[{name}]"), ok, detail));

        let dup_out = duplicates(success_sources(&head.log));
        let dup_side = duplicates(success_sources(side_log(&side.chain)));
        out.push(Check::new(
            format!("relay_uniqueness[{name}]"),
            dup_out.is_empty() && dup_side.is_empty(),
            format!(
                "{} sources unlocked twice on SC_A, {} released twice on the side chain",
                dup_out.len(),
                dup_side.len()
            ),
        ));
    }
    out
}

fn compare(name: String, mut expected: Vec<SourceRef>, mut got: Vec<SourceRef>) -> Check {
    expected.sort();
    got.sort();
    let missing = expected.iter().filter(|e| !got.contains(e)).count();
    let extra = got.len() as isize - (expected.len() - missing) as isize;
    let ok = expected == got;
    Check::new(
        name,
        ok,
        format!("{} expected, {} relayed, {missing} missing, {extra} unmatched", expected.len(), got.len()),
    )
}

/// Invariants over the final canonical chains.
pub fn final_checks(token: &Chain, sides: &[SideRuntime], witnesses: &[(usize, &WitnessNode)]) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(Check::new(
        "replay_equivalence[token]",
        token.replay_from_genesis() == token.state,
        "token chain state equals a replay of its blocks",
    ));
    for side in sides {
        let name = &side.spec.name;
        out.push(Check::new(
            format!("replay_equivalence[{name}]"),
            side.chain.replay_from_genesis() == side.chain.state,
            "side chain state equals a replay of its blocks",
        ));
        let head = sc_a(token, side);
        let sc_a_addr = side.spec.sc_a;
        let mut inbound = Vec::new();
        for e in token.events_in(0, token.height()).filter(|e| e.contract == sc_a_addr) {
            match &e.payload {
                EventPayload::CrossChainArrived(Arrival::Deposit { cumulative, .. }) => {
                    inbound.push(SourceRef { tx_hash: e.origin.tx_hash, seq: Some(cumulative.0) })
                }
                EventPayload::RegistrationResult { success: true, .. } => {
                    inbound.push(SourceRef { tx_hash: e.origin.tx_hash, seq: None })
                }
                _ => {}
            }
        }
        let mut outbound = Vec::new();
        let targets = SideTargets::of(&side.chain);
        for e in side.chain.events_in(0, side.chain.height()) {
            match (&e.payload, targets) {
                (EventPayload::AssetsLocked { cumulative, .. }, SideTargets::Gasless { inter, .. })
                    if e.contract == inter =>
                {
                    outbound.push(SourceRef { tx_hash: e.origin.tx_hash, seq: Some(cumulative.0) })
                }
                (EventPayload::AssetsLocked { cumulative, .. }, SideTargets::Native { consensus, .. })
                    if e.contract == consensus =>
                {
                    outbound.push(SourceRef { tx_hash: e.origin.tx_hash, seq: Some(cumulative.0) })
                }
                (
                    EventPayload::CrossChainArrived(Arrival::Withdraw { request, .. }),
                    SideTargets::Native { trading, .. },
                ) if e.contract == trading => {
                    inbound.push(SourceRef { tx_hash: e.origin.tx_hash, seq: Some(*request) })
                }
                _ => {}
            }
        }
        out.push(compare(format!("relay_complete_outbound[{name}]"), outbound, success_sources(&head.log)));
        out.push(compare(format!("relay_complete_inbound[{name}]"), inbound, success_sources(side_log(&side.chain))));
    }

    for (side_index, w) in witnesses {
        if w.config.behavior != Behavior::Honest {
            continue;
        }
        let side = &sides[*side_index];
        let mut bad = Vec::new();
        for (kind, stream) in [(StreamKind::Token, &w.token_stream), (StreamKind::Side, &w.side_stream)] {
            for record in &stream.history {
                let actions = match kind {
                    StreamKind::Token => {
                        plan_token_window(token, w.config.sc_a, SideTargets::of(&side.chain), record.window)
                    }
                    StreamKind::Side => plan_side_window(&side.chain, w.config.sc_a, record.window),
                };
                let now: BTreeSet<SourceRef> = actions.iter().flat_map(|a| a.sources()).collect();
                if now != record.sources {
                    bad.push(format!("{kind:?} {:?}", record.window));
                }
            }
        }
        out.push(Check::new(
            format!("window_consistency[{}]", w.config.label),
            bad.is_empty(),
            if bad.is_empty() {
                "relayed windows match the final chains".to_string()
            } else {
                format!("windows differing from the final chains: {}", bad.join(", "))
            },
        ));
    }
    out
}
