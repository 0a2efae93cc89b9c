//! Turning a window of observed events into witness actions.

use serde::{Deserialize, Serialize};

use crate::chain::{
    Arrival, Chain, ContractSet, Direction, Event, EventPayload, SourceRef, TransferBatch, TransferItem,
};
use crate::types::{Address, ChainId, Digest};
use crate::witness::validate::RegistrationClaim;

/// Chain a witness transaction is submitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Token,
    Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// Vote on a registration request seen on SC_A.
    Confirm { claim: RegistrationClaim, round: u64, subject: Digest, source: Digest },
    /// Submit a Transferring vote carrying `batch`.
    Relay { dest: Destination, batch: TransferBatch },
}

impl Action {
    /// Subject whose result event closes this action.
    pub fn subject(&self) -> Digest {
        match self {
            Action::Confirm { subject, .. } => *subject,
            Action::Relay { batch, .. } => batch.subject,
        }
    }

    /// Chain on which the closing result appears.
    pub fn result_chain(&self) -> Destination {
        match self {
            Action::Confirm { .. } => Destination::Token,
            Action::Relay { dest, .. } => *dest,
        }
    }

    /// Hashes of the source transactions this action acts upon.
    pub fn sources(&self) -> Vec<SourceRef> {
        match self {
            Action::Confirm { source, .. } => vec![SourceRef { tx_hash: *source, seq: None }],
            Action::Relay { batch, .. } => batch.items.iter().map(TransferItem::source).collect(),
        }
    }
}

/// Addresses of the side chain's bridge contracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideTargets {
    Gasless { register: Address, inter: Address },
    Native { consensus: Address, trading: Address },
}

impl SideTargets {
    pub fn of(side: &Chain) -> SideTargets {
        match &side.state.contracts {
            ContractSet::Gasless(s) => SideTargets::Gasless { register: s.config.register, inter: s.config.inter },
            ContractSet::Native(n) => {
                SideTargets::Native { consensus: n.consensus_address, trading: n.trading_address }
            }
            ContractSet::Token(_) => panic!("side chain expected"),
        }
    }
}

fn item(to: Address, value: crate::types::TokenAmount, e: &Event) -> TransferItem {
    TransferItem { to, value, origin: e.origin, cumulative: None, from: None, request: None }
}

fn push(
    groups: &mut Vec<(Destination, Address, Direction, Vec<TransferItem>)>,
    dest: Destination,
    target: Address,
    dir: Direction,
    it: TransferItem,
) {
    match groups.iter_mut().find(|g| g.0 == dest && g.1 == target && g.2 == dir) {
        Some(g) => g.3.push(it),
        None => groups.push((dest, target, dir, vec![it])),
    }
}

fn batches(
    source: ChainId,
    window: (u64, u64),
    groups: Vec<(Destination, Address, Direction, Vec<TransferItem>)>,
) -> impl Iterator<Item = Action> {
    groups.into_iter().map(move |(dest, target, dir, items)| Action::Relay {
        dest,
        batch: TransferBatch::new(source, window, dir, target, items),
    })
}

/// Actions for SC_A events of the token chain in `window`.
pub fn plan_token_window(token: &Chain, sc_a: Address, side: SideTargets, window: (u64, u64)) -> Vec<Action> {
    let mut confirms = Vec::new();
    let mut groups = Vec::new();
    for e in token.events_in(window.0, window.1).filter(|e| e.contract == sc_a) {
        match &e.payload {
            EventPayload::CrossChainArrived(Arrival::Registration {
                chain_id,
                amount,
                genesis_hash,
                round,
                subject,
                ..
            }) => confirms.push(Action::Confirm {
                claim: RegistrationClaim { chain_id: *chain_id, amount: *amount, genesis_hash: *genesis_hash },
                round: *round,
                subject: *subject,
                source: e.origin.tx_hash,
            }),
            EventPayload::RegistrationResult { success: true, beneficiary, amount, .. } => {
                let target = match side {
                    SideTargets::Gasless { register, .. } => register,
                    SideTargets::Native { consensus, .. } => consensus,
                };
                push(&mut groups, Destination::Side, target, Direction::Inbound, item(*beneficiary, *amount, e));
            }
            EventPayload::CrossChainArrived(Arrival::Deposit { to, value, cumulative }) => {
                let target = match side {
                    SideTargets::Gasless { inter, .. } => inter,
                    SideTargets::Native { consensus, .. } => consensus,
                };
                let mut it = item(*to, *value, e);
                it.cumulative = Some(*cumulative);
                push(&mut groups, Destination::Side, target, Direction::Inbound, it);
            }
            _ => {}
        }
    }
    confirms.extend(batches(token.config.chain_id, window, groups));
    confirms
}

/// Actions for bridge events of the side chain in `window`.
pub fn plan_side_window(side: &Chain, sc_a: Address, window: (u64, u64)) -> Vec<Action> {
    let targets = SideTargets::of(side);
    let mut groups = Vec::new();
    for e in side.events_in(window.0, window.1) {
        match (&e.payload, targets) {
            (EventPayload::AssetsLocked { to, value, cumulative }, SideTargets::Gasless { inter, .. })
                if e.contract == inter =>
            {
                let mut it = item(*to, *value, e);
                it.cumulative = Some(*cumulative);
                push(&mut groups, Destination::Token, sc_a, Direction::Outbound, it);
            }
            (EventPayload::AssetsLocked { to, value, cumulative }, SideTargets::Native { consensus, .. })
                if e.contract == consensus =>
            {
                let mut it = item(*to, *value, e);
                it.cumulative = Some(*cumulative);
                push(&mut groups, Destination::Token, sc_a, Direction::Outbound, it);
            }
            (
                EventPayload::CrossChainArrived(Arrival::Withdraw { request, from, to, value }),
                SideTargets::Native { consensus, trading },
            ) if e.contract == trading => {
                let mut it = item(*to, *value, e);
                it.from = Some(*from);
                it.request = Some(*request);
                push(&mut groups, Destination::Side, consensus, Direction::Outbound, it);
            }
            _ => {}
        }
    }
    batches(side.config.chain_id, window, groups).collect()
}
