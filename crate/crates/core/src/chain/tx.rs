use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::contracts::multisig::MultisigActionKind;
use crate::types::{Address, ChainId, Digest, TokenAmount};

/// Which way a relayed batch moves value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Token chain to side chain (registration payout, deposits).
    Inbound,
    /// Side chain to token chain (unlocks), and on native-gas chains the
    /// confirmation of a withdrawal request.
    Outbound,
}

/// Position of an event's source transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventOrigin {
    pub height: u64,
    pub tx_index: u32,
    pub tx_hash: Digest,
}

/// One value movement carried by a relay batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferItem {
    pub to: Address,
    pub value: TokenAmount,
    pub origin: EventOrigin,
    /// Running total of inbound deposits on SC_A after the source event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cumulative: Option<TokenAmount>,
    /// Ledger account debited by a native-gas withdrawal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<Address>,
    /// Withdrawal request id on a native-gas chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<u64>,
}

/// Content of a "Transferring" vote: the events a witness collected from
/// one window of the source chain, addressed to one target contract.
/// A relayed event, identified independently of the block that holds it:
/// the emitting transaction plus the running total or request number that
/// tells apart several events of one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceRef {
    pub tx_hash: Digest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

impl TransferItem {
    pub fn source(&self) -> SourceRef {
        SourceRef { tx_hash: self.origin.tx_hash, seq: self.cumulative.map(|c| c.0).or(self.request) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferBatch {
    pub source_chain: ChainId,
    pub window: (u64, u64),
    pub direction: Direction,
    pub target: Address,
    pub items: Vec<TransferItem>,
    pub subject: Digest,
}

#[derive(Serialize)]
struct SubjectView<'a> {
    source_chain: &'a ChainId,
    window: (u64, u64),
    direction: Direction,
    target: &'a Address,
    items: &'a [TransferItem],
}

impl TransferBatch {
    pub fn new(
        source_chain: ChainId,
        window: (u64, u64),
        direction: Direction,
        target: Address,
        items: Vec<TransferItem>,
    ) -> Self {
        let mut batch = TransferBatch { source_chain, window, direction, target, items, subject: Digest::ZERO };
        batch.subject = batch.compute_subject();
        batch
    }

    /// Digest binding the vote to the batch content.
    pub fn compute_subject(&self) -> Digest {
        canonical::digest_of(&SubjectView {
            source_chain: &self.source_chain,
            window: self.window,
            direction: self.direction,
            target: &self.target,
            items: &self.items,
        })
    }

    pub fn subject_matches(&self) -> bool {
        self.subject == self.compute_subject()
    }

    pub fn total(&self) -> Option<TokenAmount> {
        self.items.iter().try_fold(TokenAmount::ZERO, |acc, i| acc.checked_add(i.value).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TradingAction {
    /// Move ledger value between two accounts via SC_Trading.
    Transfer { to: Address, value: TokenAmount },
    /// Ask SC_Consensus to move ledger value back to the token chain.
    Withdraw { to: Address, value: TokenAmount },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    RegistrationRequest {
        chain_id: ChainId,
        genesis_hash: Digest,
        beneficiary: Address,
    },
    Confirm {
        subject: Digest,
        verdict: bool,
    },
    Transferring(TransferBatch),
    /// Value transfer. `to` is the final beneficiary, which for a deposit to
    /// SC_A or a lock through SC_Inter lives on the other chain.
    UserTransfer {
        to: Address,
    },
    IoTRecord {
        data: String,
    },
    MultisigAction(MultisigActionKind),
    TradingAction(TradingAction),
    /// Ask SC_A to revert a registration whose deadline has passed.
    Expire {
        chain_id: ChainId,
    },
}

impl Payload {
    pub fn tag(&self) -> &'static str {
        match self {
            Payload::RegistrationRequest { .. } => "registration_request",
            Payload::Confirm { .. } => "confirm",
            Payload::Transferring(_) => "transferring",
            Payload::UserTransfer { .. } => "user_transfer",
            Payload::IoTRecord { .. } => "io_t_record",
            Payload::MultisigAction(_) => "multisig_action",
            Payload::TradingAction(_) => "trading_action",
            Payload::Expire { .. } => "expire",
        }
    }

    /// Payloads that feed a quorum tally and therefore must carry a round.
    pub fn needs_round(&self) -> bool {
        matches!(self, Payload::Confirm { .. } | Payload::Transferring(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub from: Address,
    pub to: Address,
    pub value: TokenAmount,
    pub gasprice: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u64>,
    /// Per-sender sequence number; distinguishes otherwise identical
    /// transactions so a duplicate delivery is recognisable by hash.
    pub nonce: u64,
    pub payload: Payload,
}

impl Transaction {
    pub fn hash(&self) -> Digest {
        canonical::digest_of(self)
    }
}
