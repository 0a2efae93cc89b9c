use serde::{Deserialize, Serialize};

use crate::chain::tx::{Direction, EventOrigin};
use crate::types::{Address, ChainId, Digest, TokenAmount};

/// What arrived at a cross-chain contract and now waits for witnesses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arrival {
    /// A registration request on SC_A. `amount` is the attached value net of
    /// the compensation fee.
    Registration {
        chain_id: ChainId,
        amount: TokenAmount,
        genesis_hash: Digest,
        beneficiary: Address,
        round: u64,
        /// Digest Confirm votes must carry.
        subject: Digest,
    },
    /// A post-registration deposit on SC_A. `cumulative` is SC_A's running
    /// inbound total including this deposit.
    Deposit { to: Address, value: TokenAmount, cumulative: TokenAmount },
    /// A withdrawal request on a native-gas SC_Consensus.
    Withdraw { request: u64, from: Address, to: Address, value: TokenAmount },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "topic", rename_all = "snake_case")]
pub enum EventPayload {
    /// SC_ID's answer to a registry update.
    ExistOrNot {
        chain_id: ChainId,
        exists: bool,
    },
    CrossChainArrived(Arrival),
    /// Value locked on the side chain for release on the token chain.
    AssetsLocked {
        to: Address,
        value: TokenAmount,
        cumulative: TokenAmount,
    },
    RegistrationResult {
        chain_id: ChainId,
        success: bool,
        round: u64,
        subject: Digest,
        beneficiary: Address,
        /// Net registration amount: paid out on the side chain on success.
        amount: TokenAmount,
        /// Refund paid back to the creator when the registration reverted.
        refund: TokenAmount,
    },
    /// A quorum-gated batch closed, successfully or not.
    ConsensusResult {
        direction: Direction,
        round: u64,
        subject: Digest,
        success: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl EventPayload {
    pub fn topic(&self) -> &'static str {
        match self {
            EventPayload::ExistOrNot { .. } => "exist_or_not",
            EventPayload::CrossChainArrived(_) => "cross_chain_arrived",
            EventPayload::AssetsLocked { .. } => "assets_locked",
            EventPayload::RegistrationResult { .. } => "registration_result",
            EventPayload::ConsensusResult { .. } => "consensus_result",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub contract: Address,
    pub payload: EventPayload,
    pub origin: EventOrigin,
}
