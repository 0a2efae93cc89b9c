//! State machines for the cross-chain contracts.
//!
//! Token chain: SC_A ([`bridge_head`]) and SC_ID ([`registry`]).
//! Gasless side chain: SC_Register, SC_Inter and SC_Bank ([`side_bank`]).
//! Native-gas side chain: SC_Consensus and SC_Trading ([`native`]).
//!
//! Contract operations never move account balances themselves. They update
//! contract-held balances and return the credits the owning chain must pay
//! out, so the chain can keep its supply invariant in one place.

pub mod bridge_head;
pub mod multisig;
pub mod native;
pub mod quorum;
pub mod registry;
pub mod side_bank;

use crate::types::{Address, AmountError, TokenAmount};

pub use bridge_head::{BridgeHeadConfig, BridgeHeadState, PendingRegistration};
pub use multisig::{Multisig, MultisigActionKind};
pub use native::{ConsensusState, TradingLedger};
pub use quorum::{default_threshold, ExecutedBatch, QuorumTally, VoteOutcome};
pub use registry::{IdContract, RegistryState};
pub use side_bank::{BankApproval, GateMode, SideBankConfig, SideBankState};

/// A payment from a contract to an account on the same chain.
pub type Credit = (Address, TokenAmount);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("side chain already registered")]
    AlreadyRegistered,
    #[error("a registration request is already pending")]
    RegistrationPending,
    #[error("no registration request is pending")]
    NoPendingRegistration,
    #[error("side chain is not registered")]
    NotRegistered,
    #[error("attached {attached} does not cover the compensation fee {fee}")]
    AttachmentBelowFee { attached: TokenAmount, fee: TokenAmount },
    #[error("entrance fee {offered} is below the minimum {minimum}")]
    BelowEntranceFeeMinimum { offered: TokenAmount, minimum: TokenAmount },
    #[error("sender is not a listed witness")]
    UnknownWitness,
    #[error("stale round {got}, current round is {current}")]
    StaleRound { got: u64, current: u64 },
    #[error("vote subject does not match the pending request or batch content")]
    SubjectMismatch,
    #[error("registration deadline has passed")]
    DeadlineExpired,
    #[error("registration deadline has not been reached")]
    DeadlineNotReached,
    #[error("multisig incomplete: {have} of {need} approvals")]
    MultisigIncomplete { have: usize, need: usize },
    #[error("sender is not an owner")]
    NotOwner,
    #[error("contract balance must be zero")]
    NonzeroBalance,
    #[error("contract has committed suicide")]
    AlreadySuicided,
    #[error("SC_Inter is not authorized on SC_Bank")]
    NotAuthorized,
    #[error("safety gate violation: {0}")]
    SafetyGateViolation(String),
    #[error("amount {value} exceeds circulating bound {bound}")]
    ExceedsCirculating { value: TokenAmount, bound: TokenAmount },
    #[error("user balance {available} is below {value}")]
    InsufficientUserBalance { available: TokenAmount, value: TokenAmount },
    #[error("unlock {value} exceeds locked {locked}")]
    ExceedsLocked { value: TokenAmount, locked: TokenAmount },
    #[error("ledger balance {available} of {account} is below {value}")]
    InsufficientLedgerBalance { account: Address, available: TokenAmount, value: TokenAmount },
    #[error("SC_Register balance was already paid out")]
    RegisterEmpty,
    #[error("unknown or mismatched withdrawal request {0}")]
    UnknownWithdrawal(u64),
    #[error("malformed call: {0}")]
    Malformed(String),
    #[error(transparent)]
    Amount(#[from] AmountError),
}

/// Split `fee` evenly among `voters`; the remainder stays with the contract.
pub(crate) fn split_fee(fee: TokenAmount, voters: &[Address]) -> (Vec<Credit>, TokenAmount) {
    if voters.is_empty() {
        return (Vec::new(), fee);
    }
    let share = fee.0 / voters.len() as u64;
    let remainder = fee.0 - share * voters.len() as u64;
    let credits = if share == 0 { Vec::new() } else { voters.iter().map(|v| (*v, TokenAmount(share))).collect() };
    (credits, TokenAmount(remainder))
}
