//! SC_Consensus and SC_Trading of a native-gas side chain.
//!
//! Bridged value lives only in SC_Trading's ledger. Inbound quorum batches
//! credit it; withdrawals are requested through SC_Trading, confirmed by a
//! witness quorum on SC_Consensus (which debits the ledger and emits
//! AssetsLocked), and then unlocked on SC_A.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::event::Arrival;
use crate::chain::tx::{Direction, TransferBatch, TransferItem};
use crate::contracts::quorum::{ExecutedBatch, QuorumTally, TallyVote, VoteOutcome};
use crate::contracts::side_bank::Locked;
use crate::contracts::ContractError;
use crate::types::{Address, ChainId, Digest, TokenAmount};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingLedger {
    pub chain_id: ChainId,
    pub balances: BTreeMap<Address, TokenAmount>,
}

impl TradingLedger {
    pub fn new(chain_id: ChainId) -> Self {
        TradingLedger { chain_id, balances: BTreeMap::new() }
    }

    pub fn balance(&self, a: &Address) -> TokenAmount {
        self.balances.get(a).copied().unwrap_or(TokenAmount::ZERO)
    }

    pub fn total(&self) -> TokenAmount {
        TokenAmount(self.balances.values().map(|v| v.0).sum())
    }

    pub fn credit(&mut self, to: Address, value: TokenAmount) -> Result<(), ContractError> {
        let entry = self.balances.entry(to).or_insert(TokenAmount::ZERO);
        *entry = entry.checked_add(value)?;
        Ok(())
    }

    pub fn debit(&mut self, from: Address, value: TokenAmount) -> Result<(), ContractError> {
        let available = self.balance(&from);
        if available < value {
            return Err(ContractError::InsufficientLedgerBalance { account: from, available, value });
        }
        let left = TokenAmount(available.0 - value.0);
        if left.is_zero() {
            self.balances.remove(&from);
        } else {
            self.balances.insert(from, left);
        }
        Ok(())
    }

    pub fn transfer(&mut self, from: Address, to: Address, value: TokenAmount) -> Result<(), ContractError> {
        self.debit(from, value)?;
        self.credit(to, value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Withdrawal {
    pub from: Address,
    pub to: Address,
    pub value: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusState {
    pub witnesses: Vec<Address>,
    pub inbound_tally: QuorumTally,
    pub outbound_tally: QuorumTally,
    pub ledger: TradingLedger,
    pub registration_credited: bool,
    /// Running total of deposits credited from SC_A.
    pub credited_cumulative: TokenAmount,
    /// Running total of confirmed withdrawals.
    pub debited_cumulative: TokenAmount,
    pub pending_withdrawals: BTreeMap<u64, Withdrawal>,
    pub next_request: u64,
    pub executed: BTreeSet<Digest>,
    pub log: Vec<ExecutedBatch>,
}

impl ConsensusState {
    pub fn new(chain_id: ChainId, witnesses: Vec<Address>, threshold: usize) -> Self {
        ConsensusState {
            witnesses,
            inbound_tally: QuorumTally::new(threshold),
            outbound_tally: QuorumTally::new(threshold),
            ledger: TradingLedger::new(chain_id),
            registration_credited: false,
            credited_cumulative: TokenAmount::ZERO,
            debited_cumulative: TokenAmount::ZERO,
            pending_withdrawals: BTreeMap::new(),
            next_request: 0,
            executed: BTreeSet::new(),
            log: Vec::new(),
        }
    }

    /// SC_Trading: a user withdrawal request. Balance is checked now and
    /// debited only when the witness quorum confirms it.
    pub fn request_withdraw(
        &mut self,
        from: Address,
        to: Address,
        value: TokenAmount,
    ) -> Result<Arrival, ContractError> {
        let available = self.ledger.balance(&from);
        let reserved: u64 = self.pending_withdrawals.values().filter(|w| w.from == from).map(|w| w.value.0).sum();
        if available.0 < reserved.saturating_add(value.0) {
            return Err(ContractError::InsufficientLedgerBalance {
                account: from,
                available: TokenAmount(available.0.saturating_sub(reserved)),
                value,
            });
        }
        let request = self.next_request;
        self.next_request += 1;
        self.pending_withdrawals.insert(request, Withdrawal { from, to, value });
        Ok(Arrival::Withdraw { request, from, to, value })
    }

    /// SC_Consensus entry point for a witness vote in either direction.
    /// Inbound quorum returns nothing to pay out; outbound quorum returns
    /// the AssetsLocked records to emit.
    pub fn handle(
        &mut self,
        witness: Address,
        round: u64,
        batch: &TransferBatch,
    ) -> Result<VoteOutcome<Vec<Locked>>, ContractError> {
        if !self.witnesses.contains(&witness) {
            return Err(ContractError::UnknownWitness);
        }
        if !batch.subject_matches() {
            return Err(ContractError::SubjectMismatch);
        }
        if self.executed.contains(&batch.subject) {
            return Ok(VoteOutcome::Duplicate);
        }
        let tally = match batch.direction {
            Direction::Inbound => &mut self.inbound_tally,
            Direction::Outbound => &mut self.outbound_tally,
        };
        let threshold = tally.threshold;
        let voters = match tally.vote(round, batch.subject, witness) {
            TallyVote::Stale { current } => return Err(ContractError::StaleRound { got: round, current }),
            TallyVote::Duplicate => return Ok(VoteOutcome::Duplicate),
            TallyVote::Recorded { votes } => return Ok(VoteOutcome::Pending { votes, threshold }),
            TallyVote::Reached { voters } => voters,
        };
        let outcome = match batch.direction {
            Direction::Inbound => match self.apply_inbound(batch) {
                Ok(()) => VoteOutcome::Executed(Vec::new()),
                Err(e) => VoteOutcome::Failed(e),
            },
            Direction::Outbound => match self.apply_outbound(batch) {
                Ok(locked) => VoteOutcome::Executed(locked),
                Err(e) => VoteOutcome::Failed(e),
            },
        };
        let tally = match batch.direction {
            Direction::Inbound => &mut self.inbound_tally,
            Direction::Outbound => &mut self.outbound_tally,
        };
        self.log.push(ExecutedBatch {
            subject: batch.subject,
            round,
            threshold,
            voters,
            success: matches!(outcome, VoteOutcome::Executed(_)),
            sources: batch.items.iter().map(TransferItem::source).collect(),
        });
        tally.advance();
        self.executed.insert(batch.subject);
        Ok(outcome)
    }

    /// Registration items carry no running total; deposits must continue
    /// the credited running total exactly.
    fn apply_inbound(&mut self, batch: &TransferBatch) -> Result<(), ContractError> {
        let mut ledger = self.ledger.clone();
        let mut credited = self.credited_cumulative;
        let mut registration = self.registration_credited;
        for item in &batch.items {
            match item.cumulative {
                None => {
                    if registration {
                        return Err(ContractError::SafetyGateViolation("registration already credited".into()));
                    }
                    registration = true;
                }
                Some(c) => {
                    credited = credited.checked_add(item.value)?;
                    if c != credited {
                        return Err(ContractError::SafetyGateViolation(format!(
                            "credited total {credited} does not match deposit total {c}"
                        )));
                    }
                }
            }
            ledger.credit(item.to, item.value)?;
        }
        self.ledger = ledger;
        self.credited_cumulative = credited;
        self.registration_credited = registration;
        Ok(())
    }

    fn apply_outbound(&mut self, batch: &TransferBatch) -> Result<Vec<Locked>, ContractError> {
        let mut ledger = self.ledger.clone();
        let mut debited = self.debited_cumulative;
        let mut locked = Vec::new();
        let requests: Vec<u64> = batch.items.iter().filter_map(|i| i.request).collect();
        let result = (|| {
            for item in &batch.items {
                let id = item.request.ok_or(ContractError::Malformed("withdrawal without request id".into()))?;
                let w = self.pending_withdrawals.get(&id).ok_or(ContractError::UnknownWithdrawal(id))?;
                if Some(w.from) != item.from || w.to != item.to || w.value != item.value {
                    return Err(ContractError::UnknownWithdrawal(id));
                }
                ledger.debit(w.from, w.value)?;
                debited = debited.checked_add(w.value)?;
                locked.push(Locked { to: w.to, value: w.value, cumulative: debited });
            }
            Ok(())
        })();
        // A failed batch retires its requests; the user may ask again.
        for id in requests {
            self.pending_withdrawals.remove(&id);
        }
        result?;
        self.ledger = ledger;
        self.debited_cumulative = debited;
        Ok(locked)
    }
}
