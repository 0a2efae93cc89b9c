//! SC_Register, SC_Inter and SC_Bank of a gasless side chain.
//!
//! The three contracts share one state value because SC_Inter's only power
//! is to move SC_Bank's balance, and SC_Register's payout is what makes the
//! side chain's circulating supply equal SC_A's locked amount.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::tx::{Direction, TransferBatch, TransferItem};
use crate::contracts::multisig::{Multisig, MultisigActionKind};
use crate::contracts::quorum::{ExecutedBatch, QuorumTally, TallyVote, VoteOutcome};
use crate::contracts::{ContractError, Credit};
use crate::types::{Address, Digest, TokenAmount};

/// How SC_Inter checks an inbound release before SC_Bank pays it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Each deposit is released exactly once and in order: the released
    /// running total must equal the deposit's running total on SC_A.
    #[default]
    Conservation,
    /// Literal check: bank balance after release, plus the entrance fee,
    /// plus the amount, equals the total supply.
    Strict,
}

/// Whether SC_Bank owners approve SC_Inter once or every release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankApproval {
    #[default]
    Standing,
    PerTransfer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideBankConfig {
    pub register: Address,
    pub inter: Address,
    pub bank: Address,
    /// Side-chain addresses of the witnesses.
    pub witnesses: Vec<Address>,
    pub threshold: usize,
    pub total_supply: TokenAmount,
    /// Bal_Resv, which is also the entrance fee.
    pub bal_resv: TokenAmount,
    pub bal_bank: TokenAmount,
    pub gate: GateMode,
    pub approval: BankApproval,
}

/// One change of SC_Bank's balance and who caused it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankMove {
    pub caller: Address,
    pub inflow: TokenAmount,
    pub outflow: TokenAmount,
}

/// Fields of the AssetsLocked event SC_Inter emits for an outbound lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Locked {
    pub to: Address,
    pub value: TokenAmount,
    pub cumulative: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideBankState {
    pub config: SideBankConfig,
    pub register_balance: TokenAmount,
    pub bank_balance: TokenAmount,
    pub inter_authorized: bool,
    pub suicided: bool,
    pub registration_paid: bool,
    pub register_owners: Multisig,
    pub bank_owners: Multisig,
    pub register_tally: QuorumTally,
    pub inbound_tally: QuorumTally,
    pub released_cumulative: TokenAmount,
    pub locked_out_cumulative: TokenAmount,
    /// Quorum-approved releases awaiting owner approval (per-transfer mode).
    pub pending_releases: BTreeMap<Digest, Vec<Credit>>,
    pub executed: BTreeSet<Digest>,
    pub log: Vec<ExecutedBatch>,
    pub bank_moves: Vec<BankMove>,
}

impl SideBankState {
    pub fn new(config: SideBankConfig, register_owners: Multisig, bank_owners: Multisig) -> Self {
        let threshold = config.threshold;
        SideBankState {
            register_balance: config.bal_resv,
            bank_balance: config.bal_bank,
            config,
            inter_authorized: false,
            suicided: false,
            registration_paid: false,
            register_owners,
            bank_owners,
            register_tally: QuorumTally::new(threshold),
            inbound_tally: QuorumTally::new(threshold),
            released_cumulative: TokenAmount::ZERO,
            locked_out_cumulative: TokenAmount::ZERO,
            pending_releases: BTreeMap::new(),
            executed: BTreeSet::new(),
            log: Vec::new(),
            bank_moves: Vec::new(),
        }
    }

    pub fn pending_total(&self) -> TokenAmount {
        TokenAmount(self.pending_releases.values().flatten().map(|(_, v)| v.0).sum())
    }

    /// Everything the three contracts hold.
    pub fn held(&self) -> TokenAmount {
        TokenAmount(self.register_balance.0 + self.bank_balance.0 + self.pending_total().0)
    }

    /// Tokens outside SC_Bank and SC_Register, in accounts or awaiting
    /// owner release.
    pub fn circulating(&self) -> TokenAmount {
        TokenAmount(self.config.total_supply.0 - self.bank_balance.0 - self.register_balance.0)
    }

    pub fn is_contract(&self, a: &Address) -> bool {
        *a == self.config.register || *a == self.config.inter || *a == self.config.bank
    }

    fn require_witness(&self, who: &Address) -> Result<(), ContractError> {
        if self.config.witnesses.contains(who) {
            Ok(())
        } else {
            Err(ContractError::UnknownWitness)
        }
    }

    fn check_batch(&self, batch: &TransferBatch, target: Address) -> Result<(), ContractError> {
        if batch.direction != Direction::Inbound || batch.target != target {
            return Err(ContractError::Malformed("batch addressed elsewhere".into()));
        }
        if !batch.subject_matches() {
            return Err(ContractError::SubjectMismatch);
        }
        Ok(())
    }

    /// A witness's Transferring vote to SC_Register. At quorum the whole
    /// register balance goes to the first item's recipient.
    pub fn register_transferring(
        &mut self,
        witness: Address,
        round: u64,
        batch: &TransferBatch,
    ) -> Result<VoteOutcome<Vec<Credit>>, ContractError> {
        if self.suicided {
            return Err(ContractError::AlreadySuicided);
        }
        self.require_witness(&witness)?;
        self.check_batch(batch, self.config.register)?;
        if self.executed.contains(&batch.subject) {
            return Ok(VoteOutcome::Duplicate);
        }
        let threshold = self.register_tally.threshold;
        let voters = match self.register_tally.vote(round, batch.subject, witness) {
            TallyVote::Stale { current } => return Err(ContractError::StaleRound { got: round, current }),
            TallyVote::Duplicate => return Ok(VoteOutcome::Duplicate),
            TallyVote::Recorded { votes } => return Ok(VoteOutcome::Pending { votes, threshold }),
            TallyVote::Reached { voters } => voters,
        };
        let outcome = if self.registration_paid || self.register_balance.is_zero() {
            VoteOutcome::Failed(ContractError::RegisterEmpty)
        } else if let Some(first) = batch.items.first() {
            let payout = vec![(first.to, self.register_balance)];
            self.register_balance = TokenAmount::ZERO;
            self.registration_paid = true;
            VoteOutcome::Executed(payout)
        } else {
            VoteOutcome::Failed(ContractError::Malformed("empty registration batch".into()))
        };
        self.close(batch, round, voters, matches!(outcome, VoteOutcome::Executed(_)), true);
        Ok(outcome)
    }

    /// Owners deactivate SC_Register with an explicit approval set.
    pub fn suicide(&mut self, approvals: &BTreeSet<Address>) -> Result<(), ContractError> {
        if self.suicided {
            return Err(ContractError::AlreadySuicided);
        }
        self.register_owners.check(approvals)?;
        if !self.register_balance.is_zero() {
            return Err(ContractError::NonzeroBalance);
        }
        self.suicided = true;
        Ok(())
    }

    /// One owner's Suicide approval sent as a transaction. Returns whether
    /// SC_Register is now deactivated.
    pub fn approve_register_suicide(&mut self, owner: Address) -> Result<bool, ContractError> {
        if self.suicided {
            return Err(ContractError::AlreadySuicided);
        }
        if !self.register_balance.is_zero() {
            return Err(ContractError::NonzeroBalance);
        }
        self.register_owners.approve(owner, MultisigActionKind::Suicide)?;
        let approvals = self.register_owners.approvals(&MultisigActionKind::Suicide);
        match self.suicide(&approvals) {
            Ok(()) => Ok(true),
            Err(ContractError::MultisigIncomplete { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// An SC_Bank owner's approval. Returns the credits of a release that
    /// this approval completed, if any.
    pub fn approve_bank(&mut self, owner: Address, action: MultisigActionKind) -> Result<Vec<Credit>, ContractError> {
        match &action {
            MultisigActionKind::AuthorizeCaller { caller } if *caller == self.config.inter => {
                self.bank_owners.approve(owner, action.clone())?;
                self.inter_authorized = self.bank_owners.is_satisfied(&action);
                Ok(Vec::new())
            }
            MultisigActionKind::ReleasePending { subject } => {
                if !self.pending_releases.contains_key(subject) {
                    return Err(ContractError::Malformed("no such pending release".into()));
                }
                self.bank_owners.approve(owner, action.clone())?;
                if self.bank_owners.is_satisfied(&action) {
                    let credits = self.pending_releases.remove(subject).unwrap_or_default();
                    self.bank_owners.collected.remove(&action);
                    Ok(credits)
                } else {
                    Ok(Vec::new())
                }
            }
            _ => Err(ContractError::Malformed("action not accepted by SC_Bank".into())),
        }
    }

    /// A witness's Transferring vote to SC_Inter for deposits made on SC_A.
    /// At quorum SC_Inter asks SC_Bank to release the batch, subject to the
    /// configured gate.
    pub fn inter_inbound(
        &mut self,
        witness: Address,
        round: u64,
        batch: &TransferBatch,
    ) -> Result<VoteOutcome<Vec<Credit>>, ContractError> {
        self.require_witness(&witness)?;
        if !self.inter_authorized {
            return Err(ContractError::NotAuthorized);
        }
        self.check_batch(batch, self.config.inter)?;
        if self.executed.contains(&batch.subject) {
            return Ok(VoteOutcome::Duplicate);
        }
        let threshold = self.inbound_tally.threshold;
        let voters = match self.inbound_tally.vote(round, batch.subject, witness) {
            TallyVote::Stale { current } => return Err(ContractError::StaleRound { got: round, current }),
            TallyVote::Duplicate => return Ok(VoteOutcome::Duplicate),
            TallyVote::Recorded { votes } => return Ok(VoteOutcome::Pending { votes, threshold }),
            TallyVote::Reached { voters } => voters,
        };
        let outcome = match self.gate(batch) {
            Err(e) => VoteOutcome::Failed(e),
            Ok(total) => {
                self.bank_balance = self.bank_balance.checked_sub(total)?;
                self.released_cumulative = self.released_cumulative.checked_add(total)?;
                self.bank_moves.push(BankMove { caller: self.config.inter, inflow: TokenAmount::ZERO, outflow: total });
                let credits: Vec<Credit> = batch.items.iter().map(|i| (i.to, i.value)).collect();
                match self.config.approval {
                    BankApproval::Standing => VoteOutcome::Executed(credits),
                    BankApproval::PerTransfer => {
                        self.pending_releases.insert(batch.subject, credits);
                        VoteOutcome::Executed(Vec::new())
                    }
                }
            }
        };
        self.close(batch, round, voters, matches!(outcome, VoteOutcome::Executed(_)), false);
        Ok(outcome)
    }

    fn gate(&self, batch: &TransferBatch) -> Result<TokenAmount, ContractError> {
        let total = self.config.total_supply;
        let mut bank = self.bank_balance;
        let mut released = self.released_cumulative;
        for item in &batch.items {
            if item.value > bank {
                return Err(ContractError::SafetyGateViolation(format!(
                    "release {} exceeds bank balance {}",
                    item.value, bank
                )));
            }
            bank = TokenAmount(bank.0 - item.value.0);
            match self.config.gate {
                GateMode::Conservation => {
                    released = released.checked_add(item.value)?;
                    if item.cumulative != Some(released) {
                        return Err(ContractError::SafetyGateViolation(format!(
                            "released total {released} does not match deposit total {:?}",
                            item.cumulative.map(|c| c.0)
                        )));
                    }
                }
                GateMode::Strict => {
                    let sum = bank.0 as u128 + self.config.bal_resv.0 as u128 + item.value.0 as u128;
                    if sum != total.0 as u128 {
                        return Err(ContractError::SafetyGateViolation(format!(
                            "bank {} + entrance fee {} + amount {} != total {}",
                            bank, self.config.bal_resv, item.value, total
                        )));
                    }
                }
            }
        }
        Ok(TokenAmount(self.bank_balance.0 - bank.0))
    }

    /// A user lock through SC_Inter into SC_Bank, bound for `to` on the
    /// token chain. `available` is the sender's balance before the call.
    pub fn inter_outbound(
        &mut self,
        available: TokenAmount,
        value: TokenAmount,
        to: Address,
    ) -> Result<Locked, ContractError> {
        let bound = self.config.total_supply.checked_sub(self.bank_balance)?;
        if value > bound {
            return Err(ContractError::ExceedsCirculating { value, bound });
        }
        if value > available {
            return Err(ContractError::InsufficientUserBalance { available, value });
        }
        self.bank_balance = self.bank_balance.checked_add(value)?;
        self.locked_out_cumulative = self.locked_out_cumulative.checked_add(value)?;
        self.bank_moves.push(BankMove { caller: self.config.inter, inflow: value, outflow: TokenAmount::ZERO });
        Ok(Locked { to, value, cumulative: self.locked_out_cumulative })
    }

    fn close(&mut self, batch: &TransferBatch, round: u64, voters: BTreeSet<Address>, success: bool, register: bool) {
        let tally = if register { &mut self.register_tally } else { &mut self.inbound_tally };
        self.log.push(ExecutedBatch {
            subject: batch.subject,
            round,
            threshold: tally.threshold,
            voters,
            success,
            sources: batch.items.iter().map(TransferItem::source).collect(),
        });
        tally.advance();
        self.executed.insert(batch.subject);
    }
}
