//! SC_A: the token chain end of one side chain's bridge.
//!
//! Holds the pegged amount (`locked`), runs the registration quorum with its
//! deadline revert, accepts deposits bound for the side chain, and unlocks
//! value once a witness quorum relays side-chain locks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::chain::event::Arrival;
use crate::chain::tx::{Direction, TransferBatch, TransferItem};
use crate::contracts::quorum::{ExecutedBatch, QuorumTally, TallyVote, VoteOutcome};
use crate::contracts::{split_fee, ContractError, Credit};
use crate::genesis::SideVariant;
use crate::types::{Address, ChainId, Digest, TokenAmount};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeHeadConfig {
    pub side_variant: SideVariant,
    /// Token-chain addresses of the side chain's witnesses.
    pub witnesses: Vec<Address>,
    pub threshold: usize,
    pub compensation_fee: TokenAmount,
    /// Lower bound on the net registration amount. Not applied to
    /// native-gas side chains, which take no entrance fee.
    pub entrance_fee_minimum: TokenAmount,
    /// Registration deadline, in token chain blocks after the request.
    pub timeout_blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRegistration {
    pub chain_id: ChainId,
    pub creator: Address,
    pub beneficiary: Address,
    /// Attached value net of the compensation fee.
    pub amount: TokenAmount,
    pub fee: TokenAmount,
    pub genesis_hash: Digest,
    /// Last token chain height at which confirmations are accepted.
    pub deadline: u64,
    pub subject: Digest,
    pub round: u64,
}

/// Settlement of a registration: what to pay out and how it ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationSettlement {
    pub chain_id: ChainId,
    pub success: bool,
    pub round: u64,
    pub subject: Digest,
    pub beneficiary: Address,
    pub amount: TokenAmount,
    pub refund: TokenAmount,
    pub credits: Vec<Credit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationQuorum {
    pub chain_id: ChainId,
    pub voters: BTreeSet<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeHeadState {
    pub config: BridgeHeadConfig,
    pub locked: TokenAmount,
    /// Compensation fees retained by SC_A.
    pub fee_pool: TokenAmount,
    /// Fee of the pending registration, held until it settles.
    pub escrowed_fee: TokenAmount,
    pub registered: bool,
    pub registered_chain: Option<ChainId>,
    pub creator: Option<Address>,
    pub pending: Option<PendingRegistration>,
    pub confirm_votes: BTreeMap<Address, bool>,
    pub tally_registration: QuorumTally,
    pub tally_outbound: QuorumTally,
    pub inbound_cumulative: TokenAmount,
    pub unlocked_cumulative: TokenAmount,
    pub executed: BTreeSet<Digest>,
    pub log: Vec<ExecutedBatch>,
}

#[derive(Serialize)]
struct RequestSubject<'a> {
    chain_id: &'a ChainId,
    creator: &'a Address,
    beneficiary: &'a Address,
    amount: TokenAmount,
    genesis_hash: &'a Digest,
    round: u64,
    height: u64,
}

impl BridgeHeadState {
    /// A freshly deployed SC_A holds nothing.
    pub fn new(config: BridgeHeadConfig) -> Self {
        let threshold = config.threshold;
        BridgeHeadState {
            config,
            locked: TokenAmount::ZERO,
            fee_pool: TokenAmount::ZERO,
            escrowed_fee: TokenAmount::ZERO,
            registered: false,
            registered_chain: None,
            creator: None,
            pending: None,
            confirm_votes: BTreeMap::new(),
            tally_registration: QuorumTally::new(threshold),
            tally_outbound: QuorumTally::new(threshold),
            inbound_cumulative: TokenAmount::ZERO,
            unlocked_cumulative: TokenAmount::ZERO,
            executed: BTreeSet::new(),
            log: Vec::new(),
        }
    }

    /// Everything SC_A holds on the token chain.
    pub fn held(&self) -> TokenAmount {
        TokenAmount(self.locked.0 + self.fee_pool.0 + self.escrowed_fee.0)
    }

    fn require_witness(&self, who: &Address) -> Result<(), ContractError> {
        if self.config.witnesses.contains(who) {
            Ok(())
        } else {
            Err(ContractError::UnknownWitness)
        }
    }

    /// Accept a registration request carrying `attached` tokens.
    pub fn request_registration(
        &mut self,
        creator: Address,
        attached: TokenAmount,
        chain_id: ChainId,
        genesis_hash: Digest,
        beneficiary: Address,
        height: u64,
    ) -> Result<Arrival, ContractError> {
        if self.registered {
            return Err(ContractError::AlreadyRegistered);
        }
        if self.pending.is_some() {
            return Err(ContractError::RegistrationPending);
        }
        let fee = self.config.compensation_fee;
        if attached <= fee {
            return Err(ContractError::AttachmentBelowFee { attached, fee });
        }
        let amount = attached.checked_sub(fee)?;
        if self.config.side_variant == SideVariant::Gasless && amount < self.config.entrance_fee_minimum {
            return Err(ContractError::BelowEntranceFeeMinimum {
                offered: amount,
                minimum: self.config.entrance_fee_minimum,
            });
        }
        let round = self.tally_registration.round;
        let subject = canonical::digest_of(&RequestSubject {
            chain_id: &chain_id,
            creator: &creator,
            beneficiary: &beneficiary,
            amount,
            genesis_hash: &genesis_hash,
            round,
            height,
        });
        self.locked = self.locked.checked_add(amount)?;
        self.escrowed_fee = self.escrowed_fee.checked_add(fee)?;
        self.creator = Some(creator);
        self.confirm_votes.clear();
        self.pending = Some(PendingRegistration {
            chain_id,
            creator,
            beneficiary,
            amount,
            fee,
            genesis_hash,
            deadline: height + self.config.timeout_blocks,
            subject,
            round,
        });
        Ok(Arrival::Registration { chain_id, amount, genesis_hash, beneficiary, round, subject })
    }

    /// Subject digest of the pending request, which confirmations must echo.
    pub fn pending_subject(&self) -> Option<Digest> {
        self.pending.as_ref().map(|p| p.subject)
    }

    /// Record one witness's verdict on the pending registration. Only `true`
    /// verdicts count toward the threshold.
    pub fn confirm(
        &mut self,
        witness: Address,
        round: u64,
        subject: Digest,
        verdict: bool,
        height: u64,
    ) -> Result<VoteOutcome<RegistrationQuorum>, ContractError> {
        self.require_witness(&witness)?;
        let pending = self.pending.as_ref().ok_or(ContractError::NoPendingRegistration)?;
        if round != self.tally_registration.round {
            return Err(ContractError::StaleRound { got: round, current: self.tally_registration.round });
        }
        if subject != pending.subject {
            return Err(ContractError::SubjectMismatch);
        }
        if height > pending.deadline {
            return Err(ContractError::DeadlineExpired);
        }
        let chain_id = pending.chain_id;
        if self.confirm_votes.contains_key(&witness) {
            return Ok(VoteOutcome::Duplicate);
        }
        self.confirm_votes.insert(witness, verdict);
        let threshold = self.tally_registration.threshold;
        if !verdict {
            return Ok(VoteOutcome::Pending { votes: self.tally_registration.votes_for(&subject), threshold });
        }
        match self.tally_registration.vote(round, subject, witness) {
            TallyVote::Reached { voters } => Ok(VoteOutcome::Executed(RegistrationQuorum { chain_id, voters })),
            TallyVote::Recorded { votes } => Ok(VoteOutcome::Pending { votes, threshold }),
            TallyVote::Duplicate => Ok(VoteOutcome::Duplicate),
            TallyVote::Stale { current } => Err(ContractError::StaleRound { got: round, current }),
        }
    }

    /// Finish a registration after quorum, once SC_ID answered. `accepted`
    /// is SC_ID's ExistOrNot flag; a refused update refunds like a revert.
    pub fn complete_registration(&mut self, accepted: bool) -> Result<RegistrationSettlement, ContractError> {
        let pending = self.pending.clone().ok_or(ContractError::NoPendingRegistration)?;
        if !accepted {
            return self.revert(pending);
        }
        let voters: Vec<Address> = self
            .tally_registration
            .buckets
            .get(&pending.subject)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        let (credits, remainder) = split_fee(pending.fee, &voters);
        self.escrowed_fee = self.escrowed_fee.checked_sub(pending.fee)?;
        self.fee_pool = self.fee_pool.checked_add(remainder)?;
        self.registered = true;
        self.registered_chain = Some(pending.chain_id);
        self.close_registration(&pending, voters.into_iter().collect(), true);
        Ok(RegistrationSettlement {
            chain_id: pending.chain_id,
            success: true,
            round: pending.round,
            subject: pending.subject,
            beneficiary: pending.beneficiary,
            amount: pending.amount,
            refund: TokenAmount::ZERO,
            credits,
        })
    }

    /// Revert a registration whose deadline passed without quorum.
    pub fn expire(&mut self, height: u64) -> Result<RegistrationSettlement, ContractError> {
        let pending = self.pending.clone().ok_or(ContractError::NoPendingRegistration)?;
        if height <= pending.deadline {
            return Err(ContractError::DeadlineNotReached);
        }
        self.revert(pending)
    }

    fn revert(&mut self, pending: PendingRegistration) -> Result<RegistrationSettlement, ContractError> {
        // Everyone who voted, whatever the verdict, shares the fee.
        let voters: Vec<Address> = self.confirm_votes.keys().copied().collect();
        let (mut credits, remainder) = split_fee(pending.fee, &voters);
        self.escrowed_fee = self.escrowed_fee.checked_sub(pending.fee)?;
        self.fee_pool = self.fee_pool.checked_add(remainder)?;
        self.locked = self.locked.checked_sub(pending.amount)?;
        credits.push((pending.creator, pending.amount));
        self.close_registration(&pending, voters.into_iter().collect(), false);
        Ok(RegistrationSettlement {
            chain_id: pending.chain_id,
            success: false,
            round: pending.round,
            subject: pending.subject,
            beneficiary: pending.beneficiary,
            amount: pending.amount,
            refund: pending.amount,
            credits,
        })
    }

    fn close_registration(&mut self, pending: &PendingRegistration, voters: BTreeSet<Address>, success: bool) {
        self.log.push(ExecutedBatch {
            subject: pending.subject,
            round: pending.round,
            threshold: self.tally_registration.threshold,
            voters,
            success,
            sources: Vec::new(),
        });
        self.pending = None;
        self.confirm_votes.clear();
        self.tally_registration.advance();
    }

    /// Lock a deposit bound for `to` on the side chain.
    pub fn deposit(&mut self, value: TokenAmount, to: Address) -> Result<Arrival, ContractError> {
        if !self.registered {
            return Err(ContractError::NotRegistered);
        }
        self.locked = self.locked.checked_add(value)?;
        self.inbound_cumulative = self.inbound_cumulative.checked_add(value)?;
        Ok(Arrival::Deposit { to, value, cumulative: self.inbound_cumulative })
    }

    /// A witness vote relaying side-chain locks. At quorum the batch total is
    /// unlocked, provided it does not exceed `locked`.
    pub fn unlock_vote(
        &mut self,
        witness: Address,
        round: u64,
        batch: &TransferBatch,
    ) -> Result<VoteOutcome<Vec<Credit>>, ContractError> {
        self.require_witness(&witness)?;
        if batch.direction != Direction::Outbound {
            return Err(ContractError::Malformed("SC_A accepts outbound batches only".into()));
        }
        if !batch.subject_matches() {
            return Err(ContractError::SubjectMismatch);
        }
        if self.executed.contains(&batch.subject) {
            return Ok(VoteOutcome::Duplicate);
        }
        let threshold = self.tally_outbound.threshold;
        let voters = match self.tally_outbound.vote(round, batch.subject, witness) {
            TallyVote::Stale { current } => return Err(ContractError::StaleRound { got: round, current }),
            TallyVote::Duplicate => return Ok(VoteOutcome::Duplicate),
            TallyVote::Recorded { votes } => return Ok(VoteOutcome::Pending { votes, threshold }),
            TallyVote::Reached { voters } => voters,
        };
        let outcome = match batch.total() {
            None => VoteOutcome::Failed(ContractError::Malformed("batch total overflows".into())),
            Some(total) if total > self.locked => {
                VoteOutcome::Failed(ContractError::ExceedsLocked { value: total, locked: self.locked })
            }
            Some(total) => {
                self.locked = self.locked.checked_sub(total)?;
                self.unlocked_cumulative = self.unlocked_cumulative.checked_add(total)?;
                VoteOutcome::Executed(batch.items.iter().map(|i| (i.to, i.value)).collect())
            }
        };
        self.log.push(ExecutedBatch {
            subject: batch.subject,
            round,
            threshold,
            voters,
            success: matches!(outcome, VoteOutcome::Executed(_)),
            sources: batch.items.iter().map(TransferItem::source).collect(),
        });
        self.executed.insert(batch.subject);
        self.tally_outbound.advance();
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::tx::{EventOrigin, TransferItem};

    fn witnesses(n: u8) -> Vec<Address> {
        (1..=n).map(|i| Address::from_bytes([i; 20])).collect()
    }

    fn config(n: u8) -> BridgeHeadConfig {
        BridgeHeadConfig {
            side_variant: SideVariant::Gasless,
            witnesses: witnesses(n),
            threshold: crate::contracts::default_threshold(n as usize),
            compensation_fee: TokenAmount(10),
            entrance_fee_minimum: TokenAmount(100),
            timeout_blocks: 5,
        }
    }

    fn creator() -> Address {
        Address::from_label("creator")
    }

    fn requested(n: u8) -> BridgeHeadState {
        let mut sc = BridgeHeadState::new(config(n));
        sc.request_registration(
            creator(),
            TokenAmount(1000),
            ChainId::from_label("iot"),
            Digest::of(b"genesis"),
            Address::from_label("creator-side"),
            1,
        )
        .unwrap();
        sc
    }

    fn outbound(round_tag: u64, value: u64) -> TransferBatch {
        TransferBatch::new(
            ChainId::from_label("iot"),
            (round_tag, round_tag),
            Direction::Outbound,
            Address::from_label("sc_a"),
            vec![TransferItem {
                to: Address::from_label("bob"),
                value: TokenAmount(value),
                origin: EventOrigin { height: round_tag, tx_index: 0, tx_hash: Digest::of(&round_tag.to_le_bytes()) },
                cumulative: Some(TokenAmount(value)),
                from: None,
                request: None,
            }],
        )
    }

    fn registered(n: u8) -> BridgeHeadState {
        let mut sc = requested(n);
        let subject = sc.pending_subject().unwrap();
        for w in witnesses(n).into_iter().take(sc.config.threshold) {
            sc.confirm(w, 0, subject, true, 2).unwrap();
        }
        sc.complete_registration(true).unwrap();
        sc
    }

    #[test]
    fn registration_request_locks_net_amount() {
        let sc = requested(4);
        assert_eq!(sc.locked, TokenAmount(990));
        assert_eq!(sc.escrowed_fee, TokenAmount(10));
        assert_eq!(sc.held(), TokenAmount(1000));
    }

    #[test]
    fn registration_event_amount_is_net() {
        let mut sc = BridgeHeadState::new(config(4));
        let arrival = sc
            .request_registration(creator(), TokenAmount(1000), ChainId::from_label("iot"), Digest::ZERO, creator(), 0)
            .unwrap();
        assert!(matches!(arrival, Arrival::Registration { amount: TokenAmount(990), round: 0, .. }));
    }

    #[test]
    fn below_entrance_minimum() {
        let mut sc = BridgeHeadState::new(config(4));
        let err = sc
            .request_registration(creator(), TokenAmount(50), ChainId::from_label("iot"), Digest::ZERO, creator(), 0)
            .unwrap_err();
        assert_eq!(err, ContractError::BelowEntranceFeeMinimum { offered: TokenAmount(40), minimum: TokenAmount(100) });
        assert_eq!(sc.held(), TokenAmount::ZERO);
    }

    #[test]
    fn native_gas_has_no_entrance_minimum() {
        let mut cfg = config(4);
        cfg.side_variant = SideVariant::NativeGas;
        let mut sc = BridgeHeadState::new(cfg);
        assert!(sc
            .request_registration(creator(), TokenAmount(50), ChainId::from_label("iot"), Digest::ZERO, creator(), 0)
            .is_ok());
    }

    #[test]
    fn second_request_after_success() {
        let mut sc = registered(4);
        let err = sc
            .request_registration(creator(), TokenAmount(1000), ChainId::from_label("iot"), Digest::ZERO, creator(), 9)
            .unwrap_err();
        assert_eq!(err, ContractError::AlreadyRegistered);
    }

    #[test]
    fn quorum_fires_on_third_of_four() {
        let mut sc = requested(4);
        let subject = sc.pending_subject().unwrap();
        let w = witnesses(4);
        assert!(sc.confirm(w[0], 0, subject, true, 2).unwrap().is_pending());
        assert!(sc.confirm(w[1], 0, subject, true, 2).unwrap().is_pending());
        assert_eq!(sc.confirm(w[0], 0, subject, true, 2).unwrap(), VoteOutcome::Duplicate);
        match sc.confirm(w[2], 0, subject, true, 2).unwrap() {
            VoteOutcome::Executed(q) => assert_eq!(q.voters.len(), 3),
            other => panic!("expected quorum, got {other:?}"),
        }
        let settlement = sc.complete_registration(true).unwrap();
        assert!(settlement.success);
        // Fee 10 over three voters: 3 each, 1 kept.
        assert_eq!(settlement.credits.len(), 3);
        assert_eq!(sc.fee_pool, TokenAmount(1));
        assert_eq!(sc.locked, TokenAmount(990));
        assert!(sc.registered);
        assert_eq!(sc.tally_registration.round, 1);
    }

    #[test]
    fn false_votes_never_count() {
        let mut sc = requested(4);
        let subject = sc.pending_subject().unwrap();
        for w in witnesses(4) {
            assert!(sc.confirm(w, 0, subject, false, 2).unwrap().is_pending());
        }
        assert!(!sc.registered);
    }

    #[test]
    fn unknown_witness_and_stale_round() {
        let mut sc = requested(4);
        let subject = sc.pending_subject().unwrap();
        assert_eq!(sc.confirm(Address::from_label("mallory"), 0, subject, true, 2), Err(ContractError::UnknownWitness));
        assert_eq!(
            sc.confirm(witnesses(4)[0], 1, subject, true, 2),
            Err(ContractError::StaleRound { got: 1, current: 0 })
        );
    }

    #[test]
    fn deadline_revert_refunds_net_amount() {
        let mut sc = requested(4);
        let subject = sc.pending_subject().unwrap();
        let w = witnesses(4);
        sc.confirm(w[0], 0, subject, true, 2).unwrap();
        sc.confirm(w[1], 0, subject, true, 2).unwrap();
        assert_eq!(sc.expire(6), Err(ContractError::DeadlineNotReached));
        assert_eq!(sc.confirm(w[2], 0, subject, true, 7), Err(ContractError::DeadlineExpired));
        let s = sc.expire(7).unwrap();
        assert!(!s.success);
        // Attached 1000, fee 10: the creator gets 990 back, the two voters
        // split the fee.
        assert_eq!(s.refund, TokenAmount(990));
        assert!(s.credits.contains(&(creator(), TokenAmount(990))));
        assert!(s.credits.contains(&(w[0], TokenAmount(5))));
        assert_eq!(sc.locked, TokenAmount::ZERO);
        assert_eq!(sc.held(), TokenAmount::ZERO);
        assert_eq!(sc.tally_registration.round, 1);
        // A new request is accepted in the next round.
        assert!(sc
            .request_registration(creator(), TokenAmount(1000), ChainId::from_label("iot"), Digest::ZERO, creator(), 8)
            .is_ok());
    }

    #[test]
    fn deposit_requires_registration() {
        let mut sc = requested(4);
        assert_eq!(sc.deposit(TokenAmount(5), creator()), Err(ContractError::NotRegistered));
        let mut sc = registered(4);
        let a = sc.deposit(TokenAmount(100), creator()).unwrap();
        assert_eq!(a, Arrival::Deposit { to: creator(), value: TokenAmount(100), cumulative: TokenAmount(100) });
        assert_eq!(sc.locked, TokenAmount(1090));
    }

    #[test]
    fn unlock_at_quorum() {
        let mut sc = registered(4);
        let b = outbound(0, 50);
        let w = witnesses(4);
        assert!(sc.unlock_vote(w[0], 0, &b).unwrap().is_pending());
        assert!(sc.unlock_vote(w[1], 0, &b).unwrap().is_pending());
        assert_eq!(
            sc.unlock_vote(w[2], 0, &b).unwrap(),
            VoteOutcome::Executed(vec![(Address::from_label("bob"), TokenAmount(50))])
        );
        assert_eq!(sc.locked, TokenAmount(940));
        // Late vote for the closed instance changes nothing.
        assert_eq!(sc.unlock_vote(w[3], 0, &b).unwrap(), VoteOutcome::Duplicate);
        assert_eq!(sc.locked, TokenAmount(940));
    }

    #[test]
    fn unlock_exceeding_locked_fails() {
        let mut sc = registered(4);
        let b = outbound(0, 1000);
        let w = witnesses(4);
        sc.unlock_vote(w[0], 0, &b).unwrap();
        sc.unlock_vote(w[1], 0, &b).unwrap();
        assert_eq!(
            sc.unlock_vote(w[2], 0, &b).unwrap(),
            VoteOutcome::Failed(ContractError::ExceedsLocked { value: TokenAmount(1000), locked: TokenAmount(990) })
        );
        assert_eq!(sc.locked, TokenAmount(990));
        assert_eq!(sc.tally_outbound.round, 1);
    }

    #[test]
    fn interleaved_rounds_only_current_counts() {
        let mut sc = registered(4);
        let w = witnesses(4);
        let (b0, b1, b2) = (outbound(0, 10), outbound(1, 20), outbound(2, 30));
        // Votes for rounds 1 and 2 arrive before round 0 closes.
        assert!(sc.unlock_vote(w[0], 1, &b1).is_err());
        assert!(sc.unlock_vote(w[0], 2, &b2).is_err());
        sc.unlock_vote(w[0], 0, &b0).unwrap();
        assert!(sc.unlock_vote(w[1], 2, &b2).is_err());
        sc.unlock_vote(w[1], 0, &b0).unwrap();
        assert!(sc.unlock_vote(w[2], 1, &b1).is_err());
        assert!(matches!(sc.unlock_vote(w[2], 0, &b0).unwrap(), VoteOutcome::Executed(_)));
        assert_eq!(sc.locked, TokenAmount(980));
        // Round 1 starts from zero votes.
        assert!(sc.unlock_vote(w[0], 1, &b1).unwrap().is_pending());
        assert_eq!(sc.tally_outbound.votes_for(&b1.subject), 1);
    }

    #[test]
    fn tampered_batch_rejected() {
        let mut sc = registered(4);
        let mut b = outbound(0, 10);
        b.items[0].value = TokenAmount(999);
        assert_eq!(sc.unlock_vote(witnesses(4)[0], 0, &b), Err(ContractError::SubjectMismatch));
    }
}
