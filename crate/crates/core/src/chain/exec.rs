//! Transaction dispatch. Each transaction runs against a copy of the
//! balances and contracts so a failure leaves no trace.

use crate::chain::event::{Arrival, Event, EventPayload};
use crate::chain::tx::{Direction, EventOrigin, Payload, TradingAction, Transaction};
use crate::chain::{ChainConfig, ChainKind, ChainState, ContractSet, NativeContracts, TokenContracts, TxError};
use crate::contracts::bridge_head::RegistrationSettlement;
use crate::contracts::{ContractError, Credit, SideBankState, VoteOutcome};
use crate::types::{Address, Digest, TokenAmount};

pub(super) fn execute(
    config: &ChainConfig,
    state: &mut ChainState,
    origin: EventOrigin,
    tx: &Transaction,
) -> Result<Vec<Event>, TxError> {
    if state.seen.contains(&origin.tx_hash) {
        return Err(TxError::Duplicate);
    }
    if tx.payload.needs_round() && tx.round.is_none() {
        return Err(TxError::MissingRound);
    }
    let accounts = state.accounts.clone();
    let contracts = state.contracts.clone();
    let mut ctx = Ctx { state, origin, events: Vec::new() };
    let result = match config.kind {
        ChainKind::Token => ctx.token(config, tx),
        ChainKind::GaslessSide => ctx.gasless(tx),
        ChainKind::NativeGasSide => ctx.native(tx),
    };
    match result {
        Ok(()) => Ok(ctx.events),
        Err(e) => {
            ctx.state.accounts = accounts;
            ctx.state.contracts = contracts;
            Err(e)
        }
    }
}

struct Ctx<'a> {
    state: &'a mut ChainState,
    origin: EventOrigin,
    events: Vec<Event>,
}

fn round(tx: &Transaction) -> u64 {
    tx.round.unwrap_or_default()
}

fn result_event(
    direction: Direction,
    round: u64,
    subject: Digest,
    outcome_err: Option<&ContractError>,
) -> EventPayload {
    EventPayload::ConsensusResult {
        direction,
        round,
        subject,
        success: outcome_err.is_none(),
        reason: outcome_err.map(|e| e.to_string()),
    }
}

impl Ctx<'_> {
    fn emit(&mut self, contract: Address, payload: EventPayload) {
        self.events.push(Event { contract, payload, origin: self.origin });
    }

    fn debit(&mut self, who: Address, value: TokenAmount) -> Result<(), TxError> {
        let available = self.state.balance(&who);
        if available < value {
            return Err(TxError::InsufficientBalance { available, needed: value });
        }
        let left = TokenAmount(available.0 - value.0);
        if left.is_zero() {
            self.state.accounts.remove(&who);
        } else {
            self.state.accounts.insert(who, left);
        }
        Ok(())
    }

    fn credit(&mut self, who: Address, value: TokenAmount) -> Result<(), TxError> {
        if value.is_zero() {
            return Ok(());
        }
        let entry = self.state.accounts.entry(who).or_insert(TokenAmount::ZERO);
        *entry = entry.checked_add(value)?;
        Ok(())
    }

    fn pay(&mut self, credits: &[Credit]) -> Result<(), TxError> {
        for (who, value) in credits {
            self.credit(*who, *value)?;
        }
        Ok(())
    }

    fn token_contracts(&mut self) -> &mut TokenContracts {
        match &mut self.state.contracts {
            ContractSet::Token(t) => t,
            _ => unreachable!("token chain holds token contracts"),
        }
    }

    fn token(&mut self, config: &ChainConfig, tx: &Transaction) -> Result<(), TxError> {
        let t = self.token_contracts();
        let exempt = match (&tx.payload, t.heads.get(&tx.to)) {
            (Payload::Confirm { .. } | Payload::Transferring(_), Some(head)) => {
                head.config.witnesses.contains(&tx.from)
            }
            (Payload::MultisigAction(_), None) => tx.to == t.id_address && t.id.owners.is_owner(&tx.from),
            _ => false,
        };
        if tx.gasprice < config.min_gasprice && !exempt {
            return Err(TxError::GasPriceTooLow { offered: tx.gasprice, min: config.min_gasprice });
        }
        let fee = TokenAmount(tx.gasprice);
        let needed = fee.checked_add(tx.value)?;
        let available = self.state.balance(&tx.from);
        if available < needed {
            return Err(TxError::InsufficientBalance { available, needed });
        }
        self.debit(tx.from, needed)?;
        self.credit(config.fee_sink, fee)?;

        let id_address = self.token_contracts().id_address;
        if self.token_contracts().heads.contains_key(&tx.to) {
            self.bridge_head(tx)
        } else if tx.to == id_address {
            match &tx.payload {
                Payload::MultisigAction(action) if tx.value.is_zero() => {
                    self.token_contracts().id.owners.approve(tx.from, action.clone())?;
                    Ok(())
                }
                _ => Err(ContractError::NotAuthorized.into()),
            }
        } else {
            match tx.payload {
                Payload::UserTransfer { .. } | Payload::IoTRecord { .. } => self.credit(tx.to, tx.value),
                _ => Err(TxError::Unsupported),
            }
        }
    }

    fn bridge_head(&mut self, tx: &Transaction) -> Result<(), TxError> {
        let sc_a = tx.to;
        let height = self.origin.height;
        if !matches!(tx.payload, Payload::RegistrationRequest { .. } | Payload::UserTransfer { .. })
            && !tx.value.is_zero()
        {
            return Err(TxError::Unsupported);
        }
        match &tx.payload {
            Payload::RegistrationRequest { chain_id, genesis_hash, beneficiary } => {
                let head = self.token_contracts().heads.get_mut(&sc_a).expect("checked");
                let arrival =
                    head.request_registration(tx.from, tx.value, *chain_id, *genesis_hash, *beneficiary, height)?;
                self.emit(sc_a, EventPayload::CrossChainArrived(arrival));
                Ok(())
            }
            Payload::Confirm { subject, verdict } => {
                let head = self.token_contracts().heads.get_mut(&sc_a).expect("checked");
                match head.confirm(tx.from, round(tx), *subject, *verdict, height)? {
                    VoteOutcome::Executed(quorum) => {
                        let t = self.token_contracts();
                        let approvals = t.id.approvals_for(sc_a);
                        let fresh = t.id.update(quorum.chain_id, &approvals)?;
                        let id_address = t.id_address;
                        self.emit(id_address, EventPayload::ExistOrNot { chain_id: quorum.chain_id, exists: fresh });
                        let head = self.token_contracts().heads.get_mut(&sc_a).expect("checked");
                        let settlement = head.complete_registration(fresh)?;
                        self.settle(sc_a, settlement)
                    }
                    _ => Ok(()),
                }
            }
            Payload::Expire { .. } => {
                let head = self.token_contracts().heads.get_mut(&sc_a).expect("checked");
                let settlement = head.expire(height)?;
                self.settle(sc_a, settlement)
            }
            Payload::UserTransfer { to } => {
                let head = self.token_contracts().heads.get_mut(&sc_a).expect("checked");
                let arrival = head.deposit(tx.value, *to)?;
                self.emit(sc_a, EventPayload::CrossChainArrived(arrival));
                Ok(())
            }
            Payload::Transferring(batch) => {
                let head = self.token_contracts().heads.get_mut(&sc_a).expect("checked");
                let outcome = head.unlock_vote(tx.from, round(tx), batch)?;
                self.close(sc_a, Direction::Outbound, round(tx), batch.subject, outcome)
            }
            _ => Err(TxError::Unsupported),
        }
    }

    fn settle(&mut self, sc_a: Address, s: RegistrationSettlement) -> Result<(), TxError> {
        self.pay(&s.credits)?;
        self.emit(
            sc_a,
            EventPayload::RegistrationResult {
                chain_id: s.chain_id,
                success: s.success,
                round: s.round,
                subject: s.subject,
                beneficiary: s.beneficiary,
                amount: s.amount,
                refund: s.refund,
            },
        );
        Ok(())
    }

    /// Pay out and emit the result event of a closed quorum instance.
    fn close(
        &mut self,
        contract: Address,
        direction: Direction,
        round: u64,
        subject: Digest,
        outcome: VoteOutcome<Vec<Credit>>,
    ) -> Result<(), TxError> {
        match outcome {
            VoteOutcome::Executed(credits) => {
                self.pay(&credits)?;
                self.emit(contract, result_event(direction, round, subject, None));
            }
            VoteOutcome::Failed(e) => self.emit(contract, result_event(direction, round, subject, Some(&e))),
            VoteOutcome::Pending { .. } | VoteOutcome::Duplicate => {}
        }
        Ok(())
    }

    fn side_bank(&mut self) -> &mut SideBankState {
        match &mut self.state.contracts {
            ContractSet::Gasless(s) => s,
            _ => unreachable!("gasless chain holds side bank contracts"),
        }
    }

    fn gasless(&mut self, tx: &Transaction) -> Result<(), TxError> {
        if tx.gasprice != 0 {
            return Err(TxError::GasNotAccepted);
        }
        let cfg = self.side_bank().config.clone();
        let r = round(tx);
        if tx.to == cfg.register {
            if !tx.value.is_zero() {
                return Err(TxError::Unsupported);
            }
            match &tx.payload {
                Payload::Transferring(batch) => {
                    let outcome = self.side_bank().register_transferring(tx.from, r, batch)?;
                    self.close(cfg.register, Direction::Inbound, r, batch.subject, outcome)
                }
                Payload::MultisigAction(crate::contracts::MultisigActionKind::Suicide) => {
                    self.side_bank().approve_register_suicide(tx.from)?;
                    Ok(())
                }
                _ => Err(TxError::Unsupported),
            }
        } else if tx.to == cfg.inter {
            match &tx.payload {
                Payload::Transferring(batch) if tx.value.is_zero() => {
                    let outcome = self.side_bank().inter_inbound(tx.from, r, batch)?;
                    self.close(cfg.inter, Direction::Inbound, r, batch.subject, outcome)
                }
                Payload::UserTransfer { to } => {
                    let available = self.state.balance(&tx.from);
                    let locked = self.side_bank().inter_outbound(available, tx.value, *to)?;
                    self.debit(tx.from, tx.value)?;
                    self.emit(
                        cfg.inter,
                        EventPayload::AssetsLocked {
                            to: locked.to,
                            value: locked.value,
                            cumulative: locked.cumulative,
                        },
                    );
                    Ok(())
                }
                _ => Err(TxError::Unsupported),
            }
        } else if tx.to == cfg.bank {
            // SC_Bank moves value only on SC_Inter's behalf; direct calls
            // other than owner approvals are refused.
            match &tx.payload {
                Payload::MultisigAction(action) if tx.value.is_zero() => {
                    let credits = self.side_bank().approve_bank(tx.from, action.clone())?;
                    self.pay(&credits)
                }
                _ => Err(ContractError::NotAuthorized.into()),
            }
        } else {
            match tx.payload {
                Payload::UserTransfer { .. } | Payload::IoTRecord { .. } => {
                    self.debit(tx.from, tx.value)?;
                    self.credit(tx.to, tx.value)
                }
                _ => Err(TxError::Unsupported),
            }
        }
    }

    fn native_contracts(&mut self) -> &mut NativeContracts {
        match &mut self.state.contracts {
            ContractSet::Native(n) => n,
            _ => unreachable!("native-gas chain holds consensus contracts"),
        }
    }

    fn native(&mut self, tx: &Transaction) -> Result<(), TxError> {
        if !tx.value.is_zero() {
            return Err(TxError::ValueNotAccepted);
        }
        let (consensus, trading) = {
            let n = self.native_contracts();
            (n.consensus_address, n.trading_address)
        };
        let r = round(tx);
        if tx.to == consensus {
            let Payload::Transferring(batch) = &tx.payload else {
                return Err(TxError::Unsupported);
            };
            let outcome = self.native_contracts().consensus.handle(tx.from, r, batch)?;
            match outcome {
                VoteOutcome::Executed(locked) => {
                    for l in locked {
                        self.emit(
                            consensus,
                            EventPayload::AssetsLocked { to: l.to, value: l.value, cumulative: l.cumulative },
                        );
                    }
                    self.emit(consensus, result_event(batch.direction, r, batch.subject, None));
                }
                VoteOutcome::Failed(e) => {
                    self.emit(consensus, result_event(batch.direction, r, batch.subject, Some(&e)))
                }
                _ => {}
            }
            Ok(())
        } else if tx.to == trading {
            let Payload::TradingAction(action) = &tx.payload else {
                return Err(TxError::Unsupported);
            };
            let c = &mut self.native_contracts().consensus;
            match action {
                TradingAction::Transfer { to, value } => {
                    c.ledger.transfer(tx.from, *to, *value)?;
                }
                TradingAction::Withdraw { to, value } => {
                    let arrival: Arrival = c.request_withdraw(tx.from, *to, *value)?;
                    self.emit(trading, EventPayload::CrossChainArrived(arrival));
                }
            }
            Ok(())
        } else {
            match tx.payload {
                Payload::IoTRecord { .. } | Payload::UserTransfer { .. } => Ok(()),
                _ => Err(TxError::Unsupported),
            }
        }
    }
}
