//! Witness nodes: registration validation, windowed scanning of both
//! chains, vote submission, and the timeout/resend loop.

pub mod cursor;
pub mod relay;
pub mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::{Chain, ChainKind, ContractSet, Direction, EventPayload, Payload, SourceRef, Transaction};
use crate::types::{Address, ChainId, Digest, TokenAmount};

pub use cursor::{RelayCursor, WindowNotReady};
pub use relay::{plan_side_window, plan_token_window, Action, Destination, SideTargets};
pub use validate::{
    registration_conditions, validate_registration, validate_registration_nativegas, Conditions, FetchFailure,
    RegistrationClaim,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    Honest,
    /// Sends nothing.
    Crashed,
    /// Votes false on every registration and relays nothing.
    ByzantineRejectAll,
    /// Votes true on every registration; relays honestly.
    ByzantineApproveAll,
    /// Inflates the first item of every relayed batch by one token. All
    /// equivocators agree on the corrupted batch, so they collude.
    Equivocating,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessConfig {
    pub label: String,
    pub token_address: Address,
    pub side_address: Address,
    pub side_chain: ChainId,
    /// The side chain's SC_A on the token chain.
    pub sc_a: Address,
    pub omega_token: u64,
    pub omega_side: u64,
    /// Ticks to wait for a result before resending.
    pub timeout: u64,
    /// Ticks slept after a timeout before the resend gate is checked.
    pub sleep: u64,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// SC_A events on the token chain.
    Token,
    /// Bridge events on the side chain.
    Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingAction {
    pub action: Action,
    pub last_sent: u64,
    pub attempts: u32,
    pub closed: bool,
    pub gate_wait_noted: bool,
}

/// A window the witness finished, with the source transactions it acted on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: (u64, u64),
    pub sources: BTreeSet<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    pub kind: StreamKind,
    pub cursor: RelayCursor,
    pub pending: Vec<PendingAction>,
    /// Every window closed so far, in order.
    pub history: Vec<WindowRecord>,
}

impl Stream {
    fn new(kind: StreamKind, omega: u64) -> Self {
        Stream { kind, cursor: RelayCursor::new(omega, 0), pending: Vec::new(), history: Vec::new() }
    }
}

/// Result events a witness has seen at confirmation depth on one chain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultIndex {
    pub next: u64,
    pub results: BTreeMap<Digest, bool>,
}

impl ResultIndex {
    fn update(&mut self, chain: &Chain, lag: u64) {
        let Some(confirmed) = chain.height().checked_sub(lag) else { return };
        while self.next <= confirmed {
            for e in &chain.blocks[self.next as usize].events {
                match &e.payload {
                    EventPayload::ConsensusResult { subject, success, .. }
                    | EventPayload::RegistrationResult { subject, success, .. } => {
                        self.results.insert(*subject, *success);
                    }
                    _ => {}
                }
            }
            self.next += 1;
        }
    }
}

/// What a witness can read when it wakes.
#[derive(Debug, Clone, Copy)]
pub struct Views<'a> {
    pub token: &'a Chain,
    pub side: &'a Chain,
    /// The side chain's genesis file, or `None` when it cannot be fetched.
    pub genesis: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outgoing {
    pub dest: Destination,
    pub tx: Transaction,
}

/// Observable witness activity, recorded in traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum Note {
    Vote {
        stream: StreamKind,
        window: (u64, u64),
        round: u64,
        subject: Digest,
        items: usize,
    },
    Confirm {
        subject: Digest,
        round: u64,
        verdict: bool,
    },
    Abstain {
        subject: Digest,
        cause: String,
    },
    /// A window opened (`h_l2 >= h_l + ω` against the previous anchor) or a
    /// stuck window passed the gate before a resend.
    GatePass {
        stream: StreamKind,
        window: (u64, u64),
        h_l: u64,
        h_l2: u64,
        resend: bool,
    },
    GateWait {
        stream: StreamKind,
        window: (u64, u64),
        h_l: u64,
        h_l2: u64,
    },
    Resend {
        stream: StreamKind,
        window: (u64, u64),
        attempt: u32,
        subject: Digest,
    },
    WindowClosed {
        stream: StreamKind,
        window: (u64, u64),
        actions: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessNode {
    pub config: WitnessConfig,
    pub token_stream: Stream,
    pub side_stream: Stream,
    pub token_results: ResultIndex,
    pub side_results: ResultIndex,
    pub nonce_token: u64,
    pub nonce_side: u64,
}

impl WitnessNode {
    pub fn new(config: WitnessConfig) -> Self {
        WitnessNode {
            token_stream: Stream::new(StreamKind::Token, config.omega_token),
            side_stream: Stream::new(StreamKind::Side, config.omega_side),
            config,
            token_results: ResultIndex::default(),
            side_results: ResultIndex::default(),
            nonce_token: 0,
            nonce_side: 0,
        }
    }

    pub fn is_honest(&self) -> bool {
        self.config.behavior == Behavior::Honest
    }

    /// One step of the relay loop at tick `now`.
    pub fn wake(&mut self, now: u64, views: &Views<'_>) -> (Vec<Outgoing>, Vec<Note>) {
        let mut out = Vec::new();
        let mut notes = Vec::new();
        if self.config.behavior == Behavior::Crashed {
            return (out, notes);
        }
        self.token_results.update(views.token, self.config.omega_token);
        self.side_results.update(views.side, self.config.omega_side);
        for kind in [StreamKind::Token, StreamKind::Side] {
            self.step_stream(kind, now, views, &mut out, &mut notes);
        }
        (out, notes)
    }

    fn stream_mut(&mut self, kind: StreamKind) -> &mut Stream {
        match kind {
            StreamKind::Token => &mut self.token_stream,
            StreamKind::Side => &mut self.side_stream,
        }
    }

    fn plan(&self, kind: StreamKind, views: &Views<'_>, window: (u64, u64)) -> Vec<Action> {
        match kind {
            StreamKind::Token => plan_token_window(views.token, self.config.sc_a, SideTargets::of(views.side), window),
            StreamKind::Side => plan_side_window(views.side, self.config.sc_a, window),
        }
    }

    fn step_stream(
        &mut self,
        kind: StreamKind,
        now: u64,
        views: &Views<'_>,
        out: &mut Vec<Outgoing>,
        notes: &mut Vec<Note>,
    ) {
        let head = match kind {
            StreamKind::Token => views.token.height(),
            StreamKind::Side => views.side.height(),
        };
        let wait = self.config.timeout + self.config.sleep;
        loop {
            if !self.stream_mut(kind).pending.is_empty() {
                let (token_results, side_results) = (&self.token_results, &self.side_results);
                let stream = match kind {
                    StreamKind::Token => &mut self.token_stream,
                    StreamKind::Side => &mut self.side_stream,
                };
                for p in stream.pending.iter_mut().filter(|p| !p.closed) {
                    let index = match p.action.result_chain() {
                        Destination::Token => token_results,
                        Destination::Side => side_results,
                    };
                    p.closed = index.results.contains_key(&p.action.subject());
                }
                if stream.pending.iter().all(|p| p.closed) {
                    let window = stream.cursor.window();
                    let sources = stream.pending.iter().flat_map(|p| p.action.sources()).collect();
                    notes.push(Note::WindowClosed { stream: kind, window, actions: stream.pending.len() });
                    stream.history.push(WindowRecord { window, sources });
                    stream.pending.clear();
                    stream.cursor.advance();
                    continue;
                }
                let cursor = stream.cursor;
                let due: Vec<usize> = stream
                    .pending
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| !p.closed && now >= p.last_sent + wait)
                    .map(|(i, _)| i)
                    .collect();
                if due.is_empty() {
                    break;
                }
                let window = cursor.window();
                if !cursor.resend_gate(head) {
                    for i in due {
                        let p = &mut stream.pending[i];
                        if !p.gate_wait_noted {
                            p.gate_wait_noted = true;
                            notes.push(Note::GateWait { stream: kind, window, h_l: cursor.anchor(), h_l2: head });
                        }
                    }
                    break;
                }
                notes.push(Note::GatePass { stream: kind, window, h_l: cursor.anchor(), h_l2: head, resend: true });
                stream.cursor.attempt += 1;
                let attempt = stream.cursor.attempt;
                let actions: Vec<Action> = due.iter().map(|i| stream.pending[*i].action.clone()).collect();
                for i in &due {
                    let p = &mut stream.pending[*i];
                    p.last_sent = now;
                    p.attempts += 1;
                    p.gate_wait_noted = false;
                }
                for action in actions {
                    notes.push(Note::Resend { stream: kind, window, attempt, subject: action.subject() });
                    self.send(kind, &action, views, out, notes);
                }
                break;
            }
            let cursor = self.stream_mut(kind).cursor;
            let Ok(window) = cursor.ready(head) else { break };
            let actions = self.plan(kind, views, window);
            if actions.is_empty() {
                let stream = self.stream_mut(kind);
                stream.history.push(WindowRecord { window, sources: BTreeSet::new() });
                stream.cursor.advance();
                continue;
            }
            let h_l = cursor.anchor().saturating_sub(cursor.width());
            notes.push(Note::GatePass { stream: kind, window, h_l, h_l2: head, resend: false });
            for action in &actions {
                self.send(kind, action, views, out, notes);
            }
            self.stream_mut(kind).pending = actions
                .into_iter()
                .map(|action| PendingAction {
                    action,
                    last_sent: now,
                    attempts: 1,
                    closed: false,
                    gate_wait_noted: false,
                })
                .collect();
            break;
        }
    }

    fn send(
        &mut self,
        kind: StreamKind,
        action: &Action,
        views: &Views<'_>,
        out: &mut Vec<Outgoing>,
        notes: &mut Vec<Note>,
    ) {
        let behavior = self.config.behavior;
        match action {
            Action::Confirm { claim, round, subject, .. } => {
                let verdict = match behavior {
                    Behavior::Crashed => return,
                    Behavior::ByzantineApproveAll => true,
                    Behavior::ByzantineRejectAll => false,
                    Behavior::Honest | Behavior::Equivocating => match self.validate(claim, views) {
                        Ok(v) => v,
                        Err(e) => {
                            notes.push(Note::Abstain { subject: *subject, cause: e.to_string() });
                            return;
                        }
                    },
                };
                notes.push(Note::Confirm { subject: *subject, round: *round, verdict });
                let tx = self.transaction(
                    Destination::Token,
                    self.config.sc_a,
                    Some(*round),
                    Payload::Confirm { subject: *subject, verdict },
                );
                out.push(Outgoing { dest: Destination::Token, tx });
            }
            Action::Relay { dest, batch } => {
                if matches!(behavior, Behavior::Crashed | Behavior::ByzantineRejectAll) {
                    return;
                }
                let mut batch = batch.clone();
                if behavior == Behavior::Equivocating && !batch.items.is_empty() {
                    batch.items[0].value = TokenAmount(batch.items[0].value.0 + 1);
                    batch.subject = batch.compute_subject();
                }
                let round = target_round(views, *dest, self.config.sc_a, &batch);
                notes.push(Note::Vote {
                    stream: kind,
                    window: batch.window,
                    round,
                    subject: batch.subject,
                    items: batch.items.len(),
                });
                let tx = self.transaction(*dest, batch.target, Some(round), Payload::Transferring(batch));
                out.push(Outgoing { dest: *dest, tx });
            }
        }
    }

    fn validate(&self, claim: &RegistrationClaim, views: &Views<'_>) -> Result<bool, FetchFailure> {
        let registry = &views.token.state.token().expect("token chain").id.registry;
        let token_id = views.token.config.chain_id;
        match views.side.config.kind {
            ChainKind::NativeGasSide => validate_registration_nativegas(views.genesis, claim, registry, token_id),
            _ => validate_registration(views.genesis, claim, registry, token_id, views.side.height()),
        }
    }

    fn transaction(&mut self, dest: Destination, to: Address, round: Option<u64>, payload: Payload) -> Transaction {
        let (from, nonce) = match dest {
            Destination::Token => (self.config.token_address, &mut self.nonce_token),
            Destination::Side => (self.config.side_address, &mut self.nonce_side),
        };
        let tx = Transaction { from, to, value: TokenAmount::ZERO, gasprice: 0, round, nonce: *nonce, payload };
        *nonce += 1;
        tx
    }

    /// No unfinished work and nothing left to relay up to the heads.
    pub fn is_idle(&self, views: &Views<'_>) -> bool {
        if !self.token_stream.pending.is_empty() || !self.side_stream.pending.is_empty() {
            return false;
        }
        let token_head = views.token.height();
        let side_head = views.side.height();
        let from_t = self.token_stream.cursor.next;
        let from_s = self.side_stream.cursor.next;
        (from_t > token_head || self.plan(StreamKind::Token, views, (from_t, token_head)).is_empty())
            && (from_s > side_head || self.plan(StreamKind::Side, views, (from_s, side_head)).is_empty())
    }
}

/// Current round of the tally a batch feeds, read from the target contract.
pub fn target_round(views: &Views<'_>, dest: Destination, sc_a: Address, batch: &crate::chain::TransferBatch) -> u64 {
    match dest {
        Destination::Token => {
            views.token.state.token().and_then(|t| t.heads.get(&sc_a)).map_or(0, |h| h.tally_outbound.round)
        }
        Destination::Side => match &views.side.state.contracts {
            ContractSet::Gasless(s) if batch.target == s.config.register => s.register_tally.round,
            ContractSet::Gasless(s) => s.inbound_tally.round,
            ContractSet::Native(n) => match batch.direction {
                Direction::Inbound => n.consensus.inbound_tally.round,
                Direction::Outbound => n.consensus.outbound_tally.round,
            },
            ContractSet::Token(_) => 0,
        },
    }
}
