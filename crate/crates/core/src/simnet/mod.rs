//! Seeded discrete-event simulation of the bridge.
//!
//! Events fire in `(tick, sequence)` order. Chains produce blocks at fixed
//! intervals, witnesses and owner operators wake on a poll interval, and
//! user actions, reorgs and behavior changes fire at scheduled ticks. Every
//! random choice (drops, duplicates, delays, random reorgs) comes from one
//! ChaCha stream seeded by the scenario, so a run is a pure function of its
//! scenario.

pub mod invariants;
pub mod presets;
pub mod scenario;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical;
use crate::chain::{
    Chain, ChainConfig, ChainKind, ChainState, ContractSet, NativeContracts, Payload, TokenContracts, TradingAction,
    Transaction,
};
use crate::contracts::multisig::MultisigActionKind;
use crate::contracts::{
    BankApproval, BridgeHeadConfig, BridgeHeadState, ConsensusState, IdContract, Multisig, SideBankConfig,
    SideBankState,
};
use crate::genesis::{genesis_hash, Diagnostic, GenesisSpec, TokenGenesis};
use crate::types::{Address, ChainId, Digest, TokenAmount};
use crate::witness::{Behavior, Destination, Note, Views, WitnessConfig, WitnessNode};

pub use invariants::Check;
pub use scenario::{ScenarioConfig, SideChainSpec, UserAction};
pub use trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChainRef {
    Token,
    Side(usize),
}

#[derive(Debug, Clone)]
enum SimEvent {
    DeliverTx { chain: ChainRef, tx: Transaction },
    ProduceBlock(ChainRef),
    WitnessWake,
    OperatorWake,
    Register { side: usize },
    Workload(usize),
    InjectReorg { chain: ChainRef, depth: u64, delay: u64 },
    InjectFault { witness: usize, behavior: Behavior },
}

impl SimEvent {
    fn recurring(&self) -> bool {
        matches!(self, SimEvent::ProduceBlock(_) | SimEvent::WitnessWake | SimEvent::OperatorWake)
    }
}

/// A side chain and what the simulator tracks about it.
#[derive(Debug, Clone)]
pub struct SideRuntime {
    pub spec: SideChainSpec,
    /// Canonical genesis file served to witnesses.
    pub genesis_text: String,
    pub chain: Chain,
    /// Side chains start producing blocks once SC_ID lists them.
    pub launched: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub blocks: u64,
    pub sends: u64,
    pub drops: u64,
    pub dups: u64,
    pub resends: u64,
    pub gate_waits: u64,
    pub reorgs: u64,
    pub quiescent_points: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideSummary {
    pub name: String,
    pub chain_id: ChainId,
    pub registered: bool,
    pub sc_a_locked: TokenAmount,
    /// Circulating supply (gasless) or ledger total (native gas).
    pub side_value: TokenAmount,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub ticks: u64,
    pub quiescent: bool,
    pub registry: Vec<ChainId>,
    pub token_height: u64,
    pub sides: Vec<SideSummary>,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub tick: u64,
    pub check: Check,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub trace: Trace,
    /// Every check that failed, at a quiescent point or at the end.
    pub failures: Vec<Failure>,
    /// Results of the end-of-run checks.
    pub final_checks: Vec<Check>,
    pub checks_run: usize,
    pub summary: Summary,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failed(&self, prefix: &str) -> bool {
        self.failures.iter().any(|f| f.check.name.starts_with(prefix))
    }
}

#[derive(Debug, Clone, Default)]
struct Operator {
    last_sent: BTreeMap<String, u64>,
    attempts: Vec<u32>,
}

pub struct Sim {
    pub scenario: ScenarioConfig,
    rng: ChaCha8Rng,
    pub tick: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), SimEvent>,
    pub token: Chain,
    pub sides: Vec<SideRuntime>,
    mempools: BTreeMap<ChainRef, Vec<Transaction>>,
    pub witnesses: Vec<WitnessNode>,
    witness_side: Vec<usize>,
    operator: Operator,
    drops_left: u64,
    in_flight: usize,
    oneshots: usize,
    trace: Trace,
    failures: Vec<Failure>,
    checks_run: usize,
    registry_seen: Vec<ChainId>,
    last_checked: Option<Vec<Digest>>,
    trigger_fired: bool,
    pub stats: Stats,
    finished: bool,
}

fn token_state(s: &ScenarioConfig) -> ChainState {
    let t = &s.token_chain;
    let heads = s
        .side_chains
        .iter()
        .enumerate()
        .map(|(i, side)| {
            let witnesses = s.witnesses.iter().filter(|w| w.side_chain == side.name).map(|w| w.token_address).collect();
            let config = BridgeHeadConfig {
                side_variant: side.variant,
                witnesses,
                threshold: s.threshold_for(i),
                compensation_fee: s.contracts.compensation_fee,
                entrance_fee_minimum: s.contracts.entrance_fee_minimum,
                timeout_blocks: s.contracts.registration_timeout_blocks,
            };
            (side.sc_a, BridgeHeadState::new(config))
        })
        .collect();
    let contracts = ContractSet::Token(TokenContracts {
        id_address: t.id_contract,
        id: IdContract::new(Multisig::new(t.id_owners.clone(), t.id_required)),
        heads,
    });
    ChainState::new(t.allocations.clone(), contracts)
}

fn side_chain(s: &ScenarioConfig, i: usize) -> Chain {
    let side = &s.side_chains[i];
    let threshold = s.threshold_for(i);
    let (kind, total, contracts) = match &side.genesis {
        GenesisSpec::Gasless(g) => {
            let config = SideBankConfig {
                register: g.sc_register,
                inter: g.sc_inter,
                bank: g.sc_bank,
                witnesses: g.wit_addr_list.clone(),
                threshold,
                total_supply: s.token_chain.total_supply,
                bal_resv: g.bal_resv,
                bal_bank: g.bal_bank,
                gate: s.mode,
                approval: side.bank_approval,
            };
            let register = Multisig::new(side.register_owners.clone(), side.owners_required);
            let bank = Multisig::new(side.bank_owners.clone(), side.owners_required);
            (
                ChainKind::GaslessSide,
                s.token_chain.total_supply,
                ContractSet::Gasless(SideBankState::new(config, register, bank)),
            )
        }
        GenesisSpec::NativeGas(g) => (
            ChainKind::NativeGasSide,
            TokenAmount::ZERO,
            ContractSet::Native(NativeContracts {
                consensus_address: g.sc_register,
                trading_address: g.sc_trading,
                consensus: ConsensusState::new(g.chain_id, g.wit_addr_list.clone(), threshold),
            }),
        ),
    };
    let config = ChainConfig {
        chain_id: side.genesis.chain_id(),
        kind,
        min_gasprice: 0,
        fee_sink: Address::ZERO,
        total_supply: total,
    };
    Chain::new(config, ChainState::new(BTreeMap::new(), contracts), genesis_hash(&side.genesis))
}

fn tx(from: Address, to: Address, value: TokenAmount, gasprice: u64, nonce: u64, payload: Payload) -> Transaction {
    Transaction { from, to, value, gasprice, round: None, nonce, payload }
}

impl Sim {
    /// Build a simulation from a scenario that passes validation.
    pub fn new(scenario: ScenarioConfig) -> Result<Sim, Vec<Diagnostic>> {
        let diags = scenario.validate();
        if !diags.is_empty() {
            return Err(diags);
        }
        let t = &scenario.token_chain;
        let token_genesis = TokenGenesis { chain_id: t.chain_id, total_supply: t.total_supply };
        let token = Chain::new(
            ChainConfig {
                chain_id: t.chain_id,
                kind: ChainKind::Token,
                min_gasprice: t.min_gasprice,
                fee_sink: t.fee_sink,
                total_supply: t.total_supply,
            },
            token_state(&scenario),
            canonical::digest_of(&token_genesis),
        );
        let sides: Vec<SideRuntime> = (0..scenario.side_chains.len())
            .map(|i| SideRuntime {
                spec: scenario.side_chains[i].clone(),
                genesis_text: scenario.side_chains[i].genesis.to_canonical(),
                chain: side_chain(&scenario, i),
                launched: false,
            })
            .collect();
        let mut witnesses = Vec::new();
        let mut witness_side = Vec::new();
        for w in &scenario.witnesses {
            let i = scenario.side_index(&w.side_chain).expect("validated");
            let side = &scenario.side_chains[i];
            witnesses.push(WitnessNode::new(WitnessConfig {
                label: w.label.clone(),
                token_address: w.token_address,
                side_address: w.side_address,
                side_chain: side.genesis.chain_id(),
                sc_a: side.sc_a,
                omega_token: t.omega,
                omega_side: side.omega,
                timeout: scenario.contracts.timeout_ticks,
                sleep: scenario.contracts.sleep_ticks,
                behavior: scenario.fault_plan.witness_behaviors.get(&w.label).copied().unwrap_or_default(),
            }));
            witness_side.push(i);
        }
        let mut mempools = BTreeMap::new();
        mempools.insert(ChainRef::Token, Vec::new());
        for i in 0..sides.len() {
            mempools.insert(ChainRef::Side(i), Vec::new());
        }
        let mut sim = Sim {
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            tick: 0,
            seq: 0,
            queue: BTreeMap::new(),
            token,
            sides,
            mempools,
            witnesses,
            witness_side,
            operator: Operator { last_sent: BTreeMap::new(), attempts: vec![0; scenario.side_chains.len()] },
            drops_left: scenario.fault_plan.max_drops,
            in_flight: 0,
            oneshots: 0,
            trace: Trace::default(),
            failures: Vec::new(),
            checks_run: 0,
            registry_seen: Vec::new(),
            last_checked: None,
            trigger_fired: false,
            stats: Stats::default(),
            finished: false,
            scenario,
        };
        sim.trace.header(&sim.scenario);
        sim.schedule_initial();
        Ok(sim)
    }

    fn schedule(&mut self, tick: u64, event: SimEvent) {
        if !event.recurring() && !matches!(event, SimEvent::DeliverTx { .. }) {
            self.oneshots += 1;
        }
        self.queue.insert((tick, self.seq), event);
        self.seq += 1;
    }

    fn chain_ref(&self, name: &str) -> ChainRef {
        match self.scenario.side_index(name) {
            Some(i) => ChainRef::Side(i),
            None => ChainRef::Token,
        }
    }

    fn schedule_initial(&mut self) {
        let s = self.scenario.clone();
        for (i, side) in s.side_chains.iter().enumerate() {
            self.schedule(side.registration.at_tick, SimEvent::Register { side: i });
        }
        for (i, w) in s.workload.iter().enumerate() {
            self.schedule(w.tick, SimEvent::Workload(i));
        }
        let mut reorgs: Vec<(u64, ChainRef, u64, u64)> =
            s.fault_plan.reorgs.iter().map(|r| (r.tick, self.chain_ref(&r.chain), r.depth, r.delay)).collect();
        if let Some(r) = &s.fault_plan.random_reorgs {
            let mut drawn = Vec::new();
            for _ in 0..r.count {
                let tick = self.rng.random_range(r.from_tick..=r.to_tick);
                let pick = self.rng.random_range(0..r.chains.len());
                let chain = self.chain_ref(&r.chains[pick]);
                let depth = self.rng.random_range(1..=r.max_depth.max(1));
                let delay = self.rng.random_range(0..=depth);
                drawn.push((tick, chain, depth, delay));
            }
            drawn.sort_by_key(|d| d.0);
            reorgs.extend(drawn);
        }
        for (tick, chain, depth, delay) in reorgs {
            self.schedule(tick, SimEvent::InjectReorg { chain, depth, delay });
        }
        for c in &s.fault_plan.behavior_changes {
            let witness = s.witnesses.iter().position(|w| w.label == c.witness).expect("validated");
            self.schedule(c.tick, SimEvent::InjectFault { witness, behavior: c.behavior });
        }
        self.schedule(s.token_chain.block_interval, SimEvent::ProduceBlock(ChainRef::Token));
        for (i, side) in s.side_chains.iter().enumerate() {
            self.schedule(side.block_interval, SimEvent::ProduceBlock(ChainRef::Side(i)));
        }
        self.schedule(s.contracts.poll_interval, SimEvent::WitnessWake);
        self.schedule(s.contracts.poll_interval, SimEvent::OperatorWake);
    }

    fn name(&self, chain: ChainRef) -> String {
        match chain {
            ChainRef::Token => "token".to_string(),
            ChainRef::Side(i) => self.sides[i].spec.name.clone(),
        }
    }

    pub fn chain(&self, chain: ChainRef) -> &Chain {
        match chain {
            ChainRef::Token => &self.token,
            ChainRef::Side(i) => &self.sides[i].chain,
        }
    }

    fn chain_mut(&mut self, chain: ChainRef) -> &mut Chain {
        match chain {
            ChainRef::Token => &mut self.token,
            ChainRef::Side(i) => &mut self.sides[i].chain,
        }
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    fn record(&mut self, kind: &str, chain: Option<ChainRef>, payload: Value) {
        let name = chain.map(|c| self.name(c));
        self.trace.push(self.tick, kind, name.as_deref(), payload);
    }

    /// Hand a transaction to the network. Protocol messages (`faulty`) are
    /// subject to drops and duplication; every message is delayed.
    fn submit(&mut self, chain: ChainRef, tx: Transaction, sender: &str, faulty: bool) {
        self.stats.sends += 1;
        let hash = tx.hash();
        self.record("send", Some(chain), json!({ "sender": sender, "hash": hash, "tx": tx }));
        let fp = &self.scenario.fault_plan;
        let (drop_rate, dup_rate) = (fp.drop_rate, fp.dup_rate);
        if faulty && self.drops_left > 0 && self.rng.random_bool(drop_rate) {
            self.drops_left -= 1;
            self.stats.drops += 1;
            self.record("drop", Some(chain), json!({ "hash": hash }));
            return;
        }
        let delay = self.delay();
        self.in_flight += 1;
        self.schedule(self.tick + delay, SimEvent::DeliverTx { chain, tx: tx.clone() });
        if faulty && self.rng.random_bool(dup_rate) {
            self.stats.dups += 1;
            let delay = self.delay();
            self.record("dup", Some(chain), json!({ "hash": hash, "delay": delay }));
            self.in_flight += 1;
            self.schedule(self.tick + delay, SimEvent::DeliverTx { chain, tx });
        }
    }

    fn delay(&mut self) -> u64 {
        let max = self.scenario.fault_plan.max_delay.max(1);
        self.rng.random_range(1..=max)
    }

    /// Process every event of the next tick. Returns `false` once the run
    /// is over.
    pub fn step(&mut self) -> bool {
        if self.finished {
            return false;
        }
        let Some((&(tick, _), _)) = self.queue.first_key_value() else {
            self.finished = true;
            return false;
        };
        if tick > self.scenario.max_ticks {
            self.finished = true;
            return false;
        }
        self.tick = tick;
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 != tick {
                break;
            }
            let event = entry.remove();
            if !event.recurring() && !matches!(event, SimEvent::DeliverTx { .. }) {
                self.oneshots -= 1;
            }
            self.handle(event);
        }
        self.end_of_tick();
        !self.finished
    }

    /// Run to quiescence or `max_ticks`, then evaluate the final checks.
    pub fn run(&mut self) -> Outcome {
        while self.step() {}
        self.finish()
    }

    fn handle(&mut self, event: SimEvent) {
        match event {
            SimEvent::DeliverTx { chain, tx } => {
                self.in_flight -= 1;
                let hash = tx.hash();
                self.record("deliver", Some(chain), json!({ "hash": hash }));
                let pool = self.mempools.get_mut(&chain).expect("mempool per chain");
                if !pool.iter().any(|t| t.hash() == hash) {
                    pool.push(tx);
                }
            }
            SimEvent::ProduceBlock(chain) => {
                let interval = match chain {
                    ChainRef::Token => self.scenario.token_chain.block_interval,
                    ChainRef::Side(i) => self.sides[i].spec.block_interval,
                };
                self.schedule(self.tick + interval, SimEvent::ProduceBlock(chain));
                if let ChainRef::Side(i) = chain {
                    if !self.sides[i].launched {
                        return;
                    }
                }
                self.produce(chain);
            }
            SimEvent::WitnessWake => {
                self.schedule(self.tick + self.scenario.contracts.poll_interval, SimEvent::WitnessWake);
                self.wake_witnesses();
            }
            SimEvent::OperatorWake => {
                self.schedule(self.tick + self.scenario.contracts.poll_interval, SimEvent::OperatorWake);
                self.operate();
            }
            SimEvent::Register { side } => self.register(side),
            SimEvent::Workload(i) => self.workload(i),
            SimEvent::InjectReorg { chain, depth, delay } => self.inject_reorg(chain, depth, delay),
            SimEvent::InjectFault { witness, behavior } => {
                self.witnesses[witness].config.behavior = behavior;
                let label = self.witnesses[witness].config.label.clone();
                self.record("fault", None, json!({ "witness": label, "behavior": behavior }));
            }
        }
    }

    fn produce(&mut self, chain: ChainRef) {
        let txs = std::mem::take(self.mempools.get_mut(&chain).expect("mempool per chain"));
        let block = self.chain_mut(chain).apply_block(txs).clone();
        self.stats.blocks += 1;
        let hashes: Vec<Digest> = block.transactions.iter().map(Transaction::hash).collect();
        self.record(
            "block",
            Some(chain),
            json!({
                "height": block.height,
                "hash": block.hash,
                "parent_hash": block.parent_hash,
                "transactions": hashes,
                "events": block.events,
                "rejected": block.rejected,
            }),
        );
        if chain == ChainRef::Token {
            self.after_token_block();
        }
    }

    fn after_token_block(&mut self) {
        let registry = self.token.state.token().expect("token chain").id.registry.clone();
        for i in 0..self.sides.len() {
            let side = &mut self.sides[i];
            if !side.launched && registry.contains(&side.spec.genesis.chain_id()) {
                side.launched = true;
                self.record("launch", Some(ChainRef::Side(i)), json!({ "token_height": self.token.height() }));
            }
        }
        if self.trigger_fired {
            return;
        }
        let Some(trigger) = self.scenario.fault_plan.triggered_reorg.clone() else { return };
        let i = self.scenario.side_index(&trigger.chain).expect("validated");
        let head = invariants::sc_a(&self.token, &self.sides[i]);
        if head.log.iter().any(|b| b.success && !b.sources.is_empty()) {
            self.trigger_fired = true;
            let event = SimEvent::InjectReorg { chain: ChainRef::Side(i), depth: trigger.depth, delay: trigger.delay };
            self.schedule(self.tick, event);
        }
    }

    fn wake_witnesses(&mut self) {
        for w in 0..self.witnesses.len() {
            let i = self.witness_side[w];
            let outage = self
                .scenario
                .fault_plan
                .genesis_outages
                .iter()
                .any(|o| o.chain == self.sides[i].spec.name && (o.from_tick..=o.to_tick).contains(&self.tick));
            let views = Views {
                token: &self.token,
                side: &self.sides[i].chain,
                genesis: (!outage).then_some(self.sides[i].genesis_text.as_str()),
            };
            let (out, notes) = self.witnesses[w].wake(self.tick, &views);
            let label = self.witnesses[w].config.label.clone();
            for note in notes {
                match note {
                    Note::Resend { .. } => self.stats.resends += 1,
                    Note::GateWait { .. } => self.stats.gate_waits += 1,
                    _ => {}
                }
                let mut payload = serde_json::to_value(&note).expect("note serializes");
                payload["witness"] = Value::String(label.clone());
                self.record("note", Some(ChainRef::Side(i)), payload);
            }
            for o in out {
                let chain = match o.dest {
                    Destination::Token => ChainRef::Token,
                    Destination::Side => ChainRef::Side(i),
                };
                self.submit(chain, o.tx, &label, true);
            }
        }
    }

    fn register(&mut self, i: usize) {
        let side = &self.sides[i].spec;
        let r = &side.registration;
        let attempt = self.operator.attempts[i];
        self.operator.attempts[i] += 1;
        let payload = Payload::RegistrationRequest {
            chain_id: r.claimed_chain_id.unwrap_or(side.genesis.chain_id()),
            genesis_hash: r.claimed_genesis_hash.unwrap_or_else(|| genesis_hash(&side.genesis)),
            beneficiary: r.beneficiary,
        };
        let t = tx(r.creator, side.sc_a, r.attached, self.scenario.token_chain.min_gasprice, attempt as u64, payload);
        self.submit(ChainRef::Token, t, "creator", false);
    }

    fn workload(&mut self, index: usize) {
        let action = self.scenario.workload[index].action.clone();
        let nonce = index as u64;
        let gas = self.scenario.token_chain.min_gasprice;
        let (chain, t) = match action {
            UserAction::Deposit { chain, from, to, value } => {
                let i = self.scenario.side_index(&chain).expect("validated");
                let sc_a = self.sides[i].spec.sc_a;
                (ChainRef::Token, tx(from, sc_a, value, gas, nonce, Payload::UserTransfer { to }))
            }
            UserAction::TokenTransfer { from, to, value } => {
                (ChainRef::Token, tx(from, to, value, gas, nonce, Payload::UserTransfer { to }))
            }
            UserAction::Withdraw { chain, from, to, value } => {
                let i = self.scenario.side_index(&chain).expect("validated");
                let t = match &self.sides[i].spec.genesis {
                    GenesisSpec::Gasless(g) => tx(from, g.sc_inter, value, 0, nonce, Payload::UserTransfer { to }),
                    GenesisSpec::NativeGas(g) => {
                        let action = TradingAction::Withdraw { to, value };
                        tx(from, g.sc_trading, TokenAmount::ZERO, 0, nonce, Payload::TradingAction(action))
                    }
                };
                (ChainRef::Side(i), t)
            }
            UserAction::Trade { chain, from, to, value } => {
                let i = self.scenario.side_index(&chain).expect("validated");
                let t = match &self.sides[i].spec.genesis {
                    GenesisSpec::Gasless(_) => tx(from, to, value, 0, nonce, Payload::UserTransfer { to }),
                    GenesisSpec::NativeGas(g) => {
                        let action = TradingAction::Transfer { to, value };
                        tx(from, g.sc_trading, TokenAmount::ZERO, 0, nonce, Payload::TradingAction(action))
                    }
                };
                (ChainRef::Side(i), t)
            }
            UserAction::Record { chain, from, data } => {
                let i = self.scenario.side_index(&chain).expect("validated");
                (ChainRef::Side(i), tx(from, from, TokenAmount::ZERO, 0, nonce, Payload::IoTRecord { data }))
            }
        };
        self.submit(chain, t, "user", false);
    }

    /// Owner approvals and creator follow-ups the current canonical state
    /// calls for, keyed so repeated wake-ups resend rather than duplicate.
    fn operator_needs(&self) -> Vec<(String, ChainRef, Transaction, bool)> {
        let mut needs = Vec::new();
        let t = self.token.state.token().expect("token chain");
        let gas = self.scenario.token_chain.min_gasprice;
        for (i, side) in self.sides.iter().enumerate() {
            let sc_a = side.spec.sc_a;
            let auth = MultisigActionKind::AuthorizeCaller { caller: sc_a };
            let approved = t.id.owners.approvals(&auth);
            for o in t.id.owners.owners.iter().filter(|o| !approved.contains(o)) {
                let call = tx(*o, t.id_address, TokenAmount::ZERO, 0, 0, Payload::MultisigAction(auth.clone()));
                needs.push((format!("id/{i}/{o}"), ChainRef::Token, call, true));
            }
            let head = &t.heads[&sc_a];
            if let Some(p) = &head.pending {
                if self.token.height() >= p.deadline {
                    let round = head.tally_registration.round;
                    let call =
                        tx(p.creator, sc_a, TokenAmount::ZERO, gas, round, Payload::Expire { chain_id: p.chain_id });
                    needs.push((format!("expire/{i}/{round}"), ChainRef::Token, call, false));
                }
            }
            if !side.launched {
                continue;
            }
            if let ContractSet::Gasless(s) = &side.chain.state.contracts {
                let chain = ChainRef::Side(i);
                let mut owner_calls = |owners: &Multisig, to: Address, action: MultisigActionKind, key: &str| {
                    let approved = owners.approvals(&action);
                    for o in owners.owners.iter().filter(|o| !approved.contains(o)) {
                        let call = tx(*o, to, TokenAmount::ZERO, 0, 0, Payload::MultisigAction(action.clone()));
                        needs.push((format!("{key}/{i}/{o}"), chain, call, true));
                    }
                };
                let inter = MultisigActionKind::AuthorizeCaller { caller: s.config.inter };
                if !s.inter_authorized {
                    owner_calls(&s.bank_owners, s.config.bank, inter, "bank");
                }
                if s.registration_paid && !s.suicided {
                    owner_calls(&s.register_owners, s.config.register, MultisigActionKind::Suicide, "suicide");
                }
                if s.config.approval == BankApproval::PerTransfer {
                    for subject in s.pending_releases.keys() {
                        let action = MultisigActionKind::ReleasePending { subject: *subject };
                        owner_calls(&s.bank_owners, s.config.bank, action, &format!("release/{subject}"));
                    }
                }
            }
        }
        needs
    }

    fn operate(&mut self) {
        let timeout = self.scenario.contracts.timeout_ticks;
        for (key, chain, call, faulty) in self.operator_needs() {
            let due = self.operator.last_sent.get(&key).is_none_or(|t| self.tick >= t + timeout);
            if due {
                self.operator.last_sent.insert(key, self.tick);
                let sender = if faulty { "owner" } else { "creator" };
                self.submit(chain, call, sender, faulty);
            }
        }
        // A creator whose request reverted tries again while attempts last.
        for i in 0..self.sides.len() {
            let head = invariants::sc_a(&self.token, &self.sides[i]);
            let made = self.operator.attempts[i];
            let closed = head.tally_registration.round;
            if made > 0
                && made < self.sides[i].spec.registration.max_attempts
                && !head.registered
                && head.pending.is_none()
                && closed >= made as u64
            {
                self.register(i);
            }
        }
    }

    fn inject_reorg(&mut self, chain: ChainRef, depth: u64, delay: u64) {
        let launched = match chain {
            ChainRef::Token => true,
            ChainRef::Side(i) => self.sides[i].launched,
        };
        let height = self.chain(chain).height();
        if !launched || depth > height {
            self.record("reorg_skipped", Some(chain), json!({ "depth": depth, "height": height }));
            return;
        }
        let c = self.chain(chain);
        let old_head = c.head().hash;
        let displaced: usize = c.blocks[(height - depth) as usize + 1..].iter().map(|b| b.transactions.len()).sum();
        let (blocks, leftover) = c.build_fork(depth, delay, &BTreeSet::new()).expect("depth checked");
        self.chain_mut(chain).reorg(depth, blocks).expect("fork built from this chain");
        self.stats.reorgs += 1;
        let pool = self.mempools.get_mut(&chain).expect("mempool per chain");
        let requeued = leftover.len();
        let mut merged = leftover;
        for t in pool.drain(..) {
            if !merged.iter().any(|m| m.hash() == t.hash()) {
                merged.push(t);
            }
        }
        *pool = merged;
        let new_head = self.chain(chain).head().hash;
        self.record(
            "reorg",
            Some(chain),
            json!({
                "depth": depth,
                "delay": delay,
                "fork_height": height - depth,
                "old_head": old_head,
                "new_head": new_head,
                "displaced": displaced,
                "requeued": requeued,
            }),
        );
        if chain == ChainRef::Token {
            self.after_token_block();
        }
    }

    /// Nothing in flight, nothing waiting in mempools, no open quorum
    /// instance, and every honest witness has nothing left to relay.
    pub fn quiescent(&self) -> bool {
        if self.in_flight > 0 || self.mempools.values().any(|p| !p.is_empty()) {
            return false;
        }
        for side in &self.sides {
            if invariants::sc_a(&self.token, side).pending.is_some() {
                return false;
            }
            if let ContractSet::Gasless(s) = &side.chain.state.contracts {
                if !s.pending_releases.is_empty() {
                    return false;
                }
            }
        }
        if !self.operator_needs().is_empty() {
            return false;
        }
        self.witnesses.iter().zip(&self.witness_side).all(|(w, i)| {
            !w.is_honest() || w.is_idle(&Views { token: &self.token, side: &self.sides[*i].chain, genesis: None })
        })
    }

    fn head_hashes(&self) -> Vec<Digest> {
        std::iter::once(self.token.head().hash).chain(self.sides.iter().map(|s| s.chain.head().hash)).collect()
    }

    fn run_checks(&mut self, checks: Vec<Check>, kind: &str) {
        self.checks_run += checks.len();
        let results: BTreeMap<&str, bool> = checks.iter().map(|c| (c.name.as_str(), c.ok)).collect();
        let failed: Vec<&Check> = checks.iter().filter(|c| !c.ok).collect();
        let payload = json!({ "results": results, "failures": failed });
        self.record(kind, None, payload);
        for c in checks.into_iter().filter(|c| !c.ok) {
            self.failures.push(Failure { tick: self.tick, check: c });
        }
    }

    fn state_checks(&mut self) {
        let total = self.scenario.token_chain.total_supply;
        let checks = invariants::state_checks(&self.token, &self.sides, total, &self.registry_seen);
        self.registry_seen = self.token.state.token().expect("token chain").id.registry.chain_ids.clone();
        self.run_checks(checks, "invariants");
    }

    fn end_of_tick(&mut self) {
        if !self.quiescent() {
            return;
        }
        let heads = self.head_hashes();
        if self.last_checked.as_ref() != Some(&heads) {
            self.last_checked = Some(heads);
            self.stats.quiescent_points += 1;
            self.record("quiescent", None, json!({ "token_height": self.token.height() }));
            self.state_checks();
        }
        if self.oneshots == 0 {
            self.finished = true;
        }
    }

    pub fn summary(&self) -> Summary {
        let sides = self
            .sides
            .iter()
            .map(|side| {
                let head = invariants::sc_a(&self.token, side);
                let side_value = match &side.chain.state.contracts {
                    ContractSet::Gasless(s) => s.circulating(),
                    ContractSet::Native(n) => n.consensus.ledger.total(),
                    ContractSet::Token(_) => TokenAmount::ZERO,
                };
                SideSummary {
                    name: side.spec.name.clone(),
                    chain_id: side.spec.genesis.chain_id(),
                    registered: head.registered,
                    sc_a_locked: head.locked,
                    side_value,
                    height: side.chain.height(),
                }
            })
            .collect();
        Summary {
            ticks: self.tick,
            quiescent: self.quiescent(),
            registry: self.token.state.token().expect("token chain").id.registry.chain_ids.clone(),
            token_height: self.token.height(),
            sides,
            stats: self.stats.clone(),
        }
    }

    fn finish(&mut self) -> Outcome {
        let quiescent = self.quiescent();
        if self.last_checked.as_ref() != Some(&self.head_hashes()) {
            self.state_checks();
        }
        let pairs: Vec<(usize, &WitnessNode)> = self.witness_side.iter().copied().zip(self.witnesses.iter()).collect();
        let mut checks = invariants::final_checks(&self.token, &self.sides, &pairs);
        checks.push(Check {
            name: "liveness".into(),
            ok: quiescent,
            detail: if quiescent {
                format!("quiescent at tick {}", self.tick)
            } else {
                format!("still active at tick {} (max_ticks {})", self.tick, self.scenario.max_ticks)
            },
        });
        self.run_checks(checks.clone(), "final_checks");
        let summary = self.summary();
        self.record("summary", None, serde_json::to_value(&summary).expect("summary serializes"));
        self.trace.seal(self.tick);
        Outcome {
            trace: std::mem::take(&mut self.trace),
            failures: self.failures.clone(),
            final_checks: checks,
            checks_run: self.checks_run,
            summary,
        }
    }
}

/// Build and run a scenario in one call.
pub fn run(scenario: ScenarioConfig) -> Result<Outcome, Vec<Diagnostic>> {
    Ok(Sim::new(scenario)?.run())
}
