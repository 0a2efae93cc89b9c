//! Scenario files: chains, witnesses, contract parameters, faults and the
//! user workload, plus their static validation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::contracts::quorum::is_safe_threshold;
use crate::contracts::{default_threshold, BankApproval, GateMode};
use crate::genesis::{Diagnostic, GenesisSpec, SideVariant};
use crate::types::{Address, ChainId, Digest, TokenAmount};
use crate::witness::Behavior;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenChainSpec {
    pub chain_id: ChainId,
    pub total_supply: TokenAmount,
    /// Ticks between blocks.
    pub block_interval: u64,
    pub omega: u64,
    pub min_gasprice: u64,
    pub fee_sink: Address,
    /// Initial balances. They must add up to the total supply.
    pub allocations: BTreeMap<Address, TokenAmount>,
    /// SC_ID's address and owners.
    pub id_contract: Address,
    pub id_owners: Vec<Address>,
    pub id_required: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationSpec {
    pub creator: Address,
    /// Receives `Bal_Resv` on the side chain.
    pub beneficiary: Address,
    /// Value attached to the request, compensation fee included.
    pub attached: TokenAmount,
    pub at_tick: u64,
    /// Total requests the creator sends if earlier ones revert.
    #[serde(default = "one")]
    pub max_attempts: u32,
    /// Claim a chain id other than the genesis one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_chain_id: Option<ChainId>,
    /// Claim a genesis hash other than the real one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_genesis_hash: Option<Digest>,
}

fn one() -> u32 {
    1
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideChainSpec {
    pub name: String,
    pub variant: SideVariant,
    pub genesis: GenesisSpec,
    pub block_interval: u64,
    pub omega: u64,
    /// This chain's SC_A on the token chain.
    pub sc_a: Address,
    /// Quorum threshold; `N/2 + 1` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    #[serde(default)]
    pub register_owners: Vec<Address>,
    #[serde(default)]
    pub bank_owners: Vec<Address>,
    #[serde(default = "two")]
    pub owners_required: usize,
    #[serde(default)]
    pub bank_approval: BankApproval,
    pub registration: RegistrationSpec,
}

impl SideChainSpec {
    pub fn threshold(&self) -> usize {
        self.threshold.unwrap_or_else(|| default_threshold(self.genesis.witnesses().len()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSpec {
    pub label: String,
    pub token_address: Address,
    pub side_address: Address,
    /// Name of the side chain this witness serves.
    pub side_chain: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractParams {
    pub compensation_fee: TokenAmount,
    pub entrance_fee_minimum: TokenAmount,
    /// Ticks a witness waits for a result before resending.
    pub timeout_ticks: u64,
    /// Ticks slept after a timeout.
    pub sleep_ticks: u64,
    /// Token-chain blocks before a pending registration may be reverted.
    pub registration_timeout_blocks: u64,
    /// Ticks between witness and operator wake-ups.
    pub poll_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReorgSpec {
    pub tick: u64,
    /// `"token"` or a side chain name.
    pub chain: String,
    pub depth: u64,
    /// Blocks the removed transactions slide by in the replacement.
    #[serde(default)]
    pub delay: u64,
}

/// Reorgs drawn from the run's random source before the first tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomReorgs {
    pub count: u32,
    pub max_depth: u64,
    pub from_tick: u64,
    pub to_tick: u64,
    pub chains: Vec<String>,
}

/// A reorg fired right after SC_A of `chain` first unlocks a batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggeredReorg {
    pub chain: String,
    pub depth: u64,
    #[serde(default)]
    pub delay: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorChange {
    pub tick: u64,
    pub witness: String,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisOutage {
    pub chain: String,
    pub from_tick: u64,
    pub to_tick: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultPlan {
    #[serde(default)]
    pub drop_rate: f64,
    #[serde(default)]
    pub dup_rate: f64,
    /// Upper bound of the uniform 1..=max_delay message delay.
    #[serde(default)]
    pub max_delay: u64,
    /// Total drops allowed over the run.
    #[serde(default)]
    pub max_drops: u64,
    #[serde(default)]
    pub reorgs: Vec<ReorgSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_reorgs: Option<RandomReorgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triggered_reorg: Option<TriggeredReorg>,
    /// Initial behavior by witness label; unlisted witnesses are honest.
    #[serde(default)]
    pub witness_behaviors: BTreeMap<String, Behavior>,
    #[serde(default)]
    pub behavior_changes: Vec<BehaviorChange>,
    #[serde(default)]
    pub genesis_outages: Vec<GenesisOutage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum UserAction {
    /// Lock on SC_A for `to` on the side chain.
    Deposit { chain: String, from: Address, to: Address, value: TokenAmount },
    /// Lock on the side chain for `to` on the token chain.
    Withdraw { chain: String, from: Address, to: Address, value: TokenAmount },
    /// Transfer within a side chain.
    Trade { chain: String, from: Address, to: Address, value: TokenAmount },
    /// Transfer within the token chain.
    TokenTransfer { from: Address, to: Address, value: TokenAmount },
    /// Store an IoT data record on a side chain.
    Record { chain: String, from: Address, data: String },
}

impl UserAction {
    pub fn chain(&self) -> Option<&str> {
        match self {
            UserAction::Deposit { chain, .. }
            | UserAction::Withdraw { chain, .. }
            | UserAction::Trade { chain, .. }
            | UserAction::Record { chain, .. } => Some(chain),
            UserAction::TokenTransfer { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadItem {
    pub tick: u64,
    pub action: UserAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub max_ticks: u64,
    #[serde(default)]
    pub mode: GateMode,
    pub token_chain: TokenChainSpec,
    pub side_chains: Vec<SideChainSpec>,
    pub witnesses: Vec<WitnessSpec>,
    pub contracts: ContractParams,
    #[serde(default)]
    pub fault_plan: FaultPlan,
    #[serde(default)]
    pub workload: Vec<WorkloadItem>,
    /// Force every side chain's quorum threshold, skipping the majority
    /// rule. Exists to show what an unsafe threshold permits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_override: Option<usize>,
}

fn diag(field: impl Into<String>, rule: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic::new(field, rule, message)
}

impl ScenarioConfig {
    /// Parse and validate scenario text. Every problem found is reported.
    pub fn parse(text: &str) -> Result<ScenarioConfig, Vec<Diagnostic>> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| vec![diag("scenario", "json", format!("not valid JSON: {e}"))])?;
        let scenario = Self::from_value(&value)?;
        let diags = scenario.validate();
        if diags.is_empty() {
            Ok(scenario)
        } else {
            Err(diags)
        }
    }

    /// Structural parse. Genesis records are checked field by field first so
    /// a missing or unknown genesis field is named precisely.
    pub fn from_value(value: &Value) -> Result<ScenarioConfig, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        if let Some(sides) = value.get("side_chains").and_then(Value::as_array) {
            for (i, side) in sides.iter().enumerate() {
                let variant = side.get("variant").cloned().map(serde_json::from_value::<SideVariant>);
                let genesis = side.get("genesis");
                match (variant, genesis) {
                    (Some(Ok(variant)), Some(g)) => {
                        if let Err(ds) = GenesisSpec::from_value(variant, g) {
                            diags.extend(
                                ds.into_iter().map(|d| Diagnostic {
                                    field: format!("side_chains[{i}].genesis.{}", d.field),
                                    ..d
                                }),
                            );
                        }
                    }
                    (Some(Err(e)), _) => {
                        diags.push(diag(format!("side_chains[{i}].variant"), "field-type", e.to_string()))
                    }
                    (None, _) => diags.push(diag(
                        format!("side_chains[{i}].variant"),
                        "required-field",
                        "side chain variant is missing",
                    )),
                    (_, None) => diags.push(diag(
                        format!("side_chains[{i}].genesis"),
                        "required-field",
                        "side chain genesis is missing",
                    )),
                }
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }
        serde_json::from_value(value.clone()).map_err(|e| vec![diag("scenario", "field-type", e.to_string())])
    }

    /// Effective quorum threshold of side chain `i`.
    pub fn threshold_for(&self, i: usize) -> usize {
        self.threshold_override.unwrap_or_else(|| self.side_chains[i].threshold())
    }

    pub fn side_index(&self, name: &str) -> Option<usize> {
        self.side_chains.iter().position(|s| s.name == name)
    }

    fn chain_known(&self, name: &str) -> bool {
        name == "token" || self.side_index(name).is_some()
    }

    /// Static invariants of the whole scenario.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let t = &self.token_chain;
        let allocated: u128 = t.allocations.values().map(|v| v.0 as u128).sum();
        if allocated != t.total_supply.0 as u128 {
            d.push(diag(
                "token_chain.allocations",
                "allocations-equal-total-supply",
                format!("allocations add up to {allocated}, total supply is {}", t.total_supply),
            ));
        }
        if t.block_interval == 0 {
            d.push(diag("token_chain.block_interval", "positive", "block interval must be at least one tick"));
        }
        if t.id_owners.is_empty() || t.id_required == 0 || t.id_required > t.id_owners.len() {
            d.push(diag("token_chain.id_required", "multisig-n-of-m", "SC_ID needs 1 <= required <= owners"));
        }
        if self.contracts.poll_interval == 0 {
            d.push(diag("contracts.poll_interval", "positive", "poll interval must be at least one tick"));
        }
        if self.contracts.timeout_ticks == 0 {
            d.push(diag("contracts.timeout_ticks", "positive", "timeout must be at least one tick"));
        }
        if self.max_ticks == 0 {
            d.push(diag("max_ticks", "positive", "max_ticks must be positive"));
        }
        if self.side_chains.is_empty() {
            d.push(diag("side_chains", "non-empty", "at least one side chain is required"));
        }

        let mut names = BTreeSet::new();
        let mut ids = BTreeSet::new();
        let mut token_side = BTreeSet::new();
        for (i, s) in self.side_chains.iter().enumerate() {
            let f = |name: &str| format!("side_chains[{i}].{name}");
            if s.name == "token" || !names.insert(s.name.as_str()) {
                d.push(diag(f("name"), "unique-name", format!("side chain name {:?} is reserved or repeated", s.name)));
            }
            if s.genesis.variant() != s.variant {
                d.push(diag(f("variant"), "variant-matches-genesis", "variant tag disagrees with the genesis fields"));
            }
            let id = s.genesis.chain_id();
            if id == t.chain_id {
                d.push(diag(f("genesis.Chain_ID"), "distinct-chain-id", "side chain reuses the token chain id"));
            }
            if !ids.insert(id) {
                d.push(diag(f("genesis.Chain_ID"), "distinct-chain-id", "two side chains share a chain id"));
            }
            for diagnostic in s.genesis.validate(t.total_supply, self.contracts.entrance_fee_minimum) {
                d.push(Diagnostic { field: f(&format!("genesis.{}", diagnostic.field)), ..diagnostic });
            }
            if s.block_interval == 0 {
                d.push(diag(f("block_interval"), "positive", "block interval must be at least one tick"));
            }
            let n = s.genesis.witnesses().len();
            if let Some(k) = self.threshold_override {
                if k == 0 || k > n {
                    d.push(diag("threshold_override", "threshold-range", format!("{k} is outside 1..={n}")));
                }
            } else if !is_safe_threshold(s.threshold(), n) {
                d.push(diag(
                    f("threshold"),
                    "threshold-above-half",
                    format!("threshold {} is not a majority of {n} witnesses", s.threshold()),
                ));
            }
            if s.sc_a == t.id_contract || !token_side.insert(s.sc_a) || t.allocations.contains_key(&s.sc_a) {
                d.push(diag(f("sc_a"), "distinct-contracts", "SC_A collides with another token-chain address"));
            }
            if s.variant == SideVariant::Gasless {
                for (field, owners) in [("register_owners", &s.register_owners), ("bank_owners", &s.bank_owners)] {
                    if owners.is_empty() || s.owners_required == 0 || s.owners_required > owners.len() {
                        d.push(diag(f(field), "multisig-n-of-m", "needs 1 <= owners_required <= owners"));
                    }
                }
            }
            let r = &s.registration;
            if !t.allocations.contains_key(&r.creator) {
                d.push(diag(f("registration.creator"), "known-address", "creator holds no token-chain allocation"));
            }
            if r.attached <= self.contracts.compensation_fee {
                d.push(diag(
                    f("registration.attached"),
                    "covers-compensation-fee",
                    "attached value must exceed the compensation fee",
                ));
            }
            if r.max_attempts == 0 {
                d.push(diag(f("registration.max_attempts"), "positive", "at least one attempt is required"));
            }

            let listed: BTreeSet<Address> = s.genesis.witnesses().iter().copied().collect();
            let configured: BTreeSet<Address> =
                self.witnesses.iter().filter(|w| w.side_chain == s.name).map(|w| w.side_address).collect();
            if listed != configured {
                d.push(diag(
                    f("genesis.Wit_Addr_List"),
                    "witnesses-consistent",
                    "Wit_Addr_List differs from the side addresses of this chain's witnesses",
                ));
            }
        }

        let mut labels = BTreeSet::new();
        let mut token_addrs = BTreeSet::new();
        for (i, w) in self.witnesses.iter().enumerate() {
            let f = |name: &str| format!("witnesses[{i}].{name}");
            if !labels.insert(w.label.as_str()) {
                d.push(diag(f("label"), "unique-label", format!("witness label {:?} repeats", w.label)));
            }
            if !token_addrs.insert(w.token_address) {
                d.push(diag(f("token_address"), "distinct-witness-accounts", "token-chain address shared"));
            }
            if self.side_index(&w.side_chain).is_none() {
                d.push(diag(f("side_chain"), "known-chain", format!("no side chain named {:?}", w.side_chain)));
            }
        }

        let fp = &self.fault_plan;
        for (field, p) in [("drop_rate", fp.drop_rate), ("dup_rate", fp.dup_rate)] {
            if !(0.0..=1.0).contains(&p) {
                d.push(diag(format!("fault_plan.{field}"), "probability", "must lie in [0, 1]"));
            }
        }
        for (i, r) in fp.reorgs.iter().enumerate() {
            if !self.chain_known(&r.chain) {
                d.push(diag(format!("fault_plan.reorgs[{i}].chain"), "known-chain", "unknown chain"));
            }
        }
        if let Some(r) = &fp.random_reorgs {
            if r.chains.iter().any(|c| !self.chain_known(c)) || r.chains.is_empty() {
                d.push(diag("fault_plan.random_reorgs.chains", "known-chain", "unknown or empty chain list"));
            }
            if r.from_tick > r.to_tick {
                d.push(diag("fault_plan.random_reorgs", "tick-range", "from_tick exceeds to_tick"));
            }
        }
        if let Some(r) = &fp.triggered_reorg {
            if self.side_index(&r.chain).is_none() {
                d.push(diag("fault_plan.triggered_reorg.chain", "known-chain", "must name a side chain"));
            }
        }
        for label in fp.witness_behaviors.keys() {
            if !labels.contains(label.as_str()) {
                d.push(diag("fault_plan.witness_behaviors", "known-witness", format!("no witness {label:?}")));
            }
        }
        for (i, c) in fp.behavior_changes.iter().enumerate() {
            if !labels.contains(c.witness.as_str()) {
                d.push(diag(format!("fault_plan.behavior_changes[{i}].witness"), "known-witness", "unknown witness"));
            }
        }
        for (i, o) in fp.genesis_outages.iter().enumerate() {
            if self.side_index(&o.chain).is_none() {
                d.push(diag(format!("fault_plan.genesis_outages[{i}].chain"), "known-chain", "unknown side chain"));
            }
        }

        // Side-chain accounts start empty, so a side-chain sender must be a
        // registration beneficiary or receive a deposit or trade first.
        let mut side_holders: BTreeMap<&str, BTreeSet<Address>> = BTreeMap::new();
        for s in &self.side_chains {
            side_holders.entry(s.name.as_str()).or_default().insert(s.registration.beneficiary);
        }
        let mut token_holders: BTreeSet<Address> = t.allocations.keys().copied().collect();
        for w in &self.workload {
            match &w.action {
                UserAction::Deposit { chain, to, .. } | UserAction::Trade { chain, to, .. } => {
                    side_holders.entry(chain.as_str()).or_default().insert(*to);
                }
                UserAction::Withdraw { to, .. } | UserAction::TokenTransfer { to, .. } => {
                    token_holders.insert(*to);
                }
                UserAction::Record { .. } => {}
            }
        }
        for (i, w) in self.workload.iter().enumerate() {
            let f = |name: &str| format!("workload[{i}].{name}");
            if let Some(chain) = w.action.chain() {
                if self.side_index(chain).is_none() {
                    d.push(diag(f("chain"), "known-chain", format!("no side chain named {chain:?}")));
                    continue;
                }
            }
            match &w.action {
                UserAction::Deposit { from, .. } | UserAction::TokenTransfer { from, .. } => {
                    if !token_holders.contains(from) {
                        d.push(diag(f("from"), "known-address", "sender never holds token-chain funds"));
                    }
                }
                UserAction::Withdraw { chain, from, .. }
                | UserAction::Trade { chain, from, .. }
                | UserAction::Record { chain, from, .. } => {
                    if !side_holders.get(chain.as_str()).is_some_and(|h| h.contains(from)) {
                        d.push(diag(f("from"), "known-address", "sender never holds side-chain funds"));
                    }
                }
            }
        }
        d
    }
}
