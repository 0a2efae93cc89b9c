//! In-memory chains: blocks, accounts, contract state, and bounded
//! reorganization.

pub mod event;
mod exec;
pub mod tx;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::contracts::{BridgeHeadState, ConsensusState, ContractError, IdContract, SideBankState};
use crate::types::{Address, AmountError, ChainId, Digest, TokenAmount};

pub use event::{Arrival, Event, EventPayload};
pub use tx::{Direction, EventOrigin, Payload, SourceRef, TradingAction, Transaction, TransferBatch, TransferItem};

/// How many recent post-block states a chain keeps for fast reorgs. Deeper
/// reorgs replay from genesis.
const SNAPSHOT_DEPTH: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Token,
    GaslessSide,
    NativeGasSide,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub chain_id: ChainId,
    pub kind: ChainKind,
    /// Minimum gasprice for transactions without a zero-gasprice exemption.
    /// Only the token chain charges gas.
    pub min_gasprice: u64,
    /// Account that receives gas fees.
    pub fee_sink: Address,
    /// Supply of the bridged token on this chain. Zero on native-gas side
    /// chains, which keep bridged value in SC_Trading only.
    pub total_supply: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenContracts {
    pub id_address: Address,
    pub id: IdContract,
    /// SC_A instances by address, one per side chain.
    pub heads: BTreeMap<Address, BridgeHeadState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NativeContracts {
    pub consensus_address: Address,
    pub trading_address: Address,
    pub consensus: ConsensusState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContractSet {
    Token(TokenContracts),
    Gasless(SideBankState),
    Native(NativeContracts),
}

impl ContractSet {
    /// Bridged tokens held by contracts on this chain.
    pub fn held(&self) -> TokenAmount {
        match self {
            ContractSet::Token(t) => TokenAmount(t.heads.values().map(|h| h.held().0).sum()),
            ContractSet::Gasless(s) => s.held(),
            ContractSet::Native(_) => TokenAmount::ZERO,
        }
    }

    pub fn is_contract(&self, a: &Address) -> bool {
        match self {
            ContractSet::Token(t) => *a == t.id_address || t.heads.contains_key(a),
            ContractSet::Gasless(s) => s.is_contract(a),
            ContractSet::Native(n) => *a == n.consensus_address || *a == n.trading_address,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub accounts: BTreeMap<Address, TokenAmount>,
    pub contracts: ContractSet,
    /// Hashes of every transaction included so far.
    pub seen: BTreeSet<Digest>,
}

impl ChainState {
    pub fn new(accounts: BTreeMap<Address, TokenAmount>, contracts: ContractSet) -> Self {
        ChainState { accounts, contracts, seen: BTreeSet::new() }
    }

    pub fn balance(&self, a: &Address) -> TokenAmount {
        self.accounts.get(a).copied().unwrap_or(TokenAmount::ZERO)
    }

    pub fn account_total(&self) -> TokenAmount {
        TokenAmount(self.accounts.values().map(|v| v.0).sum())
    }

    /// Account balances plus contract-held balances.
    pub fn supply(&self) -> TokenAmount {
        TokenAmount(self.account_total().0 + self.contracts.held().0)
    }

    pub fn token(&self) -> Option<&TokenContracts> {
        match &self.contracts {
            ContractSet::Token(t) => Some(t),
            _ => None,
        }
    }

    pub fn gasless(&self) -> Option<&SideBankState> {
        match &self.contracts {
            ContractSet::Gasless(s) => Some(s),
            _ => None,
        }
    }

    pub fn native(&self) -> Option<&NativeContracts> {
        match &self.contracts {
            ContractSet::Native(n) => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub tx_hash: Digest,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Digest,
    pub transactions: Vec<Transaction>,
    pub events: Vec<Event>,
    /// Transactions offered for this block but excluded.
    pub rejected: Vec<Rejection>,
    /// Zero for blocks produced in turn; replacement blocks carry the fork
    /// generation so they never hash like the blocks they replace.
    pub salt: u64,
    pub hash: Digest,
}

#[derive(Serialize)]
struct BlockHeader<'a> {
    height: u64,
    parent_hash: &'a Digest,
    salt: u64,
    transactions: &'a [Transaction],
}

impl Block {
    pub fn compute_hash(height: u64, parent_hash: &Digest, salt: u64, transactions: &[Transaction]) -> Digest {
        canonical::digest_of(&BlockHeader { height, parent_hash, salt, transactions })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("duplicate transaction")]
    Duplicate,
    #[error("payload requires a round")]
    MissingRound,
    #[error("gasprice {offered} below minimum {min}")]
    GasPriceTooLow { offered: u64, min: u64 },
    #[error("this chain has no gas; gasprice must be zero")]
    GasNotAccepted,
    #[error("balance {available} below required {needed}")]
    InsufficientBalance { available: TokenAmount, needed: TokenAmount },
    #[error("native-gas side chains carry no token value in transactions")]
    ValueNotAccepted,
    #[error("payload not accepted by the target")]
    Unsupported,
    #[error(transparent)]
    Contract(#[from] ContractError),
}

impl From<AmountError> for TxError {
    fn from(e: AmountError) -> Self {
        TxError::Contract(ContractError::Amount(e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("reorg depth {depth} exceeds height {height}")]
    DepthExceedsHeight { depth: u64, height: u64 },
    #[error("replacement block at {height} does not link to its parent")]
    BadLinkage { height: u64 },
    #[error("replacement block at {height} does not re-execute to the same content")]
    BadReplacement { height: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub config: ChainConfig,
    pub genesis_state: ChainState,
    pub state: ChainState,
    pub blocks: Vec<Block>,
    snapshots: BTreeMap<u64, ChainState>,
    /// Reorgs applied so far.
    pub forks: u64,
}

impl Chain {
    /// A chain holding only its genesis block. `genesis_digest` anchors
    /// the genesis block's parent hash.
    pub fn new(config: ChainConfig, genesis_state: ChainState, genesis_digest: Digest) -> Self {
        let genesis = Block {
            height: 0,
            parent_hash: genesis_digest,
            transactions: Vec::new(),
            events: Vec::new(),
            rejected: Vec::new(),
            salt: 0,
            hash: Block::compute_hash(0, &genesis_digest, 0, &[]),
        };
        let mut snapshots = BTreeMap::new();
        snapshots.insert(0, genesis_state.clone());
        Chain { config, state: genesis_state.clone(), genesis_state, blocks: vec![genesis], snapshots, forks: 0 }
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    /// Seal a block from `transactions`. Invalid ones are excluded and
    /// listed in the block's rejections.
    pub fn apply_block(&mut self, transactions: Vec<Transaction>) -> &Block {
        let height = self.height() + 1;
        let parent_hash = self.head().hash;
        let block = seal(&self.config, &mut self.state, height, parent_hash, 0, transactions);
        self.push(block);
        self.head()
    }

    fn push(&mut self, block: Block) {
        let height = block.height;
        self.blocks.push(block);
        self.snapshots.insert(height, self.state.clone());
        if height > SNAPSHOT_DEPTH {
            self.snapshots.remove(&(height - SNAPSHOT_DEPTH - 1));
        }
    }

    /// State after `height`, from a snapshot or by replay.
    pub fn state_at(&self, height: u64) -> ChainState {
        if let Some(s) = self.snapshots.get(&height) {
            return s.clone();
        }
        let mut state = self.genesis_state.clone();
        for b in &self.blocks[1..=height as usize] {
            replay(&self.config, &mut state, b);
        }
        state
    }

    /// Recompute the current state from genesis.
    pub fn replay_from_genesis(&self) -> ChainState {
        let mut state = self.genesis_state.clone();
        for b in &self.blocks[1..] {
            replay(&self.config, &mut state, b);
        }
        state
    }

    /// Replace the top `depth` blocks with `replacement`, which must link
    /// to the fork point and re-execute to the same content.
    pub fn reorg(&mut self, depth: u64, replacement: Vec<Block>) -> Result<(), ChainError> {
        let height = self.height();
        if depth > height {
            return Err(ChainError::DepthExceedsHeight { depth, height });
        }
        if depth == 0 && replacement.is_empty() {
            return Ok(());
        }
        let fork = height - depth;
        let mut state = self.state_at(fork);
        let mut parent = self.blocks[fork as usize].hash;
        let mut sealed = Vec::with_capacity(replacement.len());
        for (i, b) in replacement.into_iter().enumerate() {
            let expect = fork + 1 + i as u64;
            if b.height != expect || b.parent_hash != parent {
                return Err(ChainError::BadLinkage { height: expect });
            }
            let again = seal(&self.config, &mut state, expect, parent, b.salt, b.transactions.clone());
            if again.hash != b.hash || again.transactions != b.transactions {
                return Err(ChainError::BadReplacement { height: expect });
            }
            parent = again.hash;
            sealed.push((again, state.clone()));
        }
        self.blocks.truncate(fork as usize + 1);
        self.snapshots.retain(|h, _| *h <= fork);
        for (b, s) in sealed {
            let h = b.height;
            self.blocks.push(b);
            self.snapshots.insert(h, s);
        }
        self.state = state;
        self.forks += 1;
        Ok(())
    }

    /// Build `depth` replacement blocks. Transactions of the removed blocks
    /// keep their order but move `delay` blocks later; those pushed past
    /// the new head, plus `extra`, are returned for the mempool. Hashes in
    /// `exclude` are dropped.
    pub fn build_fork(
        &self,
        depth: u64,
        delay: u64,
        exclude: &BTreeSet<Digest>,
    ) -> Result<(Vec<Block>, Vec<Transaction>), ChainError> {
        let height = self.height();
        if depth > height {
            return Err(ChainError::DepthExceedsHeight { depth, height });
        }
        let fork = height - depth;
        let removed: Vec<Vec<Transaction>> = self.blocks[fork as usize + 1..]
            .iter()
            .map(|b| b.transactions.iter().filter(|t| !exclude.contains(&t.hash())).cloned().collect())
            .collect();
        let delay = delay.min(depth) as usize;
        let mut state = self.state_at(fork);
        let mut parent = self.blocks[fork as usize].hash;
        let mut blocks = Vec::with_capacity(depth as usize);
        for i in 0..depth as usize {
            let txs = if i >= delay { removed[i - delay].clone() } else { Vec::new() };
            let b = seal(&self.config, &mut state, fork + 1 + i as u64, parent, self.forks + 1, txs);
            parent = b.hash;
            blocks.push(b);
        }
        let leftover = removed[removed.len() - delay..].iter().flatten().cloned().collect();
        Ok((blocks, leftover))
    }

    /// Every event with its block height, from `from` to `to` inclusive.
    pub fn events_in(&self, from: u64, to: u64) -> impl Iterator<Item = &Event> {
        let to = to.min(self.height());
        let range = if from > to { &self.blocks[0..0] } else { &self.blocks[from as usize..=to as usize] };
        range.iter().flat_map(|b| b.events.iter())
    }
}

fn seal(
    config: &ChainConfig,
    state: &mut ChainState,
    height: u64,
    parent_hash: Digest,
    salt: u64,
    txs: Vec<Transaction>,
) -> Block {
    let mut accepted = Vec::new();
    let mut events = Vec::new();
    let mut rejected = Vec::new();
    for tx in txs {
        let hash = tx.hash();
        let origin = EventOrigin { height, tx_index: accepted.len() as u32, tx_hash: hash };
        match exec::execute(config, state, origin, &tx) {
            Ok(mut evs) => {
                state.seen.insert(hash);
                events.append(&mut evs);
                accepted.push(tx);
            }
            Err(e) => rejected.push(Rejection { tx_hash: hash, reason: e.to_string() }),
        }
    }
    let hash = Block::compute_hash(height, &parent_hash, salt, &accepted);
    Block { height, parent_hash, transactions: accepted, events, rejected, salt, hash }
}

fn replay(config: &ChainConfig, state: &mut ChainState, block: &Block) {
    let _ = seal(config, state, block.height, block.parent_hash, block.salt, block.transactions.clone());
}
