use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::contracts::multisig::{Multisig, MultisigActionKind};
use crate::contracts::ContractError;
use crate::types::{Address, ChainId};

/// Registered side chain ids, append-only and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryState {
    pub chain_ids: Vec<ChainId>,
}

impl RegistryState {
    pub fn contains(&self, id: &ChainId) -> bool {
        self.chain_ids.contains(id)
    }
}

/// SC_ID: the token chain's single registry, guarded by an owner multisig.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdContract {
    pub registry: RegistryState,
    pub owners: Multisig,
}

impl IdContract {
    pub fn new(owners: Multisig) -> Self {
        IdContract { registry: RegistryState::default(), owners }
    }

    /// Append `chain_id` if absent. Returns the ExistOrNot flag: `true` when
    /// the id was newly added, `false` when it was already registered.
    pub fn update(&mut self, chain_id: ChainId, approvals: &BTreeSet<Address>) -> Result<bool, ContractError> {
        self.owners.check(approvals)?;
        if self.registry.contains(&chain_id) {
            return Ok(false);
        }
        self.registry.chain_ids.push(chain_id);
        Ok(true)
    }

    /// Standing approvals the owners granted to `caller` (an SC_A).
    pub fn approvals_for(&self, caller: Address) -> BTreeSet<Address> {
        self.owners.approvals(&MultisigActionKind::AuthorizeCaller { caller })
    }
}
