use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::contracts::ContractError;
use crate::types::{Address, Digest};

/// Owner-gated actions. Each contract accepts a subset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum MultisigActionKind {
    /// Standing delegation: SC_Inter on SC_Bank, an SC_A on SC_ID.
    AuthorizeCaller { caller: Address },
    /// Deactivate SC_Register once its balance has been paid out.
    Suicide,
    /// Release one quorum-approved inbound batch from SC_Bank when owners
    /// approve every transfer individually.
    ReleasePending { subject: Digest },
}

/// n-of-m owner approvals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Multisig {
    pub owners: Vec<Address>,
    pub required: usize,
    pub collected: BTreeMap<MultisigActionKind, BTreeSet<Address>>,
}

impl Multisig {
    pub fn new(owners: Vec<Address>, required: usize) -> Self {
        Multisig { owners, required, collected: BTreeMap::new() }
    }

    pub fn is_owner(&self, who: &Address) -> bool {
        self.owners.contains(who)
    }

    /// Record an owner's approval and return the approval count for the
    /// action.
    pub fn approve(&mut self, owner: Address, action: MultisigActionKind) -> Result<usize, ContractError> {
        if !self.is_owner(&owner) {
            return Err(ContractError::NotOwner);
        }
        let set = self.collected.entry(action).or_default();
        set.insert(owner);
        Ok(set.len())
    }

    pub fn approvals(&self, action: &MultisigActionKind) -> BTreeSet<Address> {
        self.collected.get(action).cloned().unwrap_or_default()
    }

    /// `Ok` when at least `required` distinct owners are among `approvals`.
    pub fn check(&self, approvals: &BTreeSet<Address>) -> Result<(), ContractError> {
        let have = approvals.iter().filter(|a| self.is_owner(a)).count();
        if have >= self.required {
            Ok(())
        } else {
            Err(ContractError::MultisigIncomplete { have, need: self.required })
        }
    }

    pub fn is_satisfied(&self, action: &MultisigActionKind) -> bool {
        self.check(&self.approvals(action)).is_ok()
    }
}
