//! Registration checks a witness performs before voting.

use serde::{Deserialize, Serialize};

use crate::contracts::RegistryState;
use crate::genesis::{genesis_file_hash, GenesisSpec};
use crate::types::{ChainId, Digest, TokenAmount};

/// What a registration request on SC_A claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationClaim {
    pub chain_id: ChainId,
    pub amount: TokenAmount,
    pub genesis_hash: Digest,
}

/// The genesis file could not be fetched. The witness abstains rather than
/// voting false.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("genesis file for {0} unavailable")]
pub struct FetchFailure(pub ChainId);

/// The six registration conditions, each evaluated independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Conditions {
    /// Hash of the fetched genesis file equals the requested hash.
    pub hash_matches: bool,
    /// The side chain has produced no block beyond genesis.
    pub height_zero: bool,
    /// Requested amount equals the genesis `Bal_Resv`.
    pub balance_matches: bool,
    /// Requested chain id equals the genesis `Chain_ID`.
    pub chain_id_matches: bool,
    /// Requested chain id differs from the token chain's.
    pub not_token_chain: bool,
    /// Requested chain id is not yet in SC_ID.
    pub not_registered: bool,
}

impl Conditions {
    pub const NAMES: [&'static str; 6] =
        ["hash_matches", "height_zero", "balance_matches", "chain_id_matches", "not_token_chain", "not_registered"];

    pub fn as_array(&self) -> [bool; 6] {
        [
            self.hash_matches,
            self.height_zero,
            self.balance_matches,
            self.chain_id_matches,
            self.not_token_chain,
            self.not_registered,
        ]
    }

    pub fn all(&self) -> bool {
        self.as_array().iter().all(|c| *c)
    }
}

/// Evaluate every condition for a gasless side chain registration.
pub fn registration_conditions(
    genesis_file: Option<&str>,
    claim: &RegistrationClaim,
    registry: &RegistryState,
    token_chain_id: ChainId,
    side_height: u64,
) -> Result<Conditions, FetchFailure> {
    let text = genesis_file.ok_or(FetchFailure(claim.chain_id))?;
    let spec = GenesisSpec::from_canonical(text).ok();
    Ok(Conditions {
        hash_matches: genesis_file_hash(text).map(|h| h == claim.genesis_hash).unwrap_or(false),
        height_zero: side_height == 0,
        balance_matches: spec.as_ref().and_then(GenesisSpec::reserved_balance) == Some(claim.amount),
        chain_id_matches: spec.as_ref().map(GenesisSpec::chain_id) == Some(claim.chain_id),
        not_token_chain: claim.chain_id != token_chain_id,
        not_registered: !registry.contains(&claim.chain_id),
    })
}

/// Gasless registration verdict: all six conditions must hold.
pub fn validate_registration(
    genesis_file: Option<&str>,
    claim: &RegistrationClaim,
    registry: &RegistryState,
    token_chain_id: ChainId,
    side_height: u64,
) -> Result<bool, FetchFailure> {
    registration_conditions(genesis_file, claim, registry, token_chain_id, side_height).map(|c| c.all())
}

/// Native-gas registration verdict: only the three chain id conditions,
/// regardless of height and balance.
pub fn validate_registration_nativegas(
    genesis_file: Option<&str>,
    claim: &RegistrationClaim,
    registry: &RegistryState,
    token_chain_id: ChainId,
) -> Result<bool, FetchFailure> {
    let c = registration_conditions(genesis_file, claim, registry, token_chain_id, 0)?;
    Ok(c.chain_id_matches && c.not_token_chain && c.not_registered)
}
