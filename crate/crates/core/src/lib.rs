//! Deterministic model of a witness-quorum token bridge between one token
//! chain and several side chains.
//!
//! - [`chain`]: blocks, accounts, transaction dispatch, reorgs.
//! - [`contracts`]: the cross-chain contract state machines.
//! - [`genesis`]: side chain genesis records and their validation.
//! - [`witness`]: registration validation and the windowed relay loop.
//! - [`simnet`]: seeded discrete-event simulation with fault injection.

pub mod canonical;
pub mod chain;
pub mod contracts;
pub mod genesis;
pub mod simnet;
pub mod types;
pub mod witness;

pub use types::{Address, ChainId, Digest, TokenAmount, HASH_ALGORITHM};
