use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::tx::SourceRef;
use crate::contracts::ContractError;
use crate::types::{Address, Digest};

/// Smallest integer strictly greater than `n / 2`.
pub fn default_threshold(n: usize) -> usize {
    n / 2 + 1
}

/// Whether `threshold` is a safe majority over `n` voters.
pub fn is_safe_threshold(threshold: usize, n: usize) -> bool {
    threshold > n / 2 && threshold * 2 > n && threshold <= n
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TallyVote {
    /// Vote for a round other than the current one; nothing changed.
    Stale {
        current: u64,
    },
    /// The voter already voted for this subject in this round.
    Duplicate,
    Recorded {
        votes: usize,
    },
    /// This vote brought the subject to threshold.
    Reached {
        voters: BTreeSet<Address>,
    },
}

/// Votes for one consensus instance, bucketed by the digest of the voted
/// content so witnesses that observed different batches never pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumTally {
    pub round: u64,
    pub threshold: usize,
    pub buckets: BTreeMap<Digest, BTreeSet<Address>>,
}

impl QuorumTally {
    pub fn new(threshold: usize) -> Self {
        QuorumTally { round: 0, threshold, buckets: BTreeMap::new() }
    }

    pub fn vote(&mut self, round: u64, subject: Digest, voter: Address) -> TallyVote {
        if round != self.round {
            return TallyVote::Stale { current: self.round };
        }
        let bucket = self.buckets.entry(subject).or_default();
        if !bucket.insert(voter) {
            return TallyVote::Duplicate;
        }
        if bucket.len() == self.threshold {
            TallyVote::Reached { voters: bucket.clone() }
        } else {
            TallyVote::Recorded { votes: bucket.len() }
        }
    }

    pub fn votes_for(&self, subject: &Digest) -> usize {
        self.buckets.get(subject).map_or(0, BTreeSet::len)
    }

    /// Close the current instance: the round moves on and pending buckets
    /// are discarded.
    pub fn advance(&mut self) {
        self.round += 1;
        self.buckets.clear();
    }
}

/// Result of submitting one witness vote to a quorum-gated contract
/// operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VoteOutcome<T> {
    /// Recorded, threshold not yet met. No balances changed.
    Pending {
        votes: usize,
        threshold: usize,
    },
    /// Same voter, same round, same subject: ignored.
    Duplicate,
    Executed(T),
    /// Quorum reached but execution was refused; the round still advances.
    Failed(ContractError),
}

impl<T> VoteOutcome<T> {
    pub fn is_pending(&self) -> bool {
        matches!(self, VoteOutcome::Pending { .. })
    }
}

/// Audit record of every closed consensus instance, kept in contract state
/// so invariant checks can be recomputed after replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutedBatch {
    pub subject: Digest,
    pub round: u64,
    pub threshold: usize,
    pub voters: BTreeSet<Address>,
    pub success: bool,
    /// Hashes of the source transactions whose events this batch relayed.
    pub sources: Vec<SourceRef>,
}
