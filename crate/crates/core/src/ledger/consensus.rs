//! Round-based BFT finality at message-count granularity.
//!
//! For each height the proposer rotates round-robin over the validator set.
//! A round commits when the proposer is live and a quorum of `ceil(2n/3)`
//! validators (`2f + 1` when `n = 3f + 1`) send both PREPARE and COMMIT. Faulty validators are silent: they
//! neither propose nor vote.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub type ValidatorId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsensusError {
    #[error("validator set must not be empty")]
    Empty,
    #[error("validator {0} is not in the set")]
    UnknownValidator(ValidatorId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorSet {
    validators: Vec<ValidatorId>,
}

impl ValidatorSet {
    /// Validators `0..n`.
    pub fn new(n: usize) -> Result<Self, ConsensusError> {
        if n == 0 {
            return Err(ConsensusError::Empty);
        }
        Ok(Self {
            validators: (0..n as ValidatorId).collect(),
        })
    }

    pub fn validators(&self) -> &[ValidatorId] {
        &self.validators
    }

    pub fn len(&self) -> usize {
        self.validators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validators.is_empty()
    }

    /// Largest `f` with `n >= 3f + 1`.
    pub fn max_faulty(&self) -> usize {
        (self.len() - 1) / 3
    }

    /// `ceil(2n/3)`: any two quorums share at least `f + 1` validators.
    pub fn quorum(&self) -> usize {
        (2 * self.len()).div_ceil(3)
    }

    pub fn proposer(&self, height: u64, round: u32) -> ValidatorId {
        let idx = (height + round as u64) % self.len() as u64;
        self.validators[idx as usize]
    }
}

/// Set of silent (crashed or byzantine-withholding) validators.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultMask(BTreeSet<ValidatorId>);

impl FaultMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(
        set: &ValidatorSet,
        faulty: impl IntoIterator<Item = ValidatorId>,
    ) -> Result<Self, ConsensusError> {
        let mut mask = BTreeSet::new();
        for v in faulty {
            if !set.validators.contains(&v) {
                return Err(ConsensusError::UnknownValidator(v));
            }
            mask.insert(v);
        }
        Ok(Self(mask))
    }

    pub fn is_faulty(&self, v: ValidatorId) -> bool {
        self.0.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ValidatorId> + '_ {
        self.0.iter().copied()
    }
}

/// Message tallies for one round at one height.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub height: u64,
    pub round: u32,
    pub proposer: ValidatorId,
    pub proposed: bool,
    pub prepares: u32,
    pub commits: u32,
    pub committed: bool,
}

/// Outcome of driving one height through up to `n` rounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightOutcome {
    pub rounds: Vec<RoundRecord>,
    /// Validators whose COMMIT sealed the block, when it committed.
    pub commit_seals: Option<Vec<ValidatorId>>,
}

impl HeightOutcome {
    pub fn committed_round(&self) -> Option<&RoundRecord> {
        self.rounds.iter().find(|r| r.committed)
    }
}

/// Simulates the rounds at `height`, stopping at the first commit. Every
/// validator gets one turn as proposer before the height is abandoned.
pub fn run_height(set: &ValidatorSet, height: u64, faults: &FaultMask) -> HeightOutcome {
    let quorum = set.quorum() as u32;
    let mut rounds = Vec::new();
    for round in 0..set.len() as u32 {
        let proposer = set.proposer(height, round);
        let proposed = !faults.is_faulty(proposer);
        let live: Vec<ValidatorId> = set
            .validators()
            .iter()
            .copied()
            .filter(|v| !faults.is_faulty(*v))
            .collect();
        let prepares = if proposed { live.len() as u32 } else { 0 };
        let commits = if prepares >= quorum {
            live.len() as u32
        } else {
            0
        };
        let committed = commits >= quorum;
        rounds.push(RoundRecord {
            height,
            round,
            proposer,
            proposed,
            prepares,
            commits,
            committed,
        });
        if committed {
            return HeightOutcome {
                rounds,
                commit_seals: Some(live),
            };
        }
    }
    HeightOutcome {
        rounds,
        commit_seals: None,
    }
}
