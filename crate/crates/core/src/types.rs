use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a data bin. Bin 0 is the low-resource target bin by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinId(pub usize);

impl BinId {
    pub const TARGET: BinId = BinId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for BinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bin{}", self.0)
    }
}

/// A reference to one training sample: (bin, position in that bin's dataset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleRef {
    pub bin: BinId,
    pub index: usize,
}

/// Per-sample log-likelihoods of the prototype batch at a given trainee step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    pub scores: Vec<f64>,
    pub step: u64,
}

impl ObservationVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// One agent interaction: what the agent saw, what it chose and what that earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: ObservationVector,
    pub action: BinId,
    pub reward: f64,
    pub step: u64,
    pub agent_id: u32,
}
