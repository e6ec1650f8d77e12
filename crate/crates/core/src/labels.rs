//! Time labels of operator slots and their ordering structure.
//!
//! Slots are 0-based internally and printed 1-based. Around external slot
//! `j` the ordering runs `t_{j+} -> t_j -> t_{j-} -> t_{(j+1)+}`: the `+`
//! points come from expanding the inverse evolution operator to the left of
//! `x(t_j)`, the `-` points from the evolution operator to its right.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Branch {
    /// `+i` for the `+` branch, `-i` for the `-` branch.
    pub fn phase_sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    fn symbol(self) -> char {
        match self {
            Branch::Plus => '+',
            Branch::Minus => '-',
        }
    }
}

/// Internal point `t_{j+}` or `t_{j-}` without a copy index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InternalLabel {
    pub slot: usize,
    pub branch: Branch,
}

impl InternalLabel {
    pub fn new(slot: usize, branch: Branch) -> Self {
        Self { slot, branch }
    }

    /// Every internal label for an `n`-point correlator, in ordering sequence.
    pub fn all(n: usize) -> impl Iterator<Item = Self> {
        (0..n).flat_map(|slot| [Branch::Plus, Branch::Minus].map(|branch| Self { slot, branch }))
    }

    pub fn rank(&self) -> usize {
        3 * self.slot
            + match self.branch {
                Branch::Plus => 0,
                Branch::Minus => 2,
            }
    }

    pub fn with_copy(self, copy: usize) -> TimeLabel {
        TimeLabel::Internal { slot: self.slot, branch: self.branch, copy }
    }
}

impl Ord for InternalLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl PartialOrd for InternalLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for InternalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t_{{{}{}}}", self.slot + 1, self.branch.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimeLabel {
    External { slot: usize },
    Internal { slot: usize, branch: Branch, copy: usize },
}

impl TimeLabel {
    pub fn rank(&self) -> usize {
        match *self {
            TimeLabel::External { slot } => 3 * slot + 1,
            TimeLabel::Internal { slot, branch, .. } => InternalLabel { slot, branch }.rank(),
        }
    }

    /// The ordering relation `self -> other`.
    pub fn precedes(&self, other: &TimeLabel) -> bool {
        self.rank() < other.rank()
    }

    pub fn slot(&self) -> usize {
        match *self {
            TimeLabel::External { slot } | TimeLabel::Internal { slot, .. } => slot,
        }
    }
}

impl fmt::Display for TimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TimeLabel::External { slot } => write!(f, "t{}", slot + 1),
            TimeLabel::Internal { slot, branch, copy } => {
                write!(f, "t^({})_{{{}{}}}", copy + 1, slot + 1, branch.symbol())
            }
        }
    }
}
