use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_LENGTH: usize = 10;

/// Half-open window `[start_idx, end_idx)` over the shuffled vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FocalState {
    pub start_idx: usize,
    pub end_idx: usize,
}

impl FocalState {
    pub fn new(start_idx: usize, end_idx: usize) -> Result<Self> {
        if end_idx <= start_idx {
            return Err(Error::validation(format!(
                "focal zone [{start_idx}, {end_idx}) is empty"
            )));
        }
        Ok(Self { start_idx, end_idx })
    }

    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx
    }

    pub fn is_empty(&self) -> bool {
        self.end_idx <= self.start_idx
    }

    pub fn is_valid(&self, k_prime: usize, min_length: usize) -> bool {
        self.start_idx < self.end_idx && self.end_idx <= k_prime && self.len() >= min_length
    }
}

impl std::fmt::Display for FocalState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.start_idx, self.end_idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    LeftShift = 0,
    RightShift = 1,
    Extend = 2,
    Condense = 3,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::LeftShift,
        ActionKind::RightShift,
        ActionKind::Extend,
        ActionKind::Condense,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Centered window of length `k_bar`.
pub fn initial_state(k_prime: usize, k_bar: usize, min_length: usize) -> Result<FocalState> {
    if k_bar < min_length || k_bar > k_prime || k_bar == 0 {
        return Err(Error::validation(format!(
            "initial focal length {k_bar} outside [{min_length}, {k_prime}]"
        )));
    }
    let start = (k_prime - k_bar) / 2;
    FocalState::new(start, start + k_bar)
}

/// Applies one action. Shifts slide until they touch a boundary; an extend
/// or condense that would leave `[0, k_prime]` or drop below `min_length`
/// leaves the state unchanged.
pub fn transition(
    state: FocalState,
    action: ActionKind,
    step_size: usize,
    k_prime: usize,
    min_length: usize,
) -> FocalState {
    let FocalState { start_idx: s, end_idx: e } = state;
    match action {
        ActionKind::LeftShift => {
            let d = step_size.min(s);
            FocalState::new(s - d, e - d).unwrap_or(state)
        }
        ActionKind::RightShift => {
            let d = step_size.min(k_prime.saturating_sub(e));
            FocalState::new(s + d, e + d).unwrap_or(state)
        }
        ActionKind::Extend => {
            if s < step_size || e + step_size > k_prime {
                state
            } else {
                FocalState::new(s - step_size, e + step_size).unwrap_or(state)
            }
        }
        ActionKind::Condense => {
            if e - s < 2 * step_size + min_length {
                state
            } else {
                FocalState::new(s + step_size, e - step_size).unwrap_or(state)
            }
        }
    }
}
