//! Focal-zone search: window environment, dueling Q-network, experience
//! replay and the epsilon-greedy optimization loop.

mod agent;
mod focal;
mod qnet;
mod replay;

pub use agent::{
    history_to_csv, optimize_focal_zone, replay_train_step, select_action, DqnAgent, HistoryEntry, SamConfig,
    SamOutcome,
};
pub use focal::{initial_state, transition, ActionKind, FocalState, DEFAULT_MIN_LENGTH};
pub use qnet::{encode_state, q_forward, QNet, TdObjective, ACTION_COUNT, QNET_HIDDEN, QNET_INPUTS};
pub use replay::{ReplayMemory, Transition};
