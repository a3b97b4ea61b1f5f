//! Online decision protocol: per-window mode voting, a run-length consensus
//! over successive window decisions, and label-to-command mapping.

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_SIZE: usize = 64;
pub const DEFAULT_REQUIRED_RUN: usize = 3;
pub const INVALID_LABEL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandMode {
    Typing,
    Robot,
}

impl std::str::FromStr for CommandMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "typing" => Ok(CommandMode::Typing),
            "robot" => Ok(CommandMode::Robot),
            other => Err(Error::validation(format!("unknown command mode `{other}` (typing|robot)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandMap {
    pub mode: CommandMode,
    pub table: Vec<String>,
    pub invalid_label: usize,
}

impl CommandMap {
    pub fn typing() -> Self {
        Self::from_names(CommandMode::Typing, &["Up", "Cancel", "Left", "Right", "Nothing", "Confirm"])
    }

    pub fn robot() -> Self {
        Self::from_names(
            CommandMode::Robot,
            &["Forward", "Turn Left", "Grasp", "Loose", "Nothing", "Stop/Start"],
        )
    }

    pub fn for_mode(mode: CommandMode) -> Self {
        match mode {
            CommandMode::Typing => Self::typing(),
            CommandMode::Robot => Self::robot(),
        }
    }

    fn from_names(mode: CommandMode, names: &[&str]) -> Self {
        Self {
            mode,
            table: names.iter().map(|s| s.to_string()).collect(),
            invalid_label: INVALID_LABEL,
        }
    }

    pub fn command(&self, label: usize) -> Result<&str> {
        self.table.get(label).map(String::as_str).ok_or_else(|| {
            Error::validation(format!("label {label} outside 0..{}", self.table.len()))
        })
    }
}

pub fn map_command(label: usize, map: &CommandMap) -> Result<&str> {
    map.command(label)
}

/// Pending run of equal, valid window decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusState {
    pub pending: Vec<usize>,
    pub required_run: usize,
}

impl Default for ConsensusState {
    fn default() -> Self {
        Self::new(DEFAULT_REQUIRED_RUN)
    }
}

impl ConsensusState {
    pub fn new(required_run: usize) -> Self {
        Self {
            pending: Vec::with_capacity(required_run),
            required_run: required_run.max(1),
        }
    }
}

/// Feeds one window decision. The invalid label clears the run; a
/// mismatch restarts it; reaching `required_run` emits and clears.
pub fn consensus_update(
    state: &mut ConsensusState,
    decision: usize,
    map: &CommandMap,
) -> Result<Option<(usize, String)>> {
    let command = map.command(decision)?.to_owned();
    if decision == map.invalid_label {
        state.pending.clear();
        return Ok(None);
    }
    if state.pending.first().is_some_and(|&head| head != decision) {
        state.pending.clear();
    }
    state.pending.push(decision);
    if state.pending.len() >= state.required_run {
        state.pending.clear();
        return Ok(Some((decision, command)));
    }
    Ok(None)
}

/// Most frequent label, lowest label on ties.
pub fn mode_label(labels: &[usize], class_count: usize) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::validation("cannot take the mode of an empty window"));
    }
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::validation(format!("label {l} >= class count {class_count}")))? += 1;
    }
    let mut best = 0;
    for c in 1..class_count {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    Ok(best)
}

/// Classifies every sample of a window and returns the modal label.
pub fn window_decide(model: &ClassifierModel, window: &[Vec<f64>]) -> Result<usize> {
    let xs: Vec<&[f64]> = window.iter().map(Vec::as_slice).collect();
    let labels = model.predict_batch(&xs)?;
    mode_label(&labels, model.class_count())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowOutcome {
    pub decision: usize,
    pub emitted: Option<(usize, String)>,
}

/// One client's decoding session over a shared, read-only model.
pub struct IntentSession<'m> {
    model: &'m ClassifierModel,
    map: CommandMap,
    window_size: usize,
    consensus: ConsensusState,
}

impl<'m> IntentSession<'m> {
    pub fn new(model: &'m ClassifierModel, map: CommandMap, window_size: usize, required_run: usize) -> Self {
        Self {
            model,
            map,
            window_size,
            consensus: ConsensusState::new(required_run),
        }
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn consensus(&self) -> &ConsensusState {
        &self.consensus
    }

    pub fn process_window(&mut self, window: &[Vec<f64>]) -> Result<WindowOutcome> {
        if window.len() != self.window_size {
            return Err(Error::validation(format!(
                "window has {} samples, expected {}",
                window.len(),
                self.window_size
            )));
        }
        let channels = self.model.rs_map.k();
        if let Some(bad) = window.iter().find(|s| s.len() != channels) {
            return Err(Error::validation(format!(
                "sample has {} channels, expected {channels}",
                bad.len()
            )));
        }
        let decision = window_decide(self.model, window)?;
        let emitted = consensus_update(&mut self.consensus, decision, &self.map)?;
        Ok(WindowOutcome { decision, emitted })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feed(decisions: &[usize]) -> (Vec<Option<(usize, String)>>, ConsensusState) {
        let map = CommandMap::typing();
        let mut st = ConsensusState::default();
        let out = decisions
            .iter()
            .map(|&d| consensus_update(&mut st, d, &map).unwrap())
            .collect();
        (out, st)
    }

    #[test]
    fn three_equal_emit() {
        let (out, st) = feed(&[2, 2, 2]);
        assert_eq!(out[..2], [None, None]);
        assert_eq!(out[2], Some((2, "Left".to_string())));
        assert!(st.pending.is_empty());
    }

    #[test]
    fn mismatch_restarts_run() {
        let (out, st) = feed(&[1, 1, 2]);
        assert!(out.iter().all(Option::is_none));
        assert_eq!(st.pending, vec![2]);
    }

    #[test]
    fn invalid_label_resets() {
        let (out, _) = feed(&[5, 4, 5, 5, 5]);
        assert_eq!(out[..4], [None, None, None, None]);
        assert_eq!(out[4], Some((5, "Confirm".to_string())));
    }

    #[test]
    fn unknown_label_rejected() {
        let mut st = ConsensusState::default();
        assert!(consensus_update(&mut st, 6, &CommandMap::typing()).is_err());
    }

    #[test]
    fn command_tables() {
        let t = CommandMap::typing();
        let r = CommandMap::robot();
        assert_eq!(map_command(0, &t).unwrap(), "Up");
        assert_eq!(map_command(0, &r).unwrap(), "Forward");
        assert_eq!(map_command(5, &t).unwrap(), "Confirm");
        assert_eq!(map_command(4, &t).unwrap(), "Nothing");
        assert_eq!(map_command(4, &r).unwrap(), "Nothing");
        assert_eq!(r.table, ["Forward", "Turn Left", "Grasp", "Loose", "Nothing", "Stop/Start"]);
        assert!(map_command(6, &t).is_err());
    }

    #[test]
    fn modal_label() {
        let mut w = vec![3; 40];
        w.extend([1; 24]);
        assert_eq!(mode_label(&w, 6).unwrap(), 3);
        let mut tie = vec![5; 32];
        tie.extend([2; 32]);
        assert_eq!(mode_label(&tie, 6).unwrap(), 2);
        assert!(mode_label(&[], 6).is_err());
    }

    /// Emits at position i iff the 3 decisions ending at i are equal, valid,
    /// and no earlier emission or invalid decision falls inside that run.
    fn trace_oracle(decisions: &[usize]) -> Vec<Option<usize>> {
        let mut out = vec![None; decisions.len()];
        let mut run_start = 0;
        for i in 0..decisions.len() {
            let d = decisions[i];
            if d == INVALID_LABEL {
                run_start = i + 1;
                continue;
            }
            if i > run_start && decisions[i - 1] != d {
                run_start = i;
            }
            if i + 1 - run_start == 3 {
                out[i] = Some(d);
                run_start = i + 1;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn consensus_matches_trace_oracle(decisions in prop::collection::vec(0usize..6, 0..50)) {
            let (out, st) = feed(&decisions);
            let got: Vec<Option<usize>> = out.iter().map(|o| o.as_ref().map(|(l, _)| *l)).collect();
            prop_assert_eq!(got, trace_oracle(&decisions));
            prop_assert!(st.pending.len() < 3);
            prop_assert!(st.pending.windows(2).all(|w| w[0] == w[1]));
        }

        #[test]
        fn mode_matches_counting(labels in prop::collection::vec(0usize..6, 1..64)) {
            let m = mode_label(&labels, 6).unwrap();
            let count = |c: usize| labels.iter().filter(|&&l| l == c).count();
            prop_assert!((0..6).all(|c| count(c) <= count(m)));
            prop_assert!((0..m).all(|c| count(c) < count(m)));
        }
    }
}
