//! Signal-to-command pipeline for multichannel EEG: replicate-and-shuffle
//! channel expansion, reinforcement-learned focal-zone selection, an LSTM
//! classifier with weighted-average output and windowed intent consensus.

pub mod classifier;
pub mod data;
pub mod error;
pub mod intent;
pub mod model_file;
pub mod nn;
pub mod pipeline;
pub mod reward;
pub mod rs;
pub mod sam;
pub mod strategy;

pub use error::{Error, Result};
