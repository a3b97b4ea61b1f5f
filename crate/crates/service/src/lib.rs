//! Command-line tools and the stream server for the focal-zone EEG decoder.

pub mod cli;
pub mod replay;
pub mod server;
pub mod wire;
