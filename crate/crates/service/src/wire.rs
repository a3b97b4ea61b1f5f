//! Line-oriented JSON records exchanged with stream clients.
//!
//! Every record is one line tagged by `type`. The same text travels as one
//! WebSocket text frame per record for browser clients.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WireMessage {
    /// Raw samples, `window_size` rows of `channel_count` values.
    Window { samples: Vec<Vec<f64>> },
    /// Simulated intent: the server draws held-out samples of `label`.
    Intent { label: usize },
    Decision { label: usize },
    Command { label: usize, command: String },
    Error { message: String },
    /// Terminal notice; `windows` counts the windows sent before it.
    End { windows: usize },
}

impl WireMessage {
    pub fn error(message: impl Into<String>) -> Self {
        WireMessage::Error {
            message: message.into(),
        }
    }

    /// Single-line encoding without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn decode(line: &str) -> Result<Self, String> {
        serde_json::from_str(line.trim()).map_err(|e| format!("malformed message: {e}"))
    }
}
