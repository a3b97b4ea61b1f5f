//! Stream server: one thread and one consensus state per client, plain
//! newline-delimited records or WebSocket text frames on the same port.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use focalbci_core::classifier::ClassifierModel;
use focalbci_core::data::Dataset;
use focalbci_core::intent::{CommandMap, CommandMode, IntentSession, DEFAULT_REQUIRED_RUN, DEFAULT_WINDOW_SIZE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tungstenite::Message;

use crate::wire::WireMessage;

pub const PORT_ENV: &str = "FOCALBCI_PORT";
pub const DEFAULT_PORT: u16 = 8765;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    pub mode: CommandMode,
    pub window_size: usize,
    pub required_run: usize,
    pub seed: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            mode: CommandMode::Typing,
            window_size: DEFAULT_WINDOW_SIZE,
            required_run: DEFAULT_REQUIRED_RUN,
            seed: 0,
        }
    }
}

/// Read-only state shared by every connection.
pub struct Shared {
    model: ClassifierModel,
    config: ServerConfig,
    /// Held-out samples grouped by label, for intent simulation.
    by_label: Option<Vec<Vec<Vec<f64>>>>,
}

impl Shared {
    pub fn new(model: ClassifierModel, replay: Option<&Dataset>, config: ServerConfig) -> Result<Self, String> {
        if config.window_size == 0 || config.required_run == 0 {
            return Err("window size and required run must be >= 1".into());
        }
        let by_label = match replay {
            Some(ds) => {
                if ds.channel_count != model.rs_map.k() {
                    return Err(format!(
                        "replay data has {} channels, model expects {}",
                        ds.channel_count,
                        model.rs_map.k()
                    ));
                }
                let mut groups = vec![Vec::new(); model.class_count()];
                for s in &ds.samples {
                    if let Some(g) = groups.get_mut(s.label) {
                        g.push(s.features.clone());
                    }
                }
                Some(groups)
            }
            None => None,
        };
        Ok(Self { model, config, by_label })
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }
}

/// Per-client protocol state.
pub struct Connection<'a> {
    shared: &'a Shared,
    session: IntentSession<'a>,
    rng: ChaCha8Rng,
}

impl<'a> Connection<'a> {
    pub fn new(shared: &'a Shared, id: u64) -> Self {
        let c = &shared.config;
        Self {
            shared,
            session: IntentSession::new(&shared.model, CommandMap::for_mode(c.mode), c.window_size, c.required_run),
            rng: ChaCha8Rng::seed_from_u64(c.seed.wrapping_add(id)),
        }
    }

    /// Replies to one inbound line. A reply ending in `End` closes the stream.
    pub fn handle_line(&mut self, line: &str) -> Vec<WireMessage> {
        match WireMessage::decode(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![WireMessage::error(e)],
        }
    }

    pub fn handle(&mut self, msg: WireMessage) -> Vec<WireMessage> {
        match msg {
            WireMessage::Window { samples } => self.process(&samples),
            WireMessage::Intent { label } => match self.draw(label) {
                Ok(samples) => self.process(&samples),
                Err(e) => vec![WireMessage::error(e)],
            },
            WireMessage::End { windows } => vec![WireMessage::End { windows }],
            other => vec![WireMessage::error(format!("unexpected inbound message: {}", other.encode()))],
        }
    }

    fn process(&mut self, samples: &[Vec<f64>]) -> Vec<WireMessage> {
        match self.session.process_window(samples) {
            Ok(out) => {
                let mut replies = vec![WireMessage::Decision { label: out.decision }];
                if let Some((label, command)) = out.emitted {
                    replies.push(WireMessage::Command { label, command });
                }
                replies
            }
            Err(e) => vec![WireMessage::error(e.to_string())],
        }
    }

    fn draw(&mut self, label: usize) -> Result<Vec<Vec<f64>>, String> {
        let groups = self
            .shared
            .by_label
            .as_ref()
            .ok_or("intent simulation needs a replay dataset (serve --replay-data)")?;
        let pool = groups
            .get(label)
            .ok_or_else(|| format!("label {label} outside 0..{}", groups.len()))?;
        if pool.is_empty() {
            return Err(format!("no held-out samples for label {label}"));
        }
        Ok((0..self.shared.config.window_size)
            .map(|_| pool[self.rng.random_range(0..pool.len())].clone())
            .collect())
    }
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, shared: Shared) -> io::Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            shared: Arc::new(shared),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts clients forever.
    pub fn run(self) -> io::Result<()> {
        let mut next_id = 0u64;
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let shared = Arc::clone(&self.shared);
            let id = next_id;
            next_id += 1;
            thread::spawn(move || {
                let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
                log::info!("client {id} connected from {peer}");
                if let Err(e) = serve_client(stream, &shared, id) {
                    log::info!("client {id}: {e}");
                }
                log::info!("client {id} disconnected");
            });
        }
        Ok(())
    }
}

fn serve_client(stream: TcpStream, shared: &Shared, id: u64) -> io::Result<()> {
    let mut conn = Connection::new(shared, id);
    if is_http_upgrade(&stream)? {
        serve_websocket(stream, &mut conn)
    } else {
        serve_lines(stream, &mut conn)
    }
}

fn is_http_upgrade(stream: &TcpStream) -> io::Result<bool> {
    let mut buf = [0u8; 4];
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 || n >= 4 || !b"GET ".starts_with(&buf[..n]) {
            return Ok(n >= 4 && &buf == b"GET ");
        }
        thread::sleep(Duration::from_millis(1));
    }
}

fn serve_lines(stream: TcpStream, conn: &mut Connection<'_>) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        let line = String::from_utf8_lossy(&buf);
        if line.trim().is_empty() {
            continue;
        }
        let replies = conn.handle_line(&line);
        let mut out = String::new();
        for r in &replies {
            out.push_str(&r.encode());
            out.push('\n');
        }
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
        if matches!(replies.last(), Some(WireMessage::End { .. })) {
            return Ok(());
        }
    }
}

fn serve_websocket(stream: TcpStream, conn: &mut Connection<'_>) -> io::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::other(e.to_string()))?;
    let ws_err = |e: tungstenite::Error| io::Error::other(e.to_string());
    loop {
        let text = match ws.read() {
            Ok(Message::Text(t)) => t,
            Ok(Message::Binary(_)) => {
                ws.send(Message::text(WireMessage::error("binary frames are not supported").encode()))
                    .map_err(ws_err)?;
                continue;
            }
            Ok(Message::Close(_)) | Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Ok(_) => continue,
            Err(e) => return Err(ws_err(e)),
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let replies = conn.handle_line(line);
            for r in &replies {
                ws.send(Message::text(r.encode())).map_err(ws_err)?;
            }
            if matches!(replies.last(), Some(WireMessage::End { .. })) {
                let _ = ws.close(None);
                let _ = ws.flush();
                return Ok(());
            }
        }
    }
}
