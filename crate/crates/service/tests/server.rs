mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::thread;

use common::{planted, planted_model, window_of, CHANNELS};
use focalbci::server::{Connection, Server, ServerConfig, Shared};
use focalbci::wire::WireMessage;
use focalbci_core::intent::{window_decide, CommandMap, CommandMode, IntentSession};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shared(window_size: usize) -> Shared {
    let config = ServerConfig { window_size, ..ServerConfig::default() };
    Shared::new(planted_model().clone(), Some(&planted(20, 77)), config).unwrap()
}

fn window_line(samples: Vec<Vec<f64>>) -> String {
    WireMessage::Window { samples }.encode()
}

fn start(window_size: usize) -> SocketAddr {
    let server = Server::bind("127.0.0.1:0", shared(window_size)).unwrap();
    let addr = server.local_addr().unwrap();
    thread::spawn(move || server.run());
    addr
}

struct LineClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl LineClient {
    fn connect(addr: SocketAddr) -> Self {
        let writer = TcpStream::connect(addr).unwrap();
        Self { reader: BufReader::new(writer.try_clone().unwrap()), writer }
    }

    fn send(&mut self, line: &str) {
        writeln!(self.writer, "{line}").unwrap();
    }

    fn recv(&mut self) -> WireMessage {
        let mut line = String::new();
        assert!(self.reader.read_line(&mut line).unwrap() > 0, "server closed");
        WireMessage::decode(&line).unwrap()
    }
}

#[test]
fn three_planted_windows_emit_left() {
    let s = shared(8);
    let mut conn = Connection::new(&s, 0);
    let mut replies = Vec::new();
    for seed in 0..3 {
        replies.extend(conn.handle_line(&window_line(window_of(2, 8, seed))));
    }
    assert_eq!(
        replies,
        vec![
            WireMessage::Decision { label: 2 },
            WireMessage::Decision { label: 2 },
            WireMessage::Decision { label: 2 },
            WireMessage::Command { label: 2, command: "Left".into() },
        ]
    );
}

#[test]
fn intents_for_label_five_confirm() {
    let s = shared(16);
    let mut conn = Connection::new(&s, 3);
    let replies: Vec<_> = (0..3).flat_map(|_| conn.handle(WireMessage::Intent { label: 5 })).collect();
    assert_eq!(replies.last(), Some(&WireMessage::Command { label: 5, command: "Confirm".into() }));
    assert_eq!(replies.len(), 4);
}

#[test]
fn robot_mode_uses_robot_table() {
    let config = ServerConfig { window_size: 4, mode: CommandMode::Robot, ..ServerConfig::default() };
    let s = Shared::new(planted_model().clone(), None, config).unwrap();
    let mut conn = Connection::new(&s, 0);
    let replies: Vec<_> = (0..3).flat_map(|i| conn.handle_line(&window_line(window_of(0, 4, i)))).collect();
    assert_eq!(replies.last(), Some(&WireMessage::Command { label: 0, command: "Forward".into() }));
}

#[test]
fn bad_input_gets_one_error_and_the_stream_continues() {
    let s = shared(4);
    let mut conn = Connection::new(&s, 0);
    for bad in [
        "garbage".to_string(),
        window_line(window_of(1, 3, 0)),
        window_line(vec![vec![0.0; CHANNELS + 1]; 4]),
        WireMessage::Decision { label: 1 }.encode(),
        WireMessage::Intent { label: 9 }.encode(),
    ] {
        let r = conn.handle_line(&bad);
        assert_eq!(r.len(), 1, "{bad}");
        assert!(matches!(r[0], WireMessage::Error { .. }), "{bad} -> {r:?}");
    }
    assert_eq!(conn.handle_line(&window_line(window_of(3, 4, 1))), vec![WireMessage::Decision { label: 3 }]);
}

#[test]
fn intent_without_replay_data_is_an_error() {
    let s = Shared::new(planted_model().clone(), None, ServerConfig::default()).unwrap();
    let r = Connection::new(&s, 0).handle(WireMessage::Intent { label: 1 });
    assert!(matches!(&r[..], [WireMessage::Error { message }] if message.contains("replay")));
}

#[test]
fn mismatched_replay_channels_are_rejected() {
    let other = focalbci_core::data::generate_synthetic(2, 14, 0.1, 0).unwrap();
    assert!(Shared::new(planted_model().clone(), Some(&other), ServerConfig::default()).is_err());
}

#[test]
fn tcp_replies_match_offline_session() {
    let addr = start(6);
    let mut client = LineClient::connect(addr);
    let mut offline = IntentSession::new(planted_model(), CommandMap::typing(), 6, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut commands = 0;
    for i in 0..40 {
        let window: Vec<Vec<f64>> = if i % 2 == 0 {
            window_of(i % 6, 6, i as u64)
        } else {
            (0..6).map(|_| (0..CHANNELS).map(|_| rng.random_range(-4.0..4.0)).collect()).collect()
        };
        let decision = window_decide(planted_model(), &window).unwrap();
        let out = offline.process_window(&window).unwrap();
        assert_eq!(out.decision, decision);
        client.send(&window_line(window));
        assert_eq!(client.recv(), WireMessage::Decision { label: decision });
        if let Some((label, command)) = out.emitted {
            assert_eq!(client.recv(), WireMessage::Command { label, command });
            commands += 1;
        }
    }
    client.send(&WireMessage::End { windows: 40 }.encode());
    assert_eq!(client.recv(), WireMessage::End { windows: 40 });
    assert!(commands <= 40 / 3);
}

#[test]
fn tcp_garbage_then_valid_window() {
    let addr = start(4);
    let mut client = LineClient::connect(addr);
    client.send("{not json");
    assert!(matches!(client.recv(), WireMessage::Error { .. }));
    client.send(&window_line(window_of(4, 4, 2)));
    assert_eq!(client.recv(), WireMessage::Decision { label: 4 });
}

#[test]
fn clients_keep_separate_consensus() {
    let addr = start(4);
    let mut a = LineClient::connect(addr);
    let mut b = LineClient::connect(addr);
    for i in 0..2 {
        a.send(&window_line(window_of(3, 4, i)));
        assert_eq!(a.recv(), WireMessage::Decision { label: 3 });
    }
    b.send(&window_line(window_of(3, 4, 9)));
    assert_eq!(b.recv(), WireMessage::Decision { label: 3 });
    b.send(&WireMessage::End { windows: 1 }.encode());
    assert_eq!(b.recv(), WireMessage::End { windows: 1 });
    a.send(&window_line(window_of(3, 4, 5)));
    assert_eq!(a.recv(), WireMessage::Decision { label: 3 });
    assert_eq!(a.recv(), WireMessage::Command { label: 3, command: "Right".into() });
}

#[test]
fn end_notice_is_echoed_and_closes() {
    let addr = start(4);
    let mut client = LineClient::connect(addr);
    client.send(&WireMessage::End { windows: 0 }.encode());
    assert_eq!(client.recv(), WireMessage::End { windows: 0 });
    let mut rest = String::new();
    assert_eq!(client.reader.read_line(&mut rest).unwrap(), 0);
}

#[test]
fn websocket_clients_speak_the_same_records() {
    let addr = start(8);
    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}/")).unwrap();
    let mut replies = Vec::new();
    for _ in 0..3 {
        ws.send(tungstenite::Message::text(WireMessage::Intent { label: 2 }.encode())).unwrap();
        replies.push(ws.read().unwrap());
    }
    let command = ws.read().unwrap();
    let decoded: Vec<_> = replies.iter().map(|m| WireMessage::decode(m.to_text().unwrap()).unwrap()).collect();
    assert!(decoded.iter().all(|m| *m == WireMessage::Decision { label: 2 }), "{decoded:?}");
    assert_eq!(
        WireMessage::decode(command.to_text().unwrap()).unwrap(),
        WireMessage::Command { label: 2, command: "Left".into() }
    );
    ws.send(tungstenite::Message::text("oops")).unwrap();
    assert!(matches!(WireMessage::decode(ws.read().unwrap().to_text().unwrap()).unwrap(), WireMessage::Error { .. }));
}
