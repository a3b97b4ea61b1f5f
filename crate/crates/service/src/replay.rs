//! Streams recorded samples as window messages at a fixed rate.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use focalbci_core::data::Dataset;
use focalbci_core::{Error, Result};

use crate::wire::WireMessage;

/// Consecutive windows of `window_size` samples, optionally restricted to
/// one label. A trailing partial window is dropped.
pub fn replay_windows(ds: &Dataset, class_filter: Option<usize>, window_size: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    if window_size == 0 {
        return Err(Error::Validation("window size must be >= 1".into()));
    }
    let rows: Vec<&Vec<f64>> = ds
        .samples
        .iter()
        .filter(|s| class_filter.is_none_or(|c| s.label == c))
        .map(|s| &s.features)
        .collect();
    if rows.is_empty() {
        return Err(Error::Validation(match class_filter {
            Some(c) => format!("no samples with label {c}"),
            None => "dataset is empty".into(),
        }));
    }
    if rows.len() < window_size {
        return Err(Error::Validation(format!(
            "{} matching samples, fewer than one window of {window_size}",
            rows.len()
        )));
    }
    Ok(rows
        .chunks_exact(window_size)
        .map(|w| w.iter().map(|r| (*r).clone()).collect())
        .collect())
}

/// Sends each window through `send` on a fixed schedule of `rate` windows
/// per second, then an `End` notice. Returns the number of windows sent.
pub fn pace<F>(windows: Vec<Vec<Vec<f64>>>, rate: f64, mut send: F) -> io::Result<usize>
where
    F: FnMut(&WireMessage) -> io::Result<()>,
{
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "rate must be positive"));
    }
    let period = Duration::from_secs_f64(1.0 / rate);
    let start = Instant::now();
    let mut sent = 0;
    for (i, samples) in windows.into_iter().enumerate() {
        let due = start + period * i as u32;
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        send(&WireMessage::Window { samples })?;
        sent += 1;
    }
    send(&WireMessage::End { windows: sent })?;
    Ok(sent)
}

/// Writes one record per line to `out`.
pub fn replay_to_writer<W: Write>(windows: Vec<Vec<Vec<f64>>>, rate: f64, out: &mut W) -> io::Result<usize> {
    pace(windows, rate, |m| {
        writeln!(out, "{}", m.encode())?;
        out.flush()
    })
}

/// Streams to a server and copies every reply line to `replies` as it
/// arrives, until the server acknowledges the end notice and closes.
pub fn replay_to_server<A, W>(windows: Vec<Vec<Vec<f64>>>, rate: f64, addr: A, replies: W) -> io::Result<usize>
where
    A: ToSocketAddrs,
    W: Write + Send,
{
    let stream = TcpStream::connect(addr)?;
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    thread::scope(|s| {
        let pump = s.spawn(move || -> io::Result<()> {
            let mut replies = replies;
            for line in reader.lines() {
                writeln!(replies, "{}", line?)?;
                replies.flush()?;
            }
            Ok(())
        });
        let sent = pace(windows, rate, |m| {
            writeln!(writer, "{}", m.encode())?;
            writer.flush()
        });
        if sent.is_err() {
            let _ = writer.shutdown(std::net::Shutdown::Both);
        }
        let pumped = pump.join().expect("reply reader panicked");
        let sent = sent?;
        pumped?;
        Ok(sent)
    })
}
