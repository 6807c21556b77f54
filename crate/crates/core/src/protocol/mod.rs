//! Newline-delimited JSON wire protocol.
//!
//! Two services speak it: a decision server answering `observe` with `action`
//! from a curriculum policy, and a trainer server hosting a trainee for a remote
//! engine. [`RemoteTrainee`] is the engine-side client of the latter.

mod decision;
mod message;
mod remote;
mod trainer;

use std::io::{self, BufRead, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Mutex;

pub use decision::DecisionServer;
pub use message::{code, Message, PROTOCOL_VERSION};
pub use remote::RemoteTrainee;
pub use trainer::TrainerServer;

use crate::error::{Error, Result};

/// Append-only record of every line a server sends or receives, shared across sessions.
pub struct EventLog {
    out: Mutex<Box<dyn Write + Send>>,
}

impl EventLog {
    pub fn new(out: impl Write + Send + 'static) -> Self {
        Self {
            out: Mutex::new(Box::new(out)),
        }
    }

    pub fn append(&self, session: u64, direction: &str, line: &str) {
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        // Logging must never take a session down.
        let _ = writeln!(out, "{session}\t{direction}\t{line}");
        let _ = out.flush();
    }
}

/// Next non-blank line, without its terminator; `None` at end of stream.
pub(crate) fn read_line<R: BufRead>(reader: &mut R, buf: &mut String) -> io::Result<Option<()>> {
    loop {
        buf.clear();
        if reader.read_line(buf)? == 0 {
            return Ok(None);
        }
        let trimmed = buf.trim_end_matches(['\r', '\n']).len();
        buf.truncate(trimmed);
        if !buf.trim().is_empty() {
            return Ok(Some(()));
        }
    }
}

pub(crate) fn write_message<W: Write>(writer: &mut W, msg: &Message) -> Result<String> {
    let line = msg.encode()?;
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(line)
}

pub(crate) fn io_error(e: io::Error, timeout: std::time::Duration) -> Error {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Error::Timeout(timeout),
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => Error::Disconnected,
        _ => Error::Io(e),
    }
}

/// Accept connections and run `session` on each in its own thread.
/// Stops after `max_sessions` connections when given (and waits for them), otherwise runs forever.
pub(crate) fn accept_loop<F>(listener: &TcpListener, max_sessions: Option<usize>, session: F) -> Result<()>
where
    F: Fn(u64, TcpStream) + Sync,
{
    std::thread::scope(|scope| {
        let mut id = 0u64;
        for stream in listener.incoming() {
            let stream = stream?;
            // One small line per round trip: don't let Nagle batch replies.
            stream.set_nodelay(true)?;
            let session = &session;
            let this = id;
            scope.spawn(move || session(this, stream));
            id += 1;
            if max_sessions.is_some_and(|m| id as usize >= m) {
                break;
            }
        }
        Ok(())
    })
}
