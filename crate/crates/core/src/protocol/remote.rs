use std::io::{BufRead, BufReader};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use super::message::{Message, PROTOCOL_VERSION};
use super::{io_error, write_message};
use crate::error::{Error, Result};
use crate::trainee::{check_bin, Trainee, TraineeCheckpoint};
use crate::types::{BinId, SampleRef};

/// A trainee living behind a trainer server. Every trait call is one request/reply
/// round trip, each bounded by the configured timeout.
pub struct RemoteTrainee {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    timeout: Duration,
    n_bins: usize,
    bin_sizes: Vec<usize>,
    steps: u64,
    line: String,
}

impl RemoteTrainee {
    /// Connect and handshake; the server builds its trainee from `seed`.
    pub fn connect(address: &str, timeout: Duration, seed: u64) -> Result<Self> {
        let addrs: Vec<_> = address
            .to_socket_addrs()
            .map_err(|e| Error::InvalidArgument(format!("bad trainee address {address:?}: {e}")))?
            .collect();
        let mut last = None;
        let mut stream = None;
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        let stream = match (stream, last) {
            (Some(s), _) => s,
            (None, Some(e)) => return Err(io_error(e, timeout)),
            (None, None) => {
                return Err(Error::InvalidArgument(format!("{address:?} resolves to nothing")))
            }
        };
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let mut remote = Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            timeout,
            n_bins: 0,
            bin_sizes: Vec::new(),
            steps: 0,
            line: String::new(),
        };
        match remote.call(&Message::Hello {
            protocol_version: PROTOCOL_VERSION,
            obs_dim: 0,
            n_bins: 0,
            bin_sizes: None,
            seed: Some(seed),
        })? {
            Message::Hello {
                n_bins,
                bin_sizes: Some(sizes),
                ..
            } if sizes.len() == n_bins => {
                remote.n_bins = n_bins;
                remote.bin_sizes = sizes;
                Ok(remote)
            }
            other => Err(unexpected("hello with bin_sizes", &other)),
        }
    }

    fn call(&mut self, msg: &Message) -> Result<Message> {
        write_message(&mut self.writer, msg).map_err(|e| match e {
            Error::Io(e) => io_error(e, self.timeout),
            e => e,
        })?;
        self.line.clear();
        let n = self
            .reader
            .read_line(&mut self.line)
            .map_err(|e| io_error(e, self.timeout))?;
        if n == 0 {
            return Err(Error::Disconnected);
        }
        match Message::parse(&self.line)? {
            Message::Error { code, message } => Err(Error::Protocol { code, message }),
            m => Ok(m),
        }
    }
}

fn unexpected(wanted: &str, got: &Message) -> Error {
    Error::protocol(
        "state",
        format!("expected {wanted} reply, got {:?}", got.type_name()),
    )
}

impl Trainee for RemoteTrainee {
    fn n_bins(&self) -> usize {
        self.n_bins
    }

    fn bin_sizes(&self) -> Vec<usize> {
        self.bin_sizes.clone()
    }

    fn train_step(&mut self, bin: BinId) -> Result<f64> {
        check_bin(bin, self.n_bins)?;
        match self.call(&Message::Action {
            bin: bin.0,
            loss: None,
            step: None,
        })? {
            Message::Action {
                loss: Some(loss),
                step: Some(step),
                ..
            } => {
                self.steps = step;
                Ok(loss)
            }
            other => Err(unexpected("action ack", &other)),
        }
    }

    fn validation_perplexity(&mut self) -> Result<f64> {
        match self.call(&Message::PplReport { value: None })? {
            Message::PplReport { value: Some(v) } => Ok(v),
            other => Err(unexpected("ppl_report", &other)),
        }
    }

    fn score_samples(&mut self, samples: &[SampleRef]) -> Result<Vec<f64>> {
        match self.call(&Message::Observe {
            scores: Vec::new(),
            step: self.steps,
            samples: Some(samples.to_vec()),
        })? {
            Message::Observe { scores, .. } if scores.len() == samples.len() => Ok(scores),
            Message::Observe { scores, .. } => Err(Error::Dimension {
                expected: samples.len(),
                found: scores.len(),
            }),
            other => Err(unexpected("observe", &other)),
        }
    }

    fn checkpoint(&mut self) -> Result<TraineeCheckpoint> {
        match self.call(&Message::CheckpointRequest)? {
            Message::CheckpointData { payload, .. } => {
                let bytes = B64
                    .decode(payload.as_bytes())
                    .map_err(|e| Error::Corrupt(format!("checkpoint payload is not base64: {e}")))?;
                TraineeCheckpoint::from_bytes(&bytes)
            }
            other => Err(unexpected("checkpoint_data", &other)),
        }
    }

    fn restore(&mut self, checkpoint: &TraineeCheckpoint) -> Result<()> {
        match self.call(&Message::Restore {
            payload: Some(B64.encode(checkpoint.to_bytes())),
            step: Some(checkpoint.step),
        })? {
            Message::Restore { step: Some(step), .. } => {
                self.steps = step;
                Ok(())
            }
            other => Err(unexpected("restore ack", &other)),
        }
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }
}

impl Drop for RemoteTrainee {
    fn drop(&mut self) {
        // Best effort; the server also ends the session on EOF.
        let _ = write_message(&mut self.writer, &Message::Bye);
    }
}
