use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use super::message::{code, Message, PROTOCOL_VERSION};
use super::{accept_loop, read_line, write_message, EventLog};
use crate::error::{Error, Result};
use crate::trainee::{Trainee, TraineeCheckpoint, TraineeFactory};
use crate::types::BinId;

/// Hosts one trainee per session for a remote engine.
///
/// The engine's `hello` carries the seed the trainee is built with. After that:
/// `action` trains one step (ack: `action` with loss and new step count),
/// `ppl_report` without a value asks for validation perplexity, `observe` with
/// `samples` asks for their scores, `checkpoint_request` / `restore` move state
/// as base64 checkpoint containers.
pub struct TrainerServer<F> {
    factory: F,
    log: Option<Arc<EventLog>>,
}

fn trainee_error(e: Error) -> Message {
    let code = match e {
        Error::UnknownBin { .. } | Error::Dimension { .. } => code::DIM,
        _ => code::TRAINEE,
    };
    Message::error(code, e.to_string())
}

impl<F: TraineeFactory> TrainerServer<F> {
    pub fn new(factory: F) -> Self {
        Self { factory, log: None }
    }

    pub fn with_log(mut self, log: Arc<EventLog>) -> Self {
        self.log = Some(log);
        self
    }

    fn log(&self, session: u64, direction: &str, line: &str) {
        if let Some(log) = &self.log {
            log.append(session, direction, line);
        }
    }

    fn handle(&self, trainee: &mut dyn Trainee, msg: Message) -> Message {
        let result = (|| -> Result<Message> {
            Ok(match msg {
                Message::Action { bin, .. } => {
                    let loss = trainee.train_step(BinId(bin))?;
                    Message::Action {
                        bin,
                        loss: Some(loss),
                        step: Some(trainee.steps_taken()),
                    }
                }
                Message::PplReport { value: None } => Message::PplReport {
                    value: Some(trainee.validation_perplexity()?),
                },
                Message::Observe {
                    samples: Some(samples),
                    ..
                } => Message::Observe {
                    scores: trainee.score_samples(&samples)?,
                    step: trainee.steps_taken(),
                    samples: None,
                },
                Message::Observe { samples: None, .. } => {
                    Message::error(code::PARSE, "observe to a trainer needs \"samples\"")
                }
                Message::CheckpointRequest => {
                    let cp = trainee.checkpoint()?;
                    Message::CheckpointData {
                        payload: B64.encode(cp.to_bytes()),
                        step: cp.step,
                    }
                }
                Message::Restore {
                    payload: Some(payload),
                    ..
                } => {
                    let bytes = B64
                        .decode(payload.as_bytes())
                        .map_err(|e| Error::protocol(code::PARSE, format!("bad base64: {e}")))?;
                    trainee.restore(&TraineeCheckpoint::from_bytes(&bytes)?)?;
                    Message::Restore {
                        payload: None,
                        step: Some(trainee.steps_taken()),
                    }
                }
                Message::Restore { payload: None, .. } => {
                    Message::error(code::PARSE, "restore needs \"payload\"")
                }
                Message::Reward { value, step } => Message::Reward { value, step },
                other => Message::error(
                    code::UNSUPPORTED,
                    format!("trainer does not handle {:?}", other.type_name()),
                ),
            })
        })();
        match result {
            Ok(m) => m,
            Err(Error::Protocol { code, message }) => Message::error(&code, message),
            Err(e) => trainee_error(e),
        }
    }

    /// Serve one session over any line stream until `bye` or end of input.
    pub fn session<R: BufRead, W: Write>(&self, id: u64, mut reader: R, mut writer: W) -> Result<()> {
        let mut trainee: Option<Box<dyn Trainee>> = None;
        let mut line = String::new();
        while read_line(&mut reader, &mut line)?.is_some() {
            self.log(id, "<", &line);
            let reply = match Message::parse(&line) {
                Err(Error::Protocol { code, message }) => Message::error(&code, message),
                Err(e) => return Err(e),
                Ok(Message::Bye) => {
                    let l = write_message(&mut writer, &Message::Bye)?;
                    self.log(id, ">", &l);
                    return Ok(());
                }
                Ok(Message::Hello { protocol_version, .. }) if protocol_version != PROTOCOL_VERSION => {
                    let l = write_message(
                        &mut writer,
                        &Message::error(
                            code::VERSION,
                            format!("protocol version {protocol_version} not supported; server speaks {PROTOCOL_VERSION}"),
                        ),
                    )?;
                    self.log(id, ">", &l);
                    return Ok(());
                }
                Ok(Message::Hello { seed, .. }) => match self.factory.make(seed.unwrap_or(0)) {
                    Ok(t) => {
                        let reply = Message::Hello {
                            protocol_version: PROTOCOL_VERSION,
                            obs_dim: 0,
                            n_bins: t.n_bins(),
                            bin_sizes: Some(t.bin_sizes()),
                            seed,
                        };
                        trainee = Some(t);
                        reply
                    }
                    Err(e) => trainee_error(e),
                },
                Ok(Message::Error { .. }) => continue,
                Ok(msg) => match &mut trainee {
                    None => Message::error(code::STATE, "hello required first"),
                    Some(t) => self.handle(t.as_mut(), msg),
                },
            };
            let l = write_message(&mut writer, &reply)?;
            self.log(id, ">", &l);
        }
        Ok(())
    }

    /// Accept connections on `listener`, one thread and one trainee per session.
    /// Returns after `max_sessions` sessions have finished, or never when `None`.
    pub fn serve(&self, listener: &TcpListener, max_sessions: Option<usize>) -> Result<()> {
        accept_loop(listener, max_sessions, |id, stream| {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(e) => {
                    self.log(id, "!", &e.to_string());
                    return;
                }
            };
            if let Err(e) = self.session(id, reader, stream) {
                self.log(id, "!", &e.to_string());
            }
        })
    }
}
