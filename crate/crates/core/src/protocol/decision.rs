use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;

use super::message::{code, Message, PROTOCOL_VERSION};
use super::{accept_loop, read_line, write_message, EventLog};
use crate::bandit::{fit_pass, MlpModel, ReplayBuffer};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::policy::{CurriculumPolicy, PolicyDriver};
use crate::rng::{seeded_rng, Stream};
use crate::types::{BinId, ObservationVector, Transition};

/// Answers `observe` with `action` exactly as an in-process run of the policy would.
///
/// In online mode (learned policies only) every session keeps its own copy of the
/// model, credits each `reward` to the actions taken since the previous one, and
/// refits on its live buffer every `bandit_update_cadence` post-warmup steps.
pub struct DecisionServer {
    policy: CurriculumPolicy,
    cfg: RunConfig,
    online: bool,
    log: Option<Arc<EventLog>>,
}

/// What one session saw, returned when it ends.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionSummary {
    pub decisions: usize,
    pub rewards: usize,
    pub refits: usize,
    pub buffer: ReplayBuffer,
}

struct Live {
    model: MlpModel,
    pending: Vec<(ObservationVector, BinId)>,
    shuffle: Stream,
    last_refit_bucket: u64,
}

struct Session {
    driver: PolicyDriver,
    obs_dim: usize,
    live: Option<Live>,
}

impl DecisionServer {
    pub fn new(policy: CurriculumPolicy, cfg: RunConfig) -> Result<Self> {
        policy.validate(&cfg)?;
        Ok(Self {
            policy,
            cfg,
            online: false,
            log: None,
        })
    }

    pub fn online(mut self, online: bool) -> Result<Self> {
        if online && !matches!(self.policy, CurriculumPolicy::Learned(_)) {
            return Err(Error::InvalidArgument(
                "online mode needs a learned policy".into(),
            ));
        }
        self.online = online;
        Ok(self)
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

    fn send<W: Write>(&self, id: u64, writer: &mut W, msg: &Message) -> Result<()> {
        let line = write_message(writer, msg)?;
        self.log(id, ">", &line);
        Ok(())
    }

    /// Serve one session over any line stream until `bye` or end of input.
    pub fn session<R: BufRead, W: Write>(
        &self,
        id: u64,
        mut reader: R,
        mut writer: W,
    ) -> Result<SessionSummary> {
        let mut summary = SessionSummary::default();
        let mut state: Option<Session> = None;
        let mut line = String::new();
        while read_line(&mut reader, &mut line)?.is_some() {
            self.log(id, "<", &line);
            let msg = match Message::parse(&line) {
                Ok(m) => m,
                Err(Error::Protocol { code, message }) => {
                    self.send(id, &mut writer, &Message::error(&code, message))?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let reply = match (msg, &mut state) {
                (Message::Bye, _) => {
                    self.send(id, &mut writer, &Message::Bye)?;
                    break;
                }
                (Message::Hello { protocol_version, .. }, _) if protocol_version != PROTOCOL_VERSION => {
                    self.send(
                        id,
                        &mut writer,
                        &Message::error(
                            code::VERSION,
                            format!("protocol version {protocol_version} not supported; server speaks {PROTOCOL_VERSION}"),
                        ),
                    )?;
                    break;
                }
                (Message::Hello { obs_dim, n_bins, seed, .. }, _) => match self.open(obs_dim, n_bins, seed) {
                    Ok(s) => {
                        let reply = Message::Hello {
                            protocol_version: PROTOCOL_VERSION,
                            obs_dim: s.obs_dim,
                            n_bins: self.cfg.n_bins(),
                            bin_sizes: None,
                            seed: Some(seed.unwrap_or(self.cfg.seed)),
                        };
                        state = Some(s);
                        reply
                    }
                    Err(e) => e,
                },
                (Message::Error { .. }, _) => continue,
                (_, None) => Message::error(code::STATE, "hello required first"),
                (Message::Observe { scores, step, .. }, Some(s)) => {
                    if scores.len() != s.obs_dim {
                        Message::error(
                            code::DIM,
                            format!("expected {} scores, got {}", s.obs_dim, scores.len()),
                        )
                    } else {
                        let needs = s.driver.needs_observation(step);
                        match s.driver.decide(step, needs.then_some(&scores[..])) {
                            Ok(bin) => {
                                summary.decisions += 1;
                                if let Some(live) = &mut s.live {
                                    if needs {
                                        live.pending.push((ObservationVector { scores, step }, bin));
                                    }
                                }
                                Message::Action {
                                    bin: bin.0,
                                    loss: None,
                                    step: None,
                                }
                            }
                            Err(e) => Message::error(code::STATE, e.to_string()),
                        }
                    }
                }
                (Message::Reward { value, step }, Some(s)) => {
                    if !value.is_finite() {
                        Message::error(code::PARSE, "reward must be finite")
                    } else {
                        summary.rewards += 1;
                        if let Some(live) = &mut s.live {
                            match self.credit(id, live, &mut s.driver, &mut summary, value, step) {
                                Ok(()) => Message::Reward { value, step },
                                Err(e) => Message::error(code::STATE, e.to_string()),
                            }
                        } else {
                            Message::Reward { value, step }
                        }
                    }
                }
                (other, Some(_)) => Message::error(
                    code::UNSUPPORTED,
                    format!("decision server does not handle {:?}", other.type_name()),
                ),
            };
            self.send(id, &mut writer, &reply)?;
        }
        Ok(summary)
    }

    fn open(&self, obs_dim: usize, n_bins: usize, seed: Option<u64>) -> Result<Session, Message> {
        if n_bins != self.cfg.n_bins() {
            return Err(Message::error(
                code::DIM,
                format!("policy has {} bins, client has {n_bins}", self.cfg.n_bins()),
            ));
        }
        let seed = seed.unwrap_or(self.cfg.seed);
        let driver = self
            .policy
            .detached_driver(&self.cfg, seed)
            .map_err(|e| Message::error(code::STATE, e.to_string()))?;
        if let Some(expected) = driver.obs_dim() {
            if expected != obs_dim {
                return Err(Message::error(
                    code::DIM,
                    format!("policy expects obs_dim {expected}, client has {obs_dim}"),
                ));
            }
        }
        let live = match (&self.policy, self.online) {
            (CurriculumPolicy::Learned(m), true) => Some(Live {
                model: (**m).clone(),
                pending: Vec::new(),
                shuffle: seeded_rng(seed, "agent/shuffle"),
                last_refit_bucket: 0,
            }),
            _ => None,
        };
        Ok(Session {
            driver,
            obs_dim,
            live,
        })
    }

    fn credit(
        &self,
        id: u64,
        live: &mut Live,
        driver: &mut PolicyDriver,
        summary: &mut SessionSummary,
        value: f64,
        step: u64,
    ) -> Result<()> {
        for (observation, action) in live.pending.drain(..) {
            let at = observation.step;
            summary.buffer.push(Transition {
                observation,
                action,
                reward: value,
                step: at,
                agent_id: id as u32,
            });
        }
        let warmup = self.cfg.warmup_steps;
        let cadence = self.cfg.bandit_update_cadence.max(1);
        if step > warmup && !summary.buffer.is_empty() {
            let bucket = (step - warmup) / cadence;
            if bucket > live.last_refit_bucket {
                live.last_refit_bucket = bucket;
                fit_pass(
                    &mut live.model,
                    summary.buffer.transitions(),
                    self.cfg.fit_batch_size,
                    &mut live.shuffle,
                )?;
                driver.set_model(Arc::new(live.model.clone()))?;
                summary.refits += 1;
            }
        }
        Ok(())
    }

    /// Accept connections on `listener`, one thread per session.
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
