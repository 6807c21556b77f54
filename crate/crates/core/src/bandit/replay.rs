use crate::container::{format, Container, Reader};
use crate::error::{Error, Result};
use crate::types::{BinId, ObservationVector, Transition};

/// Append-only transition store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    transitions: Vec<Transition>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Concatenate buffers in the given order.
    pub fn merge<'a>(buffers: impl IntoIterator<Item = &'a ReplayBuffer>) -> Self {
        Self {
            transitions: buffers
                .into_iter()
                .flat_map(|b| b.transitions.iter().cloned())
                .collect(),
        }
    }

    /// Distinct agent ids, ascending.
    pub fn agent_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.transitions.iter().map(|t| t.agent_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.transitions.len() as u64).to_le_bytes());
        for t in &self.transitions {
            out.extend_from_slice(&t.agent_id.to_le_bytes());
            out.extend_from_slice(&t.step.to_le_bytes());
            out.extend_from_slice(&(t.action.index() as u64).to_le_bytes());
            out.extend_from_slice(&t.reward.to_le_bytes());
            out.extend_from_slice(&t.observation.step.to_le_bytes());
            out.extend_from_slice(&(t.observation.scores.len() as u64).to_le_bytes());
            for s in &t.observation.scores {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        let last_step = self.transitions.last().map_or(0, |t| t.step);
        Container {
            format_version: format::REPLAY_BUFFER,
            step: last_step,
            payload: out,
        }
        .encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = Container::decode_expecting(bytes, format::REPLAY_BUFFER)?;
        let mut r = Reader::new(&c.payload);
        let n = r.u64()? as usize;
        let mut transitions = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let agent_id = r.u32()?;
            let step = r.u64()?;
            let action = BinId(r.u64()? as usize);
            let reward = r.f64()?;
            let obs_step = r.u64()?;
            let len = r.u64()? as usize;
            if len > c.payload.len() / 8 {
                return Err(Error::Corrupt(format!("observation length {len} too large")));
            }
            transitions.push(Transition {
                observation: ObservationVector {
                    scores: r.f64s(len)?,
                    step: obs_step,
                },
                action,
                reward,
                step,
                agent_id,
            });
        }
        r.finish()?;
        Ok(Self { transitions })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        crate::observer::write_trace_csv(out, &self.transitions)
    }
}

impl FromIterator<Transition> for ReplayBuffer {
    fn from_iter<I: IntoIterator<Item = Transition>>(iter: I) -> Self {
        Self {
            transitions: iter.into_iter().collect(),
        }
    }
}
