use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::SampleRef;

pub const PROTOCOL_VERSION: u32 = 1;

/// Error codes carried by `error` messages.
pub mod code {
    pub const PARSE: &str = "parse";
    pub const DIM: &str = "dim";
    pub const STATE: &str = "state";
    pub const VERSION: &str = "version";
    pub const UNKNOWN_TYPE: &str = "unknown_type";
    pub const UNSUPPORTED: &str = "unsupported";
    pub const TRAINEE: &str = "trainee";
}

/// One line of the wire protocol. Field order here is the canonical encoding order.
///
/// Optional fields are omitted when absent. Requests and replies share variants:
/// e.g. a `ppl_report` without `value` asks a trainer for validation perplexity
/// and the reply carries it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        protocol_version: u32,
        obs_dim: usize,
        n_bins: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bin_sizes: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Observe {
        scores: Vec<f64>,
        step: u64,
        /// Set by an engine asking a trainer to score these samples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<Vec<SampleRef>>,
    },
    Action {
        bin: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        loss: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<u64>,
    },
    Reward {
        value: f64,
        step: u64,
    },
    CheckpointRequest,
    CheckpointData {
        payload: String,
        step: u64,
    },
    Restore {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        payload: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<u64>,
    },
    PplReport {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
    Bye,
    Error {
        code: String,
        message: String,
    },
}

const KNOWN_TYPES: [&str; 10] = [
    "hello",
    "observe",
    "action",
    "reward",
    "checkpoint_request",
    "checkpoint_data",
    "restore",
    "ppl_report",
    "bye",
    "error",
];

impl Message {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Message::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Observe { .. } => "observe",
            Message::Action { .. } => "action",
            Message::Reward { .. } => "reward",
            Message::CheckpointRequest => "checkpoint_request",
            Message::CheckpointData { .. } => "checkpoint_data",
            Message::Restore { .. } => "restore",
            Message::PplReport { .. } => "ppl_report",
            Message::Bye => "bye",
            Message::Error { .. } => "error",
        }
    }

    /// Canonical single-line encoding, without the trailing newline.
    /// Fails on non-finite floats, which JSON cannot carry.
    pub fn encode(&self) -> Result<String> {
        let finite = match self {
            Message::Observe { scores, .. } => scores.iter().all(|s| s.is_finite()),
            Message::Action { loss, .. } => loss.is_none_or(f64::is_finite),
            Message::Reward { value, .. } => value.is_finite(),
            Message::PplReport { value } => value.is_none_or(f64::is_finite),
            _ => true,
        };
        if !finite {
            return Err(Error::NonFinite("protocol message"));
        }
        Ok(serde_json::to_string(self)?)
    }

    /// Parse one line. Failures come back as `Error::Protocol` with the code a
    /// peer should be sent: `parse` for malformed JSON or fields, `unknown_type`
    /// for a well-formed object of a type outside the grammar.
    pub fn parse(line: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(line.trim_end_matches(['\r', '\n']))
            .map_err(|e| Error::protocol(code::PARSE, e.to_string()))?;
        let Some(ty) = value.get("type") else {
            return Err(Error::protocol(code::PARSE, "missing \"type\" field"));
        };
        let Some(ty) = ty.as_str() else {
            return Err(Error::protocol(code::PARSE, "\"type\" must be a string"));
        };
        if !KNOWN_TYPES.contains(&ty) {
            return Err(Error::protocol(
                code::UNKNOWN_TYPE,
                format!("unknown message type {ty:?}"),
            ));
        }
        serde_json::from_value(value).map_err(|e| Error::protocol(code::PARSE, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BinId;

    fn all_messages() -> Vec<Message> {
        vec![
            Message::Hello {
                protocol_version: 1,
                obs_dim: 64,
                n_bins: 2,
                bin_sizes: Some(vec![512, 1536]),
                seed: Some(7),
            },
            Message::Observe {
                scores: vec![-0.1, 0.0, -1e-300, -123.456],
                step: 6000,
                samples: Some(vec![SampleRef {
                    bin: BinId(1),
                    index: 3,
                }]),
            },
            Message::Action {
                bin: 0,
                loss: Some(0.25),
                step: Some(1),
            },
            Message::Reward {
                value: 0.1 + 0.2,
                step: 6010,
            },
            Message::CheckpointRequest,
            Message::CheckpointData {
                payload: "Q1VSUg==".into(),
                step: 4,
            },
            Message::Restore {
                payload: None,
                step: Some(4),
            },
            Message::PplReport { value: Some(1.5) },
            Message::Bye,
            Message::error(code::DIM, "expected 64"),
        ]
    }

    #[test]
    fn every_type_reencodes_byte_identically() {
        for m in all_messages() {
            let a = m.encode().unwrap();
            let parsed = Message::parse(&a).unwrap();
            assert_eq!(parsed, m);
            assert_eq!(parsed.encode().unwrap(), a);
        }
    }

    #[test]
    fn type_comes_first() {
        let s = Message::Action {
            bin: 1,
            loss: None,
            step: None,
        }
        .encode()
        .unwrap();
        assert_eq!(s, r#"{"type":"action","bin":1}"#);
    }

    #[test]
    fn unknown_fields_ignored() {
        let m = Message::parse(r#"{"type":"bye","extra":[1,2]}"#).unwrap();
        assert_eq!(m, Message::Bye);
    }

    fn code_of(line: &str) -> String {
        match Message::parse(line) {
            Err(Error::Protocol { code, .. }) => code,
            other => panic!("expected protocol error, got {other:?}"),
        }
    }

    #[test]
    fn failures_are_classified() {
        assert_eq!(code_of("{oops"), "parse");
        assert_eq!(code_of(r#"{"bin":0}"#), "parse");
        assert_eq!(code_of(r#"{"type":3}"#), "parse");
        assert_eq!(code_of(r#"{"type":"action"}"#), "parse");
        assert_eq!(code_of(r#"{"type":"teleport"}"#), "unknown_type");
    }

    #[test]
    fn nan_is_refused() {
        let m = Message::Reward {
            value: f64::NAN,
            step: 1,
        };
        assert!(matches!(m.encode(), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shortest_roundtrip_floats() {
        let s = Message::Reward { value: 0.1, step: 0 }.encode().unwrap();
        assert_eq!(s, r#"{"type":"reward","value":0.1,"step":0}"#);
        let x = 0.1 + 0.2;
        match Message::parse(&Message::Reward { value: x, step: 0 }.encode().unwrap()).unwrap() {
            Message::Reward { value, .. } => assert_eq!(value.to_bits(), x.to_bits()),
            _ => unreachable!(),
        }
    }
}
