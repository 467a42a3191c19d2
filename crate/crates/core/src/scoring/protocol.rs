//! Line-delimited JSON scorer protocol `qe-score/1`.
//!
//! The scorer writes one [`Handshake`] line, then answers every
//! [`ScoreRequest`] line with exactly one response line, in any order.
//! Closing the scorer's input ends the session.
//!
//! ```text
//! <- {"protocol":"qe-score/1","name":"transquest-enmr","batch_max":64}
//! -> {"id":0,"src":"ab","tgt":"ab"}
//! <- {"id":0,"score":1.0}
//! -> {"id":1,"src":"x","tgt":""}
//! <- {"id":1,"error":"empty target"}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROTOCOL: &str = "qe-score/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub name: String,
    pub batch_max: usize,
}

impl Handshake {
    pub fn new(name: impl Into<String>, batch_max: usize) -> Self {
        Self {
            protocol: PROTOCOL.to_string(),
            name: name.into(),
            batch_max,
        }
    }

    pub fn parse(line: &str) -> Result<Self> {
        let hs: Handshake =
            serde_json::from_str(line).map_err(|e| Error::Handshake(format!("{e} in {line:?}")))?;
        if hs.protocol != PROTOCOL {
            return Err(Error::Handshake(format!(
                "unsupported protocol {:?}, expected {PROTOCOL:?}",
                hs.protocol
            )));
        }
        if hs.batch_max == 0 {
            return Err(Error::Handshake("batch_max must be positive".into()));
        }
        if hs.name.is_empty() {
            return Err(Error::Handshake("empty scorer name".into()));
        }
        Ok(hs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: u64,
    pub src: String,
    pub tgt: String,
}

/// One answer line. `id` is -1 when the scorer could not read a request id.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreResponse {
    Score { id: i64, score: f64 },
    Error { id: i64, error: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResponse {
    id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl ScoreResponse {
    pub fn id(&self) -> i64 {
        match self {
            ScoreResponse::Score { id, .. } | ScoreResponse::Error { id, .. } => *id,
        }
    }

    pub fn parse(line: &str) -> Result<Self> {
        let raw: RawResponse = serde_json::from_str(line)
            .map_err(|e| Error::Protocol(format!("bad response {line:?}: {e}")))?;
        match (raw.score, raw.error) {
            (Some(score), None) if score.is_finite() => {
                Ok(ScoreResponse::Score { id: raw.id, score })
            }
            (Some(_), None) => Err(Error::Protocol(format!("non-finite score in {line:?}"))),
            (None, Some(error)) => Ok(ScoreResponse::Error { id: raw.id, error }),
            _ => Err(Error::Protocol(format!(
                "response must carry exactly one of score/error: {line:?}"
            ))),
        }
    }

    pub fn to_line(&self) -> String {
        let raw = match self {
            ScoreResponse::Score { id, score } => RawResponse {
                id: *id,
                score: Some(*score),
                error: None,
            },
            ScoreResponse::Error { id, error } => RawResponse {
                id: *id,
                score: None,
                error: Some(error.clone()),
            },
        };
        serde_json::to_string(&raw).expect("response serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handshake_validation() {
        let hs =
            Handshake::parse(r#"{"protocol":"qe-score/1","name":"mock","batch_max":8}"#).unwrap();
        assert_eq!(hs, Handshake::new("mock", 8));
        for bad in [
            r#"{"protocol":"qe-score/2","name":"mock","batch_max":8}"#,
            r#"{"protocol":"qe-score/1","name":"mock","batch_max":0}"#,
            r#"{"protocol":"qe-score/1","name":"","batch_max":1}"#,
            r#"{"protocol":"qe-score/1","name":"mock"}"#,
            r#"{"id":0,"score":1.0}"#,
            "not json",
        ] {
            assert!(
                matches!(Handshake::parse(bad), Err(Error::Handshake(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn response_shapes() {
        assert_eq!(
            ScoreResponse::parse(r#"{"id":3,"score":0.5}"#).unwrap(),
            ScoreResponse::Score { id: 3, score: 0.5 }
        );
        assert_eq!(
            ScoreResponse::parse(r#"{"id":-1,"error":"bad line"}"#).unwrap(),
            ScoreResponse::Error {
                id: -1,
                error: "bad line".into()
            }
        );
        for bad in [
            r#"{"id":3}"#,
            r#"{"id":3,"score":0.5,"error":"x"}"#,
            r#"{"id":3,"score":"0.5"}"#,
            r#"{"score":0.5}"#,
            r#"{"id":3,"score":0.5,"extra":1}"#,
        ] {
            assert!(ScoreResponse::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn response_lines_round_trip() {
        for r in [
            ScoreResponse::Score {
                id: 7,
                score: -0.125,
            },
            ScoreResponse::Error {
                id: 2,
                error: "tab\there".into(),
            },
        ] {
            let line = r.to_line();
            assert!(!line.contains('\n'));
            assert_eq!(ScoreResponse::parse(&line).unwrap(), r);
        }
        assert_eq!(
            ScoreResponse::Score { id: 0, score: 1.0 }.to_line(),
            r#"{"id":0,"score":1.0}"#
        );
    }
}
